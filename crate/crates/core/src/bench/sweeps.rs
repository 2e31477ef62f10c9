//! Diagnostic experiments: search-space size vs rating fidelity, stability of
//! the searched architecture over training, and robustness to less data.

use num_bigint::BigUint;

use crate::bench::correlation::{kendall_tau, spearman_rho};
use crate::bench::oneshot::WholeNetSupernet;
use crate::bench::table::{predicted_scores, BenchTable};
use crate::distill::{
    block_path_rng, extract_features, init_supernet, train_all_blocks, train_block_with,
    SupernetBlock,
};
use crate::error::{Error, Result};
use crate::net::ChainNet;
use crate::numkernel::TrainHyper;
use crate::pipeline::{rate_all, DnaSettings};
use crate::rate::Metric;
use crate::search::traverse_search;
use crate::space::{enumerate_space, space_size, Architecture, Constraint, CostLut, SearchSpace};
use crate::task::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct OpCountRow {
    pub ops: usize,
    pub space_size: BigUint,
    pub tau: f64,
    pub mean_frobenius: f64,
}

/// For each op count `c`, trains a whole-net supernet over the first `c`
/// catalog ops for the same step budget and ranks the architectures of
/// `bench`. Every bench architecture must use only ops shared by all
/// restricted spaces, so each row is measured on the same candidates.
pub fn op_count_sweep(
    space: &SearchSpace,
    op_counts: &[usize],
    data: &Dataset,
    bench: &BenchTable,
    hyper: &TrainHyper,
    base_lr: f64,
    metric: Metric,
) -> Result<Vec<OpCountRow>> {
    if op_counts.len() < 3 {
        return Err(Error::Precondition(
            "at least three op counts are required".into(),
        ));
    }
    if let Some(&c) = op_counts.iter().find(|&&c| c < 2) {
        return Err(Error::Precondition(format!(
            "op count {c} is below the minimum of 2"
        )));
    }
    let archs: Vec<Architecture> = bench.rows.iter().map(|r| r.arch.clone()).collect();
    let truth = bench.scores();
    let x = data.x.select_rows(&data.val);
    let y = data.y.select_rows(&data.val);
    op_counts
        .iter()
        .map(|&c| {
            let sub = space.restrict_ops(c)?;
            for a in &archs {
                a.validate(&sub)?;
            }
            let mut net = WholeNetSupernet::init(&sub, hyper.seed)?;
            let mut paths = block_path_rng(hyper.seed, usize::MAX);
            net.train(data, &data.train, hyper, base_lr, &mut paths)?;
            let pred = net.rate(&archs, &x, &y, metric)?;
            let norms = net.subnet_frobenius_norms(&archs)?;
            Ok(OpCountRow {
                ops: c,
                space_size: space_size(&sub),
                tau: kendall_tau(&pred, &truth)?,
                mean_frobenius: norms.iter().sum::<f64>() / norms.len() as f64,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub epoch: usize,
    pub arch: Architecture,
    pub truth: f64,
}

/// Searches with the supernet as it stood after each epoch in
/// `checkpoints` (0 = untrained) and looks up the chosen architecture's
/// ground truth.
#[allow(clippy::too_many_arguments)]
pub fn stability_sweep(
    space: &SearchSpace,
    data: &Dataset,
    teacher: &ChainNet,
    settings: &DnaSettings,
    checkpoints: &[usize],
    lut: &CostLut,
    constraint: &Constraint,
    weights: &[f64],
    bench: &BenchTable,
) -> Result<Vec<StabilityRow>> {
    if checkpoints.len() < 4 {
        return Err(Error::Precondition(
            "at least four checkpoints are required".into(),
        ));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    let last = *checkpoints.last().unwrap();
    if last > settings.supernet.epochs {
        return Err(Error::Precondition(format!(
            "checkpoint {last} beyond {} training epochs",
            settings.supernet.epochs
        )));
    }
    let cache = extract_features(teacher, data)?;
    let hyper = &settings.supernet;
    // snapshots[i][k] = block k at checkpoint i
    let mut snapshots: Vec<Vec<SupernetBlock>> = vec![Vec::new(); checkpoints.len()];
    for mut block in init_supernet(space, hyper.seed)? {
        let k = block.index;
        if checkpoints[0] == 0 {
            snapshots[0].push(block.clone());
        }
        let mut rng = block_path_rng(hyper.seed, k);
        let truncated = TrainHyper {
            epochs: last,
            ..hyper.clone()
        };
        train_block_with(
            &mut block,
            &cache.blocks[k],
            &cache.train,
            &truncated,
            settings.rates.for_block(k),
            &mut rng,
            |epoch, b| {
                if let Some(i) = checkpoints.iter().position(|&c| c == epoch + 1) {
                    snapshots[i].push(b.clone());
                }
            },
        )?;
    }
    snapshots
        .iter()
        .zip(checkpoints)
        .map(|(blocks, &epoch)| {
            let lists = rate_all(blocks, &cache, settings.metric, hyper.seed)?;
            let found = traverse_search(&lists, lut, constraint, weights)?;
            let truth = bench.score_of(&found.arch).ok_or_else(|| {
                Error::Coverage(format!(
                    "searched architecture {} is not in the bench",
                    crate::space::encode_arch(&found.arch)
                ))
            })?;
            Ok(StabilityRow {
                epoch,
                arch: found.arch,
                truth,
            })
        })
        .collect()
}

/// Spearman correlation between checkpoint epoch and searched-architecture
/// quality (negated loss, so positive means improving).
pub fn stability_trend(rows: &[StabilityRow]) -> Result<f64> {
    let epochs: Vec<f64> = rows.iter().map(|r| r.epoch as f64).collect();
    let quality: Vec<f64> = rows.iter().map(|r| -r.truth).collect();
    spearman_rho(&epochs, &quality)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataAmountRow {
    pub fraction: f64,
    /// Against the bench, when one is supplied.
    pub tau: Option<f64>,
    /// Against the ranking obtained with all training rows.
    pub cross_tau: f64,
}

/// Retrains the block supernets on seeded subsamples of the training rows
/// under a fixed step budget and compares the resulting rankings of every
/// architecture in the space.
pub fn data_amount_sweep(
    space: &SearchSpace,
    data: &Dataset,
    teacher: &ChainNet,
    settings: &DnaSettings,
    fractions: &[f64],
    weights: &[f64],
    bench: Option<&BenchTable>,
) -> Result<Vec<DataAmountRow>> {
    if fractions.is_empty() {
        return Err(Error::Precondition("no data fractions given".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Precondition(format!("fraction {f} not in (0, 1]")));
    }
    if settings.supernet.max_steps.is_none() {
        return Err(Error::Precondition(
            "a fixed step budget (max_steps) is required".into(),
        ));
    }
    let archs = enumerate_space(space);
    let cache = extract_features(teacher, data)?;
    // Enough epochs that the step budget, not the epoch count, ends training.
    let steps = settings.supernet.max_steps.unwrap();
    let ranking = |fraction: f64| -> Result<Vec<f64>> {
        let sub = data.with_train_fraction(fraction, settings.supernet.seed)?;
        let per_epoch = sub.train.len().div_ceil(settings.supernet.batch_size);
        let hyper = TrainHyper {
            epochs: steps.div_ceil(per_epoch),
            ..settings.supernet.clone()
        };
        let mut c = cache.clone();
        c.train = sub.train;
        let blocks = init_supernet(space, hyper.seed)?;
        let (blocks, _) = train_all_blocks(blocks, &c, &hyper, &settings.rates, settings.workers)?;
        let lists = rate_all(&blocks, &c, settings.metric, hyper.seed)?;
        predicted_scores(&lists, weights, &archs)
    };
    let full = ranking(1.0)?;
    let truth: Option<Vec<f64>> = bench
        .map(|b| {
            archs
                .iter()
                .map(|a| {
                    b.score_of(a)
                        .ok_or_else(|| Error::Coverage(crate::space::encode_arch(a)))
                })
                .collect()
        })
        .transpose()?;
    fractions
        .iter()
        .map(|&f| {
            let pred = if f == 1.0 { full.clone() } else { ranking(f)? };
            Ok(DataAmountRow {
                fraction: f,
                tau: truth.as_ref().map(|t| kendall_tau(&pred, t)).transpose()?,
                cross_tau: kendall_tau(&pred, &full)?,
            })
        })
        .collect()
}
