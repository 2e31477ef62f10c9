use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;

use crate::bench::correlation::RankingReport;
use crate::error::{Error, Result};
use crate::net::{fit_chain, ChainNet};
use crate::numkernel::TrainHyper;
use crate::rate::LocalScoreList;
use crate::rng::{derive_seed, rng_for, stream};
use crate::space::{
    encode_arch, enumerate_space, space_size, Architecture, BlockArch, Cost, SearchSpace,
};
use crate::task::Dataset;

/// Standalone training protocol for ground truth.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StandaloneConfig {
    pub train: TrainHyper,
    /// Independent initialisations averaged per architecture.
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub patience: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub arch: Architecture,
    /// Held-out MSE after standalone training (lower is better).
    pub score: f64,
    pub cost: Cost,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub config_hash: String,
    pub task_seed: u64,
}

impl BenchTable {
    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn score_of(&self, arch: &Architecture) -> Option<f64> {
        self.rows.iter().find(|r| &r.arch == arch).map(|r| r.score)
    }

    /// Fraction of rows with a strictly better score than `arch`'s.
    pub fn rank_fraction(&self, arch: &Architecture) -> Option<f64> {
        let s = self.score_of(arch)?;
        let better = self.rows.iter().filter(|r| r.score < s).count();
        Some(better as f64 / self.rows.len() as f64)
    }
}

/// Trains `arch` from scratch on the task and returns its held-out loss.
pub fn train_standalone(
    space: &SearchSpace,
    arch: &Architecture,
    data: &Dataset,
    cfg: &StandaloneConfig,
) -> Result<f64> {
    let repeats = cfg.repeats.max(1);
    let mut total = 0.0;
    for r in 0..repeats {
        let seed = derive_seed(cfg.train.seed, &[stream::STANDALONE, r as u64]);
        let mut init = rng_for(seed, &[0]);
        let mut net = ChainNet::for_arch(space, arch, &mut init)?;
        let mut batches = rng_for(seed, &[1]);
        fit_chain(
            &mut net,
            &data.x,
            &data.y,
            &data.train,
            &data.val,
            &cfg.train,
            cfg.patience,
            &mut batches,
        )?;
        let loss = net.evaluate(
            &data.x.select_rows(&data.val),
            &data.y.select_rows(&data.val),
        )?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step: 0,
                what: format!("non-finite held-out loss for {arch}"),
            });
        }
        total += loss;
    }
    Ok(total / repeats as f64)
}

/// Trains every architecture of the space. Rows already present in
/// `existing` are kept as-is; `on_row` sees each newly trained row.
pub fn build_bench_resumable(
    space: &SearchSpace,
    data: &Dataset,
    cfg: &StandaloneConfig,
    cap: u64,
    existing: Vec<BenchRow>,
    mut on_row: impl FnMut(&BenchRow) -> Result<()>,
) -> Result<Vec<BenchRow>> {
    let size = space_size(space);
    if size > BigUint::from(cap) {
        return Err(Error::BenchCap {
            size: size.to_string(),
            cap,
        });
    }
    let lut = crate::space::build_cost_lut(space);
    let mut done: HashMap<Architecture, BenchRow> =
        existing.into_iter().map(|r| (r.arch.clone(), r)).collect();
    let mut rows = Vec::new();
    for arch in enumerate_space(space) {
        if let Some(row) = done.remove(&arch) {
            rows.push(row);
            continue;
        }
        let score = train_standalone(space, &arch, data, cfg)?;
        let row = BenchRow {
            cost: lut.arch_cost(&arch)?,
            arch,
            score,
            seed: cfg.train.seed,
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn build_bench(
    space: &SearchSpace,
    data: &Dataset,
    cfg: &StandaloneConfig,
    cap: u64,
    config_hash: &str,
    task_seed: u64,
) -> Result<BenchTable> {
    let rows = build_bench_resumable(space, data, cfg, cap, Vec::new(), |_| Ok(()))?;
    Ok(BenchTable {
        rows,
        config_hash: config_hash.to_string(),
        task_seed,
    })
}

/// Σ_k λ_k · local score of each block choice, summed in block order.
pub fn predicted_scores(
    lists: &[LocalScoreList],
    weights: &[f64],
    archs: &[Architecture],
) -> Result<Vec<f64>> {
    let maps: Vec<HashMap<&BlockArch, f64>> = lists
        .iter()
        .map(|l| l.entries.iter().map(|e| (&e.arch, e.score)).collect())
        .collect();
    archs
        .iter()
        .map(|arch| {
            if arch.blocks.len() != lists.len() {
                return Err(Error::Coverage(encode_arch(arch)));
            }
            let mut total = 0.0;
            for (k, b) in arch.blocks.iter().enumerate() {
                let s = maps[k]
                    .get(b)
                    .ok_or_else(|| Error::Coverage(encode_arch(arch)))?;
                total += weights.get(k).copied().unwrap_or(1.0) * s;
            }
            Ok(total)
        })
        .collect()
}

/// Predicted ranking from summed local scores against the bench's truth.
pub fn ranking_report(
    lists: &[LocalScoreList],
    weights: &[f64],
    bench: &BenchTable,
) -> Result<RankingReport> {
    let archs: Vec<Architecture> = bench.rows.iter().map(|r| r.arch.clone()).collect();
    let pred = predicted_scores(lists, weights, &archs)?;
    RankingReport::compute(&pred, &bench.scores())
}

/// True when no architecture appears twice.
pub fn rows_unique(rows: &[BenchRow]) -> bool {
    let mut seen = HashSet::new();
    rows.iter().all(|r| seen.insert(&r.arch))
}
