//! Teacher construction, feature caching and block-wise supernet training
//! with uniform single-path sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    boundary_widths, fit_chain, minibatches, CellGrads, CellNet, CellShape, ChainNet, FitReport,
};
use crate::numkernel::{adam_step, mse_with_grad, AdamState, Linear, OpParams, Tensor, TrainHyper};
use crate::rng::{derive_seed, rng_for, stream};
use crate::space::{BlockArch, BlockSpec, OpDescriptor, SearchSpace};
use crate::task::Dataset;

/// Fixed per-block structure of a teacher.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub blocks: Vec<CellShape>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherNet {
    pub spec: TeacherSpec,
    pub net: ChainNet,
    pub report: FitReport,
}

/// Trains a teacher on the task end to end. Block boundary widths follow the
/// search space so that block `k` of the teacher supervises block `k` of the
/// supernet.
pub fn make_teacher(
    space: &SearchSpace,
    spec: &TeacherSpec,
    data: &Dataset,
    hyper: &TrainHyper,
) -> Result<TeacherNet> {
    if spec.blocks.len() != space.blocks.len() {
        return Err(Error::Precondition(format!(
            "teacher has {} blocks, space has {}",
            spec.blocks.len(),
            space.blocks.len()
        )));
    }
    let mut init_rng = rng_for(hyper.seed, &[stream::TEACHER, 0]);
    let mut net = ChainNet::init(&boundary_widths(space), &spec.blocks, &mut init_rng)?;
    let mut batch_rng = rng_for(hyper.seed, &[stream::TEACHER, 1]);
    let report = fit_chain(
        &mut net,
        &data.x,
        &data.y,
        &data.train,
        &data.val,
        hyper,
        Some(5),
        &mut batch_rng,
    )?;
    Ok(TeacherNet {
        spec: spec.clone(),
        net,
        report,
    })
}

/// Teacher features for one block: inputs `Y_{k-1}` and targets `Y_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockFeatures {
    pub inputs: Tensor,
    pub targets: Tensor,
}

/// Per-block teacher features for every dataset row, with the dataset's
/// train/validation split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub blocks: Vec<BlockFeatures>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl FeatureCache {
    pub fn val_rows(&self, k: usize) -> Result<(Tensor, Tensor)> {
        let b = self.blocks.get(k).ok_or(Error::Index {
            what: "cached block",
            index: k,
            len: self.blocks.len(),
        })?;
        Ok((
            b.inputs.select_rows(&self.val),
            b.targets.select_rows(&self.val),
        ))
    }
}

pub fn extract_features(teacher: &ChainNet, data: &Dataset) -> Result<FeatureCache> {
    let outputs = teacher.block_outputs(&data.x)?;
    let mut blocks = Vec::with_capacity(outputs.len());
    let mut prev = data.x.clone();
    for out in outputs {
        blocks.push(BlockFeatures {
            inputs: prev,
            targets: out.clone(),
        });
        prev = out;
    }
    Ok(FeatureCache {
        blocks,
        train: data.train.clone(),
        val: data.val.clone(),
    })
}

/// Weights of one candidate op at one layer, with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Bank {
    pub op: OpParams,
    pub state: AdamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adapter {
    pub linear: Linear,
    pub state: AdamState,
}

impl Adapter {
    fn new(linear: Linear) -> Self {
        let state = AdamState::for_params(&linear.params());
        Adapter { linear, state }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupernetCell {
    pub input_adapter: Adapter,
    /// `banks[layer][j]` holds the op `allowed[layer][j]`.
    pub banks: Vec<Vec<Bank>>,
    pub output_adapter: Adapter,
}

/// Weight-sharing supernet for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct SupernetBlock {
    pub index: usize,
    pub spec: BlockSpec,
    pub catalog: Vec<OpDescriptor>,
    pub cells: Vec<SupernetCell>,
}

impl SupernetBlock {
    pub fn init(space: &SearchSpace, index: usize, seed: u64) -> Result<Self> {
        let spec = space.block(index)?.clone();
        let mut rng = rng_for(seed, &[stream::SUPERNET_INIT, index as u64]);
        let cells = spec
            .cells
            .iter()
            .map(|cell| {
                let input_adapter =
                    Adapter::new(Linear::init(spec.input_width, cell.width, 1.0, &mut rng));
                let banks = cell
                    .allowed
                    .iter()
                    .map(|ops| {
                        ops.iter()
                            .map(|&o| {
                                let op =
                                    space.catalog[o].instantiate(cell.width, cell.width, &mut rng);
                                let state = AdamState::for_params(&op.params());
                                Bank { op, state }
                            })
                            .collect()
                    })
                    .collect();
                let output_adapter =
                    Adapter::new(Linear::init(cell.width, spec.output_width, 1.0, &mut rng));
                SupernetCell {
                    input_adapter,
                    banks,
                    output_adapter,
                }
            })
            .collect();
        Ok(SupernetBlock {
            index,
            spec,
            catalog: space.catalog.clone(),
            cells,
        })
    }

    /// Every weight tensor: per cell the input adapter, the banks by layer
    /// and slot, then the output adapter.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for cell in &self.cells {
            out.extend(cell.input_adapter.linear.params());
            for bank in cell.banks.iter().flatten() {
                out.extend(bank.op.params());
            }
            out.extend(cell.output_adapter.linear.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for cell in &mut self.cells {
            out.extend(cell.input_adapter.linear.params_mut());
            for bank in cell.banks.iter_mut().flatten() {
                out.extend(bank.op.params_mut());
            }
            out.extend(cell.output_adapter.linear.params_mut());
        }
        out
    }

    pub fn bank(&self, cell: usize, layer: usize, op: usize) -> Option<&Bank> {
        let j = self
            .spec
            .cells
            .get(cell)?
            .allowed
            .get(layer)?
            .iter()
            .position(|&o| o == op)?;
        self.cells[cell].banks[layer].get(j)
    }

    fn bank_slot(&self, cell: usize, layer: usize, op: usize) -> Result<usize> {
        self.spec.cells[cell].allowed[layer]
            .iter()
            .position(|&o| o == op)
            .ok_or_else(|| {
                Error::Precondition(format!("op {op} not allowed at cell {cell} layer {layer}"))
            })
    }

    /// Standalone copy of one path's weights.
    pub fn extract(&self, arch: &BlockArch) -> Result<CellNet> {
        arch.validate(&self.spec)?;
        let cell = &self.cells[arch.cell];
        let layers = arch
            .ops
            .iter()
            .enumerate()
            .map(|(l, &o)| Ok(cell.banks[l][self.bank_slot(arch.cell, l, o)?].op.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(CellNet {
            input_adapter: cell.input_adapter.linear.clone(),
            layers,
            output_adapter: cell.output_adapter.linear.clone(),
        })
    }

    /// Adam update of the banks on `path` and of its cell's adapters.
    pub fn apply_path_grads(
        &mut self,
        path: &BlockArch,
        grads: &CellGrads,
        hyper: &TrainHyper,
        lr: f64,
    ) -> Result<()> {
        let slots = path
            .ops
            .iter()
            .enumerate()
            .map(|(l, &o)| self.bank_slot(path.cell, l, o))
            .collect::<Result<Vec<_>>>()?;
        let cell = &mut self.cells[path.cell];
        adam_step(
            &mut cell.input_adapter.linear.params_mut(),
            &grads.input_adapter.tensors(),
            &mut cell.input_adapter.state,
            hyper,
            lr,
        )?;
        for (l, slot) in slots.into_iter().enumerate() {
            let bank = &mut cell.banks[l][slot];
            adam_step(
                &mut bank.op.params_mut(),
                &grads.layers[l].tensors(),
                &mut bank.state,
                hyper,
                lr,
            )?;
        }
        adam_step(
            &mut cell.output_adapter.linear.params_mut(),
            &grads.output_adapter.tensors(),
            &mut cell.output_adapter.state,
            hyper,
            lr,
        )
    }

    /// One optimizer step along `path` on a minibatch. Only that path's
    /// banks and its cell's adapters change.
    pub fn train_path_step(
        &mut self,
        path: &BlockArch,
        x: &Tensor,
        y: &Tensor,
        hyper: &TrainHyper,
        lr: f64,
    ) -> Result<f64> {
        let net = self.extract(path)?;
        let (out, trace) = net.forward_traced(x)?;
        let (loss, dy) = mse_with_grad(y, &out)?;
        if !loss.is_finite() {
            let step = self.cells[path.cell].input_adapter.state.step as usize + 1;
            return Err(Error::Training {
                step,
                what: format!("non-finite loss in block {}", self.index),
            });
        }
        let (grads, _) = net.backward_traced(&trace, &dy)?;
        self.apply_path_grads(path, &grads, hyper, lr)?;
        Ok(loss)
    }
}

/// Uniform over cells, then uniform over each layer's allowed ops.
pub fn sample_path<R: Rng + ?Sized>(block: &BlockSpec, rng: &mut R) -> BlockArch {
    crate::space::sample_block_arch(block, rng)
}

/// Learning rates per block: the first block trains slower.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLearningRates {
    pub first_block: f64,
    pub other_blocks: f64,
}

impl Default for BlockLearningRates {
    fn default() -> Self {
        BlockLearningRates {
            first_block: 0.002,
            other_blocks: 0.005,
        }
    }
}

impl BlockLearningRates {
    pub fn for_block(&self, k: usize) -> f64 {
        if k == 0 {
            self.first_block
        } else {
            self.other_blocks
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockTrainReport {
    pub block: usize,
    pub epoch_losses: Vec<f64>,
}

/// Trains one block against its cached teacher features. `path_rng` drives
/// path sampling; minibatch order comes from `hyper.seed`. `on_epoch` sees
/// the block after every epoch.
pub fn train_block_with<R: Rng + ?Sized>(
    block: &mut SupernetBlock,
    features: &BlockFeatures,
    train_rows: &[usize],
    hyper: &TrainHyper,
    base_lr: f64,
    path_rng: &mut R,
    mut on_epoch: impl FnMut(usize, &SupernetBlock),
) -> Result<BlockTrainReport> {
    if train_rows.is_empty() {
        return Err(Error::Precondition("no training rows".into()));
    }
    let mut batch_rng = rng_for(hyper.seed, &[stream::SUPERNET_TRAIN, block.index as u64, 1]);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut step = 0usize;
    let max_steps = hyper.max_steps.unwrap_or(usize::MAX);
    for epoch in 0..hyper.epochs {
        if step >= max_steps {
            break;
        }
        let mut total = 0.0;
        let mut count = 0;
        for batch in minibatches(train_rows, hyper.batch_size, &mut batch_rng) {
            if step >= max_steps {
                break;
            }
            let lr = hyper.lr_for_step(base_lr, epoch, step);
            let path = sample_path(&block.spec, path_rng);
            let x = features.inputs.select_rows(&batch);
            let y = features.targets.select_rows(&batch);
            step += 1;
            let loss = block
                .train_path_step(&path, &x, &y, hyper, lr)
                .map_err(|e| match e {
                    Error::Training { what, .. } => Error::Training { step, what },
                    other => other,
                })?;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        epoch_losses.push(total / count as f64);
        on_epoch(epoch, block);
    }
    Ok(BlockTrainReport {
        block: block.index,
        epoch_losses,
    })
}

pub fn train_block<R: Rng + ?Sized>(
    block: &mut SupernetBlock,
    features: &BlockFeatures,
    train_rows: &[usize],
    hyper: &TrainHyper,
    base_lr: f64,
    path_rng: &mut R,
) -> Result<BlockTrainReport> {
    train_block_with(
        block,
        features,
        train_rows,
        hyper,
        base_lr,
        path_rng,
        |_, _| {},
    )
}

/// Path-sampling generator for block `k` under `seed`.
pub fn block_path_rng(seed: u64, k: usize) -> crate::rng::Rng {
    rng_for(derive_seed(seed, &[stream::SUPERNET_TRAIN]), &[k as u64])
}

/// Trains every block independently; up to `workers` blocks run at once.
/// Results do not depend on `workers` or on block order.
pub fn train_all_blocks(
    blocks: Vec<SupernetBlock>,
    cache: &FeatureCache,
    hyper: &TrainHyper,
    rates: &BlockLearningRates,
    workers: usize,
) -> Result<(Vec<SupernetBlock>, Vec<BlockTrainReport>)> {
    if blocks.len() != cache.blocks.len() {
        return Err(Error::Precondition(format!(
            "{} supernet blocks but {} cached blocks",
            blocks.len(),
            cache.blocks.len()
        )));
    }
    let job = |mut block: SupernetBlock| -> Result<(SupernetBlock, BlockTrainReport)> {
        let k = block.index;
        let mut rng = block_path_rng(hyper.seed, k);
        let report = train_block(
            &mut block,
            &cache.blocks[k],
            &cache.train,
            hyper,
            rates.for_block(k),
            &mut rng,
        )?;
        Ok((block, report))
    };
    let workers = workers.max(1);
    let mut results: Vec<Option<Result<(SupernetBlock, BlockTrainReport)>>> = Vec::new();
    let mut pending = blocks.into_iter().peekable();
    while pending.peek().is_some() {
        let wave: Vec<SupernetBlock> = pending.by_ref().take(workers).collect();
        if wave.len() == 1 || workers == 1 {
            results.extend(wave.into_iter().map(|b| Some(job(b))));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = wave.into_iter().map(|b| s.spawn(move || job(b))).collect();
            for h in handles {
                results.push(Some(h.join().expect("training worker panicked")));
            }
        });
    }
    let mut trained = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results.into_iter().flatten() {
        let (b, rep) = r?;
        trained.push(b);
        reports.push(rep);
    }
    Ok((trained, reports))
}

/// Fresh supernet blocks for the whole space.
pub fn init_supernet(space: &SearchSpace, seed: u64) -> Result<Vec<SupernetBlock>> {
    (0..space.blocks.len())
        .map(|k| SupernetBlock::init(space, k, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::rngs::mock::StepRng;

    use super::*;
    use crate::numkernel::Activation;
    use crate::rate::{rate_block, Metric};
    use crate::space::CellSpec;
    use crate::testkit::fixture;

    #[test]
    fn teacher_is_deterministic_and_learns() {
        let f = fixture();
        let again = make_teacher(
            &f.space,
            &f.cfg.teacher_spec(),
            &f.data,
            &f.cfg.teacher_hyper(),
        )
        .unwrap();
        assert_eq!(again.net, f.teacher.net);
        let mut rng = rng_for(99, &[]);
        let untrained =
            ChainNet::init(&boundary_widths(&f.space), &f.cfg.teacher.blocks, &mut rng).unwrap();
        let (xv, yv) = (
            f.data.x.select_rows(&f.data.val),
            f.data.y.select_rows(&f.data.val),
        );
        assert!(f.teacher.net.evaluate(&xv, &yv).unwrap() < untrained.evaluate(&xv, &yv).unwrap());
        for (k, cell) in f.teacher.net.cells.iter().enumerate() {
            assert_eq!(cell.input_width(), f.space.blocks[k].input_width);
            assert_eq!(cell.output_width(), f.space.blocks[k].output_width);
        }
    }

    #[test]
    fn feature_cache_replays() {
        let f = fixture();
        let cache = extract_features(&f.teacher.net, &f.data).unwrap();
        assert_eq!(cache.blocks[0].inputs, f.data.x);
        for (k, b) in cache.blocks.iter().enumerate() {
            assert_eq!(b.inputs.rows(), f.data.rows());
            assert_eq!(b.targets.rows(), f.data.rows());
            let replay = f.teacher.net.cells[k].forward(&b.inputs).unwrap();
            for (a, t) in replay.data().iter().zip(b.targets.data()) {
                assert!((a - t).abs() <= 1e-12);
            }
        }
        assert!(cache.train.iter().all(|r| !cache.val.contains(r)));
    }

    fn two_cell_block() -> BlockSpec {
        let space = SearchSpace::new(
            vec![
                OpDescriptor::bottleneck(2, Activation::Relu),
                OpDescriptor::bottleneck(4, Activation::Tanh),
                OpDescriptor::bottleneck(6, Activation::Relu),
            ],
            vec![BlockSpec {
                input_width: 3,
                output_width: 3,
                cells: vec![CellSpec::new(1, 2), CellSpec::new(2, 2)],
            }],
        )
        .unwrap();
        space.blocks[0].clone()
    }

    #[test]
    fn single_choice_block_has_one_path() {
        let space = SearchSpace::new(
            vec![OpDescriptor::bottleneck(2, Activation::Relu)],
            vec![BlockSpec {
                input_width: 2,
                output_width: 2,
                cells: vec![CellSpec::new(1, 2)],
            }],
        )
        .unwrap();
        let mut rng = rng_for(3, &[]);
        for _ in 0..20 {
            assert_eq!(
                sample_path(&space.blocks[0], &mut rng),
                BlockArch {
                    cell: 0,
                    ops: vec![0]
                }
            );
        }
    }

    #[test]
    fn sampling_is_uniform_within_three_sigma() {
        let block = two_cell_block();
        let n = 100_000usize;
        let mut rng = rng_for(11, &[]);
        let mut cells = [0usize; 2];
        // [cell][layer][op]
        let mut marg = [[[0usize; 3]; 2]; 2];
        for _ in 0..n {
            let p = sample_path(&block, &mut rng);
            cells[p.cell] += 1;
            for (l, &o) in p.ops.iter().enumerate() {
                marg[p.cell][l][o] += 1;
            }
        }
        let within = |count: usize, trials: usize, p: f64| {
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
            (count as f64 - trials as f64 * p).abs() <= 3.0 * sigma
        };
        assert!(within(cells[0], n, 0.5));
        for c in 0..2 {
            for l in 0..block.cells[c].depth {
                for o in 0..3 {
                    assert!(
                        within(marg[c][l][o], cells[c], 1.0 / 3.0),
                        "cell {c} layer {l} op {o}"
                    );
                }
            }
        }
    }

    #[test]
    fn training_lowers_loss_for_most_seeds() {
        let f = fixture();
        let cache = extract_features(&f.teacher.net, &f.data).unwrap();
        let hyper = TrainHyper {
            epochs: 6,
            ..f.cfg.supernet.train.clone()
        };
        let mut improved = 0;
        for seed in 0..5 {
            let mut block = SupernetBlock::init(&f.space, 1, seed).unwrap();
            let mut rng = block_path_rng(seed, 1);
            let rep = train_block(
                &mut block,
                &cache.blocks[1],
                &cache.train,
                &hyper.with_seed(seed),
                0.005,
                &mut rng,
            )
            .unwrap();
            assert_eq!(rep.epoch_losses.len(), 6);
            if rep.epoch_losses[5] < rep.epoch_losses[0] {
                improved += 1;
            }
        }
        assert!(improved >= 3);
    }

    #[test]
    fn only_the_sampled_path_changes() {
        let f = fixture();
        let cache = extract_features(&f.teacher.net, &f.data).unwrap();
        let fresh = SupernetBlock::init(&f.space, 1, 4).unwrap();
        let mut block = fresh.clone();
        let mut rigged = StepRng::new(0, 0);
        let hyper = f.cfg.supernet.train.with_seed(4);
        train_block(
            &mut block,
            &cache.blocks[1],
            &cache.train,
            &hyper,
            0.005,
            &mut rigged,
        )
        .unwrap();
        for (c, cell) in block.cells.iter().enumerate() {
            let was = &fresh.cells[c];
            assert_eq!(
                cell.input_adapter.linear != was.input_adapter.linear,
                c == 0
            );
            assert_eq!(
                cell.output_adapter.linear != was.output_adapter.linear,
                c == 0
            );
            for (l, layer) in cell.banks.iter().enumerate() {
                for (slot, bank) in layer.iter().enumerate() {
                    let touched = c == 0 && slot == 0;
                    assert_eq!(
                        bank.op != was.banks[l][slot].op,
                        touched,
                        "cell {c} layer {l} slot {slot}"
                    );
                }
            }
        }
    }

    #[test]
    fn parallel_matches_sequential_and_order() {
        let f = fixture();
        let cache = extract_features(&f.teacher.net, &f.data).unwrap();
        let hyper = f.cfg.supernet_hyper();
        let rates = BlockLearningRates::default();
        let seq = train_all_blocks(
            init_supernet(&f.space, 5).unwrap(),
            &cache,
            &hyper,
            &rates,
            1,
        )
        .unwrap();
        let par = train_all_blocks(
            init_supernet(&f.space, 5).unwrap(),
            &cache,
            &hyper,
            &rates,
            2,
        )
        .unwrap();
        assert_eq!(seq.0, par.0);
        assert_eq!(seq.1, par.1);
        assert_eq!(seq.1.len(), f.space.blocks.len());
        // block 1 alone, trained first
        let mut b1 = SupernetBlock::init(&f.space, 1, 5).unwrap();
        let mut rng = block_path_rng(hyper.seed, 1);
        train_block(
            &mut b1,
            &cache.blocks[1],
            &cache.train,
            &hyper,
            rates.for_block(1),
            &mut rng,
        )
        .unwrap();
        assert_eq!(b1, seq.0[1]);
    }

    #[test]
    fn distillation_beats_untrained_best_path() {
        let f = fixture();
        let cache = extract_features(&f.teacher.net, &f.data).unwrap();
        let hyper = f.cfg.supernet_hyper();
        let fresh = init_supernet(&f.space, 6).unwrap();
        let (trained, _) = train_all_blocks(
            fresh.clone(),
            &cache,
            &hyper,
            &BlockLearningRates::default(),
            1,
        )
        .unwrap();
        for k in 0..f.space.blocks.len() {
            let (x, y) = cache.val_rows(k).unwrap();
            let before = rate_block(&fresh[k], &x, &y, Metric::RelativeL1, 0)
                .unwrap()
                .0
                .entries[0]
                .score;
            let after = rate_block(&trained[k], &x, &y, Metric::RelativeL1, 0)
                .unwrap()
                .0
                .entries[0]
                .score;
            assert!(after < before, "block {k}: {after} vs {before}");
        }
    }
}
