//! Oracle-equivalence checks: shared-prefix rating against per-path
//! evaluation, traversal search against exhaustive search, and analytic
//! gradients against central finite differences.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::distill::BlockFeatures;
use crate::distill::{train_block, SupernetBlock};
use crate::error::Result;
use crate::evolve::{sdr_loss_with_grad, ssl_loss_with_grad, SslHyper};
use crate::numkernel::{op_backward, op_forward, Activation, OpKind, OpParams, Tensor, TrainHyper};
use crate::rate::{
    naive_rate_block, rate_block, relative_l1, relative_l1_grad, LocalScoreList, Metric, ScoreEntry,
};
use crate::rng::rng_for;
use crate::search::{exhaustive_search, traverse_search};
use crate::space::{
    build_cost_lut, enumerate_block, BlockSpec, CellSpec, Constraint, Cost, OpDescriptor,
    SearchSpace,
};

/// Finite-difference step.
pub const FD_EPS: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, 1e-6)`; the floor keeps components that are
/// zero up to rounding from dominating.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `f` around `x`.
pub fn fd_max_error(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_EPS;
        let up = f(&probe);
        probe[i] = x[i] - FD_EPS;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error((up - down) / (2.0 * FD_EPS), analytic[i]));
    }
    worst
}

fn random_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::randn(&[rows, cols], 1.0, rng)
}

fn weighted_sum(y: &Tensor, w: &Tensor) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// True when some pre-activation is close enough to the ReLU kink that a
/// finite-difference probe could cross it.
fn near_kink(op: &OpParams, x: &Tensor) -> Result<bool> {
    if op.activation != Activation::Relu {
        return Ok(false);
    }
    Ok(op.expand.forward(x)?.data().iter().any(|v| v.abs() < 1e-3))
}

/// Gradient check of one op instance on the scalar `Σ w ⊙ op(x)`, over its
/// input and every parameter.
pub fn op_gradient_error(op: &OpParams, x: &Tensor, w: &Tensor) -> Result<f64> {
    let (grads, dx) = op_backward(op, x, w)?;
    let mut worst = fd_max_error(x.data(), dx.data(), |v| {
        let xv = Tensor::new(x.shape().to_vec(), v.to_vec()).expect("same shape");
        weighted_sum(&op_forward(op, &xv).expect("valid op"), w)
    });
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data().to_vec()).collect();
    for (i, g) in analytic.iter().enumerate() {
        let base: Vec<f64> = op.params()[i].data().to_vec();
        let e = fd_max_error(&base, g, |v| {
            let mut probe = op.clone();
            probe.params_mut()[i].data_mut().copy_from_slice(v);
            weighted_sum(&op_forward(&probe, x).expect("valid op"), w)
        });
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Worst gradient error per op variant over `trials` random 3×4 cases.
pub fn check_op_gradients(trials: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = rng_for(seed, &[0x6ead]);
    let variants = [
        (OpKind::Bottleneck, 2, Activation::Relu),
        (OpKind::Bottleneck, 2, Activation::Tanh),
        (OpKind::Bottleneck, 4, Activation::Relu),
        (OpKind::Bottleneck, 6, Activation::Tanh),
        (OpKind::Dense, 1, Activation::Relu),
        (OpKind::Dense, 1, Activation::Tanh),
    ];
    let mut out = Vec::new();
    for (kind, e, act) in variants {
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let (op, x) = loop {
                let op = OpParams::init(kind, e, act, 4, 3, &mut rng);
                let x = random_tensor(3, 4, &mut rng);
                if !near_kink(&op, &x)? {
                    break (op, x);
                }
            };
            let w = random_tensor(3, 3, &mut rng);
            worst = worst.max(op_gradient_error(&op, &x, &w)?);
        }
        out.push((format!("{kind:?}-e{e}-{act:?}").to_lowercase(), worst));
    }
    Ok(out)
}

/// Worst gradient error of relative-L1 (w.r.t. the prediction) and of both
/// self-supervised losses (w.r.t. every input) over random 4×3 cases.
pub fn check_loss_gradients(trials: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = rng_for(seed, &[0x1055]);
    let hyper = SslHyper {
        // hinge active on some channels and not others
        gamma: 1.2,
        ..SslHyper::default()
    };
    let (mut rl1, mut ssl_z, mut ssl_zh, mut sdr): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let y = random_tensor(4, 3, &mut rng);
        let yhat = random_tensor(4, 3, &mut rng);
        let g = relative_l1_grad(&y, &yhat)?;
        rl1 = rl1.max(fd_max_error(yhat.data(), g.data(), |v| {
            relative_l1(&y, &Tensor::new(vec![4, 3], v.to_vec()).expect("shape")).expect("valid")
        }));

        let mut z = random_tensor(4, 3, &mut rng);
        let scale: f64 = rng.gen_range(0.3..2.0);
        z.scale(scale);
        let zh = random_tensor(4, 3, &mut rng);
        let (_, gz, gzh) = ssl_loss_with_grad(&z, &zh, &hyper)?;
        let t = |v: &[f64]| Tensor::new(vec![4, 3], v.to_vec()).expect("shape");
        ssl_z = ssl_z.max(fd_max_error(z.data(), gz.data(), |v| {
            ssl_loss_with_grad(&t(v), &zh, &hyper).expect("valid").0
        }));
        ssl_zh = ssl_zh.max(fd_max_error(zh.data(), gzh.data(), |v| {
            ssl_loss_with_grad(&z, &t(v), &hyper).expect("valid").0
        }));
        let (_, gs) = sdr_loss_with_grad(&z, &hyper)?;
        sdr = sdr.max(fd_max_error(z.data(), gs.data(), |v| {
            sdr_loss_with_grad(&t(v), &hyper).expect("valid").0
        }));
    }
    Ok(vec![
        ("relative_l1".into(), rl1),
        ("ssl_loss/z".into(), ssl_z),
        ("ssl_loss/zhat".into(), ssl_zh),
        ("sdr_loss".into(), sdr),
    ])
}

/// Outcome of comparing shared-prefix rating with per-path evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingCheck {
    pub blocks: usize,
    pub max_abs_diff: f64,
    pub orderings_equal: bool,
    /// Op applications matched Σ_cells Σ_layers ∏ choices on every block.
    pub counts_exact: bool,
    pub op_applications: u64,
    pub naive_op_applications: u64,
}

fn random_block_space<R: Rng + ?Sized>(rng: &mut R) -> Result<SearchSpace> {
    let catalog: Vec<OpDescriptor> = [
        (2, Activation::Relu),
        (4, Activation::Tanh),
        (2, Activation::Tanh),
        (6, Activation::Relu),
    ]
    .iter()
    .map(|&(e, a)| OpDescriptor::bottleneck(e, a))
    .collect();
    let input_width = rng.gen_range(2..6);
    let output_width = rng.gen_range(2..6);
    let cells = (0..rng.gen_range(1..3))
        .map(|_| {
            let depth = rng.gen_range(1..4);
            let allowed = (0..depth)
                .map(|_| {
                    let mut ops: Vec<usize> = (0..catalog.len()).collect();
                    ops.shuffle(rng);
                    ops.truncate(rng.gen_range(1..=catalog.len()));
                    ops
                })
                .collect();
            CellSpec {
                depth,
                width: rng.gen_range(2..6),
                allowed,
            }
        })
        .collect();
    SearchSpace::new(
        catalog,
        vec![BlockSpec {
            input_width,
            output_width,
            cells,
        }],
    )
}

/// Trains `n` random blocks briefly and rates each both ways.
pub fn check_rating(n: usize, seed: u64) -> Result<RatingCheck> {
    let mut rng = rng_for(seed, &[0x4a7e]);
    let mut check = RatingCheck {
        orderings_equal: true,
        counts_exact: true,
        ..Default::default()
    };
    for b in 0..n {
        let space = random_block_space(&mut rng)?;
        let spec = &space.blocks[0];
        let mut block = SupernetBlock::init(&space, 0, seed.wrapping_add(b as u64))?;
        let rows = 24;
        let features = BlockFeatures {
            inputs: random_tensor(rows, spec.input_width, &mut rng),
            targets: random_tensor(rows, spec.output_width, &mut rng),
        };
        let hyper = TrainHyper {
            learning_rate: 0.01,
            epochs: 2,
            batch_size: 8,
            seed: seed.wrapping_add(b as u64),
            ..TrainHyper::default()
        };
        let train: Vec<usize> = (0..16).collect();
        train_block(
            &mut block,
            &features,
            &train,
            &hyper,
            hyper.learning_rate,
            &mut rng,
        )?;
        let val: Vec<usize> = (16..rows).collect();
        let (x, y) = (
            features.inputs.select_rows(&val),
            features.targets.select_rows(&val),
        );
        let (fast, stats) = rate_block(&block, &x, &y, Metric::RelativeL1, seed)?;
        let (slow, naive) = naive_rate_block(&block, &x, &y, Metric::RelativeL1, seed)?;
        let expected: u64 = spec
            .cells
            .iter()
            .map(|c| {
                (1..=c.depth)
                    .map(|i| {
                        c.allowed[..i]
                            .iter()
                            .map(|o| o.len() as u64)
                            .product::<u64>()
                    })
                    .sum::<u64>()
            })
            .sum();
        check.counts_exact &= stats.op_applications == expected;
        check.op_applications += stats.op_applications;
        check.naive_op_applications += naive.op_applications;
        for (f, s) in fast.entries.iter().zip(&slow.entries) {
            check.orderings_equal &= f.arch == s.arch;
            check.max_abs_diff = check.max_abs_diff.max((f.score - s.score).abs());
        }
        check.orderings_equal &= fast.entries.len() == slow.entries.len()
            && fast.entries.len() == enumerate_block(&space, 0)?.count();
        check.blocks += 1;
    }
    Ok(check)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchCheck {
    pub instances: usize,
    /// Instances whose optimal totals (or feasibility) disagreed.
    pub mismatches: usize,
    /// Instances where the constraint excluded the unconstrained optimum.
    pub binding: usize,
    /// Binding instances in which traversal evaluated fewer architectures
    /// than the full product.
    pub pruned_when_binding: usize,
}

/// Random score lists over random multi-block spaces of at most 10⁵
/// architectures, searched both ways under random budgets.
pub fn check_search(n: usize, seed: u64) -> Result<SearchCheck> {
    let mut rng = rng_for(seed, &[0x5ea7]);
    let mut check = SearchCheck::default();
    while check.instances < n {
        let blocks = rng.gen_range(1..5);
        let catalog: Vec<OpDescriptor> = (0..4)
            .map(|i| {
                OpDescriptor::bottleneck(
                    2 + 2 * (i % 3),
                    if i % 2 == 0 {
                        Activation::Relu
                    } else {
                        Activation::Tanh
                    },
                )
            })
            .collect();
        let mut widths = vec![rng.gen_range(2..8)];
        let specs: Vec<BlockSpec> = (0..blocks)
            .map(|_| {
                let input_width = *widths.last().unwrap();
                let output_width = rng.gen_range(2..8);
                widths.push(output_width);
                let cells = (0..rng.gen_range(1..3))
                    .map(|_| {
                        let depth = rng.gen_range(1..3);
                        CellSpec {
                            depth,
                            width: rng.gen_range(2..10),
                            allowed: (0..depth)
                                .map(|_| {
                                    let mut ops: Vec<usize> = (0..4).collect();
                                    ops.shuffle(&mut rng);
                                    ops.truncate(rng.gen_range(1..=4));
                                    ops
                                })
                                .collect(),
                        }
                    })
                    .collect();
                BlockSpec {
                    input_width,
                    output_width,
                    cells,
                }
            })
            .collect();
        let space = SearchSpace::new(catalog, specs)?;
        let total: u64 = space.blocks.iter().map(BlockSpec::size_u64).product();
        if total > 100_000 {
            continue;
        }
        let lut = build_cost_lut(&space);
        let lists: Vec<LocalScoreList> = (0..blocks)
            .map(|k| {
                let entries = enumerate_block(&space, k)?
                    .map(|arch| {
                        let cost = lut.block_cost(k, &arch)?;
                        // coarse grid so exact ties occur
                        let score = (rng.gen_range(0..40) as f64) * 0.125;
                        Ok(ScoreEntry { arch, score, cost })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LocalScoreList::from_unsorted(k, entries, 1, seed))
            })
            .collect::<Result<_>>()?;
        let mut costs: Vec<Cost> = Vec::new();
        for l in &lists {
            let block_costs: Vec<Cost> = l.entries.iter().map(|e| e.cost).collect();
            costs = if costs.is_empty() {
                block_costs
            } else {
                costs
                    .iter()
                    .flat_map(|a| block_costs.iter().map(move |b| *a + *b))
                    .collect()
            };
        }
        let pick = costs[rng.gen_range(0..costs.len())];
        let constraint = match rng.gen_range(0..3) {
            0 => Constraint::params(pick.params),
            1 => Constraint::macs(pick.macs),
            _ => Constraint {
                max_params: Some(pick.params),
                max_macs: Some(pick.macs + rng.gen_range(0..50)),
            },
        };
        let fast = traverse_search(&lists, &lut, &constraint, &[]);
        let slow = exhaustive_search(&lists, &lut, &constraint, &[]);
        match (&fast, &slow) {
            (Ok(f), Ok(s)) => {
                if f.score != s.score || !constraint.admits(f.cost) {
                    check.mismatches += 1;
                }
                let free = exhaustive_search(&lists, &lut, &Constraint::NONE, &[])?;
                if !constraint.admits(free.cost) {
                    check.binding += 1;
                    if f.visits < total {
                        check.pruned_when_binding += 1;
                    }
                }
            }
            (Err(_), Err(_)) => {}
            _ => check.mismatches += 1,
        }
        check.instances += 1;
    }
    Ok(check)
}

/// All suites with the sizes the acceptance thresholds call for.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub rating: RatingCheck,
    pub search: SearchCheck,
    pub gradients: Vec<(String, f64)>,
}

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const RATING_TOLERANCE: f64 = 1e-9;

impl VerifyReport {
    pub fn run(seed: u64) -> Result<VerifyReport> {
        let mut gradients = check_op_gradients(100, seed)?;
        gradients.extend(check_loss_gradients(100, seed)?);
        Ok(VerifyReport {
            rating: check_rating(50, seed)?,
            search: check_search(200, seed)?,
            gradients,
        })
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let r = &self.rating;
        if !(r.max_abs_diff <= RATING_TOLERANCE && r.orderings_equal && r.counts_exact) {
            out.push(format!("rating: {r:?}"));
        }
        let s = &self.search;
        if s.mismatches > 0 || s.pruned_when_binding < s.binding {
            out.push(format!("search: {s:?}"));
        }
        for (name, e) in &self.gradients {
            if !(*e < GRADIENT_TOLERANCE) {
                out.push(format!("gradient {name}: max relative error {e:.3e}"));
            }
        }
        out
    }
}
