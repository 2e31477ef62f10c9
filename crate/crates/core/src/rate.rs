//! Architecture rating: every path of a block is scored against held-out
//! teacher features. The shared-prefix traversal applies each tree node's op
//! once and reuses its output for all descendants.

use std::cmp::Ordering;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::distill::SupernetBlock;
use crate::error::{Error, Result};
use crate::numkernel::{mse, op_forward, Tensor};
use crate::space::{BlockArch, Cost};

/// Population variance over all entries.
pub fn population_variance(y: &Tensor) -> f64 {
    let n = y.len() as f64;
    let mean = y.data().iter().sum::<f64>() / n;
    y.data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n
}

/// `‖y − ŷ‖₁ / (K·√D(y))`, K the entry count and D the population variance
/// of the target.
pub fn relative_l1(y: &Tensor, yhat: &Tensor) -> Result<f64> {
    y.same_shape(yhat, "relative_l1")?;
    let var = population_variance(y);
    if !(var > 0.0) {
        return Err(Error::DegenerateTarget);
    }
    let l1: f64 = y
        .data()
        .iter()
        .zip(yhat.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(l1 / (y.len() as f64 * var.sqrt()))
}

/// Gradient of [`relative_l1`] with respect to `yhat` (sign(0) taken as 0).
pub fn relative_l1_grad(y: &Tensor, yhat: &Tensor) -> Result<Tensor> {
    y.same_shape(yhat, "relative_l1")?;
    let var = population_variance(y);
    if !(var > 0.0) {
        return Err(Error::DegenerateTarget);
    }
    let scale = 1.0 / (y.len() as f64 * var.sqrt());
    let mut g = yhat.clone();
    for (gv, t) in g.data_mut().iter_mut().zip(y.data()) {
        let d = *gv - t;
        *gv = if d > 0.0 {
            scale
        } else if d < 0.0 {
            -scale
        } else {
            0.0
        };
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    RelativeL1,
    Mse,
}

impl Metric {
    pub fn eval(self, y: &Tensor, yhat: &Tensor) -> Result<f64> {
        match self {
            Metric::RelativeL1 => relative_l1(y, yhat),
            Metric::Mse => mse(y, yhat),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreEntry {
    pub arch: BlockArch,
    pub score: f64,
    pub cost: Cost,
}

/// Sorted (ascending score, then canonical arch order) scores of every
/// architecture of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalScoreList {
    pub block: usize,
    pub entries: Vec<ScoreEntry>,
    pub val_rows: usize,
    pub seed: u64,
}

fn entry_order(a: &ScoreEntry, b: &ScoreEntry) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.arch.cmp(&b.arch))
}

impl LocalScoreList {
    pub fn from_unsorted(
        block: usize,
        mut entries: Vec<ScoreEntry>,
        val_rows: usize,
        seed: u64,
    ) -> Self {
        entries.sort_by(entry_order);
        LocalScoreList {
            block,
            entries,
            val_rows,
            seed,
        }
    }

    pub fn is_sorted(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| entry_order(&w[0], &w[1]) != Ordering::Greater)
    }

    pub fn score_of(&self, arch: &BlockArch) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.arch == arch)
            .map(|e| e.score)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Work counters for one rating pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RateStats {
    pub op_applications: u64,
    pub adapter_applications: u64,
}

fn check_inputs(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.rows() == 0 || y.rows() == 0 || x.is_empty() {
        return Err(Error::Precondition("no validation rows".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::Dimension {
            context: "validation rows",
            expected: vec![x.rows()],
            actual: vec![y.rows()],
        });
    }
    Ok(())
}

fn path_cost(block: &SupernetBlock, arch: &BlockArch) -> Result<Cost> {
    let net = block.extract(arch)?;
    Ok(Cost {
        params: net.param_count(),
        macs: net.mac_count(),
    })
}

/// Scores every path of `block` on `(x, y)` with shared-prefix traversal.
pub fn rate_block(
    block: &SupernetBlock,
    x: &Tensor,
    y: &Tensor,
    metric: Metric,
    seed: u64,
) -> Result<(LocalScoreList, RateStats)> {
    check_inputs(x, y)?;
    let mut stats = RateStats::default();
    let mut entries = Vec::new();
    for (c, (cell, spec)) in block.cells.iter().zip(&block.spec.cells).enumerate() {
        let root = Rc::new(cell.input_adapter.linear.forward(x)?);
        stats.adapter_applications += 1;
        let mut stack: Vec<(Vec<usize>, Rc<Tensor>)> = vec![(Vec::new(), root)];
        while let Some((prefix, feature)) = stack.pop() {
            let layer = prefix.len();
            if layer == spec.depth {
                let out = cell.output_adapter.linear.forward(&feature)?;
                stats.adapter_applications += 1;
                let arch = BlockArch {
                    cell: c,
                    ops: prefix,
                };
                let score = metric.eval(y, &out)?;
                let cost = path_cost(block, &arch)?;
                entries.push(ScoreEntry { arch, score, cost });
                continue;
            }
            // children pushed in reverse so they pop in canonical order
            for (slot, &op) in spec.allowed[layer].iter().enumerate().rev() {
                let child = op_forward(&cell.banks[layer][slot].op, &feature)?;
                stats.op_applications += 1;
                let mut p = prefix.clone();
                p.push(op);
                stack.push((p, Rc::new(child)));
            }
        }
    }
    Ok((
        LocalScoreList::from_unsorted(block.index, entries, x.rows(), seed),
        stats,
    ))
}

/// Reference rating: each path evaluated from scratch.
pub fn naive_rate_block(
    block: &SupernetBlock,
    x: &Tensor,
    y: &Tensor,
    metric: Metric,
    seed: u64,
) -> Result<(LocalScoreList, RateStats)> {
    check_inputs(x, y)?;
    let mut stats = RateStats::default();
    let mut entries = Vec::new();
    let space = crate::space::SearchSpace {
        catalog: block.catalog.clone(),
        blocks: vec![block.spec.clone()],
    };
    for arch in crate::space::enumerate_block(&space, 0)? {
        let net = block.extract(&arch)?;
        let mut h = net.input_adapter.forward(x)?;
        for op in &net.layers {
            h = op_forward(op, &h)?;
            stats.op_applications += 1;
        }
        let out = net.output_adapter.forward(&h)?;
        stats.adapter_applications += 2;
        let score = metric.eval(y, &out)?;
        let cost = Cost {
            params: net.param_count(),
            macs: net.mac_count(),
        };
        entries.push(ScoreEntry { arch, score, cost });
    }
    Ok((
        LocalScoreList::from_unsorted(block.index, entries, x.rows(), seed),
        stats,
    ))
}

/// Node count of the evaluation tree: Σ over cells of Σ_i Π_{j≤i} c_j.
pub fn tree_node_count(block: &crate::space::BlockSpec) -> u64 {
    block
        .cells
        .iter()
        .map(|cell| {
            let mut prod = 1u64;
            let mut total = 0u64;
            for ops in &cell.allowed {
                prod *= ops.len() as u64;
                total += prod;
            }
            total
        })
        .sum()
}
