//! The modular search space: blocks of alternative cells, each cell a stack
//! of layers with a per-layer operation choice.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{Activation, OpKind, OpParams};

/// Abstract catalog entry; weights live elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpDescriptor {
    #[serde(default = "default_kind")]
    pub kind: OpKind,
    pub expansion: usize,
    pub activation: Activation,
}

fn default_kind() -> OpKind {
    OpKind::Bottleneck
}

impl OpDescriptor {
    pub const fn bottleneck(expansion: usize, activation: Activation) -> Self {
        OpDescriptor {
            kind: OpKind::Bottleneck,
            expansion,
            activation,
        }
    }

    pub fn instantiate<R: Rng + ?Sized>(
        &self,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> OpParams {
        OpParams::init(
            self.kind,
            self.expansion,
            self.activation,
            input,
            output,
            rng,
        )
    }
}

impl fmt::Display for OpDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let act = match self.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        };
        match self.kind {
            OpKind::Bottleneck => write!(f, "e{}-{}", self.expansion, act),
            OpKind::Dense => write!(f, "dense-{act}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub depth: usize,
    pub width: usize,
    /// Allowed catalog indices per layer. Empty means every layer may use the
    /// whole catalog; it is expanded when the space is validated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<Vec<usize>>,
}

impl CellSpec {
    pub fn new(depth: usize, width: usize) -> Self {
        CellSpec {
            depth,
            width,
            allowed: Vec::new(),
        }
    }

    /// Number of paths through this cell.
    pub fn path_count(&self) -> BigUint {
        self.allowed
            .iter()
            .fold(BigUint::one(), |acc, ops| acc * BigUint::from(ops.len()))
    }

    fn path_count_u64(&self) -> u64 {
        self.allowed.iter().map(|ops| ops.len() as u64).product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub cells: Vec<CellSpec>,
}

impl BlockSpec {
    pub fn size(&self) -> BigUint {
        self.cells.iter().map(CellSpec::path_count).sum()
    }

    /// Block size as `u64`; panics only for spaces far beyond desk scale.
    pub fn size_u64(&self) -> u64 {
        self.cells.iter().map(CellSpec::path_count_u64).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub catalog: Vec<OpDescriptor>,
    pub blocks: Vec<BlockSpec>,
}

impl SearchSpace {
    /// Validates the space and expands implicit per-layer op lists.
    pub fn new(catalog: Vec<OpDescriptor>, mut blocks: Vec<BlockSpec>) -> Result<Self> {
        let err = |path: String, reason: &str| Error::Config {
            path,
            reason: reason.to_string(),
        };
        if catalog.is_empty() {
            return Err(err("space.catalog".into(), "catalog is empty"));
        }
        if blocks.is_empty() {
            return Err(err("space.blocks".into(), "no blocks"));
        }
        for (i, op) in catalog.iter().enumerate() {
            if op.expansion == 0 {
                return Err(err(
                    format!("space.catalog[{i}].expansion"),
                    "must be positive",
                ));
            }
        }
        for (k, block) in blocks.iter_mut().enumerate() {
            if block.cells.is_empty() {
                return Err(err(
                    format!("space.blocks[{k}].cells"),
                    "block needs at least one cell",
                ));
            }
            if block.input_width == 0 || block.output_width == 0 {
                return Err(err(
                    format!("space.blocks[{k}]"),
                    "teacher widths must be positive",
                ));
            }
            for (c, cell) in block.cells.iter_mut().enumerate() {
                let path = format!("space.blocks[{k}].cells[{c}]");
                if cell.depth == 0 || cell.width == 0 {
                    return Err(err(path, "depth and width must be at least 1"));
                }
                if cell.allowed.is_empty() {
                    cell.allowed = vec![(0..catalog.len()).collect(); cell.depth];
                }
                if cell.allowed.len() != cell.depth {
                    return Err(err(path, "allowed op lists must match depth"));
                }
                for ops in &mut cell.allowed {
                    ops.sort_unstable();
                    ops.dedup();
                    if ops.is_empty() || ops.iter().any(|&o| o >= catalog.len()) {
                        return Err(err(path, "allowed op indices empty or out of range"));
                    }
                }
            }
        }
        for k in 1..blocks.len() {
            if blocks[k].input_width != blocks[k - 1].output_width {
                return Err(err(
                    format!("space.blocks[{k}].input_width"),
                    "must equal the previous block's output width",
                ));
            }
        }
        Ok(SearchSpace { catalog, blocks })
    }

    pub fn block(&self, k: usize) -> Result<&BlockSpec> {
        self.blocks.get(k).ok_or(Error::Index {
            what: "block",
            index: k,
            len: self.blocks.len(),
        })
    }

    pub fn input_width(&self) -> usize {
        self.blocks[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.blocks.last().map(|b| b.output_width).unwrap_or(0)
    }

    /// Same space with every layer restricted to the first `n` catalog ops.
    pub fn restrict_ops(&self, n: usize) -> Result<SearchSpace> {
        let mut blocks = self.blocks.clone();
        for cell in blocks.iter_mut().flat_map(|b| b.cells.iter_mut()) {
            for ops in &mut cell.allowed {
                ops.retain(|&o| o < n);
            }
        }
        SearchSpace::new(self.catalog.clone(), blocks)
    }
}

/// Exact number of architectures: product over blocks of the sum over cells
/// of the per-cell path counts.
pub fn space_size(space: &SearchSpace) -> BigUint {
    space
        .blocks
        .iter()
        .fold(BigUint::one(), |acc, b| acc * b.size())
}

/// Ratio between the size of the whole space and that of block `k` alone.
pub fn blocky_reduction(space: &SearchSpace, k: usize) -> Result<BigRational> {
    let block = space.block(k)?;
    Ok(BigRational::new(
        space_size(space).into(),
        block.size().into(),
    ))
}

/// Six-block mobile-scale layout: teacher widths 48, 80, 160, 224, 384, 640
/// after a 16-wide stem, with cells given as (depth, width).
pub fn mobile_layout(catalog: Vec<OpDescriptor>) -> Result<SearchSpace> {
    const CELLS: [&[(usize, usize)]; 6] = [
        &[(2, 24), (3, 24), (2, 32)],
        &[(2, 40), (3, 40), (4, 40)],
        &[(2, 80), (3, 80), (4, 80)],
        &[(3, 112), (4, 112), (4, 96)],
        &[(4, 192), (5, 192), (5, 160)],
        &[(1, 320)],
    ];
    const WIDTHS: [usize; 7] = [16, 48, 80, 160, 224, 384, 640];
    let blocks = CELLS
        .iter()
        .enumerate()
        .map(|(k, cells)| BlockSpec {
            input_width: WIDTHS[k],
            output_width: WIDTHS[k + 1],
            cells: cells.iter().map(|&(d, w)| CellSpec::new(d, w)).collect(),
        })
        .collect();
    SearchSpace::new(catalog, blocks)
}

/// One block's choice: a cell and an op per layer of that cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockArch {
    pub cell: usize,
    pub ops: Vec<usize>,
}

impl PartialOrd for BlockArch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical order: cell-major, then lexicographic over op indices.
impl Ord for BlockArch {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cell
            .cmp(&other.cell)
            .then_with(|| self.ops.cmp(&other.ops))
    }
}

impl fmt::Display for BlockArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}:", self.cell)?;
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

impl BlockArch {
    pub fn validate(&self, block: &BlockSpec) -> Result<()> {
        let cell = block.cells.get(self.cell).ok_or(Error::Index {
            what: "cell",
            index: self.cell,
            len: block.cells.len(),
        })?;
        if self.ops.len() != cell.depth {
            return Err(Error::Precondition(format!(
                "cell {} has depth {}, got {} op choices",
                self.cell,
                cell.depth,
                self.ops.len()
            )));
        }
        for (layer, op) in self.ops.iter().enumerate() {
            if !cell.allowed[layer].contains(op) {
                return Err(Error::Precondition(format!(
                    "op {op} not allowed at layer {layer} of cell {}",
                    self.cell
                )));
            }
        }
        Ok(())
    }

    /// Parses the block-local form `c<cell>:<op>.<op>...`; `offset` shifts
    /// reported error positions when embedded in a longer id.
    pub fn parse(text: &str, block: &BlockSpec, offset: usize) -> Result<BlockArch> {
        let perr = |pos: usize, reason: String| Error::Parse {
            position: offset + pos,
            reason,
        };
        let rest = text
            .strip_prefix('c')
            .ok_or_else(|| perr(0, "expected 'c'".into()))?;
        let colon = rest
            .find(':')
            .ok_or_else(|| perr(1, "expected ':' after cell index".into()))?;
        let cell: usize = rest[..colon]
            .parse()
            .map_err(|_| perr(1, format!("bad cell index {:?}", &rest[..colon])))?;
        let cell_spec = block
            .cells
            .get(cell)
            .ok_or_else(|| perr(1, format!("cell {cell} out of range")))?;
        let mut pos = colon + 2;
        let mut ops = Vec::new();
        for (layer, part) in rest[colon + 1..].split('.').enumerate() {
            let op: usize = part
                .parse()
                .map_err(|_| perr(pos, format!("bad op index {part:?}")))?;
            if layer >= cell_spec.depth {
                return Err(perr(
                    pos,
                    format!("cell {cell} has only {} layers", cell_spec.depth),
                ));
            }
            if !cell_spec.allowed[layer].contains(&op) {
                return Err(perr(pos, format!("op {op} not allowed at layer {layer}")));
            }
            ops.push(op);
            pos += part.len() + 1;
        }
        if ops.len() != cell_spec.depth {
            return Err(perr(
                pos.saturating_sub(1),
                format!(
                    "cell {cell} needs {} layers, got {}",
                    cell_spec.depth,
                    ops.len()
                ),
            ));
        }
        Ok(BlockArch { cell, ops })
    }
}

/// A complete candidate: one block architecture per block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Architecture {
    pub blocks: Vec<BlockArch>,
}

impl Architecture {
    pub fn validate(&self, space: &SearchSpace) -> Result<()> {
        if self.blocks.len() != space.blocks.len() {
            return Err(Error::Precondition(format!(
                "architecture has {} blocks, space has {}",
                self.blocks.len(),
                space.blocks.len()
            )));
        }
        self.blocks
            .iter()
            .zip(&space.blocks)
            .try_for_each(|(a, b)| a.validate(b))
    }

    pub fn random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Self {
        Architecture {
            blocks: space
                .blocks
                .iter()
                .map(|b| sample_block_arch(b, rng))
                .collect(),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode_arch(self))
    }
}

/// Uniform over cells, then uniform over the allowed ops of each layer.
pub fn sample_block_arch<R: Rng + ?Sized>(block: &BlockSpec, rng: &mut R) -> BlockArch {
    let cell = rng.gen_range(0..block.cells.len());
    let ops = block.cells[cell]
        .allowed
        .iter()
        .map(|allowed| allowed[rng.gen_range(0..allowed.len())])
        .collect();
    BlockArch { cell, ops }
}

/// `b0:c1:0.2.1|b1:c0:3.3`
pub fn encode_arch(arch: &Architecture) -> String {
    arch.blocks
        .iter()
        .enumerate()
        .map(|(k, b)| format!("b{k}:{b}"))
        .collect::<Vec<_>>()
        .join("|")
}

pub fn decode_arch(id: &str, space: &SearchSpace) -> Result<Architecture> {
    let mut blocks = Vec::new();
    let mut pos = 0;
    for (k, part) in id.split('|').enumerate() {
        let block = space.blocks.get(k).ok_or(Error::Parse {
            position: pos,
            reason: format!("space has only {} blocks", space.blocks.len()),
        })?;
        let prefix = format!("b{k}:");
        let body = part.strip_prefix(prefix.as_str()).ok_or(Error::Parse {
            position: pos,
            reason: format!("expected {prefix:?}"),
        })?;
        blocks.push(BlockArch::parse(body, block, pos + prefix.len())?);
        pos += part.len() + 1;
    }
    if blocks.len() != space.blocks.len() {
        return Err(Error::Parse {
            position: id.len(),
            reason: format!(
                "expected {} blocks, got {}",
                space.blocks.len(),
                blocks.len()
            ),
        });
    }
    Ok(Architecture { blocks })
}

/// Every block architecture of block `k` in canonical order.
pub fn enumerate_block(space: &SearchSpace, k: usize) -> Result<BlockArchIter<'_>> {
    Ok(BlockArchIter {
        block: space.block(k)?,
        cell: 0,
        digits: None,
    })
}

pub struct BlockArchIter<'a> {
    block: &'a BlockSpec,
    cell: usize,
    digits: Option<Vec<usize>>,
}

impl Iterator for BlockArchIter<'_> {
    type Item = BlockArch;

    fn next(&mut self) -> Option<BlockArch> {
        loop {
            let cell = self.block.cells.get(self.cell)?;
            let advanced = match &mut self.digits {
                None => {
                    self.digits = Some(vec![0; cell.depth]);
                    true
                }
                Some(d) => odometer_step(d, &cell.allowed),
            };
            if !advanced {
                self.cell += 1;
                self.digits = None;
                continue;
            }
            let d = self.digits.as_ref()?;
            let ops = d
                .iter()
                .zip(&cell.allowed)
                .map(|(&i, allowed)| allowed[i])
                .collect();
            return Some(BlockArch {
                cell: self.cell,
                ops,
            });
        }
    }
}

/// Advances the mixed-radix counter, last layer fastest. Returns false on wrap.
fn odometer_step(digits: &mut [usize], allowed: &[Vec<usize>]) -> bool {
    for layer in (0..digits.len()).rev() {
        digits[layer] += 1;
        if digits[layer] < allowed[layer].len() {
            return true;
        }
        digits[layer] = 0;
    }
    false
}

/// Every architecture of the whole space in canonical order (block 0 slowest).
pub fn enumerate_space(space: &SearchSpace) -> Vec<Architecture> {
    let per_block: Vec<Vec<BlockArch>> = (0..space.blocks.len())
        .map(|k| enumerate_block(space, k).expect("valid block").collect())
        .collect();
    let mut out = vec![Architecture { blocks: Vec::new() }];
    for choices in &per_block {
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for prefix in &out {
            for c in choices {
                let mut blocks = prefix.blocks.clone();
                blocks.push(c.clone());
                next.push(Architecture { blocks });
            }
        }
        out = next;
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cost {
    pub params: u64,
    pub macs: u64,
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost {
            params: self.params + rhs.params,
            macs: self.macs + rhs.macs,
        }
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::default(), Add::add)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    #[serde(default)]
    pub max_params: Option<u64>,
    #[serde(default)]
    pub max_macs: Option<u64>,
}

impl Constraint {
    pub const NONE: Constraint = Constraint {
        max_params: None,
        max_macs: None,
    };

    pub fn params(max: u64) -> Self {
        Constraint {
            max_params: Some(max),
            max_macs: None,
        }
    }

    pub fn macs(max: u64) -> Self {
        Constraint {
            max_params: None,
            max_macs: Some(max),
        }
    }

    pub fn admits(&self, cost: Cost) -> bool {
        self.max_params.is_none_or(|m| cost.params <= m)
            && self.max_macs.is_none_or(|m| cost.macs <= m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_params == Some(0) || self.max_macs == Some(0) {
            return Err(Error::Config {
                path: "constraint".into(),
                reason: "limits must be positive".into(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.max_params, self.max_macs) {
            (None, None) => f.write_str("unconstrained"),
            (Some(p), None) => write!(f, "params<={p}"),
            (None, Some(m)) => write!(f, "macs<={m}"),
            (Some(p), Some(m)) => write!(f, "params<={p};macs<={m}"),
        }
    }
}

/// Per-layer op costs plus the fixed adapter cost of each cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostLut {
    /// `[block][cell][layer][op]`; `None` where the op is not allowed.
    layers: Vec<Vec<Vec<Vec<Option<Cost>>>>>,
    /// `[block][cell]` input plus output adapter.
    adapters: Vec<Vec<Cost>>,
}

pub fn adapter_cost(teacher_in: usize, width: usize, teacher_out: usize) -> Cost {
    let (i, w, o) = (teacher_in as u64, width as u64, teacher_out as u64);
    Cost {
        params: i * w + w + w * o + o,
        macs: i * w + w * o,
    }
}

pub fn build_cost_lut(space: &SearchSpace) -> CostLut {
    let mut layers = Vec::new();
    let mut adapters = Vec::new();
    for block in &space.blocks {
        let mut block_layers = Vec::new();
        let mut block_adapters = Vec::new();
        for cell in &block.cells {
            let per_layer = cell
                .allowed
                .iter()
                .map(|allowed| {
                    (0..space.catalog.len())
                        .map(|o| {
                            allowed.contains(&o).then(|| {
                                let d = space.catalog[o];
                                Cost {
                                    params: OpParams::param_count_for(
                                        d.kind,
                                        d.expansion,
                                        cell.width,
                                        cell.width,
                                    ),
                                    macs: OpParams::mac_count_for(
                                        d.kind,
                                        d.expansion,
                                        cell.width,
                                        cell.width,
                                    ),
                                }
                            })
                        })
                        .collect()
                })
                .collect();
            block_layers.push(per_layer);
            block_adapters.push(adapter_cost(
                block.input_width,
                cell.width,
                block.output_width,
            ));
        }
        layers.push(block_layers);
        adapters.push(block_adapters);
    }
    CostLut { layers, adapters }
}

impl CostLut {
    pub fn op_cost(&self, block: usize, cell: usize, layer: usize, op: usize) -> Option<Cost> {
        *self.layers.get(block)?.get(cell)?.get(layer)?.get(op)?
    }

    pub fn adapter_cost(&self, block: usize, cell: usize) -> Option<Cost> {
        self.adapters.get(block)?.get(cell).copied()
    }

    pub fn block_cost(&self, block: usize, arch: &BlockArch) -> Result<Cost> {
        let missing = || {
            Error::Precondition(format!(
                "block {block} arch {arch} is not in the cost table"
            ))
        };
        let mut cost = self.adapter_cost(block, arch.cell).ok_or_else(missing)?;
        for (layer, &op) in arch.ops.iter().enumerate() {
            cost = cost
                + self
                    .op_cost(block, arch.cell, layer, op)
                    .ok_or_else(missing)?;
        }
        Ok(cost)
    }

    pub fn arch_cost(&self, arch: &Architecture) -> Result<Cost> {
        arch.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| self.block_cost(k, b))
            .sum()
    }

    pub fn num_blocks(&self) -> usize {
        self.layers.len()
    }
}
