//! Progressive generations (the searched architecture, scaled up, becomes
//! the next teacher) and self-supervised joint training of teacher and
//! student blocks with a variance hinge against representational collapse.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distill::{
    block_path_rng, extract_features, init_supernet, make_teacher, sample_path, SupernetBlock,
    TeacherNet, TeacherSpec,
};
use crate::error::{Error, Result};
use crate::net::{boundary_widths, minibatches, CellShape, ChainNet};
use crate::numkernel::{adam_step, AdamState, Linear, LinearGrads, Tensor, TrainHyper};
use crate::pipeline::{rate_all, run_dna, DnaSettings};
use crate::rate::LocalScoreList;
use crate::rng::{derive_seed, rng_for, stream};
use crate::search::{traverse_search, SearchOutcome};
use crate::space::{Architecture, Constraint, CostLut, SearchSpace};
use crate::task::Dataset;

/// Builds a teacher structure from a searched architecture: per block,
/// `ceil(depth·depth_mult)` layers cycling through the chosen ops and
/// `ceil(width·width_mult)` channels.
pub fn scale_arch(
    space: &SearchSpace,
    arch: &Architecture,
    depth_mult: f64,
    width_mult: f64,
) -> Result<TeacherSpec> {
    if !(depth_mult >= 1.0 && width_mult >= 1.0) {
        return Err(Error::Precondition(
            "scaling multipliers must be at least 1".into(),
        ));
    }
    arch.validate(space)?;
    let scale = |v: usize, m: f64| ((v as f64 * m) - 1e-9).ceil().max(v as f64) as usize;
    let blocks = arch
        .blocks
        .iter()
        .zip(&space.blocks)
        .map(|(a, b)| {
            let cell = &b.cells[a.cell];
            let depth = scale(cell.depth, depth_mult);
            CellShape {
                width: scale(cell.width, width_mult),
                ops: (0..depth)
                    .map(|i| space.catalog[a.ops[i % a.ops.len()]])
                    .collect(),
            }
        })
        .collect();
    Ok(TeacherSpec { blocks })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlusConfig {
    pub generations: usize,
    #[serde(default = "default_mult")]
    pub depth_mult: f64,
    #[serde(default = "default_mult")]
    pub width_mult: f64,
}

fn default_mult() -> f64 {
    1.5
}

impl Default for PlusConfig {
    fn default() -> Self {
        PlusConfig {
            generations: 2,
            depth_mult: default_mult(),
            width_mult: default_mult(),
        }
    }
}

pub struct GenerationState {
    pub generation: usize,
    pub teacher: TeacherNet,
    pub lists: Vec<LocalScoreList>,
    pub searched: SearchOutcome,
}

/// Seed used by generation `m`; generation 0 uses the base seed unchanged.
pub fn generation_seed(seed: u64, m: usize) -> u64 {
    if m == 0 {
        seed
    } else {
        derive_seed(seed, &[0x9e1e_0000 + m as u64])
    }
}

/// Runs `plus.generations` rounds of teacher training, block-wise
/// distillation, rating and search. Generation `m ≥ 1` trains its teacher
/// from scratch on `scale_arch(α^{(m−1)*})`.
#[allow(clippy::too_many_arguments)]
pub fn dna_plus_run(
    space: &SearchSpace,
    data: &Dataset,
    first_teacher: &TeacherSpec,
    teacher_hyper: &TrainHyper,
    settings: &DnaSettings,
    lut: &CostLut,
    constraint: &Constraint,
    weights: &[f64],
    plus: &PlusConfig,
) -> Result<Vec<GenerationState>> {
    if plus.generations == 0 {
        return Err(Error::Precondition(
            "at least one generation is required".into(),
        ));
    }
    let mut states: Vec<GenerationState> = Vec::with_capacity(plus.generations);
    for m in 0..plus.generations {
        let run = || -> Result<GenerationState> {
            let spec = match states.last() {
                None => first_teacher.clone(),
                Some(prev) => {
                    scale_arch(space, &prev.searched.arch, plus.depth_mult, plus.width_mult)?
                }
            };
            let th = teacher_hyper.with_seed(generation_seed(teacher_hyper.seed, m));
            let teacher = make_teacher(space, &spec, data, &th)?;
            let gen_settings = DnaSettings {
                supernet: settings
                    .supernet
                    .with_seed(generation_seed(settings.supernet.seed, m)),
                ..settings.clone()
            };
            let dna = run_dna(space, data, &teacher.net, &gen_settings)?;
            let searched = traverse_search(&dna.lists, lut, constraint, weights)?;
            Ok(GenerationState {
                generation: m,
                teacher,
                lists: dna.lists,
                searched,
            })
        };
        let state = run().map_err(|e| e.in_generation(m))?;
        states.push(state);
    }
    Ok(states)
}

/// Weights and thresholds of the self-supervised objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslHyper {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub gamma: f64,
    pub eps: f64,
    pub projector_width: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_noise() -> f64 {
    0.1
}

fn default_dropout() -> f64 {
    0.1
}

impl Default for SslHyper {
    fn default() -> Self {
        SslHyper {
            lambda1: 25.0,
            lambda2: 1.0,
            lambda3: 25.0,
            gamma: 1.0,
            eps: 1e-4,
            projector_width: 4,
            noise: default_noise(),
            dropout: default_dropout(),
        }
    }
}

impl SslHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Error::Config {
            path: format!("ssl.{f}"),
            reason: r.into(),
        };
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(bad("lambda", "loss weights must be non-negative"));
        }
        if !(self.eps > 0.0) || !(self.gamma > self.eps.sqrt()) {
            return Err(bad("gamma", "need eps > 0 and gamma > sqrt(eps)"));
        }
        if self.projector_width == 0 {
            return Err(bad("projector_width", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.noise < 0.0 {
            return Err(bad(
                "dropout",
                "dropout must lie in [0, 1), noise non-negative",
            ));
        }
        Ok(())
    }
}

fn column_means(z: &Tensor) -> Vec<f64> {
    let (m, c) = (z.rows(), z.cols());
    let mut mean = vec![0.0; c];
    for row in z.data().chunks(c) {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    mean
}

fn centered(z: &Tensor) -> Tensor {
    let mean = column_means(z);
    let mut out = z.clone();
    let c = z.cols();
    for row in out.data_mut().chunks_mut(c) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    out
}

/// Unbiased covariance `Zcᵀ·Zc / (M − 1)`.
pub fn covariance(z: &Tensor) -> Result<Tensor> {
    if z.rows() < 2 {
        return Err(Error::BatchSize(z.rows()));
    }
    let zc = centered(z);
    let mut cov = zc.matmul_tn(&zc)?;
    cov.scale(1.0 / (z.rows() - 1) as f64);
    Ok(cov)
}

fn off_diagonal(cov: &Tensor) -> Tensor {
    let c = cov.cols();
    let mut off = cov.clone();
    for i in 0..c {
        off.data_mut()[i * c + i] = 0.0;
    }
    off
}

/// Sum of squared off-diagonal covariance entries and its gradient.
fn decorrelation(z: &Tensor) -> Result<(f64, Tensor)> {
    let cov = covariance(z)?;
    let off = off_diagonal(&cov);
    let value = off.data().iter().map(|v| v * v).sum();
    let mut grad = centered(z).matmul(&off)?;
    grad.scale(4.0 / (z.rows() - 1) as f64);
    Ok((value, grad))
}

/// Self-supervised loss for one block: `λ1/M·Σ‖Z − Ẑ‖² +
/// λ2/C·(‖OffDiag(Cov Z)‖² + ‖OffDiag(Cov Ẑ)‖²)`, with gradients for both
/// branches.
pub fn ssl_loss_with_grad(
    z: &Tensor,
    zhat: &Tensor,
    hyper: &SslHyper,
) -> Result<(f64, Tensor, Tensor)> {
    z.same_shape(zhat, "ssl_loss")?;
    let (m, c) = (z.rows(), z.cols());
    if m < 2 {
        return Err(Error::BatchSize(m));
    }
    let mut dist = 0.0;
    let mut gz = z.clone();
    let mut gzh = zhat.clone();
    let k1 = hyper.lambda1 / m as f64;
    for ((a, b), (ga, gb)) in z
        .data()
        .iter()
        .zip(zhat.data())
        .zip(gz.data_mut().iter_mut().zip(gzh.data_mut().iter_mut()))
    {
        let d = a - b;
        dist += d * d;
        *ga = 2.0 * k1 * d;
        *gb = -2.0 * k1 * d;
    }
    let (rz, dz) = decorrelation(z)?;
    let (rh, dh) = decorrelation(zhat)?;
    let k2 = hyper.lambda2 / c as f64;
    for (g, d) in gz.data_mut().iter_mut().zip(dz.data()) {
        *g += k2 * d;
    }
    for (g, d) in gzh.data_mut().iter_mut().zip(dh.data()) {
        *g += k2 * d;
    }
    Ok((k1 * dist + k2 * (rz + rh), gz, gzh))
}

pub fn ssl_loss(z: &Tensor, zhat: &Tensor, hyper: &SslHyper) -> Result<f64> {
    ssl_loss_with_grad(z, zhat, hyper).map(|(v, _, _)| v)
}

/// Unbiased per-channel variance.
pub fn channel_variances(z: &Tensor) -> Result<Vec<f64>> {
    if z.rows() < 2 {
        return Err(Error::BatchSize(z.rows()));
    }
    let zc = centered(z);
    let c = z.cols();
    let mut var = vec![0.0; c];
    for row in zc.data().chunks(c) {
        for (v, x) in var.iter_mut().zip(row) {
            *v += x * x;
        }
    }
    var.iter_mut().for_each(|v| *v /= (z.rows() - 1) as f64);
    Ok(var)
}

/// Variance hinge `λ3/C·Σ_c max(0, γ − √(Var_c + ε))` and its gradient.
pub fn sdr_loss_with_grad(z: &Tensor, hyper: &SslHyper) -> Result<(f64, Tensor)> {
    let var = channel_variances(z)?;
    let (m, c) = (z.rows(), z.cols());
    let k3 = hyper.lambda3 / c as f64;
    let mut value = 0.0;
    let mut coef = vec![0.0; c];
    for (j, v) in var.iter().enumerate() {
        let std = (v + hyper.eps).sqrt();
        if std < hyper.gamma {
            value += hyper.gamma - std;
            // d(-std)/dz = -(z - mean) / ((M-1)·std)
            coef[j] = -k3 / ((m - 1) as f64 * std);
        }
    }
    let mut grad = centered(z);
    for row in grad.data_mut().chunks_mut(c) {
        for (g, k) in row.iter_mut().zip(&coef) {
            *g *= k;
        }
    }
    Ok((k3 * value, grad))
}

pub fn sdr_loss(z: &Tensor, hyper: &SslHyper) -> Result<f64> {
    sdr_loss_with_grad(z, hyper).map(|(v, _)| v)
}

/// Two-layer MLP head (linear, ReLU, linear) with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub first: Linear,
    pub second: Linear,
    state: AdamState,
}

impl Projector {
    pub fn init<R: Rng + ?Sized>(input: usize, width: usize, rng: &mut R) -> Self {
        let first = Linear::init(input, width, 2.0, rng);
        let second = Linear::init(width, width, 1.0, rng);
        let mut params = first.params();
        params.extend(second.params());
        let state = AdamState::for_params(&params);
        Projector {
            first,
            second,
            state,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.first.forward(x)?.map(|v| v.max(0.0));
        self.second.forward(&h)
    }

    fn backward_and_step(
        &mut self,
        x: &Tensor,
        dz: &Tensor,
        hyper: &TrainHyper,
        lr: f64,
    ) -> Result<Tensor> {
        let pre = self.first.forward(x)?;
        let h = pre.map(|v| v.max(0.0));
        let (g2, mut dh): (LinearGrads, Tensor) = self.second.backward(&h, dz)?;
        for (d, p) in dh.data_mut().iter_mut().zip(pre.data()) {
            if *p <= 0.0 {
                *d = 0.0;
            }
        }
        let (g1, dx) = self.first.backward(x, &dh)?;
        let mut grads = g1.tensors();
        grads.extend(g2.tensors());
        let mut params = self.first.params_mut();
        params.extend(self.second.params_mut());
        adam_step(&mut params, &grads, &mut self.state, hyper, lr)?;
        Ok(dx)
    }
}

/// Two independent stochastic views: Gaussian noise plus coordinate dropout.
pub fn augment<R: Rng + ?Sized>(x: &Tensor, noise: f64, dropout: f64, rng: &mut R) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        let keep = rng.gen::<f64>() >= dropout;
        let n: f64 = rng.sample(StandardNormal);
        *v = if keep { *v + noise * n } else { 0.0 };
    }
    out
}

/// Learnable teacher block plus projector for the self-supervised branch.
#[derive(Clone, Debug, PartialEq)]
pub struct SslTeacherBlock {
    pub net: crate::net::CellNet,
    pub state: AdamState,
    pub projector: Projector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SslReport {
    pub epoch_losses: Vec<f64>,
    /// Per-channel std of the teacher-branch embedding over all rows.
    pub teacher_channel_stds: Vec<f64>,
}

/// Joint self-supervised training of one teacher block and one student
/// supernet block on the block inputs `x`.
pub fn train_block_ssl(
    block: &mut SupernetBlock,
    teacher: &mut SslTeacherBlock,
    x: &Tensor,
    rows: &[usize],
    ssl: &SslHyper,
    hyper: &TrainHyper,
) -> Result<SslReport> {
    ssl.validate()?;
    if rows.len() < 2 || hyper.batch_size < 2 {
        return Err(Error::BatchSize(rows.len().min(hyper.batch_size)));
    }
    let mut rng = rng_for(hyper.seed, &[stream::SSL, block.index as u64]);
    let mut path_rng = block_path_rng(derive_seed(hyper.seed, &[stream::SSL]), block.index);
    let mut student_proj = Projector::init(block.spec.output_width, ssl.projector_width, &mut rng);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut step = 0usize;
    for epoch in 0..hyper.epochs {
        let (mut total, mut count) = (0.0, 0);
        for batch in minibatches(rows, hyper.batch_size, &mut rng) {
            if batch.len() < 2 {
                continue;
            }
            step += 1;
            let lr = hyper.lr_for_step(hyper.learning_rate, epoch, step - 1);
            let xb = x.select_rows(&batch);
            let v1 = augment(&xb, ssl.noise, ssl.dropout, &mut rng);
            let v2 = augment(&xb, ssl.noise, ssl.dropout, &mut rng);

            let (t_out, t_trace) = teacher.net.forward_traced(&v1)?;
            let z = teacher.projector.forward(&t_out)?;
            let path = sample_path(&block.spec, &mut path_rng);
            let student = block.extract(&path)?;
            let (s_out, s_trace) = student.forward_traced(&v2)?;
            let zhat = student_proj.forward(&s_out)?;

            let (l_ssl, mut gz, mut gzh) = ssl_loss_with_grad(&z, &zhat, ssl)?;
            let (l_z, dz) = sdr_loss_with_grad(&z, ssl)?;
            let (l_zh, dzh) = sdr_loss_with_grad(&zhat, ssl)?;
            let loss = l_ssl + l_z + l_zh;
            if !loss.is_finite() {
                return Err(Error::Training {
                    step,
                    what: format!("non-finite self-supervised loss in block {}", block.index),
                });
            }
            for (g, d) in gz.data_mut().iter_mut().zip(dz.data()) {
                *g += d;
            }
            for (g, d) in gzh.data_mut().iter_mut().zip(dzh.data()) {
                *g += d;
            }

            let dt = teacher
                .projector
                .backward_and_step(&t_out, &gz, hyper, lr)?;
            let (tg, _) = teacher.net.backward_traced(&t_trace, &dt)?;
            let tgrads = tg.tensors();
            adam_step(
                &mut teacher.net.params_mut(),
                &tgrads,
                &mut teacher.state,
                hyper,
                lr,
            )?;

            let ds = student_proj.backward_and_step(&s_out, &gzh, hyper, lr)?;
            let (sg, _) = student.backward_traced(&s_trace, &ds)?;
            block.apply_path_grads(&path, &sg, hyper, lr)?;

            total += loss * batch.len() as f64;
            count += batch.len();
        }
        epoch_losses.push(total / count.max(1) as f64);
    }
    let z_all = teacher
        .projector
        .forward(&teacher.net.forward(&x.select_rows(rows))?)?;
    let teacher_channel_stds = channel_variances(&z_all)?
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(SslReport {
        epoch_losses,
        teacher_channel_stds,
    })
}

pub struct SslRun {
    pub teacher: ChainNet,
    pub blocks: Vec<SupernetBlock>,
    pub reports: Vec<SslReport>,
    pub lists: Vec<LocalScoreList>,
}

/// Block-by-block self-supervised training of a learnable teacher chain and
/// the student supernet, then rating against the trained teacher's block
/// outputs. No labels are read.
pub fn run_ssl(
    space: &SearchSpace,
    data: &Dataset,
    teacher_spec: &TeacherSpec,
    ssl: &SslHyper,
    hyper: &TrainHyper,
    metric: crate::rate::Metric,
) -> Result<SslRun> {
    if teacher_spec.blocks.len() != space.blocks.len() {
        return Err(Error::Precondition(
            "teacher and space block counts differ".into(),
        ));
    }
    let mut init = rng_for(hyper.seed, &[stream::SSL, 0xfeed]);
    let chain = ChainNet::init(&boundary_widths(space), &teacher_spec.blocks, &mut init)?;
    let mut blocks = init_supernet(space, derive_seed(hyper.seed, &[stream::SSL]))?;
    let mut teacher_cells = Vec::with_capacity(blocks.len());
    let mut reports = Vec::with_capacity(blocks.len());
    let mut inputs = data.x.clone();
    for (k, net) in chain.cells.into_iter().enumerate() {
        let state = AdamState::for_params(&net.params());
        let projector = Projector::init(net.output_width(), ssl.projector_width, &mut init);
        let mut t = SslTeacherBlock {
            net,
            state,
            projector,
        };
        let report = train_block_ssl(&mut blocks[k], &mut t, &inputs, &data.train, ssl, hyper)?;
        inputs = t.net.forward(&inputs)?;
        teacher_cells.push(t.net);
        reports.push(report);
    }
    let teacher = ChainNet {
        cells: teacher_cells,
    };
    let cache = extract_features(&teacher, data)?;
    let lists = rate_all(&blocks, &cache, metric, hyper.seed)?;
    Ok(SslRun {
        teacher,
        blocks,
        reports,
        lists,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::numkernel::{Activation, OpKind};
    use crate::rate::Metric;
    use crate::space::{build_cost_lut, BlockArch, OpDescriptor};
    use crate::testkit::fixture;
    use crate::verify::check_loss_gradients;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let f = fixture();
        let arch = Architecture {
            blocks: vec![
                BlockArch {
                    cell: 1,
                    ops: vec![0, 2],
                },
                BlockArch {
                    cell: 0,
                    ops: vec![1],
                },
            ],
        };
        let same = scale_arch(&f.space, &arch, 1.0, 1.0).unwrap();
        assert_eq!(same.blocks[0].width, 8);
        assert_eq!(
            same.blocks[0].ops,
            vec![f.space.catalog[0], f.space.catalog[2]]
        );
        assert_eq!(same.blocks[1].ops, vec![f.space.catalog[1]]);
        let big = scale_arch(&f.space, &arch, 2.0, 1.5).unwrap();
        let c = &f.space.catalog;
        assert_eq!(big.blocks[0].ops, vec![c[0], c[2], c[0], c[2]]);
        assert_eq!(big.blocks[0].width, 12);
        assert_eq!(big.blocks[1].width, 6);
        let odd = scale_arch(&f.space, &arch, 1.5, 1.5).unwrap();
        assert_eq!(odd.blocks[0].ops.len(), 3);
        assert_eq!(odd.blocks[1].ops.len(), 2);
        assert!(scale_arch(&f.space, &arch, 0.5, 1.0).is_err());
    }

    #[test]
    fn covariance_example_gives_half_lambda2() {
        let z = t(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let cov = covariance(&z).unwrap();
        assert_eq!(cov.data(), &[0.5, -0.5, -0.5, 0.5]);
        let h = SslHyper {
            lambda2: 3.0,
            ..SslHyper::default()
        };
        assert_eq!(ssl_loss(&z, &z, &h).unwrap(), 3.0 * 0.5);
    }

    #[test]
    fn ssl_loss_vanishes_for_equal_decorrelated_views() {
        let z = t(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        assert_eq!(ssl_loss(&z, &z, &SslHyper::default()).unwrap(), 0.0);
    }

    #[test]
    fn lambda1_scales_the_distance_term_only() {
        let z = t(3, 2, &[1.0, 0.2, -0.5, 0.4, 0.3, -1.0]);
        let zh = t(3, 2, &[0.7, 0.1, -0.2, 0.9, 0.0, -0.4]);
        let off = SslHyper {
            lambda1: 0.0,
            ..SslHyper::default()
        };
        let one = SslHyper {
            lambda1: 1.0,
            ..SslHyper::default()
        };
        let two = SslHyper {
            lambda1: 2.0,
            ..SslHyper::default()
        };
        let base = ssl_loss(&z, &zh, &off).unwrap();
        let d1 = ssl_loss(&z, &zh, &one).unwrap() - base;
        let d2 = ssl_loss(&z, &zh, &two).unwrap() - base;
        assert!(d1 > 0.0);
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
    }

    #[test]
    fn single_row_batches_are_rejected() {
        let z = t(1, 2, &[1.0, 2.0]);
        let h = SslHyper::default();
        assert!(matches!(ssl_loss(&z, &z, &h), Err(Error::BatchSize(1))));
        assert!(matches!(sdr_loss(&z, &h), Err(Error::BatchSize(1))));
    }

    #[test]
    fn hinge_is_inactive_when_spread_is_large() {
        let z = t(3, 2, &[-3.0, 5.0, 0.0, -5.0, 3.0, 0.0]);
        assert_eq!(sdr_loss(&z, &SslHyper::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_features_pay_the_full_hinge() {
        let z = t(4, 3, &[0.7; 12]);
        let h = SslHyper {
            lambda3: 2.0,
            ..SslHyper::default()
        };
        assert!((sdr_loss(&z, &h).unwrap() - 2.0 * 0.99).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for (name, err) in check_loss_gradients(20, 3).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn plus_with_one_generation_is_vanilla() {
        let f = fixture();
        let lut = build_cost_lut(&f.space);
        let settings = f.cfg.dna_settings(1);
        let plus = PlusConfig {
            generations: 1,
            ..PlusConfig::default()
        };
        let th = f.cfg.teacher_hyper();
        let states = dna_plus_run(
            &f.space,
            &f.data,
            &f.cfg.teacher_spec(),
            &th,
            &settings,
            &lut,
            &Constraint::NONE,
            &[],
            &plus,
        )
        .unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].teacher.net, f.teacher.net);
        let dna = run_dna(&f.space, &f.data, &f.teacher.net, &settings).unwrap();
        assert_eq!(states[0].lists, dna.lists);
        assert_eq!(
            states[0].searched,
            traverse_search(&dna.lists, &lut, &Constraint::NONE, &[]).unwrap()
        );
    }

    #[test]
    fn later_teachers_are_scaled_searches() {
        let f = fixture();
        let lut = build_cost_lut(&f.space);
        let plus = PlusConfig {
            generations: 3,
            ..PlusConfig::default()
        };
        let states = dna_plus_run(
            &f.space,
            &f.data,
            &f.cfg.teacher_spec(),
            &f.cfg.teacher_hyper(),
            &f.cfg.dna_settings(2),
            &lut,
            &Constraint::NONE,
            &[],
            &plus,
        )
        .unwrap();
        assert_eq!(states.len(), 3);
        for m in 1..3 {
            let expected = scale_arch(&f.space, &states[m - 1].searched.arch, 1.5, 1.5).unwrap();
            assert_eq!(states[m].teacher.spec, expected);
            assert_eq!(states[m].generation, m);
        }
        let none = PlusConfig {
            generations: 0,
            ..PlusConfig::default()
        };
        assert!(dna_plus_run(
            &f.space,
            &f.data,
            &f.cfg.teacher_spec(),
            &f.cfg.teacher_hyper(),
            &f.cfg.dna_settings(1),
            &lut,
            &Constraint::NONE,
            &[],
            &none
        )
        .is_err());
    }

    #[test]
    fn ssl_runs_with_a_different_teacher_family() {
        let f = fixture();
        let dense = CellShape {
            width: 16,
            ops: vec![
                OpDescriptor {
                    kind: OpKind::Dense,
                    expansion: 1,
                    activation: Activation::Tanh,
                };
                2
            ],
        };
        let spec = TeacherSpec {
            blocks: vec![dense.clone(), dense],
        };
        let hyper = TrainHyper {
            epochs: 6,
            ..f.cfg.ssl_hyper()
        };
        let run = run_ssl(
            &f.space,
            &f.data,
            &spec,
            &SslHyper::default(),
            &hyper,
            Metric::RelativeL1,
        )
        .unwrap();
        assert_eq!(run.lists.len(), 2);
        for r in &run.reports {
            assert!(r.epoch_losses.iter().all(|l| l.is_finite()));
            assert!(r.epoch_losses.last().unwrap() < &r.epoch_losses[0]);
            assert_eq!(r.teacher_channel_stds.len(), 4);
        }
    }

    #[test]
    fn ssl_training_lowers_loss_for_most_seeds() {
        let f = fixture();
        let mut improved = 0;
        for seed in 0..5 {
            let hyper = TrainHyper {
                epochs: 5,
                ..f.cfg.ssl.train.with_seed(seed)
            };
            let run = run_ssl(
                &f.space,
                &f.data,
                &f.cfg.teacher_spec(),
                &SslHyper::default(),
                &hyper,
                Metric::RelativeL1,
            )
            .unwrap();
            let r = &run.reports[0];
            if r.epoch_losses.last().unwrap() < &r.epoch_losses[0] {
                improved += 1;
            }
        }
        assert!(improved >= 3);
    }

    #[test]
    fn augmentation_views_differ() {
        let mut rng = rng_for(1, &[]);
        let x = Tensor::randn(&[8, 4], 1.0, &mut rng);
        let a = augment(&x, 0.1, 0.1, &mut rng);
        let b = augment(&x, 0.1, 0.1, &mut rng);
        assert_ne!(a, b);
        assert_eq!(augment(&x, 0.0, 0.0, &mut rng), x);
    }

    proptest! {
        #[test]
        fn hinge_never_grows_with_variance(v in prop::collection::vec(-1.0f64..1.0, 8), s in 1.0f64..4.0) {
            let z = t(4, 2, &v);
            let mut wide = z.clone();
            for (i, x) in wide.data_mut().iter_mut().enumerate() {
                if i % 2 == 0 {
                    *x *= s;
                }
            }
            let h = SslHyper::default();
            prop_assert!(sdr_loss(&wide, &h).unwrap() <= sdr_loss(&z, &h).unwrap() + 1e-12);
            prop_assert!(ssl_loss(&z, &wide, &h).unwrap() >= 0.0);
        }
    }
}
