//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. Seeded experiments use seeds 1 to 5 and compare medians.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use blocknas::bench::{
    build_bench, data_amount_sweep, op_count_sweep, ranking_report, stability_sweep,
    stability_trend, BenchTable, RankingReport, WholeNetSupernet,
};
use blocknas::cli::{run, Cli};
use blocknas::config::RunConfig;
use blocknas::distill::{block_path_rng, make_teacher, SupernetBlock};
use blocknas::evolve::{
    dna_plus_run, run_ssl, scale_arch, sdr_loss, ssl_loss, PlusConfig, SslHyper,
};
use blocknas::numkernel::{Activation, Tensor, TrainHyper};
use blocknas::persist::write_atomic;
use blocknas::pipeline::run_dna;
use blocknas::rate::{naive_rate_block, rate_block, Metric};
use blocknas::search::traverse_search;
use blocknas::space::{
    build_cost_lut, mobile_layout, space_size, BlockSpec, CellSpec, OpDescriptor, SearchSpace,
};
use blocknas::task::Dataset;
use blocknas::verify::{
    check_loss_gradients, check_op_gradients, check_rating, check_search, GRADIENT_TOLERANCE,
};
use clap::Parser;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const RATING_TOL: f64 = 1e-9;
const MIN_DNA_TAU: f64 = 0.5;
const MIN_TAU_GAP: f64 = 0.2;
const TOP_FRACTION: f64 = 0.2;
const MIN_CROSS_TAU: f64 = 0.8;
const MIN_ALIVE_FRACTION: f64 = 0.9;

type Outcome = Result<String, String>;

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(" "))
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ops6() -> Vec<OpDescriptor> {
    [
        (2, Activation::Relu),
        (2, Activation::Tanh),
        (4, Activation::Relu),
        (4, Activation::Tanh),
        (6, Activation::Relu),
        (6, Activation::Tanh),
    ]
    .iter()
    .map(|&(e, a)| OpDescriptor::bottleneck(e, a))
    .collect()
}

fn space_size_arithmetic() -> Outcome {
    let space = mobile_layout(ops6()).map_err(|e| e.to_string())?;
    let depths: [&[u32]; 6] = [
        &[2, 3, 2],
        &[2, 3, 4],
        &[2, 3, 4],
        &[3, 4, 4],
        &[4, 5, 5],
        &[1],
    ];
    let mut product = 1u128;
    for cells in depths {
        let mut sum = 0u128;
        for &d in cells {
            let mut paths = 1u128;
            for _ in 0..d {
                paths *= 6;
            }
            sum += paths;
        }
        product *= sum;
    }
    let size = space_size(&space);
    let rounded = (product as f64 / 1e17).round();
    verdict(
        size.to_string() == product.to_string() && rounded == 2.0,
        format!(
            "size {size}, independent product {product}, {rounded}e17 to one significant figure"
        ),
    )
}

fn rating_equivalence() -> Outcome {
    let check = check_rating(50, 7).map_err(|e| e.to_string())?;
    let catalog: Vec<OpDescriptor> = ops6()[..4].to_vec();
    let space = SearchSpace::new(
        catalog,
        vec![BlockSpec {
            input_width: 3,
            output_width: 3,
            cells: vec![CellSpec {
                depth: 3,
                width: 4,
                allowed: vec![vec![0, 1, 2, 3]; 3],
            }],
        }],
    )
    .map_err(|e| e.to_string())?;
    let block = SupernetBlock::init(&space, 0, 3).map_err(|e| e.to_string())?;
    let mut rng = blocknas::rng::rng_for(3, &[]);
    let x = Tensor::randn(&[6, 3], 1.0, &mut rng);
    let y = Tensor::randn(&[6, 3], 1.0, &mut rng);
    let (_, fast) = rate_block(&block, &x, &y, Metric::RelativeL1, 0).map_err(|e| e.to_string())?;
    let (_, slow) =
        naive_rate_block(&block, &x, &y, Metric::RelativeL1, 0).map_err(|e| e.to_string())?;
    verdict(
        check.blocks >= 50
            && check.max_abs_diff <= RATING_TOL
            && check.orderings_equal
            && check.counts_exact
            && fast.op_applications == 84
            && slow.op_applications == 192,
        format!(
            "{} blocks, max |diff| {:.1e}, orderings equal {}, counts exact {}, c=4 d=3: {} vs {}",
            check.blocks,
            check.max_abs_diff,
            check.orderings_equal,
            check.counts_exact,
            fast.op_applications,
            slow.op_applications
        ),
    )
}

fn search_equivalence() -> Outcome {
    let s = check_search(200, 11).map_err(|e| e.to_string())?;
    verdict(
        s.instances == 200
            && s.mismatches == 0
            && s.binding > 0
            && s.pruned_when_binding == s.binding,
        format!(
            "{} instances, {} mismatches, pruned on {} of {} binding",
            s.instances, s.mismatches, s.pruned_when_binding, s.binding
        ),
    )
}

fn gradients() -> Outcome {
    let mut all = check_op_gradients(100, 13).map_err(|e| e.to_string())?;
    all.extend(check_loss_gradients(100, 13).map_err(|e| e.to_string())?);
    let (name, worst) = all
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap_or_default();
    verdict(
        all.len() >= 9 && all.iter().all(|(_, e)| *e < GRADIENT_TOLERANCE),
        format!("{} checks, worst {name} {worst:.2e}", all.len()),
    )
}

/// Everything measured on one seed's canonical toy experiment.
struct SeedRun {
    dna_tau: f64,
    oneshot_tau: f64,
    op_taus: Vec<f64>,
    trend: f64,
    final_fraction: f64,
    cross_taus: Vec<(f64, f64)>,
    plus_ok: bool,
    plus_truth: [f64; 2],
    alive_fraction: f64,
    median_std: f64,
    ablation_median_std: f64,
}

fn seed_run(seed: u64) -> blocknas::Result<SeedRun> {
    let cfg = RunConfig::default().with_seed(seed);
    let space = cfg.search_space()?;
    let data = Dataset::generate(&cfg.task, cfg.seed)?;
    let lut = build_cost_lut(&space);
    let bench = build_bench(
        &space,
        &data,
        &cfg.standalone_config(),
        cfg.bench_cap as u64,
        &cfg.hash(),
        seed,
    )?;
    let teacher = make_teacher(&space, &cfg.teacher_spec(), &data, &cfg.teacher_hyper())?;
    let settings = cfg.dna_settings(1);
    let weights = &cfg.search.weights;

    let dna = run_dna(&space, &data, &teacher.net, &settings)?;
    let dna_tau = ranking_report(&dna.lists, weights, &bench)?.kendall_tau;
    let vanilla = traverse_search(&dna.lists, &lut, &cfg.search.constraint, weights)?;

    let hyper = cfg.baseline_hyper();
    let mut net = WholeNetSupernet::init(&space, hyper.seed)?;
    let mut paths = block_path_rng(hyper.seed, usize::MAX);
    net.train(&data, &data.train, &hyper, hyper.learning_rate, &mut paths)?;
    let archs: Vec<_> = bench.rows.iter().map(|r| r.arch.clone()).collect();
    let (xv, yv) = (data.x.select_rows(&data.val), data.y.select_rows(&data.val));
    let pred = net.rate(&archs, &xv, &yv, cfg.baseline.metric)?;
    let oneshot_tau = RankingReport::compute(&pred, &bench.scores())?.kendall_tau;

    let sweep_space = cfg.sweep_space()?;
    let common = sweep_space.restrict_ops(*cfg.sweep.op_counts.iter().min().unwrap())?;
    let shared = BenchTable {
        rows: bench
            .rows
            .iter()
            .filter(|r| r.arch.validate(&common).is_ok())
            .cloned()
            .collect(),
        ..bench.clone()
    };
    let op_hyper = cfg.op_sweep_hyper();
    let op_taus = op_count_sweep(
        &sweep_space,
        &cfg.sweep.op_counts,
        &data,
        &shared,
        &op_hyper,
        op_hyper.learning_rate,
        cfg.baseline.metric,
    )?
    .iter()
    .map(|r| r.tau)
    .collect();

    let rows = stability_sweep(
        &space,
        &data,
        &teacher.net,
        &settings,
        &cfg.sweep.checkpoints,
        &lut,
        &cfg.search.constraint,
        weights,
        &bench,
    )?;
    let trend = stability_trend(&rows)?;
    let final_fraction = bench
        .rank_fraction(&rows.last().expect("checkpoints").arch)
        .expect("bench covers space");

    let mut fixed = settings.clone();
    fixed.supernet.max_steps = Some(cfg.sweep.data_steps);
    let cross_taus = data_amount_sweep(
        &space,
        &data,
        &teacher.net,
        &fixed,
        &cfg.sweep.fractions,
        weights,
        None,
    )?
    .iter()
    .filter(|r| r.fraction < 1.0)
    .map(|r| (r.fraction, r.cross_tau))
    .collect();

    let plus = PlusConfig {
        generations: 2,
        ..cfg.plus.clone()
    };
    let states = dna_plus_run(
        &space,
        &data,
        &cfg.teacher_spec(),
        &cfg.teacher_hyper(),
        &settings,
        &lut,
        &cfg.search.constraint,
        weights,
        &plus,
    )?;
    let scaled = scale_arch(
        &space,
        &states[0].searched.arch,
        plus.depth_mult,
        plus.width_mult,
    )?;
    let plus_ok = states.len() == 2
        && states[1].teacher.spec == scaled
        && states[0].lists == dna.lists
        && states[0].searched == vanilla;
    let truth = |s: &blocknas::evolve::GenerationState| {
        bench
            .score_of(&s.searched.arch)
            .expect("bench covers space")
    };
    let plus_truth = [truth(&states[0]), truth(&states[1])];

    let stds = |ssl: &SslHyper| -> blocknas::Result<Vec<f64>> {
        let run = run_ssl(
            &space,
            &data,
            &cfg.teacher_spec(),
            ssl,
            &cfg.ssl_hyper(),
            cfg.supernet.metric,
        )?;
        Ok(run
            .reports
            .iter()
            .flat_map(|r| r.teacher_channel_stds.clone())
            .collect())
    };
    let default = stds(&cfg.ssl.hyper)?;
    let gamma = cfg.ssl.hyper.gamma;
    let alive_fraction =
        default.iter().filter(|s| **s >= 0.5 * gamma).count() as f64 / default.len() as f64;
    let ablated = stds(&SslHyper {
        lambda3: 0.0,
        ..cfg.ssl.hyper.clone()
    })?;

    Ok(SeedRun {
        dna_tau,
        oneshot_tau,
        op_taus,
        trend,
        final_fraction,
        cross_taus,
        plus_ok,
        plus_truth,
        alive_fraction,
        median_std: median(&default),
        ablation_median_std: median(&ablated),
    })
}

fn ranking_fidelity(runs: &[SeedRun]) -> Outcome {
    let dna: Vec<f64> = runs.iter().map(|r| r.dna_tau).collect();
    let one: Vec<f64> = runs.iter().map(|r| r.oneshot_tau).collect();
    let (d, o) = (median(&dna), median(&one));
    verdict(
        d >= MIN_DNA_TAU && d - o >= MIN_TAU_GAP,
        format!(
            "median tau block-wise {d:.3} {}, whole-net {o:.3} {}",
            fmt(&dna),
            fmt(&one)
        ),
    )
}

fn op_count_trend(runs: &[SeedRun]) -> Outcome {
    let counts = runs[0].op_taus.len();
    let medians: Vec<f64> = (0..counts)
        .map(|i| median(&runs.iter().map(|r| r.op_taus[i]).collect::<Vec<_>>()))
        .collect();
    verdict(
        medians.windows(2).all(|w| w[0] >= w[1]),
        format!("median tau for 2/4/8 ops {}", fmt(&medians)),
    )
}

fn stability(runs: &[SeedRun]) -> Outcome {
    let trends: Vec<f64> = runs.iter().map(|r| r.trend).collect();
    let fractions: Vec<f64> = runs.iter().map(|r| r.final_fraction).collect();
    let (t, f) = (median(&trends), median(&fractions));
    verdict(
        t > 0.0 && f <= TOP_FRACTION,
        format!(
            "median trend {t:.3} {}, final rank fraction {f:.3} {}",
            fmt(&trends),
            fmt(&fractions)
        ),
    )
}

fn data_amount(runs: &[SeedRun]) -> Outcome {
    let fractions: Vec<f64> = runs[0].cross_taus.iter().map(|c| c.0).collect();
    let mut parts = Vec::new();
    let mut ok = !fractions.is_empty();
    for (i, frac) in fractions.iter().enumerate() {
        let taus: Vec<f64> = runs.iter().map(|r| r.cross_taus[i].1).collect();
        let m = median(&taus);
        ok &= m >= MIN_CROSS_TAU;
        parts.push(format!("{frac}: {m:.3} {}", fmt(&taus)));
    }
    verdict(ok, format!("median cross-tau {}", parts.join(", ")))
}

fn dna_plus(runs: &[SeedRun], m1_identical: bool) -> Outcome {
    let g1: Vec<f64> = runs.iter().map(|r| r.plus_truth[0]).collect();
    let g2: Vec<f64> = runs.iter().map(|r| r.plus_truth[1]).collect();
    let structural = runs.iter().all(|r| r.plus_ok);
    verdict(
        structural && m1_identical && median(&g2) <= median(&g1),
        format!(
            "scaled teacher and M=2 generation 1 match vanilla {structural}, M=1 identical {m1_identical}, median bench mse {:.4} -> {:.4}",
            median(&g1),
            median(&g2)
        ),
    )
}

fn anti_collapse(runs: &[SeedRun]) -> Outcome {
    let z = Tensor::matrix(4, 2, vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]).expect("shape");
    let hyper = SslHyper::default();
    let zero_cases =
        ssl_loss(&z, &z, &hyper).ok() == Some(0.0) && sdr_loss(&z, &hyper).ok() == Some(0.0);
    let alive: Vec<f64> = runs.iter().map(|r| r.alive_fraction).collect();
    let kept: Vec<f64> = runs.iter().map(|r| r.median_std).collect();
    let ablated: Vec<f64> = runs.iter().map(|r| r.ablation_median_std).collect();
    verdict(
        zero_cases && median(&alive) >= MIN_ALIVE_FRACTION && median(&ablated) < median(&kept),
        format!(
            "stds >= gamma/2 median fraction {:.2} {}, median std {:.3} vs ablation {:.3}, exact zeros {zero_cases}",
            median(&alive),
            fmt(&alive),
            median(&kept),
            median(&ablated)
        ),
    )
}

fn plus_m1_identical() -> blocknas::Result<bool> {
    let cfg = RunConfig::default().with_seed(SEEDS[0]);
    let space = cfg.search_space()?;
    let data = Dataset::generate(&cfg.task, cfg.seed)?;
    let lut = build_cost_lut(&space);
    let settings = cfg.dna_settings(1);
    let plus = PlusConfig {
        generations: 1,
        ..cfg.plus.clone()
    };
    let states = dna_plus_run(
        &space,
        &data,
        &cfg.teacher_spec(),
        &cfg.teacher_hyper(),
        &settings,
        &lut,
        &cfg.search.constraint,
        &cfg.search.weights,
        &plus,
    )?;
    let teacher = make_teacher(&space, &cfg.teacher_spec(), &data, &cfg.teacher_hyper())?;
    let dna = run_dna(&space, &data, &teacher.net, &settings)?;
    let searched = traverse_search(
        &dna.lists,
        &lut,
        &cfg.search.constraint,
        &cfg.search.weights,
    )?;
    Ok(states.len() == 1
        && states[0].teacher.net == teacher.net
        && states[0].lists == dna.lists
        && states[0].searched == searched)
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.task.rows = 240;
    cfg.teacher.train.epochs = 8;
    cfg.supernet.train = TrainHyper {
        epochs: 3,
        decay_every_steps: None,
        ..cfg.supernet.train.clone()
    };
    cfg.baseline.train = cfg.supernet.train.clone();
    cfg.standalone.train.epochs = 2;
    cfg.ssl.train.epochs = 3;
    cfg.sweep.op_train.epochs = 2;
    cfg.sweep.checkpoints = vec![0, 1, 2, 3];
    cfg.sweep.data_steps = 30;
    cfg
}

fn pipeline(root: &Path, workers: &str) -> blocknas::Result<()> {
    let config = root.join("experiment.json");
    write_atomic(&config, small_config().to_json().as_bytes())?;
    let out = root.join("out");
    for stage in [
        "teacher", "train", "rate", "search", "bench", "rank", "plus", "ssl", "sweep",
    ] {
        run(Cli::parse_from([
            "blocknas",
            stage,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]))?;
    }
    Ok(())
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path(), "1").map_err(|e| e.to_string())?;
    pipeline(b.path(), "2").map_err(|e| e.to_string())?;
    let (fa, fb) = (files(&a.path().join("out")), files(&b.path().join("out")));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        fa.len() == fb.len() && differing.is_empty() && fa.iter().any(|f| f.0 == "scores.csv"),
        format!("{} artifacts compared, differing {:?}", fa.len(), differing),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "space-size arithmetic", space_size_arithmetic()),
        (
            2,
            "shared-prefix rating equals per-path rating",
            rating_equivalence(),
        ),
        (
            3,
            "traversal search equals exhaustive search",
            search_equivalence(),
        ),
        (4, "finite-difference gradient checks", gradients()),
    ];
    let runs: Result<Vec<SeedRun>, String> = SEEDS
        .iter()
        .map(|&s| {
            let t = Instant::now();
            let r = seed_run(s).map_err(|e| format!("seed {s}: {e}"));
            eprintln!("seed {s} done in {:.0?}", t.elapsed());
            r
        })
        .collect();
    let m1 = plus_m1_identical().map_err(|e| e.to_string());
    match (&runs, &m1) {
        (Ok(runs), Ok(m1)) => {
            results.push((
                5,
                "block-wise ranking beats whole-net ranking",
                ranking_fidelity(runs),
            ));
            results.push((
                6,
                "ranking fidelity does not improve with more ops",
                op_count_trend(runs),
            ));
            results.push((
                7,
                "searched architecture improves with training",
                stability(runs),
            ));
            results.push((8, "rankings are robust to less data", data_amount(runs)));
            results.push((9, "progressive generations", dna_plus(runs, *m1)));
            results.push((10, "variance hinge prevents collapse", anti_collapse(runs)));
        }
        _ => {
            let why = runs
                .as_ref()
                .err()
                .or(m1.as_ref().err())
                .cloned()
                .unwrap_or_default();
            for (n, name) in [
                (5, "block-wise ranking beats whole-net ranking"),
                (6, "ranking fidelity does not improve with more ops"),
                (7, "searched architecture improves with training"),
                (8, "rankings are robust to less data"),
                (9, "progressive generations"),
                (10, "variance hinge prevents collapse"),
            ] {
                results.push((n, name, Err(why.clone())));
            }
        }
    }
    results.push((11, "byte-identical reruns", determinism()));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.0?}",
        results.len() - failed,
        results.len(),
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
