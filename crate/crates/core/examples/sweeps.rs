//! Diagnostic sweeps on one seed: op count vs whole-net ranking fidelity,
//! searched architecture over supernet checkpoints, and less training data.
//!
//!     cargo run --release --example sweeps -- [seed]

use blocknas::bench::{
    build_bench, data_amount_sweep, op_count_sweep, stability_sweep, stability_trend, BenchTable,
};
use blocknas::config::RunConfig;
use blocknas::distill::make_teacher;
use blocknas::space::{build_cost_lut, encode_arch};
use blocknas::task::Dataset;

fn main() -> blocknas::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let cfg = RunConfig::default().with_seed(seed);
    let space = cfg.search_space()?;
    let data = Dataset::generate(&cfg.task, seed)?;
    let bench = build_bench(
        &space,
        &data,
        &cfg.standalone_config(),
        cfg.bench_cap as u64,
        &cfg.hash(),
        seed,
    )?;

    let sweep_space = cfg.sweep_space()?;
    let common = sweep_space.restrict_ops(2)?;
    let shared = BenchTable {
        rows: bench
            .rows
            .iter()
            .filter(|r| r.arch.validate(&common).is_ok())
            .cloned()
            .collect(),
        ..bench.clone()
    };
    let hyper = cfg.op_sweep_hyper();
    for r in op_count_sweep(
        &sweep_space,
        &cfg.sweep.op_counts,
        &data,
        &shared,
        &hyper,
        hyper.learning_rate,
        cfg.baseline.metric,
    )? {
        println!(
            "{} ops, {} architectures: tau {:.3}, mean subnet norm {:.2}",
            r.ops, r.space_size, r.tau, r.mean_frobenius
        );
    }

    let teacher = make_teacher(&space, &cfg.teacher_spec(), &data, &cfg.teacher_hyper())?;
    let settings = cfg.dna_settings(1);
    let rows = stability_sweep(
        &space,
        &data,
        &teacher.net,
        &settings,
        &cfg.sweep.checkpoints,
        &build_cost_lut(&space),
        &cfg.search.constraint,
        &cfg.search.weights,
        &bench,
    )?;
    for r in &rows {
        println!(
            "epoch {:>3}: {} bench mse {:.4}, better than {:.0}% of the space",
            r.epoch,
            encode_arch(&r.arch),
            r.truth,
            100.0 * (1.0 - bench.rank_fraction(&r.arch).unwrap())
        );
    }
    println!("trend {:.3}", stability_trend(&rows)?);

    let mut fixed = settings.clone();
    fixed.supernet.max_steps = Some(cfg.sweep.data_steps);
    for r in data_amount_sweep(
        &space,
        &data,
        &teacher.net,
        &fixed,
        &cfg.sweep.fractions,
        &cfg.search.weights,
        Some(&bench),
    )? {
        println!(
            "fraction {}: tau {:.3}, cross-tau {:.3}",
            r.fraction,
            r.tau.unwrap_or(f64::NAN),
            r.cross_tau
        );
    }
    Ok(())
}
