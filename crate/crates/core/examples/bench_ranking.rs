//! Builds the ground-truth bench by training all 144 toy architectures
//! standalone, then compares block-wise and whole-net rankings against it.
//!
//!     cargo run --release --example bench_ranking -- [seed]

use blocknas::bench::{build_bench, ranking_report, RankingReport, WholeNetSupernet};
use blocknas::config::RunConfig;
use blocknas::distill::{block_path_rng, make_teacher};
use blocknas::pipeline::run_dna;
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
    let teacher = make_teacher(&space, &cfg.teacher_spec(), &data, &cfg.teacher_hyper())?;
    let dna = run_dna(&space, &data, &teacher.net, &cfg.dna_settings(1))?;
    let blockwise = ranking_report(&dna.lists, &cfg.search.weights, &bench)?;

    let hyper = cfg.baseline_hyper();
    let mut net = WholeNetSupernet::init(&space, hyper.seed)?;
    net.train(
        &data,
        &data.train,
        &hyper,
        hyper.learning_rate,
        &mut block_path_rng(hyper.seed, usize::MAX),
    )?;
    let archs: Vec<_> = bench.rows.iter().map(|r| r.arch.clone()).collect();
    let pred = net.rate(
        &archs,
        &data.x.select_rows(&data.val),
        &data.y.select_rows(&data.val),
        cfg.baseline.metric,
    )?;
    let whole = RankingReport::compute(&pred, &bench.scores())?;

    for (name, r) in [("block-wise", blockwise), ("whole-net", whole)] {
        println!(
            "{name:<10} tau {:.3}  rho {:.3}  r {:.3}",
            r.kendall_tau, r.spearman_rho, r.pearson_r
        );
    }
    Ok(())
}
