//! Label-free joint training of a teacher chain and the supernet, with and
//! without the variance hinge.
//!
//!     cargo run --release --example ssl -- [seed]

use blocknas::config::RunConfig;
use blocknas::evolve::{run_ssl, SslHyper};
use blocknas::search::traverse_search;
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
    let lut = build_cost_lut(&space);

    for lambda3 in [cfg.ssl.hyper.lambda3, 0.0] {
        let hyper = SslHyper {
            lambda3,
            ..cfg.ssl.hyper.clone()
        };
        let run = run_ssl(
            &space,
            &data,
            &cfg.teacher_spec(),
            &hyper,
            &cfg.ssl_hyper(),
            cfg.supernet.metric,
        )?;
        println!("lambda3 = {lambda3}");
        for (k, r) in run.reports.iter().enumerate() {
            let stds: Vec<String> = r
                .teacher_channel_stds
                .iter()
                .map(|s| format!("{s:.2}"))
                .collect();
            println!(
                "  block {k}: loss {:.3} -> {:.3}, teacher channel stds {}",
                r.epoch_losses[0],
                r.epoch_losses.last().unwrap(),
                stds.join(" ")
            );
        }
        let found = traverse_search(
            &run.lists,
            &lut,
            &cfg.search.constraint,
            &cfg.search.weights,
        )?;
        println!("  searched {}", encode_arch(&found.arch));
    }
    Ok(())
}
