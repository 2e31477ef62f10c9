//! Rates every block architecture with shared-prefix traversal and checks it
//! against evaluating each path from scratch.
//!
//!     cargo run --release --example rating -- [seed]

use blocknas::config::RunConfig;
use blocknas::distill::make_teacher;
use blocknas::pipeline::run_dna;
use blocknas::rate::{naive_rate_block, rate_block};
use blocknas::task::Dataset;

fn main() -> blocknas::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let cfg = RunConfig::default().with_seed(seed);
    let space = cfg.search_space()?;
    let data = Dataset::generate(&cfg.task, seed)?;
    let teacher = make_teacher(&space, &cfg.teacher_spec(), &data, &cfg.teacher_hyper())?;
    let dna = run_dna(&space, &data, &teacher.net, &cfg.dna_settings(1))?;

    for list in &dna.lists {
        println!("block {} ({} paths), best five:", list.block, list.len());
        for e in list.entries.iter().take(5) {
            println!(
                "  {:<14} relative-L1 {:.4}  {} params",
                e.arch.to_string(),
                e.score,
                e.cost.params
            );
        }
    }

    for block in &dna.blocks {
        let (x, y) = dna.cache.val_rows(block.index)?;
        let (fast, tree) = rate_block(block, &x, &y, cfg.supernet.metric, 0)?;
        let (slow, naive) = naive_rate_block(block, &x, &y, cfg.supernet.metric, 0)?;
        let diff = fast
            .entries
            .iter()
            .zip(&slow.entries)
            .map(|(a, b)| (a.score - b.score).abs())
            .fold(0.0, f64::max);
        println!(
            "block {}: {} op applications vs {} naive, max |diff| {diff:.1e}",
            block.index, tree.op_applications, naive.op_applications
        );
    }
    Ok(())
}
