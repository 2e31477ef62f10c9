//! Trains the teacher, then distills every block of the supernet against the
//! teacher's block outputs and prints the loss curves.
//!
//!     cargo run --release --example distill -- [seed]

use blocknas::config::RunConfig;
use blocknas::distill::{extract_features, init_supernet, make_teacher, train_all_blocks};
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
    println!(
        "teacher: {} epochs, held-out mse {:.5}",
        teacher.report.val_losses.len(),
        teacher.report.val_losses.last().unwrap()
    );

    let cache = extract_features(&teacher.net, &data)?;
    let settings = cfg.dna_settings(space.blocks.len());
    let blocks = init_supernet(&space, settings.supernet.seed)?;
    let (_, reports) = train_all_blocks(
        blocks,
        &cache,
        &settings.supernet,
        &settings.rates,
        settings.workers,
    )?;
    for r in &reports {
        let curve: Vec<String> = r
            .epoch_losses
            .iter()
            .step_by(20)
            .map(|l| format!("{l:.3}"))
            .collect();
        println!(
            "block {} loss every 20 epochs: {}",
            r.block,
            curve.join(" ")
        );
    }
    Ok(())
}
