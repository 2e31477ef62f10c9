//! Progressive generations: each searched architecture is scaled up and
//! retrained as the next generation's teacher.
//!
//!     cargo run --release --example dna_plus -- [seed] [generations]

use blocknas::config::RunConfig;
use blocknas::evolve::{dna_plus_run, PlusConfig};
use blocknas::space::{build_cost_lut, encode_arch};
use blocknas::task::Dataset;

fn main() -> blocknas::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse().ok());
    let seed = args.next().flatten().unwrap_or(1);
    let generations = args.next().flatten().unwrap_or(3) as usize;
    let cfg = RunConfig::default().with_seed(seed);
    let space = cfg.search_space()?;
    let data = Dataset::generate(&cfg.task, seed)?;
    let plus = PlusConfig {
        generations,
        ..cfg.plus.clone()
    };
    let states = dna_plus_run(
        &space,
        &data,
        &cfg.teacher_spec(),
        &cfg.teacher_hyper(),
        &cfg.dna_settings(1),
        &build_cost_lut(&space),
        &cfg.search.constraint,
        &cfg.search.weights,
        &plus,
    )?;
    for s in &states {
        let widths: Vec<String> = s
            .teacher
            .spec
            .blocks
            .iter()
            .map(|c| format!("{}x{}", c.ops.len(), c.width))
            .collect();
        println!(
            "generation {}: teacher {} held-out mse {:.4} -> searched {}",
            s.generation,
            widths.join(","),
            s.teacher.report.val_losses.last().unwrap(),
            encode_arch(&s.searched.arch)
        );
    }
    Ok(())
}
