//! Constrained search over the rated block lists, a budget sweep, and the
//! exhaustive oracle for comparison.
//!
//!     cargo run --release --example search -- [seed]

use blocknas::config::RunConfig;
use blocknas::distill::make_teacher;
use blocknas::pipeline::run_dna;
use blocknas::search::{exhaustive_search, search_under_budget_sweep, traverse_search};
use blocknas::space::{build_cost_lut, encode_arch, Constraint};
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
    let lists = run_dna(&space, &data, &teacher.net, &cfg.dna_settings(1))?.lists;
    let lut = build_cost_lut(&space);
    let w = &cfg.search.weights;

    let free = traverse_search(&lists, &lut, &Constraint::NONE, w)?;
    println!(
        "unconstrained: {} score {:.4}, {} params",
        encode_arch(&free.arch),
        free.score,
        free.cost.params
    );

    let limit = Constraint::params(free.cost.params * 3 / 4);
    let fast = traverse_search(&lists, &lut, &limit, w)?;
    let slow = exhaustive_search(&lists, &lut, &limit, w)?;
    println!(
        "{limit}: traversal {} ({} visits), exhaustive {} ({} visits)",
        encode_arch(&fast.arch),
        fast.visits,
        encode_arch(&slow.arch),
        slow.visits
    );

    let budgets: Vec<Constraint> = [300, 600, 1000, 1500, 2500]
        .iter()
        .map(|&p| Constraint::params(p))
        .collect();
    for row in search_under_budget_sweep(&lists, &lut, &budgets, w)? {
        match row.outcome {
            Some(o) => println!(
                "  {}: {} score {:.4}, {} params",
                row.budget,
                encode_arch(&o.arch),
                o.score,
                o.cost.params
            ),
            None => println!("  {}: infeasible", row.budget),
        }
    }
    Ok(())
}
