//! Command-line driver. Every command writes stamped artifacts under the
//! output directory and reuses ones already produced under the same config
//! unless `--force` is given.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    build_bench_resumable, data_amount_sweep, kendall_tau, op_count_sweep, ranking_report,
    stability_sweep, stability_trend, BenchTable, RankingReport, WholeNetSupernet,
};
use crate::config::RunConfig;
use crate::distill::{
    block_path_rng, extract_features, init_supernet, make_teacher, train_all_blocks, SupernetBlock,
};
use crate::error::{Error, Result};
use crate::evolve::{dna_plus_run, run_ssl};
use crate::net::{boundary_widths, CellShape, ChainNet};
use crate::persist::{
    bench_table, fmt_f64, load_weights, read_bench, read_score_lists, save_weights, write_bench,
    write_score_lists, Stamp, Table,
};
use crate::pipeline::rate_all;
use crate::rate::LocalScoreList;
use crate::rng::{rng_for, stream};
use crate::search::{search_under_budget_sweep, traverse_search, SearchOutcome};
use crate::space::{build_cost_lut, encode_arch, Constraint, SearchSpace};
use crate::task::Dataset;
use crate::verify::VerifyReport;

#[derive(Debug, Parser)]
#[command(
    name = "blocknas",
    version,
    about = "Block-wise distilled architecture search on synthetic tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// Experiment description (JSON); the built-in toy experiment if omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Recompute this command's artifacts even if they exist.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, global = true)]
    pub max_params: Option<u64>,
    #[arg(long, global = true)]
    pub max_macs: Option<u64>,
    /// Ascending parameter budgets for a budget sweep, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub budgets: Vec<u64>,
    #[arg(long, global = true)]
    pub generations: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Print the built-in experiment config.
    Config,
    /// Train the teacher network.
    Teacher,
    /// Distill every block's supernet from the teacher.
    Train,
    /// Rate every block architecture.
    Rate,
    /// Search the best architecture under the cost limits.
    Search,
    /// Train every architecture standalone (resumable).
    Bench,
    /// Rank correlation of block-wise and whole-net ratings with the bench.
    Rank,
    /// Progressive generations with scaled searched teachers.
    Plus,
    /// Self-supervised joint training of teacher and supernet.
    Ssl,
    /// Diagnostic sweeps.
    Sweep {
        #[arg(value_enum, default_value_t = SweepKind::All)]
        kind: SweepKind,
    },
    /// Oracle-equivalence and gradient checks.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Ops,
    Stability,
    Data,
    All,
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    opts: Opts,
    space: SearchSpace,
    data: Dataset,
}

impl Ctx {
    fn new(opts: &Opts) -> Result<Ctx> {
        let mut cfg = match &opts.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = opts.seed {
            cfg.seed = seed;
        }
        let hash = cfg.hash();
        let space = cfg.search_space()?;
        let data = Dataset::generate(&cfg.task, cfg.seed)?;
        let ctx = Ctx {
            cfg,
            hash,
            opts: opts.clone(),
            space,
            data,
        };
        let cfg_path = ctx.path("config.json");
        if !cfg_path.exists() {
            crate::persist::write_atomic(&cfg_path, ctx.cfg.to_json().as_bytes())?;
        }
        Ok(ctx)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.opts.out.join(name)
    }

    fn stamp(&self) -> Stamp {
        Stamp::new(&self.hash)
    }

    /// True when `path` exists with exactly this stamp and `force` is off.
    fn fresh(&self, path: &Path, stamp: &Stamp, force: bool) -> Result<bool> {
        if force || !path.exists() {
            return Ok(false);
        }
        let t = Table::read_checked(path, &self.hash)?;
        Ok(&t.stamp == stamp)
    }

    fn constraint(&self) -> Constraint {
        let mut c = self.cfg.search.constraint;
        if self.opts.max_params.is_some() {
            c.max_params = self.opts.max_params;
        }
        if self.opts.max_macs.is_some() {
            c.max_macs = self.opts.max_macs;
        }
        c
    }
}

fn say(stage: &str, msg: impl AsRef<str>) {
    println!("{stage}: {}", msg.as_ref());
}

fn teacher_net(ctx: &Ctx, force: bool) -> Result<ChainNet> {
    let manifest = ctx.path("teacher.json");
    let spec = ctx.cfg.teacher_spec();
    if !force && manifest.exists() {
        let mut rng = rng_for(0, &[stream::TEACHER]);
        let mut net = ChainNet::init(&boundary_widths(&ctx.space), &spec.blocks, &mut rng)?;
        load_weights(&ctx.opts.out, "teacher", &mut net.params_mut(), &ctx.hash)?;
        say("teacher", "up to date");
        return Ok(net);
    }
    let t = make_teacher(&ctx.space, &spec, &ctx.data, &ctx.cfg.teacher_hyper())?;
    let mut table = Table::new(ctx.stamp(), &["epoch", "train_loss", "val_loss"]);
    for (i, (a, b)) in t
        .report
        .epoch_losses
        .iter()
        .zip(&t.report.val_losses)
        .enumerate()
    {
        table.push(vec![(i + 1).to_string(), fmt_f64(*a), fmt_f64(*b)]);
    }
    table.write(&ctx.path("teacher.csv"))?;
    save_weights(&ctx.opts.out, "teacher", &t.net.params(), &ctx.hash)?;
    say(
        "teacher",
        format!(
            "trained {} epochs, held-out mse {:.5}",
            t.report.val_losses.len(),
            t.report.val_losses.last().copied().unwrap_or(f64::NAN)
        ),
    );
    Ok(t.net)
}

fn supernet(ctx: &Ctx, force: bool) -> Result<Vec<SupernetBlock>> {
    let name = |k: usize| format!("supernet_b{k}");
    let settings = ctx.cfg.dna_settings(ctx.opts.workers);
    let done = (0..ctx.space.blocks.len()).all(|k| ctx.path(&format!("{}.json", name(k))).exists());
    if !force && done {
        let mut blocks = init_supernet(&ctx.space, settings.supernet.seed)?;
        for b in &mut blocks {
            load_weights(
                &ctx.opts.out,
                &name(b.index),
                &mut b.params_mut(),
                &ctx.hash,
            )?;
        }
        say("train", "up to date");
        return Ok(blocks);
    }
    let teacher = teacher_net(ctx, false)?;
    let cache = extract_features(&teacher, &ctx.data)?;
    let blocks = init_supernet(&ctx.space, settings.supernet.seed)?;
    let (blocks, reports) = train_all_blocks(
        blocks,
        &cache,
        &settings.supernet,
        &settings.rates,
        settings.workers,
    )?;
    let mut table = Table::new(ctx.stamp(), &["block", "epoch", "loss"]);
    for r in &reports {
        for (e, l) in r.epoch_losses.iter().enumerate() {
            table.push(vec![r.block.to_string(), (e + 1).to_string(), fmt_f64(*l)]);
        }
    }
    table.write(&ctx.path("train.csv"))?;
    for b in &blocks {
        save_weights(&ctx.opts.out, &name(b.index), &b.params(), &ctx.hash)?;
    }
    for r in &reports {
        say(
            "train",
            format!(
                "block {} distillation loss {:.5} -> {:.5}",
                r.block,
                r.epoch_losses.first().copied().unwrap_or(f64::NAN),
                r.epoch_losses.last().copied().unwrap_or(f64::NAN)
            ),
        );
    }
    Ok(blocks)
}

fn scores(ctx: &Ctx, force: bool) -> Result<Vec<LocalScoreList>> {
    let path = ctx.path("scores.csv");
    if !force && path.exists() {
        let lists = read_score_lists(&path, &ctx.space, &ctx.hash)?;
        say("rate", "up to date");
        return Ok(lists);
    }
    let blocks = supernet(ctx, false)?;
    let teacher = teacher_net(ctx, false)?;
    let cache = extract_features(&teacher, &ctx.data)?;
    let lists = rate_all(
        &blocks,
        &cache,
        ctx.cfg.supernet.metric,
        ctx.cfg.supernet_hyper().seed,
    )?;
    write_score_lists(&path, &lists, &ctx.hash)?;
    for l in &lists {
        let best = &l.entries[0];
        say(
            "rate",
            format!(
                "block {}: {} paths, best {} = {:.5}",
                l.block,
                l.len(),
                best.arch,
                best.score
            ),
        );
    }
    Ok(lists)
}

fn bench(ctx: &Ctx, force: bool) -> Result<BenchTable> {
    let path = ctx.path("bench.csv");
    let existing = if !force && path.exists() {
        read_bench(&path, &ctx.space, &ctx.hash)?.rows
    } else {
        Vec::new()
    };
    let total = crate::space::space_size(&ctx.space);
    if existing.len().to_string() == total.to_string() {
        say("bench", "up to date");
        return read_bench(&path, &ctx.space, &ctx.hash);
    }
    if !existing.is_empty() {
        say(
            "bench",
            format!("resuming with {} of {total} rows", existing.len()),
        );
    }
    let mut partial = existing.clone();
    let rows = build_bench_resumable(
        &ctx.space,
        &ctx.data,
        &ctx.cfg.standalone_config(),
        ctx.cfg.bench_cap as u64,
        existing,
        |row| {
            partial.push(row.clone());
            bench_table(&partial, &ctx.hash, ctx.cfg.seed).write(&path)
        },
    )?;
    let table = BenchTable {
        rows,
        config_hash: ctx.hash.clone(),
        task_seed: ctx.cfg.seed,
    };
    write_bench(&path, &table)?;
    let best = table
        .rows
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .expect("non-empty bench");
    say(
        "bench",
        format!(
            "{} rows, best {} held-out mse {:.5}",
            table.rows.len(),
            encode_arch(&best.arch),
            best.score
        ),
    );
    Ok(table)
}

fn outcome_row(o: &SearchOutcome) -> Vec<String> {
    vec![
        encode_arch(&o.arch),
        fmt_f64(o.score),
        o.cost.params.to_string(),
        o.cost.macs.to_string(),
        o.visits.to_string(),
    ]
}

fn search(ctx: &Ctx) -> Result<()> {
    let lists = scores(ctx, false)?;
    let lut = build_cost_lut(&ctx.space);
    let weights = &ctx.cfg.search.weights;
    let budgets = if ctx.opts.budgets.is_empty() {
        ctx.cfg.search.budgets.clone()
    } else {
        ctx.opts.budgets.clone()
    };
    if !budgets.is_empty() {
        let constraints: Vec<Constraint> = budgets.iter().map(|&b| Constraint::params(b)).collect();
        let rows = search_under_budget_sweep(&lists, &lut, &constraints, weights)?;
        let mut t = Table::new(
            ctx.stamp(),
            &["max_params", "arch_id", "score", "params", "macs", "visits"],
        );
        for r in &rows {
            let mut row = vec![r.budget.max_params.unwrap_or(0).to_string()];
            match &r.outcome {
                Some(o) => row.extend(outcome_row(o)),
                None => row.extend(["infeasible", "", "", "", ""].map(String::from)),
            }
            say("search", row.join(" "));
            t.push(row);
        }
        return t.write(&ctx.path("search_budgets.csv"));
    }
    let constraint = ctx.constraint();
    let found = traverse_search(&lists, &lut, &constraint, weights)?;
    let mut t = Table::new(
        ctx.stamp().with("constraint", constraint),
        &["arch_id", "score", "params", "macs", "visits"],
    );
    t.push(outcome_row(&found));
    t.write(&ctx.path("search.csv"))?;
    say(
        "search",
        format!(
            "{} ({constraint}): score {:.5}, {} params, {} MACs",
            encode_arch(&found.arch),
            found.score,
            found.cost.params,
            found.cost.macs
        ),
    );
    println!("{}", encode_arch(&found.arch));
    Ok(())
}

fn report_row(name: &str, r: &RankingReport) -> Vec<String> {
    vec![
        name.to_string(),
        fmt_f64(r.kendall_tau),
        fmt_f64(r.spearman_rho),
        fmt_f64(r.pearson_r),
        r.n.to_string(),
    ]
}

fn rank(ctx: &Ctx) -> Result<()> {
    let path = ctx.path("rank.csv");
    if ctx.fresh(&path, &ctx.stamp(), ctx.opts.force)? {
        say("rank", "up to date");
        return Ok(());
    }
    let lists = scores(ctx, false)?;
    let table = bench(ctx, false)?;
    let dna = ranking_report(&lists, &ctx.cfg.search.weights, &table)?;
    let hyper = ctx.cfg.baseline_hyper();
    let mut net = WholeNetSupernet::init(&ctx.space, hyper.seed)?;
    let mut paths = block_path_rng(hyper.seed, usize::MAX);
    net.train(
        &ctx.data,
        &ctx.data.train,
        &hyper,
        hyper.learning_rate,
        &mut paths,
    )?;
    let archs: Vec<_> = table.rows.iter().map(|r| r.arch.clone()).collect();
    let (xv, yv) = (
        ctx.data.x.select_rows(&ctx.data.val),
        ctx.data.y.select_rows(&ctx.data.val),
    );
    let pred = net.rate(&archs, &xv, &yv, ctx.cfg.baseline.metric)?;
    let oneshot = RankingReport::compute(&pred, &table.scores())?;
    let mut t = Table::new(
        ctx.stamp(),
        &["method", "kendall_tau", "spearman_rho", "pearson_r", "n"],
    );
    t.push(report_row("blockwise", &dna));
    t.push(report_row("whole_net", &oneshot));
    t.write(&path)?;
    for (name, r) in [("blockwise", &dna), ("whole_net", &oneshot)] {
        say(
            "rank",
            format!(
                "{name}: tau {:.3}, rho {:.3}, r {:.3} over {}",
                r.kendall_tau, r.spearman_rho, r.pearson_r, r.n
            ),
        );
    }
    Ok(())
}

fn shape_text(c: &CellShape) -> String {
    let ops: Vec<String> = c.ops.iter().map(ToString::to_string).collect();
    format!("w{}:{}", c.width, ops.join("."))
}

fn plus(ctx: &Ctx) -> Result<()> {
    let mut plus = ctx.cfg.plus.clone();
    if let Some(m) = ctx.opts.generations {
        plus.generations = m;
    }
    let constraint = ctx.constraint();
    let stamp = ctx
        .stamp()
        .with("generations", plus.generations)
        .with("constraint", constraint);
    let path = ctx.path("plus/generations.csv");
    if ctx.fresh(&path, &stamp, ctx.opts.force)? {
        say("plus", "up to date");
        return Ok(());
    }
    let lut = build_cost_lut(&ctx.space);
    let states = dna_plus_run(
        &ctx.space,
        &ctx.data,
        &ctx.cfg.teacher_spec(),
        &ctx.cfg.teacher_hyper(),
        &ctx.cfg.dna_settings(ctx.opts.workers),
        &lut,
        &constraint,
        &ctx.cfg.search.weights,
        &plus,
    )?;
    let mut t = Table::new(
        stamp,
        &[
            "generation",
            "teacher",
            "arch_id",
            "score",
            "params",
            "macs",
            "visits",
        ],
    );
    for s in &states {
        let dir = ctx.path(&format!("plus/gen{}", s.generation));
        save_weights(&dir, "teacher", &s.teacher.net.params(), &ctx.hash)?;
        write_score_lists(&dir.join("scores.csv"), &s.lists, &ctx.hash)?;
        let teacher: Vec<String> = s.teacher.spec.blocks.iter().map(shape_text).collect();
        let mut row = vec![s.generation.to_string(), teacher.join("|")];
        row.extend(outcome_row(&s.searched));
        say(
            "plus",
            format!(
                "generation {}: teacher {} -> {}",
                s.generation, row[1], row[2]
            ),
        );
        t.push(row);
    }
    t.write(&path)
}

fn ssl(ctx: &Ctx) -> Result<()> {
    let constraint = ctx.constraint();
    let stamp = ctx.stamp().with("constraint", constraint);
    let path = ctx.path("ssl/search.csv");
    if ctx.fresh(&path, &stamp, ctx.opts.force)? {
        say("ssl", "up to date");
        return Ok(());
    }
    let gamma = ctx.cfg.ssl.hyper.gamma;
    let run = run_ssl(
        &ctx.space,
        &ctx.data,
        &ctx.cfg.teacher_spec(),
        &ctx.cfg.ssl.hyper,
        &ctx.cfg.ssl_hyper(),
        ctx.cfg.supernet.metric,
    )?;
    let mut report = Table::new(
        ctx.stamp(),
        &[
            "block",
            "first_loss",
            "final_loss",
            "median_channel_std",
            "fraction_std_above_half_gamma",
        ],
    );
    for (k, r) in run.reports.iter().enumerate() {
        let mut stds = r.teacher_channel_stds.clone();
        stds.sort_by(f64::total_cmp);
        let above = stds.iter().filter(|s| **s >= 0.5 * gamma).count() as f64 / stds.len() as f64;
        report.push(vec![
            k.to_string(),
            fmt_f64(r.epoch_losses[0]),
            fmt_f64(*r.epoch_losses.last().expect("at least one epoch")),
            fmt_f64(stds[stds.len() / 2]),
            fmt_f64(above),
        ]);
        say(
            "ssl",
            format!(
                "block {k}: loss {:.4} -> {:.4}, {:.0}% of channel stds >= gamma/2",
                r.epoch_losses[0],
                r.epoch_losses.last().unwrap(),
                100.0 * above
            ),
        );
    }
    report.write(&ctx.path("ssl/report.csv"))?;
    write_score_lists(&ctx.path("ssl/scores.csv"), &run.lists, &ctx.hash)?;
    let found = traverse_search(
        &run.lists,
        &build_cost_lut(&ctx.space),
        &constraint,
        &ctx.cfg.search.weights,
    )?;
    let mut t = Table::new(stamp, &["arch_id", "score", "params", "macs", "visits"]);
    t.push(outcome_row(&found));
    say("ssl", format!("searched {}", encode_arch(&found.arch)));
    t.write(&path)
}

fn sweep(ctx: &Ctx, kind: SweepKind) -> Result<()> {
    let all = kind == SweepKind::All;
    let table = bench(ctx, false)?;
    if all || kind == SweepKind::Ops {
        let path = ctx.path("sweep_ops.csv");
        if ctx.fresh(&path, &ctx.stamp(), ctx.opts.force)? {
            say("sweep", "op-count sweep up to date");
        } else {
            let space = ctx.cfg.sweep_space()?;
            let smallest = *ctx.cfg.sweep.op_counts.iter().min().unwrap_or(&2);
            let common = space.restrict_ops(smallest)?;
            let sub = BenchTable {
                rows: table
                    .rows
                    .iter()
                    .filter(|r| r.arch.validate(&common).is_ok())
                    .cloned()
                    .collect(),
                ..table.clone()
            };
            let hyper = ctx.cfg.op_sweep_hyper();
            let rows = op_count_sweep(
                &space,
                &ctx.cfg.sweep.op_counts,
                &ctx.data,
                &sub,
                &hyper,
                hyper.learning_rate,
                ctx.cfg.baseline.metric,
            )?;
            let mut t = Table::new(
                ctx.stamp(),
                &["ops", "space_size", "kendall_tau", "mean_frobenius"],
            );
            for r in &rows {
                say(
                    "sweep",
                    format!(
                        "{} ops ({} architectures): tau {:.3} on {} shared",
                        r.ops,
                        r.space_size,
                        r.tau,
                        sub.rows.len()
                    ),
                );
                t.push(vec![
                    r.ops.to_string(),
                    r.space_size.to_string(),
                    fmt_f64(r.tau),
                    fmt_f64(r.mean_frobenius),
                ]);
            }
            t.write(&path)?;
        }
    }
    let teacher = teacher_net(ctx, false)?;
    let settings = ctx.cfg.dna_settings(ctx.opts.workers);
    if all || kind == SweepKind::Stability {
        let path = ctx.path("sweep_stability.csv");
        let stamp = ctx.stamp().with("constraint", ctx.constraint());
        if ctx.fresh(&path, &stamp, ctx.opts.force)? {
            say("sweep", "stability sweep up to date");
        } else {
            let rows = stability_sweep(
                &ctx.space,
                &ctx.data,
                &teacher,
                &settings,
                &ctx.cfg.sweep.checkpoints,
                &build_cost_lut(&ctx.space),
                &ctx.constraint(),
                &ctx.cfg.search.weights,
                &table,
            )?;
            let mut t = Table::new(stamp, &["epoch", "arch_id", "truth", "rank_fraction"]);
            for r in &rows {
                let frac = table.rank_fraction(&r.arch).unwrap_or(f64::NAN);
                t.push(vec![
                    r.epoch.to_string(),
                    encode_arch(&r.arch),
                    fmt_f64(r.truth),
                    fmt_f64(frac),
                ]);
            }
            let trend = match stability_trend(&rows) {
                Ok(t) => format!("{t:.3}"),
                Err(Error::UndefinedCorrelation(_)) => {
                    "undefined, same quality at every checkpoint".to_string()
                }
                Err(e) => return Err(e),
            };
            say("sweep", format!("stability trend (spearman) {trend}"));
            t.write(&path)?;
        }
    }
    if all || kind == SweepKind::Data {
        let path = ctx.path("sweep_data.csv");
        if ctx.fresh(&path, &ctx.stamp(), ctx.opts.force)? {
            say("sweep", "data-amount sweep up to date");
        } else {
            let mut s = settings.clone();
            s.supernet.max_steps = Some(ctx.cfg.sweep.data_steps);
            let rows = data_amount_sweep(
                &ctx.space,
                &ctx.data,
                &teacher,
                &s,
                &ctx.cfg.sweep.fractions,
                &ctx.cfg.search.weights,
                Some(&table),
            )?;
            let mut t = Table::new(ctx.stamp(), &["fraction", "kendall_tau", "cross_tau"]);
            for r in &rows {
                say(
                    "sweep",
                    format!(
                        "fraction {}: cross-tau to full data {:.3}",
                        r.fraction, r.cross_tau
                    ),
                );
                t.push(vec![
                    fmt_f64(r.fraction),
                    r.tau.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.cross_tau),
                ]);
            }
            t.write(&path)?;
        }
    }
    Ok(())
}

fn verify(seed: u64) -> Result<()> {
    let report = VerifyReport::run(seed)?;
    let r = &report.rating;
    println!(
        "rating: {} blocks, max |diff| {:.2e}, orderings equal {}, op applications {} (naive {})",
        r.blocks, r.max_abs_diff, r.orderings_equal, r.op_applications, r.naive_op_applications
    );
    let s = &report.search;
    println!(
        "search: {} instances, {} mismatches, {} binding, {} pruned",
        s.instances, s.mismatches, s.binding, s.pruned_when_binding
    );
    for (name, e) in &report.gradients {
        println!("gradient {name}: max relative error {e:.2e}");
    }
    let failures = report.failures();
    if failures.is_empty() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Error::Verification(failures.join("; ")))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Config => {
            println!("{}", RunConfig::default().to_json());
            Ok(())
        }
        Command::Verify => verify(cli.opts.seed.unwrap_or(0)),
        command => {
            let ctx = Ctx::new(&cli.opts)?;
            let force = ctx.opts.force;
            match command {
                Command::Teacher => teacher_net(&ctx, force).map(drop),
                Command::Train => supernet(&ctx, force).map(drop),
                Command::Rate => scores(&ctx, force).map(drop),
                Command::Search => search(&ctx),
                Command::Bench => bench(&ctx, force).map(drop),
                Command::Rank => rank(&ctx),
                Command::Plus => plus(&ctx),
                Command::Ssl => ssl(&ctx),
                Command::Sweep { kind } => sweep(&ctx, kind),
                Command::Config | Command::Verify => unreachable!(),
            }
        }
    }
}

/// Kendall tau recomputed from the persisted score lists and bench table.
pub fn rank_from_files(
    out: &Path,
    space: &SearchSpace,
    config: &str,
    weights: &[f64],
) -> Result<f64> {
    let lists = read_score_lists(&out.join("scores.csv"), space, config)?;
    let table = read_bench(&out.join("bench.csv"), space, config)?;
    let archs: Vec<_> = table.rows.iter().map(|r| r.arch.clone()).collect();
    let pred = crate::bench::predicted_scores(&lists, weights, &archs)?;
    kendall_tau(&pred, &table.scores())
}
