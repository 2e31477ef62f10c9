//! Ground-truth bench, ranking correlations and diagnostic sweeps.

mod correlation;
mod oneshot;
mod sweeps;
mod table;

pub use correlation::{average_ranks, kendall_tau, pearson_r, spearman_rho, RankingReport};
pub use oneshot::WholeNetSupernet;
pub use sweeps::{
    data_amount_sweep, op_count_sweep, stability_sweep, stability_trend, DataAmountRow, OpCountRow,
    StabilityRow,
};
pub use table::{
    build_bench, build_bench_resumable, predicted_scores, ranking_report, rows_unique,
    train_standalone, BenchRow, BenchTable, StandaloneConfig,
};
