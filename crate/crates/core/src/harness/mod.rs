//! Metrics, content-disjoint splits, model evaluation and the PQR/SQR
//! experiment runner.

mod eval;
mod experiment;
mod metrics;
mod split;
mod sweep;

pub use eval::{evaluate_model, patch_scores, predict_images, Evaluation, GridPatches, ImagePrediction};
pub use experiment::{
    compare, run_experiment, train_model, ComparisonReport, EncoderSettings, EpochRecord, ExperimentConfig, ExperimentReport,
    HeadKind, RepetitionRecord, Summary, CONVERGENCE_FRACTION,
};
pub use metrics::{average_ranks, median, metric_pair, plcc, pool_average, srcc, std_dev, MetricPair};
pub use split::{split_by_content, SplitFractions};
pub use sweep::{beta_grid, m_grid, sweep, SweepParam, SweepRow, SweepTable};
