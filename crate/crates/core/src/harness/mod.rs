//! Training, evaluation, attribution export, gradient checking and
//! ablation grids.

pub mod ablation;
pub mod config;
pub mod eval;
pub mod export;
pub mod gradcheck;
pub mod metrics;
pub mod objective;
pub mod train;

pub use config::{Method, TrainConfig};
pub use eval::{accuracy, correlations, evaluate, predict, CorrelationProbe, EvalReport};
pub use objective::{batch_priors, objective, Batch, PalTerm};
pub use train::{probe_for, step_gradients, train, train_with, EpochRecord, RunRecord, StepRecord, TrainOutcome};
pub use ablation::{full_grid, mean_ci95, run_ablation, AblationGrid, AblationResult, AblationRow};
pub use gradcheck::{all_cases, gradcheck, GradcheckCase, GradcheckReport};
pub use metrics::{metrics_rows, write_csv, MetricsRow};
pub use export::export_attributions;
