//! The experiment protocol: grid enumeration, training with early stopping,
//! evaluation, multi-seed suites, and report emission.

pub mod config;
pub mod evaluate;
pub mod grid;
pub mod report;
pub mod suite;
pub mod train;

pub use config::{profiles, ExperimentConfig, GridDefaults, SettingId};
pub use evaluate::{evaluate_model, EvalContext};
pub use grid::{enumerate_grid, word_settings, GridFilter};
pub use report::{write_report, PerRunRow};
pub use suite::{run_full, run_suite, Contrast, SuiteOptions, SuiteResult};
pub use train::{run_training, EarlyStopping, EpochRecord, TrainingOutput, MIN_COUNT};
