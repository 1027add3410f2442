//! Scenarios, presets, experiment orchestration, reports and the
//! command-line interface.

pub mod commands;
pub mod experiment;
pub mod presets;
pub mod propagation;
pub mod report;
pub mod scenario;

pub use commands::{main_with_args, Cli, CliError, Failure};
pub use experiment::{run_experiment, run_sample, select_prefixes, Experiment, RunOptions, SampleRun, SeriesOutcome, TraceSelection};
pub use presets::{preset, preset_names};
pub use propagation::{propagation_table, PropagationRow};
pub use report::{ExperimentReport, ReportRow};
pub use scenario::{Scenario, ScenarioError, ScenarioFile};
