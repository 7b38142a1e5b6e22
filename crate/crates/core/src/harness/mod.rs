//! Experiment harness: configuration, closed-loop trials, suites, tables,
//! record logs and plots.

pub mod config;
pub mod pac;
pub mod plot;
pub mod report;
pub mod suite;
pub mod trial;

pub use config::{Model, RunConfig, RunSection};
pub use pac::{frozen_risk_estimate, frozen_trial_risk, FrozenPolicy};
pub use plot::{emit_plot, render_svg};
pub use suite::{aggregate, run_indices, run_suite, SuiteResult, SuiteRow};
pub use trial::{run_trial, run_trial_in, Outcome, StepRecord, TrialLog, TrialSummary, TrialTiming};
