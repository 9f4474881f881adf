//! Experiment runner behind the `hetnet` binary.

pub mod output;
pub mod report;
pub mod run;
pub mod spec;

pub use output::{write_all, Artifact};
pub use report::{Check, ValidationReport};
pub use run::{Command, Invocation, Options};
pub use spec::{Axis, ExperimentSpec};
