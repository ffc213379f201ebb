#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Experiment driver: suite generation, batch registration and report
//! emission on top of `patchreg`.

pub mod commands;
pub mod config;
pub mod error;
pub mod runner;

pub use config::{DescriptorSpec, ExperimentConfig, IcpInit, MethodEntry, MethodKind};
pub use error::{CliError, CliResult, Outcome};
