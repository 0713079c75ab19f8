//! Linear and Tomlinson-Harashima precoding for multi-user MIMO broadcast
//! channels with eavesdroppers: precoder construction, secrecy-rate
//! evaluation, FLOP accounting and a seeded Monte Carlo link simulator.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod channel;
pub mod cli;
pub mod complexity;
pub mod error;
pub mod modulation;
pub mod numerics;
pub mod precoding;
pub mod secrecy;
pub mod simulator;
pub mod thp;

pub use algorithm::Algorithm;
pub use channel::SystemDims;
pub use error::{Error, Result};
pub use simulator::{run_experiment, ExperimentConfig, SimResult};
