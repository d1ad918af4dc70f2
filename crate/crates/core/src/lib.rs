//! Coded federated learning over random Fourier features.
//!
//! The crate models heterogeneous client delays, computes straggler-aware
//! load allocations, builds private parity data and simulates the wall-clock
//! behaviour of coded and uncoded federated gradient descent.

pub mod allocation;
pub mod coding;
pub mod config;
pub mod data;
pub mod delay;
pub mod error;
pub mod kernel;
pub mod lambert;
pub mod oracle;
pub mod random;
pub mod simulator;
pub mod training;

pub use allocation::{allocate, optimize_client_load, optimize_waiting_time, LoadAllocation, RedundancyPolicy};
pub use config::{Scheme, SimConfig};
pub use delay::{cdf_total_delay, ClientProfile};
pub use error::{Error, Result};
pub use simulator::{ConvergenceRecord, RunManifest, RunOutput};
