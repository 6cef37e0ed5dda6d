//! Optimistically initialized randomized least-squares value iteration
//! (opt-RLSVI) for finite-horizon low-rank MDPs, with exact tabular oracles,
//! baseline agents, and an experiment harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

pub mod agent;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod linalg;
pub mod mdp;
pub mod scalar;
pub mod schedule;

mod io_util;

pub use error::{Error, Result};
pub use io_util::write_atomic;
pub use scalar::Scalar;

pub type DesignState64 = linalg::DesignState<f64>;
pub type DesignState32 = linalg::DesignState<f32>;
pub type FeatureMap64 = mdp::FeatureMap<f64>;
pub type LowRankMdp64 = mdp::LowRankMdp<f64>;
pub type LowRankMdp32 = mdp::LowRankMdp<f32>;
pub type ValueTables64 = mdp::ValueTables<f64>;
pub type OptRlsvi64 = agent::OptRlsvi<f64>;
pub type OptRlsvi32 = agent::OptRlsvi<f32>;
pub type BaselineAgent64 = agent::BaselineAgent<f64>;
pub type ScheduleParams64 = schedule::ScheduleParams<f64>;
