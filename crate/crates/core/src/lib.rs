//! Hierarchical particle/cluster mixture model of moving matter with blocked
//! Gibbs inference, multi-frame tracking, a hard-assignment baseline and
//! evaluation metrics.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod distributions;
pub mod error;
pub mod eval;
pub mod geweke;
pub mod gibbs;
pub mod init;
pub mod linalg;
pub mod math;
pub mod model;
pub mod rng;
pub mod sva;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{
    cluster_induced_velocity, log_joint, sample_forward, Assignments, ClusterState, Dim, HyperParams, ModelState,
    ParticleState, PointObservation,
};
