//! Manifold-aware guided diffusion planning.
//!
//! A diffusion trajectory sampler whose reward-guided reverse steps are
//! projected onto a local low-rank subspace estimated from an offline dataset,
//! together with the numerical tooling used to measure the guidance gap of
//! MSE-trained return predictors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod guidance;
pub mod io;
pub mod lomap;
pub mod matrix;
pub mod planner;
pub mod schedule;
pub mod stats;
pub mod synthworld;
pub mod trajectory;

pub use error::{Error, Result};
pub use matrix::RowMatrix;
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use trajectory::{Trajectory, TrajectoryLayout};
