//! Desk-scale maze world, dataset generators and plan metrics.

mod dataset;
mod env;
mod maze;
mod metrics;
mod normalize;
mod subspace;

pub use dataset::{
    default_path_budget, generate_offline_dataset, rollout, waypoints_to, DatasetConfig, Endpoints,
    OfflineDataset, WaypointController,
};
pub use env::{EnvParams, PointMassEnv, StepOutcome, ACTION_DIM, CONTACT_PULLBACK, STATE_DIM};
pub use maze::{Cell, Contact, MazeSpec, CORRIDOR, FOUR_ROOMS};
pub use metrics::{
    artifact_ratio, dynamic_mse, realism_score, wall_collision_oracle, RealismReference, RealismReport,
    REALISM_CAP,
};
pub use normalize::Normalizer;
pub use subspace::{sample_gmm_dataset, sample_subspace_dataset, SubspaceSpec};
