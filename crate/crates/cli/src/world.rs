//! Maze and environment settings shared by several commands.

use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use lomap_core::synthworld::{EnvParams, MazeSpec, PointMassEnv, CORRIDOR, FOUR_ROOMS};
use std::sync::Arc;

pub const MAZE_KEYS: &[(&str, &str)] = &[("maze", "four-rooms"), ("cell_size", "1"), ("goal_tol", "0.3")];

pub const ENV_KEYS: &[(&str, &str)] = &[("dt", "0.5"), ("damping", "0.5"), ("max_accel", "4"), ("max_steps", "100")];

/// `maze` is `four-rooms`, `corridor`, or a path to a text grid.
pub fn maze(cfg: &RunConfig) -> Result<MazeSpec> {
    let text = match cfg.raw("maze") {
        "four-rooms" => FOUR_ROOMS.to_string(),
        "corridor" => CORRIDOR.to_string(),
        path => std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read maze {path}: {e}")))?,
    };
    MazeSpec::parse(&text, cfg.get("cell_size")?, cfg.get("goal_tol")?).map_err(|e| match e {
        lomap_core::Error::Validation(m) => Failure::Data(format!("invalid maze: {m}")),
        other => other.into(),
    })
}

pub fn env_params(cfg: &RunConfig) -> Result<EnvParams> {
    Ok(EnvParams {
        dt: cfg.get("dt")?,
        damping: cfg.get("damping")?,
        max_accel: cfg.get("max_accel")?,
        max_steps: cfg.get("max_steps")?,
    })
}

pub fn env(cfg: &RunConfig) -> Result<PointMassEnv> {
    Ok(PointMassEnv::new(Arc::new(maze(cfg)?), env_params(cfg)?)?)
}
