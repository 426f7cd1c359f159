//! Plan-quality metrics: wall collisions, realism and dynamics consistency.

use super::env::{PointMassEnv, STATE_DIM};
use super::maze::MazeSpec;
use crate::error::{Error, Result};
use crate::matrix::{sq_dist, RowMatrix};
use crate::trajectory::Trajectory;
use rayon::prelude::*;

/// Upper clamp on realism ratios.
pub const REALISM_CAP: f64 = 1e6;

fn xy_path(traj: &Trajectory) -> Vec<[f64; 2]> {
    traj.states().map(|s| [s[0], s[1]]).collect()
}

/// True when any segment between consecutive planned positions meets a wall.
pub fn wall_collision_oracle(traj: &Trajectory, maze: &MazeSpec) -> bool {
    maze.path_collides(&xy_path(traj))
}

pub fn artifact_ratio(plans: &[Trajectory], maze: &MazeSpec) -> Result<f64> {
    if plans.is_empty() {
        return Err(Error::Parameter("artifact ratio of an empty batch".into()));
    }
    let hits = plans.iter().filter(|p| wall_collision_oracle(p, maze)).count();
    Ok(hits as f64 / plans.len() as f64)
}

/// k-NN hyperspheres of a reference set.
#[derive(Debug, Clone)]
pub struct RealismReference {
    rows: RowMatrix,
    radii: Vec<f64>,
    k_nn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealismReport {
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Reference rows whose hypersphere has zero radius.
    pub zero_radii: usize,
}

impl RealismReference {
    /// Radius of row `j` is its distance to its `k_nn`-th nearest other row.
    pub fn new(rows: RowMatrix, k_nn: usize) -> Result<Self> {
        if k_nn == 0 || rows.rows() <= k_nn {
            return Err(Error::Parameter(format!(
                "realism needs more than k_nn = {k_nn} reference rows, got {}",
                rows.rows()
            )));
        }
        let radii = (0..rows.rows())
            .into_par_iter()
            .map(|j| {
                let mut d: Vec<f64> = (0..rows.rows())
                    .filter(|&i| i != j)
                    .map(|i| sq_dist(rows.row(i), rows.row(j)))
                    .collect();
                d.select_nth_unstable_by(k_nn - 1, f64::total_cmp);
                d[k_nn - 1].sqrt()
            })
            .collect();
        Ok(Self { rows, radii, k_nn })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn k_nn(&self) -> usize {
        self.k_nn
    }

    /// `max_j radius_j / |x - x_j|`, clamped to `REALISM_CAP`, skipping row `skip`.
    pub fn score_excluding(&self, x: &[f64], skip: Option<usize>) -> Result<f64> {
        crate::error::check_len(self.rows.cols(), x.len())?;
        let mut best = 0.0f64;
        for (j, row) in self.rows.iter_rows().enumerate() {
            if Some(j) == skip || self.radii[j] == 0.0 {
                continue;
            }
            let d = sq_dist(x, row).sqrt();
            let ratio = if d == 0.0 { REALISM_CAP } else { (self.radii[j] / d).min(REALISM_CAP) };
            best = best.max(ratio);
        }
        Ok(best)
    }

    pub fn score(&self, samples: &RowMatrix) -> Result<RealismReport> {
        let scores: Vec<f64> = samples
            .iter_rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|x| self.score_excluding(x, None))
            .collect::<Result<_>>()?;
        let mean = if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        Ok(RealismReport {
            scores,
            mean,
            zero_radii: self.radii.iter().filter(|r| **r == 0.0).count(),
        })
    }
}

pub fn realism_score(samples: &RowMatrix, dataset: &RowMatrix, k_nn: usize) -> Result<RealismReport> {
    RealismReference::new(dataset.clone(), k_nn)?.score(samples)
}

/// Mean of `|f(s_t, a_t) - s_{t+1}|^2` over the transitions of a plan.
pub fn dynamic_mse(traj: &Trajectory, env: &PointMassEnv) -> Result<f64> {
    let l = traj.layout();
    if l.horizon < 2 {
        return Err(Error::Parameter("dynamic MSE needs at least two timesteps".into()));
    }
    if l.state_dim != STATE_DIM {
        return Err(Error::Shape {
            expected: STATE_DIM,
            got: l.state_dim,
        });
    }
    let mut total = 0.0;
    for t in 0..l.horizon - 1 {
        let (pred, _) = env.transition(traj.state(t), traj.action(t))?;
        total += sq_dist(&pred, traj.state(t + 1));
    }
    Ok(total / (l.horizon - 1) as f64)
}
