//! Scripted offline trajectories through a maze.

use super::env::{PointMassEnv, ACTION_DIM, STATE_DIM};
use super::maze::{Cell, MazeSpec};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::trajectory::{Trajectory, TrajectoryLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoints {
    /// Maze start to maze goal.
    Fixed,
    /// Random free-cell start to a random reachable target.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub horizon: usize,
    pub episodes: usize,
    /// Standard deviation of the additive actuation noise.
    pub noise: f64,
    pub gamma: f64,
    pub endpoints: Endpoints,
    /// Cruise speed in world units per second.
    pub speed: f64,
    /// Proportional gain from position error to desired velocity.
    pub gain: f64,
    /// Waypoints closer than this (in cell sizes) are considered passed.
    pub waypoint_radius: f64,
    /// Longest target path in cells; `None` derives it from the horizon.
    pub max_path_cells: Option<usize>,
    /// Resampling budget per episode before generation fails.
    pub max_attempts: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            horizon: 17,
            episodes: 1000,
            noise: 0.3,
            gamma: 0.99,
            endpoints: Endpoints::Random,
            speed: 1.5,
            gain: 2.0,
            waypoint_radius: 0.35,
            max_path_cells: None,
            max_attempts: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub layout: TrajectoryLayout,
    /// One flattened trajectory per row.
    pub trajectories: RowMatrix,
    pub returns: Vec<f64>,
}

impl OfflineDataset {
    pub fn new(layout: TrajectoryLayout, trajectories: RowMatrix, returns: Vec<f64>) -> Result<Self> {
        crate::error::check_len(layout.dim(), trajectories.cols())?;
        crate::error::check_len(trajectories.rows(), returns.len())?;
        Ok(Self {
            layout,
            trajectories,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectory(&self, i: usize) -> Trajectory {
        Trajectory::new(self.layout, self.trajectories.row(i).to_vec()).expect("row width matches layout")
    }

    /// States at `t = 0, stride, 2 stride, ...` of every trajectory.
    pub fn subgoal_rows(&self, stride: usize) -> Result<RowMatrix> {
        let l = self.layout;
        if stride == 0 || !(l.horizon - 1).is_multiple_of(stride) {
            return Err(Error::Parameter(format!(
                "stride {stride} must divide the {} transitions of the horizon",
                l.horizon - 1
            )));
        }
        let mut data = Vec::new();
        let count = (l.horizon - 1) / stride + 1;
        for row in self.trajectories.iter_rows() {
            for j in 0..count {
                data.extend_from_slice(&row[l.state_range(j * stride)]);
            }
        }
        RowMatrix::new(self.len(), count * l.state_dim, data)
    }

    /// Every window of `len` consecutive timesteps, trajectory-major.
    pub fn windows(&self, len: usize) -> Result<RowMatrix> {
        let l = self.layout;
        if len == 0 || len > l.horizon {
            return Err(Error::Parameter(format!("window length {len} outside [1, {}]", l.horizon)));
        }
        let w = l.step_width();
        let per = l.horizon - len + 1;
        let mut data = Vec::with_capacity(self.len() * per * len * w);
        for row in self.trajectories.iter_rows() {
            for start in 0..per {
                data.extend_from_slice(&row[start * w..(start + len) * w]);
            }
        }
        RowMatrix::new(self.len() * per, len * w, data)
    }
}

/// Desired-velocity tracking through a list of waypoints.
pub struct WaypointController {
    waypoints: Vec<[f64; 2]>,
    next: usize,
    speed: f64,
    gain: f64,
    radius: f64,
}

impl WaypointController {
    pub fn new(waypoints: Vec<[f64; 2]>, speed: f64, gain: f64, radius: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Parameter("controller needs at least one waypoint".into()));
        }
        Ok(Self {
            waypoints,
            next: 0,
            speed,
            gain,
            radius,
        })
    }

    /// Action that would reach the desired velocity in one step, before clipping.
    pub fn act(&mut self, env: &PointMassEnv, state: &[f64]) -> [f64; ACTION_DIM] {
        let last = self.waypoints.len() - 1;
        while self.next < last {
            let w = self.waypoints[self.next];
            if (state[0] - w[0]).hypot(state[1] - w[1]) < self.radius {
                self.next += 1;
            } else {
                break;
            }
        }
        let w = self.waypoints[self.next];
        let (ex, ey) = (w[0] - state[0], w[1] - state[1]);
        let dist = ex.hypot(ey);
        let target_speed = if self.next == last {
            self.speed.min(self.gain * dist)
        } else {
            self.speed
        };
        let (dx, dy) = if dist > 0.0 { (ex / dist, ey / dist) } else { (0.0, 0.0) };
        let p = env.params();
        let keep = 1.0 - p.damping * p.dt;
        [
            (target_speed * dx - keep * state[2]) / p.dt,
            (target_speed * dy - keep * state[3]) / p.dt,
        ]
    }
}

fn discounted(env: &PointMassEnv, traj: &Trajectory, gamma: f64) -> f64 {
    let mut g = 0.0;
    let mut disc = 1.0;
    for t in 1..traj.layout().horizon {
        g += disc * env.reward(traj.state(t));
        disc *= gamma;
    }
    g
}

fn cells_within(maze: &MazeSpec, from: Cell, max_cells: usize) -> Vec<Cell> {
    maze.reachable(from)
        .into_iter()
        .filter(|&c| maze.astar(from, c).map(|p| p.len() - 1 <= max_cells).unwrap_or(false))
        .collect()
}

/// Rolls the controller out for `layout.horizon` states, or `None` if it hit a wall.
pub fn rollout(
    env: &PointMassEnv,
    start: [f64; STATE_DIM],
    controller: &mut WaypointController,
    layout: TrajectoryLayout,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Option<Trajectory>> {
    let mut traj = Trajectory::zeros(layout);
    let mut s = start;
    for t in 0..layout.horizon {
        let mut a = controller.act(env, &s);
        let max = env.params().max_accel;
        for v in a.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = (*v + noise * z).clamp(-max, max);
        }
        traj.set_state(t, &s);
        let range = layout.action_range(t);
        traj.as_mut_slice()[range].copy_from_slice(&a);
        if t + 1 < layout.horizon {
            let (next, hit) = env.transition(&s, &a)?;
            if hit {
                return Ok(None);
            }
            s = next;
        }
    }
    Ok(Some(traj))
}

/// Plans A* waypoints from `start` to the centre of `target`.
pub fn waypoints_to(maze: &MazeSpec, start: [f64; 2], target: Cell) -> Result<Vec<[f64; 2]>> {
    let from = maze
        .cell_of(start[0], start[1])
        .ok_or_else(|| Error::Parameter("start lies outside the maze".into()))?;
    let path = maze.astar(from, target)?;
    Ok(path.iter().skip(1).map(|&c| maze.cell_center(c)).chain(
        (path.len() == 1).then(|| maze.cell_center(target)),
    ).collect())
}

pub fn default_path_budget(env: &PointMassEnv, config: &DatasetConfig) -> usize {
    let travel = (config.horizon.saturating_sub(1)) as f64 * env.params().dt * config.speed;
    ((0.7 * travel / env.maze().cell_size()).floor() as usize).max(1)
}

/// Draws start/target pairs for episode `index` until a rollout stays clear of walls.
fn episode(env: &PointMassEnv, config: &DatasetConfig, budget: usize, seed: u64, index: usize) -> Result<Trajectory> {
    let maze = env.maze();
    let layout = TrajectoryLayout::new(config.horizon, STATE_DIM, ACTION_DIM)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let free = maze.free_cells();
    for _ in 0..config.max_attempts {
        let (start, target) = match config.endpoints {
            Endpoints::Fixed => (maze.start_position(), maze.goal_cell()),
            Endpoints::Random => {
                let cell = free[rng.random_range(0..free.len())];
                let c = maze.cell_center(cell);
                let s = maze.cell_size();
                let start = [
                    c[0] + rng.random_range(-0.25..0.25) * s,
                    c[1] + rng.random_range(-0.25..0.25) * s,
                ];
                let options = cells_within(maze, cell, budget);
                (start, options[rng.random_range(0..options.len())])
            }
        };
        let waypoints = waypoints_to(maze, start, target)?;
        let mut ctl = WaypointController::new(
            waypoints,
            config.speed,
            config.gain,
            config.waypoint_radius * maze.cell_size(),
        )?;
        let s0 = [start[0], start[1], 0.0, 0.0];
        if let Some(traj) = rollout(env, s0, &mut ctl, layout, config.noise, &mut rng)? {
            let pts: Vec<[f64; 2]> = traj.states().map(|s| [s[0], s[1]]).collect();
            if !maze.path_collides(&pts) {
                return Ok(traj);
            }
        }
    }
    Err(Error::Validation(format!(
        "episode {index} collided in all {} attempts",
        config.max_attempts
    )))
}

/// Collision-free scripted trajectories and their discounted sparse returns.
///
/// Episode `e` uses stream `e` of a ChaCha8 generator seeded with `seed`, so
/// the output does not depend on the thread count.
pub fn generate_offline_dataset(env: &PointMassEnv, config: &DatasetConfig, seed: u64) -> Result<OfflineDataset> {
    if config.horizon < 2 || config.episodes == 0 {
        return Err(Error::Parameter("need a horizon of at least 2 and one episode".into()));
    }
    if !(config.noise >= 0.0 && config.speed > 0.0 && config.gain > 0.0) {
        return Err(Error::Parameter("noise, speed and gain must be non-negative/positive".into()));
    }
    if !(config.gamma > 0.0 && config.gamma <= 1.0) {
        return Err(Error::Parameter(format!("gamma must lie in (0, 1], got {}", config.gamma)));
    }
    let maze = env.maze();
    if !maze.reachable(maze.start_cell()).contains(&maze.goal_cell()) {
        return Err(Error::Validation("goal is unreachable".into()));
    }
    let budget = config.max_path_cells.unwrap_or_else(|| default_path_budget(env, config));
    let trajs: Vec<Result<Trajectory>> = (0..config.episodes)
        .into_par_iter()
        .map(|e| episode(env, config, budget, seed, e))
        .collect();
    let layout = TrajectoryLayout::new(config.horizon, STATE_DIM, ACTION_DIM)?;
    let mut data = Vec::with_capacity(config.episodes * layout.dim());
    let mut returns = Vec::with_capacity(config.episodes);
    for t in trajs {
        let t = t?;
        returns.push(discounted(env, &t, config.gamma));
        data.extend_from_slice(t.as_slice());
    }
    OfflineDataset::new(layout, RowMatrix::new(config.episodes, layout.dim(), data)?, returns)
}
