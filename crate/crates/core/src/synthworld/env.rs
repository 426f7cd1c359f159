//! Damped point mass moving through a maze.

use super::maze::MazeSpec;
use crate::error::{check_len, Error, Result};
use std::sync::Arc;

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;

/// Distance kept between a stopped mass and the wall face it hit.
pub const CONTACT_PULLBACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    pub dt: f64,
    pub damping: f64,
    pub max_accel: f64,
    pub max_steps: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            dt: 0.5,
            damping: 0.5,
            max_accel: 4.0,
            max_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: [f64; STATE_DIM],
    pub reward: f64,
    pub done: bool,
    pub collided: bool,
}

/// State `(x, y, vx, vy)`, action `(ax, ay)` clipped per component.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    maze: Arc<MazeSpec>,
    params: EnvParams,
    state: [f64; STATE_DIM],
    steps: usize,
}

impl PointMassEnv {
    pub fn new(maze: Arc<MazeSpec>, params: EnvParams) -> Result<Self> {
        if !(params.dt > 0.0) || !(params.damping >= 0.0) || !(params.max_accel > 0.0) {
            return Err(Error::Parameter(format!("invalid environment parameters {params:?}")));
        }
        if params.damping * params.dt >= 1.0 {
            return Err(Error::Parameter("damping * dt must stay below 1".into()));
        }
        let s = maze.start_position();
        Ok(Self {
            maze,
            params,
            state: [s[0], s[1], 0.0, 0.0],
            steps: 0,
        })
    }

    pub fn maze(&self) -> &Arc<MazeSpec> {
        &self.maze
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn state(&self) -> [f64; STATE_DIM] {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reset(&mut self) -> [f64; STATE_DIM] {
        let s = self.maze.start_position();
        self.reset_to([s[0], s[1], 0.0, 0.0]).expect("start cell is free")
    }

    pub fn reset_to(&mut self, state: [f64; STATE_DIM]) -> Result<[f64; STATE_DIM]> {
        if state.iter().any(|v| !v.is_finite()) || !self.maze.is_free_point(state[0], state[1]) {
            return Err(Error::Parameter(format!("reset state {state:?} is not in free space")));
        }
        self.state = state;
        self.steps = 0;
        Ok(state)
    }

    /// Deterministic transition; also reports whether a wall stopped the mass.
    pub fn transition(&self, state: &[f64], action: &[f64]) -> Result<([f64; STATE_DIM], bool)> {
        check_len(STATE_DIM, state.len())?;
        check_len(ACTION_DIM, action.len())?;
        let p = &self.params;
        let keep = 1.0 - p.damping * p.dt;
        let mut v = [0.0; 2];
        for k in 0..2 {
            let a = action[k].clamp(-p.max_accel, p.max_accel);
            v[k] = keep * state[2 + k] + a * p.dt;
        }
        let from = [state[0], state[1]];
        let to = [from[0] + v[0] * p.dt, from[1] + v[1] * p.dt];
        match self.maze.first_contact(from, to) {
            None => Ok(([to[0], to[1], v[0], v[1]], false)),
            Some(contact) => {
                let len = ((to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2)).sqrt();
                let frac = if len > 0.0 {
                    ((contact.t * len - CONTACT_PULLBACK) / len).max(0.0)
                } else {
                    0.0
                };
                let x = from[0] + frac * (to[0] - from[0]);
                let y = from[1] + frac * (to[1] - from[1]);
                Ok(([x, y, 0.0, 0.0], true))
            }
        }
    }

    pub fn reward(&self, state: &[f64]) -> f64 {
        if self.maze.at_goal(state[0], state[1]) {
            1.0
        } else {
            0.0
        }
    }

    pub fn at_goal(&self) -> bool {
        self.maze.at_goal(self.state[0], self.state[1])
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.steps >= self.params.max_steps {
            return Err(Error::Validation("episode step cap reached".into()));
        }
        let (next, collided) = self.transition(&self.state, action)?;
        self.state = next;
        self.steps += 1;
        let reward = self.reward(&next);
        Ok(StepOutcome {
            state: next,
            reward,
            done: reward > 0.0 || self.steps >= self.params.max_steps,
            collided,
        })
    }
}
