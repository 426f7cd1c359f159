//! Flattened state-action trajectories.

use crate::error::{Error, Result};
use std::ops::Range;

/// Shape of a flattened trajectory: `horizon` timesteps of `(s_t, a_t)` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrajectoryLayout {
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl TrajectoryLayout {
    pub fn new(horizon: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if horizon == 0 || state_dim + action_dim == 0 {
            return Err(Error::Parameter(
                "trajectory layout must have positive horizon and width".into(),
            ));
        }
        Ok(Self {
            horizon,
            state_dim,
            action_dim,
        })
    }

    /// Width of one timestep block.
    pub fn step_width(&self) -> usize {
        self.state_dim + self.action_dim
    }

    /// Flattened dimension `d = T * (state_dim + action_dim)`.
    pub fn dim(&self) -> usize {
        self.horizon * self.step_width()
    }

    pub fn state_range(&self, t: usize) -> Range<usize> {
        let start = t * self.step_width();
        start..start + self.state_dim
    }

    pub fn action_range(&self, t: usize) -> Range<usize> {
        let start = t * self.step_width() + self.state_dim;
        start..start + self.action_dim
    }
}

/// A trajectory (clean or noisy) in flattened timestep-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    layout: TrajectoryLayout,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(layout: TrajectoryLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::Shape {
                expected: layout.dim(),
                got: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: TrajectoryLayout) -> Self {
        Self {
            layout,
            data: vec![0.0; layout.dim()],
        }
    }

    pub fn layout(&self) -> TrajectoryLayout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.data[self.layout.state_range(t)]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.data[self.layout.action_range(t)]
    }

    pub fn set_state(&mut self, t: usize, state: &[f64]) {
        let r = self.layout.state_range(t);
        self.data[r].copy_from_slice(state);
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.layout.horizon).map(move |t| self.state(t))
    }
}
