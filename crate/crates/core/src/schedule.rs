//! Variance schedules for the forward diffusion process.
//!
//! Step indices are 1-based: step `i` in `1..=M` corrupts with `beta(i)`, and
//! step 0 denotes clean data (`alpha_bar(0) == 1`).

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Largest terminal cumulative product accepted without `force`.
pub const TERMINAL_ALPHA_MAX: f64 = 0.01;

const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
    /// Betas supplied directly by the caller.
    Explicit,
}

impl ScheduleKind {
    pub fn tag(self) -> u8 {
        match self {
            ScheduleKind::Linear => 0,
            ScheduleKind::Cosine => 1,
            ScheduleKind::Explicit => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ScheduleKind::Linear),
            1 => Ok(ScheduleKind::Cosine),
            2 => Ok(ScheduleKind::Explicit),
            other => Err(Error::Format(format!("unknown schedule tag {other}"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Explicit => "explicit",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Parameter(format!("unknown schedule kind '{other}'"))),
        }
    }
}

/// Immutable noise schedule with derived reverse-step coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    beta_min: f64,
    beta_max: f64,
    // index i holds step i; index 0 is the clean-data convention
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a linear or cosine schedule with `steps` diffusion steps.
    ///
    /// Schedules whose terminal `alpha_bar` is not below [`TERMINAL_ALPHA_MAX`]
    /// are rejected unless `force` is set.
    pub fn build(
        steps: usize,
        kind: ScheduleKind,
        beta_min: f64,
        beta_max: f64,
        force: bool,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Parameter(format!(
                "beta bounds must satisfy 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"
            )));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => (0..steps)
                .map(|s| {
                    if steps == 1 {
                        beta_min
                    } else {
                        beta_min + (beta_max - beta_min) * s as f64 / (steps - 1) as f64
                    }
                })
                .collect(),
            ScheduleKind::Cosine => {
                let f = |t: f64| {
                    let arg = (t / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
                        * std::f64::consts::FRAC_PI_2;
                    arg.cos().powi(2)
                };
                let f0 = f(0.0);
                (1..=steps)
                    .map(|i| {
                        let prev = f((i - 1) as f64) / f0;
                        let cur = f(i as f64) / f0;
                        (1.0 - cur / prev).clamp(beta_min, beta_max)
                    })
                    .collect()
            }
            ScheduleKind::Explicit => {
                return Err(Error::Parameter(
                    "explicit schedules are built with from_betas".into(),
                ))
            }
        };
        Self::assemble(kind, beta_min, beta_max, betas, force)
    }

    /// Builds a schedule from explicit per-step betas.
    pub fn from_betas(betas: &[f64], force: bool) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Parameter(format!("beta {b} outside (0, 1)")));
        }
        let lo = betas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::assemble(ScheduleKind::Explicit, lo, hi, betas.to_vec(), force)
    }

    fn assemble(
        kind: ScheduleKind,
        beta_min: f64,
        beta_max: f64,
        betas: Vec<f64>,
        force: bool,
    ) -> Result<Self> {
        let steps = betas.len();
        let mut beta = Vec::with_capacity(steps + 1);
        beta.push(0.0);
        beta.extend_from_slice(&betas);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for i in 1..=steps {
            alpha_bar.push(alpha_bar[i - 1] * (1.0 - beta[i]));
        }
        for i in 1..=steps {
            if alpha_bar[i] >= alpha_bar[i - 1] {
                return Err(Error::Validation(format!(
                    "alpha_bar not strictly decreasing at step {i}"
                )));
            }
        }
        let terminal = alpha_bar[steps];
        if terminal >= TERMINAL_ALPHA_MAX && !force {
            return Err(Error::Validation(format!(
                "terminal alpha_bar {terminal:.6} is not below {TERMINAL_ALPHA_MAX}; pass force to accept"
            )));
        }
        let mut posterior_var = Vec::with_capacity(steps + 1);
        posterior_var.push(0.0);
        for i in 1..=steps {
            let v = beta[i] * (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]);
            posterior_var.push(v.max(0.0));
        }
        Ok(Self {
            kind,
            beta_min,
            beta_max,
            beta,
            alpha_bar,
            posterior_var,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn beta_bounds(&self) -> (f64, f64) {
        (self.beta_min, self.beta_max)
    }

    /// Per-step betas for steps `1..=M`.
    pub fn betas(&self) -> &[f64] {
        &self.beta[1..]
    }

    pub fn beta(&self, step: usize) -> f64 {
        self.beta[step]
    }

    pub fn alpha_bar(&self, step: usize) -> f64 {
        self.alpha_bar[step]
    }

    /// Reverse-step variance `beta_i (1 - alpha_{i-1}) / (1 - alpha_i)`; zero at step 1.
    pub fn posterior_var(&self, step: usize) -> f64 {
        self.posterior_var[step]
    }

    pub fn check_step(&self, step: usize, allow_zero: bool) -> Result<()> {
        let lo = if allow_zero { 0 } else { 1 };
        if step < lo || step > self.steps() {
            return Err(Error::Parameter(format!(
                "step {step} outside [{lo}, {}]",
                self.steps()
            )));
        }
        Ok(())
    }

    /// Stable one-line description, used when hashing run configurations.
    pub fn describe(&self) -> String {
        match self.kind {
            ScheduleKind::Explicit => {
                let betas: Vec<String> = self.betas().iter().map(|b| format!("{b:e}")).collect();
                format!("explicit:{}", betas.join(","))
            }
            kind => format!(
                "{kind}:M={}:beta_min={:e}:beta_max={:e}",
                self.steps(),
                self.beta_min,
                self.beta_max
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_product() {
        let s = NoiseSchedule::from_betas(&[0.5], true).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn two_step_product() {
        let s = NoiseSchedule::from_betas(&[0.1, 0.2], true).unwrap();
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
    }

    #[test]
    fn linear_twenty_steps_terminal_product() {
        // direct product of (1 - beta) over the 20 interpolated betas
        let mut prod = 1.0;
        for s in 0..20 {
            prod *= 1.0 - (1e-4 + (0.2 - 1e-4) * s as f64 / 19.0);
        }
        assert!((prod - 0.1167).abs() < 1e-3, "product {prod}");
        let forced = NoiseSchedule::build(20, ScheduleKind::Linear, 1e-4, 0.2, true).unwrap();
        assert!((forced.alpha_bar(20) - prod).abs() < 1e-14);
        // terminal product is above the 0.01 validity bound, so it is refused
        let err = NoiseSchedule::build(20, ScheduleKind::Linear, 1e-4, 0.2, false).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn terminal_valid_defaults() {
        let cos = NoiseSchedule::build(20, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap();
        assert!(cos.alpha_bar(20) < TERMINAL_ALPHA_MAX);
        let lin = NoiseSchedule::build(20, ScheduleKind::Linear, 1e-4, 0.4, false).unwrap();
        assert!(lin.alpha_bar(20) < TERMINAL_ALPHA_MAX);
    }

    #[test]
    fn bad_bounds_rejected() {
        for (lo, hi) in [(0.0, 0.1), (0.2, 0.1), (0.1, 1.0), (-0.1, 0.5)] {
            assert!(matches!(
                NoiseSchedule::build(10, ScheduleKind::Linear, lo, hi, true),
                Err(Error::Parameter(_))
            ));
        }
        assert!(NoiseSchedule::build(0, ScheduleKind::Linear, 0.1, 0.2, true).is_err());
    }

    #[test]
    fn alpha_strictly_decreasing_and_posterior_var() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
            let s = NoiseSchedule::build(50, kind, 1e-4, 0.5, true).unwrap();
            for i in 1..=50 {
                assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
                assert!(s.posterior_var(i) >= 0.0);
                assert!(s.posterior_var(i) <= s.beta(i) + 1e-15);
            }
            assert_eq!(s.posterior_var(1), 0.0);
        }
    }
}
