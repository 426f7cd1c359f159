use crate::trajectory::TrajectoryLayout;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnKind {
    DiscountedRewardSum,
    Linear,
    Quadratic,
    Custom,
}

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Deterministic return `J(tau)` of a clean trajectory vector.
#[derive(Clone)]
pub struct ReturnFunction {
    kind: ReturnKind,
    gamma: f64,
    eval: Eval,
}

impl fmt::Debug for ReturnFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReturnFunction")
            .field("kind", &self.kind)
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl ReturnFunction {
    /// `sum_t gamma^t r(s_t, a_t)` over the trajectory layout.
    pub fn discounted<F>(layout: TrajectoryLayout, gamma: f64, reward: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        let eval = move |x: &[f64]| {
            let mut total = 0.0;
            let mut disc = 1.0;
            for t in 0..layout.horizon {
                total += disc * reward(&x[layout.state_range(t)], &x[layout.action_range(t)]);
                disc *= gamma;
            }
            total
        };
        Self {
            kind: ReturnKind::DiscountedRewardSum,
            gamma,
            eval: Arc::new(eval),
        }
    }

    /// `a . x`
    pub fn linear(coeffs: Vec<f64>) -> Self {
        Self {
            kind: ReturnKind::Linear,
            gamma: 1.0,
            eval: Arc::new(move |x| crate::matrix::dot(&coeffs, x)),
        }
    }

    /// `-||x||^2 / 2`
    pub fn quadratic() -> Self {
        Self {
            kind: ReturnKind::Quadratic,
            gamma: 1.0,
            eval: Arc::new(|x| -0.5 * crate::matrix::dot(x, x)),
        }
    }

    /// `-||x||^2 / (2 d)`, which keeps `exp(J)` bounded as `d` grows.
    pub fn quadratic_normalized() -> Self {
        Self {
            kind: ReturnKind::Quadratic,
            gamma: 1.0,
            eval: Arc::new(|x| -0.5 * crate::matrix::dot(x, x) / x.len() as f64),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::custom(move |_| value)
    }

    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: ReturnKind::Custom,
            gamma: 1.0,
            eval: Arc::new(f),
        }
    }

    pub fn kind(&self) -> ReturnKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}
