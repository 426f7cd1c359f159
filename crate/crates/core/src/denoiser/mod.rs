//! Noise predictors: the analytic Gaussian-mixture oracle and the trainable network.

mod gmm;
mod mlp;
mod train;

pub use gmm::{GaussianMixtureDenoiser, GmmComponent, GmmSpec};
pub use mlp::{Activation, ConditionedMlp, Mlp, MlpGradients, TimeEmbedding};
pub use train::{train_mlp_denoiser, Adam, MlpDenoiser, TrainConfig, TrainReport};
pub(crate) use train::fit_network;

use crate::error::Result;

/// A noise predictor `eps_theta(x_i, i)` over vectors of a fixed dimension.
pub trait NoisePredictor: Send + Sync {
    fn dim(&self) -> usize;

    fn predict_noise(&self, noisy: &[f64], step: usize) -> Result<Vec<f64>>;
}

/// Wraps a closure as a noise predictor; mostly useful for oracles in tests.
pub struct FnDenoiser<F> {
    dim: usize,
    f: F,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&[f64], usize) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> NoisePredictor for FnDenoiser<F>
where
    F: Fn(&[f64], usize) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_noise(&self, noisy: &[f64], step: usize) -> Result<Vec<f64>> {
        crate::error::check_len(self.dim, noisy.len())?;
        let out = (self.f)(noisy, step);
        crate::error::check_len(self.dim, out.len())?;
        Ok(out)
    }
}
