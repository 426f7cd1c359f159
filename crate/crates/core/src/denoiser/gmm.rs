use super::NoisePredictor;
use crate::error::{check_len, Error, Result};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic variance of the clean component.
    pub var: f64,
}

/// Isotropic Gaussian mixture over clean data.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    components: Vec<GmmComponent>,
    dim: usize,
}

impl GmmSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Parameter("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Parameter("mixture dimension must be positive".into()));
        }
        let mut total = 0.0;
        for c in &components {
            check_len(dim, c.mean.len())?;
            if !(c.weight >= 0.0 && c.weight <= 1.0) {
                return Err(Error::Parameter(format!("weight {} outside [0, 1]", c.weight)));
            }
            if !(c.var > 0.0) {
                return Err(Error::Parameter(format!("variance {} must be positive", c.var)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components, dim })
    }

    pub fn single(mean: Vec<f64>, var: f64) -> Result<Self> {
        Self::new(vec![GmmComponent {
            weight: 1.0,
            mean,
            var,
        }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    /// Exact score of the step-`i` marginal, where component `c` becomes
    /// `N(sqrt(a) m_c, (a var_c + 1 - a) I)`.
    pub fn noised_score(&self, x: &[f64], alpha_bar: f64) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        let sa = alpha_bar.sqrt();
        let d = self.dim as f64;
        let mut logs = Vec::with_capacity(self.components.len());
        let mut grads = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let v = alpha_bar * c.var + 1.0 - alpha_bar;
            let mut sq = 0.0;
            let g: Vec<f64> = x
                .iter()
                .zip(&c.mean)
                .map(|(xi, mi)| {
                    let r = xi - sa * mi;
                    sq += r * r;
                    -r / v
                })
                .collect();
            logs.push(c.weight.ln() - 0.5 * sq / v - 0.5 * d * v.ln());
            grads.push(g);
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("mixture responsibilities are not finite".into()));
        }
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut score = vec![0.0; self.dim];
        for (w, g) in weights.iter().zip(&grads) {
            let r = w / z;
            for (s, gi) in score.iter_mut().zip(g) {
                *s += r * gi;
            }
        }
        Ok(score)
    }
}

/// Noise predictor that is exact for data drawn from a [`GmmSpec`].
#[derive(Debug, Clone)]
pub struct GaussianMixtureDenoiser {
    gmm: GmmSpec,
    schedule: NoiseSchedule,
}

impl GaussianMixtureDenoiser {
    pub fn new(gmm: GmmSpec, schedule: NoiseSchedule) -> Self {
        Self { gmm, schedule }
    }

    pub fn gmm(&self) -> &GmmSpec {
        &self.gmm
    }
}

impl NoisePredictor for GaussianMixtureDenoiser {
    fn dim(&self) -> usize {
        self.gmm.dim()
    }

    fn predict_noise(&self, noisy: &[f64], step: usize) -> Result<Vec<f64>> {
        self.schedule.check_step(step, false)?;
        let a = self.schedule.alpha_bar(step);
        let score = self.gmm.noised_score(noisy, a)?;
        let sn = (1.0 - a).sqrt();
        Ok(score.into_iter().map(|s| -sn * s).collect())
    }
}
