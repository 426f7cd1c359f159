use crate::denoiser::{ConditionedMlp, TrainConfig, TrainReport};
use crate::diffusion::standard_normal;
use crate::error::{check_len, Error, Result};
use crate::matrix::RowMatrix;
use crate::schedule::NoiseSchedule;
use nalgebra::DMatrix;
use rand::Rng;

/// A differentiable return predictor over noisy trajectories.
pub trait ReturnGuide: Send + Sync {
    fn value(&self, x: &[f64], step: usize) -> Result<f64>;

    fn gradient(&self, x: &[f64], step: usize) -> Result<Vec<f64>>;
}

/// Return regressor trained with the MSE objective on noised trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct MseGuide {
    net: ConditionedMlp,
}

impl MseGuide {
    pub fn new(net: ConditionedMlp) -> Result<Self> {
        check_len(1, net.output_dim())?;
        Ok(Self { net })
    }

    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        steps: usize,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(ConditionedMlp::random(
            dim,
            1,
            &config.hidden,
            config.embed_width,
            steps,
            config.activation,
            rng,
        )?)
    }

    pub fn network(&self) -> &ConditionedMlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut ConditionedMlp {
        &mut self.net
    }
}

impl ReturnGuide for MseGuide {
    fn value(&self, x: &[f64], step: usize) -> Result<f64> {
        Ok(self.net.predict(x, step)?[0])
    }

    fn gradient(&self, x: &[f64], step: usize) -> Result<Vec<f64>> {
        self.net.input_gradient(x, step, &[1.0])
    }
}

/// `J(x) = a . x + c`, independent of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGuide {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl ReturnGuide for LinearGuide {
    fn value(&self, x: &[f64], _step: usize) -> Result<f64> {
        check_len(self.coeffs.len(), x.len())?;
        Ok(crate::matrix::dot(&self.coeffs, x) + self.offset)
    }

    fn gradient(&self, x: &[f64], _step: usize) -> Result<Vec<f64>> {
        check_len(self.coeffs.len(), x.len())?;
        Ok(self.coeffs.clone())
    }
}

/// Fits `J_phi(x_i, i)` to `J(x_0)` with `x_i` drawn from the forward marginal.
pub fn train_mse_guide<R: Rng + ?Sized>(
    dataset: &RowMatrix,
    returns: &[f64],
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(MseGuide, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Parameter("guide dataset is empty".into()));
    }
    check_len(dataset.rows(), returns.len())?;
    if let Some(r) = returns.iter().find(|r| !r.is_finite()) {
        return Err(Error::Parameter(format!("non-finite return {r}")));
    }
    let dim = dataset.cols();
    let m = schedule.steps();
    let mut guide = MseGuide::random(dim, m, config, rng)?;
    let report = crate::denoiser::fit_network(&mut guide.net, config, rng, |rng| {
        let b = config.batch_size;
        let mut items = Vec::with_capacity(b);
        let mut target = DMatrix::zeros(1, b);
        for c in 0..b {
            let k = rng.random_range(0..dataset.rows());
            let step = rng.random_range(0..=m);
            let eps = standard_normal(rng, dim);
            let a = schedule.alpha_bar(step);
            let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
            let xi: Vec<f64> = dataset
                .row(k)
                .iter()
                .zip(&eps)
                .map(|(x, e)| sa * x + sn * e)
                .collect();
            items.push((xi, step));
            target[(0, c)] = returns[k];
        }
        Ok((items, target))
    })?;
    Ok((guide, report))
}

/// Shifts a reverse-step mean by `omega * Sigma_i * grad J(mu, i)`.
pub fn apply_guidance(
    mu: &[f64],
    step: usize,
    guide: &dyn ReturnGuide,
    omega: f64,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if !(omega >= 0.0) {
        return Err(Error::Parameter(format!("guidance scale {omega} must be >= 0")));
    }
    schedule.check_step(step, false)?;
    if omega == 0.0 {
        return Ok(mu.to_vec());
    }
    let g = guide.gradient(mu, step)?;
    check_len(mu.len(), g.len())?;
    let scale = omega * schedule.posterior_var(step);
    Ok(mu.iter().zip(&g).map(|(m, gi)| m + scale * gi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::build(10, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap()
    }

    fn config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 32,
            hidden: vec![32, 32],
            embed_width: 8,
            steps_per_epoch: 100,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_scale_is_identity() {
        let g = LinearGuide { coeffs: vec![1.0, 2.0], offset: 0.0 };
        let mu = [0.3, -0.1];
        assert_eq!(apply_guidance(&mu, 5, &g, 0.0, &schedule()).unwrap(), mu.to_vec());
        assert!(apply_guidance(&mu, 5, &g, -1.0, &schedule()).is_err());
    }

    #[test]
    fn constant_gradient_shift() {
        let s = schedule();
        let g = LinearGuide { coeffs: vec![1.0, -2.0, 0.5], offset: 3.0 };
        let mu = [0.0, 1.0, 2.0];
        let out = apply_guidance(&mu, 6, &g, 0.7, &s).unwrap();
        for j in 0..3 {
            assert!((out[j] - mu[j] - 0.7 * s.posterior_var(6) * g.coeffs[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn guide_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let guide = MseGuide::random(6, 10, &TrainConfig { hidden: vec![8, 8], ..config(0) }, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|k| 0.2 * k as f64 - 0.5).collect();
        let g = guide.gradient(&x, 4).unwrap();
        for j in 0..6 {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[j] += 1e-5;
            down[j] -= 1e-5;
            let fd = (guide.value(&up, 4).unwrap() - guide.value(&down, 4).unwrap()) / 2e-5;
            assert!((g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-6) < 1e-4);
        }
        // the shift itself is linear in the gradient
        let s = schedule();
        let shifted = apply_guidance(&x, 4, &guide, 2.0, &s).unwrap();
        for j in 0..6 {
            assert!((shifted[j] - x[j] - 2.0 * s.posterior_var(4) * g[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_returns_are_learned() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..64).map(|_| standard_normal(&mut rng, 4)).collect();
        let data = RowMatrix::from_rows(&rows).unwrap();
        let returns = vec![2.5; 64];
        let (guide, report) = train_mse_guide(&data, &returns, &s, &config(1500), &mut rng).unwrap();
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        for _ in 0..20 {
            let probe = standard_normal(&mut rng, 4);
            let v = guide.value(&probe, 1).unwrap();
            assert!((v - 2.5).abs() < 0.05 * 2.5, "prediction {v}");
        }
    }

    #[test]
    fn zero_steps_leave_guide_unchanged() {
        let s = schedule();
        let data = RowMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let (g, r) = train_mse_guide(&data, &[1.0], &s, &config(0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let fresh = MseGuide::random(2, 10, &config(0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(g, fresh);
        assert!(r.epoch_losses.is_empty());
        assert!(train_mse_guide(&data, &[f64::NAN], &s, &config(1), &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }
}
