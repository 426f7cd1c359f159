//! Forward corruption, Tweedie denoising and the unguided reverse transition.

use crate::denoiser::NoisePredictor;
use crate::error::{check_len, Error, Result};
use crate::schedule::NoiseSchedule;
use rand::Rng;
use rand_distr::StandardNormal;

/// `tweedie_denoise` refuses steps whose cumulative product falls below this.
pub const TWEEDIE_ALPHA_FLOOR: f64 = 1e-8;

/// Draws a standard-normal vector of length `dim`.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `sqrt(alpha_i) * x0 + sqrt(1 - alpha_i) * eps`; step 0 returns `x0`.
pub fn forward_diffuse(
    x0: &[f64],
    step: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_len(x0.len(), eps.len())?;
    schedule.check_step(step, true)?;
    if step == 0 {
        return Ok(x0.to_vec());
    }
    let a = schedule.alpha_bar(step);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| sa * x + sn * e).collect())
}

/// Tweedie estimate of clean data from a noise prediction.
pub fn tweedie_from_noise(
    xi: &[f64],
    eps_hat: &[f64],
    step: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_len(xi.len(), eps_hat.len())?;
    let a = schedule.alpha_bar(step);
    if a < TWEEDIE_ALPHA_FLOOR {
        return Err(Error::Numerical(format!(
            "alpha_bar({step}) = {a:e} is below the Tweedie floor {TWEEDIE_ALPHA_FLOOR:e}"
        )));
    }
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(xi.iter().zip(eps_hat).map(|(x, e)| (x - sn * e) / sa).collect())
}

/// Posterior-mean estimate of `x0` given `x_i` and a noise predictor.
pub fn tweedie_denoise(
    xi: &[f64],
    step: usize,
    denoiser: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(step, false)?;
    let eps_hat = denoiser.predict_noise(xi, step)?;
    tweedie_from_noise(xi, &eps_hat, step, schedule)
}

/// Mean of the reverse transition, `(x_i - beta_i / sqrt(1 - alpha_i) * eps) / sqrt(1 - beta_i)`.
pub fn reverse_mean(
    xi: &[f64],
    step: usize,
    denoiser: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(step, false)?;
    let eps_hat = denoiser.predict_noise(xi, step)?;
    check_len(xi.len(), eps_hat.len())?;
    let beta = schedule.beta(step);
    let coef = beta / (1.0 - schedule.alpha_bar(step)).sqrt();
    let scale = 1.0 / (1.0 - beta).sqrt();
    Ok(xi
        .iter()
        .zip(&eps_hat)
        .map(|(x, e)| scale * (x - coef * e))
        .collect())
}

/// Reverse mean through a clipped clean estimate.
///
/// `x0 = clamp(tweedie(x_i), -bound, bound)` enters the Gaussian posterior
/// mean `c0 x0 + ci x_i`. Without clipping this equals [`reverse_mean`].
pub fn reverse_mean_clipped(
    xi: &[f64],
    step: usize,
    denoiser: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    bound: f64,
) -> Result<Vec<f64>> {
    if !(bound > 0.0) {
        return Err(Error::Parameter(format!("clip bound must be positive, got {bound}")));
    }
    let x0 = tweedie_denoise(xi, step, denoiser, schedule)?;
    let (a, a_prev, beta) = (
        schedule.alpha_bar(step),
        schedule.alpha_bar(step - 1),
        schedule.beta(step),
    );
    let c0 = a_prev.sqrt() * beta / (1.0 - a);
    let ci = (1.0 - beta).sqrt() * (1.0 - a_prev) / (1.0 - a);
    Ok(x0
        .iter()
        .zip(xi)
        .map(|(x0, x)| c0 * x0.clamp(-bound, bound) + ci * x)
        .collect())
}

/// Adds reverse-step noise `sqrt(posterior_var(i)) * z` to `mean`, in place.
///
/// Step 1 has zero posterior variance, so the final step is deterministic and
/// draws nothing from `rng`.
pub fn add_reverse_noise<R: Rng + ?Sized>(
    mean: &mut [f64],
    step: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) {
    if step <= 1 {
        return;
    }
    let sd = schedule.posterior_var(step).sqrt();
    for m in mean.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *m += sd * z;
    }
}

/// One unguided reverse transition `x_i -> x_{i-1}`.
pub fn reverse_step<R: Rng + ?Sized>(
    xi: &[f64],
    step: usize,
    denoiser: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = reverse_mean(xi, step, denoiser, schedule)?;
    add_reverse_noise(&mut out, step, schedule, rng);
    Ok(out)
}

/// Plain ancestral sampling from `N(0, I)` through every reverse step.
pub fn sample_unguided<R: Rng + ?Sized>(
    denoiser: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut x = standard_normal(rng, denoiser.dim());
    for step in (1..=schedule.steps()).rev() {
        x = reverse_step(&x, step, denoiser, schedule, rng)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{FnDenoiser, GmmSpec, GaussianMixtureDenoiser};
    use crate::schedule::ScheduleKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::build(20, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap()
    }

    #[test]
    fn zero_noise_scales_by_sqrt_alpha() {
        let s = schedule();
        let x0 = [1.0, -2.0, 0.5];
        let out = forward_diffuse(&x0, 7, &[0.0; 3], &s).unwrap();
        for (o, x) in out.iter().zip(&x0) {
            assert_eq!(*o, s.alpha_bar(7).sqrt() * x);
        }
    }

    #[test]
    fn quarter_alpha_arithmetic() {
        let s = NoiseSchedule::from_betas(&[0.75], true).unwrap();
        let out = forward_diffuse(&[1.0, 0.0], 1, &[0.0, 1.0], &s).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert!((out[1] - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn step_zero_is_identity() {
        let s = schedule();
        let x0 = [0.3, 0.7];
        assert_eq!(forward_diffuse(&x0, 0, &[5.0, 5.0], &s).unwrap(), x0.to_vec());
        assert!(forward_diffuse(&x0, 0, &[5.0], &s).is_err());
    }

    #[test]
    fn oracle_noise_round_trip() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = standard_normal(&mut rng, 6);
        let eps = standard_normal(&mut rng, 6);
        for step in 1..=19 {
            let xi = forward_diffuse(&x0, step, &eps, &s).unwrap();
            let oracle = FnDenoiser::new(6, |_, _| eps.clone());
            let rec = tweedie_denoise(&xi, step, &oracle, &s).unwrap();
            for (r, x) in rec.iter().zip(&x0) {
                let tol = 1e-14 / s.alpha_bar(step).sqrt();
                assert!((r - x).abs() < tol.max(1e-13), "step {step}: {r} vs {x}");
            }
        }
    }

    #[test]
    fn zero_prediction_divides_by_sqrt_alpha() {
        let s = schedule();
        let zero = FnDenoiser::new(2, |x, _| vec![0.0; x.len()]);
        let out = tweedie_denoise(&[1.0, 2.0], 5, &zero, &s).unwrap();
        assert_eq!(out[0], 1.0 / s.alpha_bar(5).sqrt());
    }

    #[test]
    fn tweedie_floor_guard() {
        let s = NoiseSchedule::from_betas(&[0.5, 0.999_999_999], true).unwrap();
        let zero = FnDenoiser::new(1, |x, _| vec![0.0; x.len()]);
        assert!(matches!(
            tweedie_denoise(&[1.0], 2, &zero, &s),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn gaussian_conjugate_posterior_mean() {
        let s = schedule();
        let (m, var0) = (vec![0.7, -1.3, 2.0], 0.4);
        let gmm = GmmSpec::single(m.clone(), var0).unwrap();
        let den = GaussianMixtureDenoiser::new(gmm, s.clone());
        let xi = [0.2, 0.9, -0.4];
        for step in [1, 10, 20] {
            let a = s.alpha_bar(step);
            let est = tweedie_denoise(&xi, step, &den, &s).unwrap();
            for j in 0..3 {
                let oracle = (a.sqrt() * var0 * xi[j] + (1.0 - a) * m[j]) / (a * var0 + 1.0 - a);
                let rel = (est[j] - oracle).abs() / oracle.abs().max(1e-12);
                assert!(rel < 1e-6, "step {step} coord {j}: {} vs {oracle}", est[j]);
            }
        }
    }

    #[test]
    fn final_step_is_deterministic_mean() {
        let s = schedule();
        let den = FnDenoiser::new(2, |x, _| x.iter().map(|v| 0.1 * v).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = [0.5, -0.25];
        let out = reverse_step(&xi, 1, &den, &s, &mut rng).unwrap();
        assert_eq!(out, reverse_mean(&xi, 1, &den, &s).unwrap());
    }

    #[test]
    fn reverse_step_moments() {
        let s = schedule();
        let den = FnDenoiser::new(3, |x, _| x.iter().map(|v| 0.3 * v - 0.1).collect());
        let xi = [0.4, -1.0, 2.0];
        let step = 12;
        let mean = reverse_mean(&xi, step, &den, &s).unwrap();
        let var = s.posterior_var(step);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let x = reverse_step(&xi, step, &den, &s, &mut rng).unwrap();
            for j in 0..3 {
                sum[j] += x[j];
                sq[j] += (x[j] - mean[j]).powi(2);
            }
        }
        for j in 0..3 {
            let m = sum[j] / n as f64;
            let se = (var / n as f64).sqrt();
            assert!((m - mean[j]).abs() < 3.0 * se, "coord {j}");
            let v = sq[j] / n as f64;
            assert!((v / var - 1.0).abs() < 0.05, "variance ratio {}", v / var);
        }
    }

    #[test]
    fn no_update_limit() {
        let s = NoiseSchedule::from_betas(&[1e-12, 1e-12], true).unwrap();
        let zero = FnDenoiser::new(2, |x, _| vec![0.0; x.len()]);
        let m = reverse_mean(&[1.5, -2.0], 2, &zero, &s).unwrap();
        assert!((m[0] - 1.5).abs() < 1e-11 && (m[1] + 2.0).abs() < 1e-11);
    }

    #[test]
    fn forward_noise_energy() {
        // E||x_i - sqrt(a) x0||^2 = (1 - a) d
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, n, step) = (8, 20_000, 9);
        let a = s.alpha_bar(step);
        let x0 = standard_normal(&mut rng, d);
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let eps = standard_normal(&mut rng, d);
                let xi = forward_diffuse(&x0, step, &eps, &s).unwrap();
                xi.iter().zip(&x0).map(|(x, z)| (x - a.sqrt() * z).powi(2)).sum()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - (1.0 - a) * d as f64).abs() < 3.0 * se);
    }

    #[test]
    fn clipped_mean_matches_when_inside_bound() {
        let s = schedule();
        let g = GaussianMixtureDenoiser::new(GmmSpec::single(vec![0.1, -0.2], 0.05).unwrap(), s.clone());
        let x = [0.05, -0.1];
        for step in [1, 7, 20] {
            let a = reverse_mean(&x, step, &g, &s).unwrap();
            let b = reverse_mean_clipped(&x, step, &g, &s, 1e6).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()), "step {step}: {u} vs {v}");
            }
        }
        let wild = FnDenoiser::new(2, |_x: &[f64], _s| vec![-50.0, 50.0]);
        let m = reverse_mean_clipped(&[0.0, 0.0], 1, &wild, &s, 1.0).unwrap();
        assert_eq!(m, vec![1.0, -1.0]);
    }
}
