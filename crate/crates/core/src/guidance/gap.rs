//! Monte-Carlo estimates of the exact and MSE guidance under the Gaussian
//! posterior `q(x0 | x_i) = N(x_i / sqrt(a), (1 - a) / a I)`.
//!
//! Both gradients use `grad_{x_i} log q(x0 | x_i) = z / sqrt(1 - a)` with
//! `z = (x0 - mean) / sd` the standardized posterior draw.
//!
//! The exponentially weighted side is a self-normalized importance sampler.
//! Its proposal starts at `q` and is refit (diagonal Gaussian) along a
//! tempering path `q exp(t J)`, `t: 0 -> 1`, choosing each increment so the
//! effective sample size stays above half the draws. Only the final stage,
//! targeting `q exp(J)` exactly, enters the estimate.

use super::returns::ReturnFunction;
use crate::diffusion::{forward_diffuse, standard_normal};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const MAX_TEMPERING_STAGES: usize = 400;
const BISECTION_ITERS: usize = 40;

/// A Monte-Carlo gradient estimate with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Effective sample size of the draws behind `mean`.
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub dim: usize,
    pub step: usize,
    pub samples: usize,
    pub exact: GuidanceEstimate,
    pub mse: GuidanceEstimate,
    /// `||exact - mse||_2`
    pub delta: f64,
    /// Expected norm of the Monte-Carlo noise in the difference.
    pub stderr: f64,
}

struct Posterior {
    mean: Vec<f64>,
    sd: f64,
    grad_scale: f64,
}

fn posterior(tau_i: &[f64], step: usize, schedule: &NoiseSchedule) -> Result<Posterior> {
    schedule.check_step(step, false)?;
    let a = schedule.alpha_bar(step);
    if a >= 1.0 {
        return Err(Error::Numerical(format!("alpha_bar({step}) = 1 leaves no posterior spread")));
    }
    Ok(Posterior {
        mean: tau_i.iter().map(|x| x / a.sqrt()).collect(),
        sd: ((1.0 - a) / a).sqrt(),
        grad_scale: 1.0 / (1.0 - a).sqrt(),
    })
}

fn normalized_weights(log_w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate("log-weights are not finite".into()));
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate("total importance weight underflowed".into()));
    }
    w.iter_mut().for_each(|v| *v /= total);
    let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    Ok((w, ess))
}

fn ess_at(base: &[f64], returns: &[f64], temp: f64) -> f64 {
    let lw: Vec<f64> = base.iter().zip(returns).map(|(b, j)| b + temp * j).collect();
    normalized_weights(&lw).map(|(_, e)| e).unwrap_or(0.0)
}

/// Estimate of `E_q[e^J grad log q] / E_q[e^J]`.
pub fn exact_guidance_mc<R: Rng + ?Sized>(
    tau_i: &[f64],
    step: usize,
    ret: &ReturnFunction,
    schedule: &NoiseSchedule,
    n: usize,
    rng: &mut R,
) -> Result<GuidanceEstimate> {
    if n < 2 {
        return Err(Error::Parameter("need at least two samples".into()));
    }
    let post = posterior(tau_i, step, schedule)?;
    let d = tau_i.len();
    let mut prop_mean = post.mean.clone();
    let mut prop_sd = vec![post.sd; d];
    let mut temp = 0.0f64;
    let target_ess = n as f64 / 2.0;

    let mut draws = vec![0.0; n * d];
    let mut base = vec![0.0; n];
    let mut values = vec![0.0; n];
    for _ in 0..MAX_TEMPERING_STAGES {
        let log_sd_ratio: f64 = prop_sd.iter().map(|s| (s / post.sd).ln()).sum();
        for k in 0..n {
            let x = &mut draws[k * d..(k + 1) * d];
            let mut log_p = 0.0;
            let mut log_q = 0.0;
            for j in 0..d {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                x[j] = prop_mean[j] + prop_sd[j] * z;
                log_p -= 0.5 * z * z;
                let u = (x[j] - post.mean[j]) / post.sd;
                log_q -= 0.5 * u * u;
            }
            base[k] = log_q - log_p + log_sd_ratio;
            values[k] = ret.evaluate(x);
            if !values[k].is_finite() {
                return Err(Error::Degenerate(format!("return is not finite: {}", values[k])));
            }
        }
        let next = if ess_at(&base, &values, 1.0) >= target_ess {
            1.0
        } else {
            let (mut lo, mut hi) = (temp, 1.0);
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                if ess_at(&base, &values, mid) >= target_ess {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let log_w: Vec<f64> = base.iter().zip(&values).map(|(b, j)| b + next * j).collect();
        let (w, ess) = normalized_weights(&log_w)?;
        if next >= 1.0 {
            if ess < 2.0 {
                return Err(Error::Degenerate(format!("effective sample size {ess:.3}")));
            }
            let mut mean = vec![0.0; d];
            for k in 0..n {
                let x = &draws[k * d..(k + 1) * d];
                for j in 0..d {
                    mean[j] += w[k] * (x[j] - post.mean[j]) / post.sd;
                }
            }
            let mut var = vec![0.0; d];
            for k in 0..n {
                let x = &draws[k * d..(k + 1) * d];
                for j in 0..d {
                    let r = (x[j] - post.mean[j]) / post.sd - mean[j];
                    var[j] += w[k] * w[k] * r * r;
                }
            }
            return Ok(GuidanceEstimate {
                mean: mean.iter().map(|m| m * post.grad_scale).collect(),
                stderr: var.iter().map(|v| v.sqrt() * post.grad_scale).collect(),
                ess,
            });
        }
        // refit the proposal to the intermediate target
        let mut mu = vec![0.0; d];
        for k in 0..n {
            for j in 0..d {
                mu[j] += w[k] * draws[k * d + j];
            }
        }
        let mut var = vec![0.0; d];
        for k in 0..n {
            for j in 0..d {
                let r = draws[k * d + j] - mu[j];
                var[j] += w[k] * r * r;
            }
        }
        if var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Degenerate("proposal variance collapsed".into()));
        }
        prop_mean = mu;
        prop_sd = var.iter().map(|v| v.sqrt()).collect();
        temp = next;
    }
    Err(Error::Degenerate(format!(
        "tempering did not reach the target within {MAX_TEMPERING_STAGES} stages"
    )))
}

/// Estimate of `E_q[J grad log q]` from antithetic posterior pairs.
pub fn mse_guidance_mc<R: Rng + ?Sized>(
    tau_i: &[f64],
    step: usize,
    ret: &ReturnFunction,
    schedule: &NoiseSchedule,
    n: usize,
    rng: &mut R,
) -> Result<GuidanceEstimate> {
    if n < 4 {
        return Err(Error::Parameter("need at least two antithetic pairs".into()));
    }
    let post = posterior(tau_i, step, schedule)?;
    let d = tau_i.len();
    let pairs = n / 2;
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for _ in 0..pairs {
        let z = standard_normal(rng, d);
        for j in 0..d {
            plus[j] = post.mean[j] + post.sd * z[j];
            minus[j] = post.mean[j] - post.sd * z[j];
        }
        let (jp, jm) = (ret.evaluate(&plus), ret.evaluate(&minus));
        if !jp.is_finite() || !jm.is_finite() {
            return Err(Error::Degenerate("return is not finite".into()));
        }
        let half = 0.5 * (jp - jm);
        for j in 0..d {
            let c = half * z[j];
            sum[j] += c;
            sum_sq[j] += c * c;
        }
    }
    let p = pairs as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / p * post.grad_scale).collect();
    let stderr = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, sq)| {
            let m = s / p;
            let var = ((sq / p - m * m) * p / (p - 1.0)).max(0.0);
            (var / p).sqrt() * post.grad_scale
        })
        .collect();
    Ok(GuidanceEstimate {
        mean,
        stderr,
        ess: p,
    })
}

/// Guidance gap `||grad J_t - grad J_mse||` at a single noisy point.
pub fn guidance_gap<R: Rng + ?Sized>(
    tau_i: &[f64],
    step: usize,
    ret: &ReturnFunction,
    schedule: &NoiseSchedule,
    n: usize,
    rng: &mut R,
) -> Result<GapReport> {
    let exact = exact_guidance_mc(tau_i, step, ret, schedule, n, rng)?;
    let mse = mse_guidance_mc(tau_i, step, ret, schedule, n, rng)?;
    let delta = exact
        .mean
        .iter()
        .zip(&mse.mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let stderr = exact
        .stderr
        .iter()
        .chain(&mse.stderr)
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt();
    Ok(GapReport {
        dim: tau_i.len(),
        step,
        samples: n,
        exact,
        mse,
        delta,
        stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnFamily {
    Quadratic,
    QuadraticNormalized,
    Constant,
    Linear,
}

impl ReturnFamily {
    pub fn build(self, dim: usize) -> ReturnFunction {
        match self {
            ReturnFamily::Quadratic => ReturnFunction::quadratic(),
            ReturnFamily::QuadraticNormalized => ReturnFunction::quadratic_normalized(),
            ReturnFamily::Constant => ReturnFunction::constant(1.0),
            ReturnFamily::Linear => {
                ReturnFunction::linear((0..dim).map(|j| if j % 2 == 0 { 0.5 } else { -0.5 }).collect())
            }
        }
    }
}

impl std::str::FromStr for ReturnFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ReturnFamily::Quadratic),
            "quadratic-normalized" => Ok(ReturnFamily::QuadraticNormalized),
            "constant" => Ok(ReturnFamily::Constant),
            "linear" => Ok(ReturnFamily::Linear),
            other => Err(Error::Parameter(format!("unknown return family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub dim: usize,
    pub step: usize,
    pub samples: usize,
    pub delta_mean: f64,
    /// Trial-to-trial standard error of `delta_mean`.
    pub delta_stderr: f64,
    /// Mean within-trial Monte-Carlo noise norm.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    /// Least-squares `(slope, intercept)` of `ln delta` against `ln d`;
    /// `None` when any row is indistinguishable from zero.
    pub fit: Option<(f64, f64)>,
}

impl ScalingResult {
    pub fn degenerate(&self) -> bool {
        self.fit.is_none()
    }
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Parameter(format!(
            "log-log fit needs at least 3 points, got {}",
            xs.len().min(ys.len())
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Mean guidance gap per dimension and the fitted log-log slope.
///
/// Each trial draws `x_i` from the forward marginal of standard-normal clean
/// data at `step`. Trials run in parallel on independent ChaCha streams and
/// are merged in trial order.
pub fn gap_scaling_experiment(
    dims: &[usize],
    step: usize,
    family: ReturnFamily,
    schedule: &NoiseSchedule,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<ScalingResult> {
    if dims.len() < 3 {
        return Err(Error::Parameter(format!(
            "scaling experiment needs at least 3 dimensions, got {}",
            dims.len()
        )));
    }
    if trials == 0 || dims.contains(&0) {
        return Err(Error::Parameter("dimensions and trial count must be positive".into()));
    }
    let (lo, hi) = (dims.iter().min().copied().unwrap_or(0), dims.iter().max().copied().unwrap_or(0));
    if hi < 10 * lo {
        return Err(Error::Parameter(format!("dimensions must span a decade, got {lo}..{hi}")));
    }
    schedule.check_step(step, false)?;
    let mut rows = Vec::with_capacity(dims.len());
    for (di, &dim) in dims.iter().enumerate() {
        let ret = family.build(dim);
        let reports: Vec<Result<(f64, f64)>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((di * trials + t) as u64);
                let x0 = standard_normal(&mut rng, dim);
                let eps = standard_normal(&mut rng, dim);
                let tau_i = forward_diffuse(&x0, step, &eps, schedule)?;
                let r = guidance_gap(&tau_i, step, &ret, schedule, n, &mut rng)?;
                Ok((r.delta, r.stderr))
            })
            .collect();
        let mut deltas = Vec::with_capacity(trials);
        let mut floors = Vec::with_capacity(trials);
        for r in reports {
            let (d, s) = r?;
            deltas.push(d);
            floors.push(s);
        }
        let tn = trials as f64;
        let mean = deltas.iter().sum::<f64>() / tn;
        let sd = if trials > 1 {
            (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (tn - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(ScalingRow {
            dim,
            step,
            samples: n,
            delta_mean: mean,
            delta_stderr: sd / tn.sqrt(),
            noise_floor: floors.iter().sum::<f64>() / tn,
        });
    }
    let resolved = rows.iter().all(|r| r.delta_mean > 3.0 * r.noise_floor);
    let fit = if resolved {
        let xs: Vec<f64> = rows.iter().map(|r| r.dim as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.delta_mean).collect();
        Some(fit_loglog(&xs, &ys)?)
    } else {
        None
    };
    Ok(ScalingResult { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleKind;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::build(20, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap()
    }

    fn within(est: &GuidanceEstimate, expected: &[f64], k: f64) {
        for (j, e) in expected.iter().enumerate() {
            let tol = k * est.stderr[j];
            assert!(
                (est.mean[j] - e).abs() <= tol.max(1e-12),
                "coord {j}: {} vs {e} (se {})",
                est.mean[j],
                est.stderr[j]
            );
        }
    }

    #[test]
    fn constant_return_has_zero_guidance() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = [0.4, -0.3, 1.2];
        let j = ReturnFunction::constant(3.0);
        within(&exact_guidance_mc(&x, 10, &j, &s, 20_000, &mut rng).unwrap(), &[0.0; 3], 4.0);
        let mse = mse_guidance_mc(&x, 10, &j, &s, 20_000, &mut rng).unwrap();
        assert!(mse.mean.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_return_matches_mgf_gradient() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = vec![0.5, -1.0, 0.25, 2.0];
        let j = ReturnFunction::linear(a.clone());
        let x = [0.1, 0.2, -0.6, 0.9];
        for step in [3, 10, 16] {
            let expected: Vec<f64> = a.iter().map(|v| v / s.alpha_bar(step).sqrt()).collect();
            within(&exact_guidance_mc(&x, step, &j, &s, 20_000, &mut rng).unwrap(), &expected, 4.0);
            within(&mse_guidance_mc(&x, step, &j, &s, 20_000, &mut rng).unwrap(), &expected, 4.0);
        }
    }

    #[test]
    fn quadratic_return_matches_closed_form() {
        // tilting N(m, v I) by exp(-|x|^2/2) gives mean m / (1 + v); the MSE side
        // is -m sd / sqrt(1 - a) in standardized units
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.7, -0.4];
        let step = 10;
        let a = s.alpha_bar(step);
        let v = (1.0 - a) / a;
        let m: Vec<f64> = x.iter().map(|t| t / a.sqrt()).collect();
        let exact: Vec<f64> = m.iter().map(|mi| -mi / (a.sqrt() * (1.0 + v))).collect();
        let mse: Vec<f64> = m.iter().map(|mi| -mi / a.sqrt()).collect();
        let j = ReturnFunction::quadratic();
        within(&exact_guidance_mc(&x, step, &j, &s, 50_000, &mut rng).unwrap(), &exact, 4.0);
        within(&mse_guidance_mc(&x, step, &j, &s, 50_000, &mut rng).unwrap(), &mse, 4.0);
    }

    #[test]
    fn tiny_sample_counts_rejected() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let j = ReturnFunction::quadratic();
        assert!(exact_guidance_mc(&[0.0], 5, &j, &s, 1, &mut rng).is_err());
        assert!(mse_guidance_mc(&[0.0], 5, &j, &s, 3, &mut rng).is_err());
        assert!(exact_guidance_mc(&[0.0], 0, &j, &s, 10, &mut rng).is_err());
    }

    #[test]
    fn non_finite_return_is_degenerate() {
        let s = schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let j = ReturnFunction::custom(|_| f64::NAN);
        assert!(matches!(
            exact_guidance_mc(&[0.0, 1.0], 5, &j, &s, 100, &mut rng),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fit_needs_three_points() {
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        let (slope, icpt) = fit_loglog(&[1.0, 4.0, 16.0], &[3.0, 6.0, 12.0]).unwrap();
        assert!((slope - 0.5).abs() < 1e-12 && (icpt - 3f64.ln()).abs() < 1e-12);
        let s = schedule();
        assert!(gap_scaling_experiment(&[4], 10, ReturnFamily::Quadratic, &s, 100, 2, 0).is_err());
        assert!(gap_scaling_experiment(&[4, 8, 16], 10, ReturnFamily::Quadratic, &s, 100, 2, 0).is_err());
    }

    #[test]
    fn constant_family_is_degenerate() {
        let s = schedule();
        let r = gap_scaling_experiment(&[2, 8, 32], 10, ReturnFamily::Constant, &s, 2_000, 3, 7).unwrap();
        assert!(r.degenerate());
    }
}
