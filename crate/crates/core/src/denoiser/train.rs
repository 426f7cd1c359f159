use super::mlp::{Activation, ConditionedMlp, Mlp, MlpGradients};
use super::NoisePredictor;
use crate::diffusion::standard_normal;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::schedule::NoiseSchedule;
use nalgebra::DMatrix;
use rand::Rng;
use std::ops::Range;

/// Optimizer and architecture settings shared by the denoiser and the guide.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub embed_width: usize,
    pub activation: Activation,
    /// Optimizer steps averaged into one reported epoch loss.
    pub steps_per_epoch: usize,
    /// Column ranges held at their clean values in every noisy training
    /// input, matching a sampler that overwrites those blocks after each
    /// step. Their regression target is zero.
    pub inpaint: Vec<Range<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 64,
            learning_rate: 1e-3,
            hidden: vec![128, 128],
            embed_width: 32,
            activation: Activation::Silu,
            steps_per_epoch: 500,
            inpaint: Vec::new(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Parameter("batch size and epoch length must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn check_inpaint(&self, dim: usize) -> Result<()> {
        match self.inpaint.iter().find(|r| r.start >= r.end || r.end > dim) {
            Some(r) => Err(Error::Parameter(format!("inpaint range {r:?} outside 0..{dim}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch, in order.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        net.update_with(grads, |k, p, g| {
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        });
    }
}

/// Minimizes the batch mean of `||net(x) - y||^2` over batches from `next_batch`.
pub(crate) fn fit_network<R, F>(
    net: &mut ConditionedMlp,
    config: &TrainConfig,
    rng: &mut R,
    mut next_batch: F,
) -> Result<TrainReport>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<(Vec<(Vec<f64>, usize)>, DMatrix<f64>)>,
{
    config.validate()?;
    let mut adam = Adam::new(net.net().param_count(), config.learning_rate);
    let mut report = TrainReport::default();
    let mut epoch_sum = 0.0;
    let mut epoch_count = 0usize;
    for step in 0..config.steps {
        let (items, target) = next_batch(rng)?;
        let input = net.input_batch(items.iter().map(|(x, s)| (x.as_slice(), *s)))?;
        let batch = input.ncols() as f64;
        let trace = net.net().forward_trace(&input);
        let diff = trace.output() - &target;
        let loss = diff.norm_squared() / batch;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training diverged at step {step}: loss = {loss}"
            )));
        }
        let d_out = diff * (2.0 / batch);
        let (grads, _) = net.net().backward(&trace, &d_out);
        adam.step(net.net_mut(), &grads);
        epoch_sum += loss;
        epoch_count += 1;
        if epoch_count == config.steps_per_epoch || step + 1 == config.steps {
            report.epoch_losses.push(epoch_sum / epoch_count as f64);
            epoch_sum = 0.0;
            epoch_count = 0;
        }
        report.steps += 1;
    }
    Ok(report)
}

/// Trained noise predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    net: ConditionedMlp,
}

impl MlpDenoiser {
    pub fn new(net: ConditionedMlp) -> Result<Self> {
        if net.output_dim() != net.data_dim() {
            return Err(Error::Shape {
                expected: net.data_dim(),
                got: net.output_dim(),
            });
        }
        Ok(Self { net })
    }

    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        steps: usize,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let net = ConditionedMlp::random(
            dim,
            dim,
            &config.hidden,
            config.embed_width,
            steps,
            config.activation,
            rng,
        )?;
        Self::new(net)
    }

    pub fn network(&self) -> &ConditionedMlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut ConditionedMlp {
        &mut self.net
    }

    /// Noise predictions for a batch of vectors sharing one step index.
    pub fn predict_batch(&self, xs: &[Vec<f64>], step: usize) -> Result<Vec<Vec<f64>>> {
        let input = self
            .net
            .input_batch(xs.iter().map(|x| (x.as_slice(), step)))?;
        let out = self.net.net().forward(&input);
        Ok(out.column_iter().map(|c| c.iter().cloned().collect()).collect())
    }
}

impl NoisePredictor for MlpDenoiser {
    fn dim(&self) -> usize {
        self.net.data_dim()
    }

    fn predict_noise(&self, noisy: &[f64], step: usize) -> Result<Vec<f64>> {
        self.net.predict(noisy, step)
    }
}

/// Trains a noise predictor on clean rows with the noise-regression objective.
///
/// Each sample draws a row uniformly, a step uniformly from `1..=M`, and fresh
/// Gaussian noise; the target is that noise. Ranges in `config.inpaint` are
/// reset to the clean row before the network sees it.
pub fn train_mlp_denoiser<R: Rng + ?Sized>(
    dataset: &RowMatrix,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(MlpDenoiser, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Parameter("training dataset is empty".into()));
    }
    let dim = dataset.cols();
    config.check_inpaint(dim)?;
    let mut model = MlpDenoiser::random(dim, schedule.steps(), config, rng)?;
    let m = schedule.steps();
    let report = fit_network(&mut model.net, config, rng, |rng| {
        let b = config.batch_size;
        let mut noisy = Vec::with_capacity(b);
        let mut target = DMatrix::zeros(dim, b);
        for c in 0..b {
            let row = dataset.row(rng.random_range(0..dataset.rows()));
            let step = rng.random_range(1..=m);
            let mut eps = standard_normal(rng, dim);
            let a = schedule.alpha_bar(step);
            let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
            let mut x: Vec<f64> = row.iter().zip(&eps).map(|(x, e)| sa * x + sn * e).collect();
            for r in &config.inpaint {
                x[r.clone()].copy_from_slice(&row[r.clone()]);
                eps[r.clone()].fill(0.0);
            }
            noisy.push((x, step));
            target.column_mut(c).copy_from_slice(&eps);
        }
        Ok((noisy, target))
    })?;
    Ok((model, report))
}
