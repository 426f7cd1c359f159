//! Fully connected network with hand-written backpropagation.
//!
//! Batches are column-major matrices: one column per sample.

use crate::error::{check_len, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(Activation::Silu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parameter(format!("unknown activation '{other}'"))),
        }
    }
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Silu),
            1 => Ok(Activation::Tanh),
            t => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    activation: Activation,
}

/// Per-layer activations kept for the backward pass.
pub struct Trace {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl Trace {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpGradients {
    /// Gradients in the same order as [`Mlp::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn new_random<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.random_range(-bound..bound)
            }));
            biases.push(DVector::from_fn(fan_out, |_, _| rng.random_range(-bound..bound)));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            weights: sizes
                .windows(2)
                .map(|p| DMatrix::zeros(p[1], p[0]))
                .collect(),
            biases: sizes.windows(2).map(|p| DVector::zeros(p[1])).collect(),
            activation,
        })
    }

    /// Rebuilds a network from a flat parameter vector in [`Mlp::params`] order.
    pub fn from_flat(sizes: &[usize], activation: Activation, params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        check_len(net.param_count(), params.len())?;
        net.set_params(params);
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].ncols()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map(|w| w.nrows()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Parameters layer by layer: weight matrix (column-major) then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&params[off..off + n]);
            off += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&params[off..off + n]);
            off += n;
        }
    }

    /// Applies `f(param, grad)` to every parameter in [`Mlp::params`] order.
    pub fn update_with<F: FnMut(usize, &mut f64, f64)>(&mut self, grads: &MlpGradients, mut f: F) {
        let mut idx = 0;
        for l in 0..self.weights.len() {
            for (p, g) in self.weights[l]
                .as_mut_slice()
                .iter_mut()
                .zip(grads.weights[l].as_slice())
            {
                f(idx, p, *g);
                idx += 1;
            }
            for (p, g) in self.biases[l]
                .as_mut_slice()
                .iter_mut()
                .zip(grads.biases[l].as_slice())
            {
                f(idx, p, *g);
                idx += 1;
            }
        }
    }

    fn layer(&self, l: usize, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights[l] * input;
        for mut col in z.column_iter_mut() {
            col += &self.biases[l];
        }
        z
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.weights.len() - 1;
        let mut a = self.layer(0, input);
        for l in 0..=last {
            if l > 0 {
                a = self.layer(l, &a);
            }
            if l < last {
                a.apply(|v| *v = self.activation.apply(*v));
            }
        }
        a
    }

    pub fn forward_trace(&self, input: &DMatrix<f64>) -> Trace {
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = input.clone();
        for l in 0..=last {
            let z = self.layer(l, &a);
            inputs.push(a);
            if l < last {
                a = z.map(|v| self.activation.apply(v));
                pre.push(z);
            } else {
                a = z;
            }
        }
        Trace {
            inputs,
            pre,
            output: a,
        }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the output batch).
    ///
    /// Returns parameter gradients summed over the batch and the gradient with
    /// respect to the input batch.
    pub fn backward(&self, trace: &Trace, d_out: &DMatrix<f64>) -> (MlpGradients, DMatrix<f64>) {
        let n = self.weights.len();
        let mut dw = vec![DMatrix::zeros(0, 0); n];
        let mut db = vec![DVector::zeros(0); n];
        let mut delta = d_out.clone();
        for l in (0..n).rev() {
            dw[l] = &delta * trace.inputs[l].transpose();
            db[l] = delta.column_sum();
            let mut back = self.weights[l].tr_mul(&delta);
            if l > 0 {
                let z = &trace.pre[l - 1];
                back.zip_apply(z, |g, zv| *g *= self.activation.derivative(zv));
            }
            delta = back;
        }
        (
            MlpGradients {
                weights: dw,
                biases: db,
            },
            delta,
        )
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// Fixed sinusoidal embedding of the diffusion step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    width: usize,
    steps: usize,
    table: Vec<f64>,
}

impl TimeEmbedding {
    pub fn new(width: usize, steps: usize) -> Self {
        let half = width / 2;
        let mut table = vec![0.0; (steps + 1) * width];
        for i in 0..=steps {
            let row = &mut table[i * width..(i + 1) * width];
            for k in 0..half {
                let freq = (-(10_000f64.ln()) * k as f64 / half.max(1) as f64).exp();
                row[k] = (i as f64 * freq).sin();
                row[k + half] = (i as f64 * freq).cos();
            }
            if width % 2 == 1 {
                row[width - 1] = i as f64 / steps.max(1) as f64;
            }
        }
        Self {
            width,
            steps,
            table,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.table[step * self.width..(step + 1) * self.width]
    }
}

/// Network whose input is a data vector concatenated with a step embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedMlp {
    net: Mlp,
    embedding: TimeEmbedding,
    data_dim: usize,
}

impl ConditionedMlp {
    pub fn new(net: Mlp, embedding: TimeEmbedding, data_dim: usize) -> Result<Self> {
        check_len(data_dim + embedding.width(), net.input_dim())?;
        Ok(Self {
            net,
            embedding,
            data_dim,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        data_dim: usize,
        out_dim: usize,
        hidden: &[usize],
        embed_width: usize,
        steps: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![data_dim + embed_width];
        sizes.extend_from_slice(hidden);
        sizes.push(out_dim);
        let net = Mlp::new_random(&sizes, activation, rng)?;
        Self::new(net, TimeEmbedding::new(embed_width, steps), data_dim)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn embedding(&self) -> &TimeEmbedding {
        &self.embedding
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn check_step(&self, step: usize) -> Result<()> {
        if step > self.embedding.steps() {
            return Err(Error::Parameter(format!(
                "step {step} beyond embedding table of {} steps",
                self.embedding.steps()
            )));
        }
        Ok(())
    }

    /// Builds the input batch from `(vector, step)` pairs.
    pub fn input_batch<'a, I>(&self, items: I) -> Result<DMatrix<f64>>
    where
        I: ExactSizeIterator<Item = (&'a [f64], usize)>,
    {
        let rows = self.net.input_dim();
        let cols = items.len();
        let mut m = DMatrix::zeros(rows, cols);
        for (c, (x, step)) in items.enumerate() {
            check_len(self.data_dim, x.len())?;
            self.check_step(step)?;
            let mut col = m.column_mut(c);
            for (j, v) in x.iter().enumerate() {
                col[j] = *v;
            }
            for (j, v) in self.embedding.row(step).iter().enumerate() {
                col[self.data_dim + j] = *v;
            }
        }
        Ok(m)
    }

    pub fn predict(&self, x: &[f64], step: usize) -> Result<Vec<f64>> {
        let input = self.input_batch(std::iter::once((x, step)))?;
        Ok(self.net.forward(&input).as_slice().to_vec())
    }

    /// Gradient of `sum_k w_k * output_k` with respect to the data part of the input.
    pub fn input_gradient(&self, x: &[f64], step: usize, output_weights: &[f64]) -> Result<Vec<f64>> {
        check_len(self.output_dim(), output_weights.len())?;
        let input = self.input_batch(std::iter::once((x, step)))?;
        let trace = self.net.forward_trace(&input);
        let d_out = DMatrix::from_column_slice(output_weights.len(), 1, output_weights);
        let (_, d_in) = self.net.backward(&trace, &d_out);
        Ok(d_in.as_slice()[..self.data_dim].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mse_loss(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let out = net.forward(x);
        (&out - y).norm_squared() / x.ncols() as f64
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[5, 8, 8, 3], Activation::Silu).unwrap();
        let x = DMatrix::from_fn(5, 4, |i, j| (i + j) as f64);
        assert!(net.forward(&x).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = ConditionedMlp::random(4, 4, &[8, 8], 6, 10, Activation::Silu, &mut rng).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(c.predict(&x, 3).unwrap(), c.predict(&x, 3).unwrap());
        assert_ne!(c.predict(&x, 3).unwrap(), c.predict(&x, 4).unwrap());
        assert!(c.predict(&x, 11).is_err());
        assert!(c.predict(&x[..3], 1).is_err());
    }

    fn check_param_gradients(activation: Activation) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut net = Mlp::new_random(&[5, 8, 8, 3], activation, &mut rng).unwrap();
        let x = DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let trace = net.forward_trace(&x);
        let d_out = (trace.output() - &y) * (2.0 / x.ncols() as f64);
        let (grads, _) = net.backward(&trace, &d_out);
        let analytic = grads.flat();
        let base = net.params();
        let h = 1e-5;
        for (k, g) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[k] += h;
            net.set_params(&p);
            let up = mse_loss(&net, &x, &y);
            p[k] -= 2.0 * h;
            net.set_params(&p);
            let down = mse_loss(&net, &x, &y);
            let fd = (up - down) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {k}: backprop {g} vs fd {fd}");
        }
        net.set_params(&base);
    }

    #[test]
    fn backprop_matches_central_differences_silu() {
        check_param_gradients(Activation::Silu);
    }

    #[test]
    fn backprop_matches_central_differences_tanh() {
        check_param_gradients(Activation::Tanh);
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = ConditionedMlp::random(4, 1, &[8, 8], 4, 10, Activation::Silu, &mut rng).unwrap();
        let x = [0.3, -0.7, 0.2, 1.1];
        let g = c.input_gradient(&x, 5, &[1.0]).unwrap();
        for j in 0..4 {
            let mut up = x;
            up[j] += 1e-5;
            let mut down = x;
            down[j] -= 1e-5;
            let fd = (c.predict(&up, 5).unwrap()[0] - c.predict(&down, 5).unwrap()[0]) / 2e-5;
            assert!((g[j] - fd).abs() / fd.abs().max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new_random(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let back = Mlp::from_flat(&net.sizes(), Activation::Tanh, &net.params()).unwrap();
        assert_eq!(net, back);
        assert_eq!(net.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
    }
}
