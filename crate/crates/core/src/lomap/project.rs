//! Local manifold approximation and projection of intermediate samples.

use super::basis::{local_basis, LocalBasis, ProjectionMode};
use super::index::AnnIndex;
use crate::denoiser::NoisePredictor;
use crate::diffusion::{forward_diffuse, standard_normal, tweedie_denoise};
use crate::error::{check_len, Error, Result};
use crate::matrix::RowMatrix;
use crate::schedule::NoiseSchedule;
use rand::Rng;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborNoise {
    /// Independent forward noise per neighbour.
    #[default]
    Fresh,
    /// Neighbours are only rescaled by `sqrt(alpha)`.
    Zero,
}

impl std::str::FromStr for NeighborNoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(Self::Fresh),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Parameter(format!("unknown neighbour noise '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSchedule {
    lo: usize,
    hi: usize,
    pub k: usize,
    pub lambda: f64,
    pub mode: ProjectionMode,
    pub noise: NeighborNoise,
}

impl ProjectionSchedule {
    pub fn new(
        active: (usize, usize),
        k: usize,
        lambda: f64,
        mode: ProjectionMode,
        noise: NeighborNoise,
        steps: usize,
    ) -> Result<Self> {
        let (lo, hi) = active;
        if lo < 1 || lo > hi || hi > steps {
            return Err(Error::Parameter(format!(
                "active range [{lo}, {hi}] must satisfy 1 <= lo <= hi <= {steps}"
            )));
        }
        if k < 2 {
            return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Parameter(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        Ok(Self {
            lo,
            hi,
            k,
            lambda,
            mode,
            noise,
        })
    }

    /// `[1, ceil(0.6 M)]`, `k = 10`, `lambda = 0.99`, affine, fresh noise.
    pub fn default_for(steps: usize) -> Result<Self> {
        let hi = ((0.6 * steps as f64).ceil() as usize).clamp(1, steps.max(1));
        Self::new(
            (1, hi),
            10,
            0.99,
            ProjectionMode::Affine,
            NeighborNoise::Fresh,
            steps,
        )
    }

    pub fn active_range(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn is_active(&self, step: usize) -> bool {
        (self.lo..=self.hi).contains(&step)
    }
}

/// Which coordinates of a flattened trajectory act as retrieval keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RetrievalKey {
    #[default]
    Full,
    Columns(Vec<usize>),
}

impl RetrievalKey {
    pub fn extract(&self, x: &[f64]) -> Vec<f64> {
        match self {
            RetrievalKey::Full => x.to_vec(),
            RetrievalKey::Columns(cols) => cols.iter().map(|&c| x[c]).collect(),
        }
    }
}

/// Clean dataset and its retrieval index.
#[derive(Debug, Clone)]
pub struct LomapContext {
    dataset: Arc<RowMatrix>,
    index: AnnIndex,
    key: RetrievalKey,
    n_probe: usize,
}

impl LomapContext {
    /// Indexes `dataset` (keyed by `key`) with `n_list` coarse lists.
    pub fn build(
        dataset: Arc<RowMatrix>,
        key: RetrievalKey,
        n_list: usize,
        n_probe: usize,
        seed: u64,
    ) -> Result<Self> {
        let keys = match &key {
            RetrievalKey::Full => dataset.clone(),
            RetrievalKey::Columns(cols) => {
                if cols.is_empty() || cols.iter().any(|&c| c >= dataset.cols()) {
                    return Err(Error::Parameter("retrieval key columns out of range".into()));
                }
                let rows: Vec<Vec<f64>> = dataset.iter_rows().map(|r| key.extract(r)).collect();
                Arc::new(RowMatrix::from_rows(&rows)?)
            }
        };
        let index = AnnIndex::build(keys, n_list, seed)?;
        Self::from_index(dataset, index, key, n_probe)
    }

    pub fn from_index(
        dataset: Arc<RowMatrix>,
        index: AnnIndex,
        key: RetrievalKey,
        n_probe: usize,
    ) -> Result<Self> {
        if index.len() != dataset.rows() {
            return Err(Error::Shape {
                expected: dataset.rows(),
                got: index.len(),
            });
        }
        let key_dim = match &key {
            RetrievalKey::Full => dataset.cols(),
            RetrievalKey::Columns(c) => c.len(),
        };
        check_len(key_dim, index.dim())?;
        if n_probe == 0 || n_probe > index.n_list() {
            return Err(Error::Parameter(format!(
                "n_probe must lie in [1, {}], got {n_probe}",
                index.n_list()
            )));
        }
        Ok(Self {
            dataset,
            index,
            key,
            n_probe,
        })
    }

    pub fn dataset(&self) -> &Arc<RowMatrix> {
        &self.dataset
    }

    pub fn index(&self) -> &AnnIndex {
        &self.index
    }

    pub fn key(&self) -> &RetrievalKey {
        &self.key
    }

    pub fn n_probe(&self) -> usize {
        self.n_probe
    }

    /// Retrieves neighbours of the Tweedie estimate of `x` and fits the basis
    /// of their forward-diffused copies at `step`.
    pub fn fit_basis<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        step: usize,
        config: &ProjectionSchedule,
        denoiser: &dyn NoisePredictor,
        noise: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<LocalBasis> {
        check_len(self.dataset.cols(), x.len())?;
        if config.k > self.dataset.rows() {
            return Err(Error::Parameter(format!(
                "k = {} exceeds the {} dataset rows",
                config.k,
                self.dataset.rows()
            )));
        }
        let x0 = tweedie_denoise(x, step, denoiser, noise)?;
        let hits = self
            .index
            .knn(&self.key.extract(&x0), config.k, self.n_probe)?;
        if hits.is_empty() {
            return Err(Error::Degenerate("retrieval returned no neighbours".into()));
        }
        let d = x.len();
        let mut rows = Vec::with_capacity(hits.len() * d);
        for hit in &hits {
            let eps = match config.noise {
                NeighborNoise::Fresh => standard_normal(rng, d),
                NeighborNoise::Zero => vec![0.0; d],
            };
            rows.extend(forward_diffuse(self.dataset.row(hit.id), step, &eps, noise)?);
        }
        let neighbors = RowMatrix::new(hits.len(), d, rows)?;
        local_basis(&neighbors, config.lambda, config.mode)
    }
}

/// Projects the intermediate sample `x` at `step` onto the local subspace.
/// Outside the active range the input is returned unchanged.
pub fn lomap_project<R: Rng + ?Sized>(
    x: &[f64],
    step: usize,
    ctx: &LomapContext,
    config: &ProjectionSchedule,
    denoiser: &dyn NoisePredictor,
    noise: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !config.is_active(step) {
        return Ok(x.to_vec());
    }
    let basis = ctx.fit_basis(x, step, config, denoiser, noise, rng)?;
    basis.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::FnDenoiser;
    use crate::schedule::ScheduleKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise() -> NoiseSchedule {
        NoiseSchedule::build(20, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap()
    }

    fn line_data() -> Arc<RowMatrix> {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0 + 0.1 * i as f64, 2.0, -1.0]).collect();
        Arc::new(RowMatrix::from_rows(&rows).unwrap())
    }

    #[test]
    fn default_schedule_range() {
        let s = ProjectionSchedule::default_for(20).unwrap();
        assert_eq!(s.active_range(), (1, 12));
        assert!(s.is_active(1) && s.is_active(12) && !s.is_active(13));
        assert!(ProjectionSchedule::new((0, 3), 5, 0.9, ProjectionMode::Affine, NeighborNoise::Zero, 20).is_err());
        assert!(ProjectionSchedule::new((4, 3), 5, 0.9, ProjectionMode::Affine, NeighborNoise::Zero, 20).is_err());
        assert!(ProjectionSchedule::new((1, 21), 5, 0.9, ProjectionMode::Affine, NeighborNoise::Zero, 20).is_err());
        assert!(ProjectionSchedule::new((1, 3), 1, 0.9, ProjectionMode::Affine, NeighborNoise::Zero, 20).is_err());
    }

    #[test]
    fn inactive_step_is_identity() {
        let sched = ProjectionSchedule::new((1, 5), 4, 0.99, ProjectionMode::Affine, NeighborNoise::Fresh, 20).unwrap();
        let ctx = LomapContext::build(line_data(), RetrievalKey::Full, 2, 2, 0).unwrap();
        let den = FnDenoiser::new(3, |_x: &[f64], _s| vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![5.0, 5.0, 5.0];
        assert_eq!(lomap_project(&x, 9, &ctx, &sched, &den, &noise(), &mut rng).unwrap(), x);
    }

    #[test]
    fn zero_noise_projects_onto_scaled_line() {
        let sched = ProjectionSchedule::new((1, 20), 6, 0.99, ProjectionMode::Affine, NeighborNoise::Zero, 20).unwrap();
        let ctx = LomapContext::build(line_data(), RetrievalKey::Full, 1, 1, 0).unwrap();
        let den = FnDenoiser::new(3, |_x: &[f64], _s| vec![0.0; 3]);
        let s = noise();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let step = 4;
        let sa = s.alpha_bar(step).sqrt();
        let x = vec![2.0 * sa, 2.5 * sa, 0.3];
        let p = lomap_project(&x, step, &ctx, &sched, &den, &s, &mut rng).unwrap();
        assert!((p[0] - x[0]).abs() < 1e-12);
        assert!((p[1] - 2.0 * sa).abs() < 1e-12);
        assert!((p[2] + sa).abs() < 1e-12);
    }

    #[test]
    fn state_key_columns() {
        let bad = LomapContext::build(line_data(), RetrievalKey::Columns(vec![3]), 2, 1, 0);
        assert!(bad.is_err());
        let ok = LomapContext::build(line_data(), RetrievalKey::Columns(vec![0, 2]), 2, 1, 0).unwrap();
        assert_eq!(ok.index().dim(), 2);
    }
}
