//! Synthetic data on low-dimensional affine subspaces and Gaussian mixtures.

use crate::denoiser::GmmSpec;
use crate::error::{check_len, Error, Result};
use crate::matrix::RowMatrix;
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Rows are `offset + B c` with `c_j ~ N(0, coeff_sd_j^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSpec {
    basis: DMatrix<f64>,
    offset: Vec<f64>,
    coeff_sd: Vec<f64>,
}

impl SubspaceSpec {
    pub fn new(basis: DMatrix<f64>, offset: Vec<f64>, coeff_sd: Vec<f64>) -> Result<Self> {
        check_len(basis.nrows(), offset.len())?;
        check_len(basis.ncols(), coeff_sd.len())?;
        let k = basis.ncols();
        let err = (basis.transpose() * &basis - DMatrix::<f64>::identity(k, k)).amax();
        if k > 0 && err > 1e-10 {
            return Err(Error::Validation(format!("basis is not orthonormal (error {err:e})")));
        }
        if coeff_sd.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Parameter("coefficient deviations must be non-negative".into()));
        }
        Ok(Self {
            basis,
            offset,
            coeff_sd,
        })
    }

    /// Random orthonormal basis and an offset with entries in `[-1, 1]`.
    pub fn random(dim: usize, intrinsic: usize, coeff_sd: f64, seed: u64) -> Result<Self> {
        if intrinsic > dim || dim == 0 {
            return Err(Error::Parameter(format!(
                "intrinsic dimension {intrinsic} must not exceed ambient {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, intrinsic, |_, _| rng.sample::<f64, _>(StandardNormal));
        let basis = if intrinsic == 0 {
            g
        } else {
            g.qr().q().columns(0, intrinsic).into_owned()
        };
        let offset = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(basis, offset, vec![coeff_sd; intrinsic])
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn intrinsic(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Distance from `x` to `scale * (offset + span B)`.
    pub fn distance_scaled(&self, x: &[f64], scale: f64) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        let r = DVector::from_iterator(x.len(), x.iter().zip(&self.offset).map(|(v, o)| v - scale * o));
        let coords = self.basis.transpose() * &r;
        Ok((r - &self.basis * coords).norm())
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.distance_scaled(x, 1.0)
    }
}

pub fn sample_subspace_dataset(spec: &SubspaceSpec, n: usize, seed: u64) -> Result<RowMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = DVector::from_iterator(
            spec.intrinsic(),
            spec.coeff_sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)),
        );
        let p = &spec.basis * c;
        data.extend(spec.offset.iter().zip(p.iter()).map(|(o, v)| o + v));
    }
    RowMatrix::new(n, d, data)
}

/// Ancestral samples from an isotropic Gaussian mixture.
pub fn sample_gmm_dataset(gmm: &GmmSpec, n: usize, seed: u64) -> Result<RowMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = gmm.components();
    let pick = WeightedIndex::new(comps.iter().map(|c| c.weight))
        .map_err(|e| Error::Parameter(format!("invalid mixture weights: {e}")))?;
    let d = gmm.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &comps[pick.sample(&mut rng)];
        let sd = c.var.sqrt();
        data.extend(c.mean.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)));
    }
    RowMatrix::new(n, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::GmmComponent;

    fn singular_values(data: &RowMatrix) -> Vec<f64> {
        let n = data.rows() as f64;
        let d = data.cols();
        let mut mean = vec![0.0; d];
        for r in data.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let x = DMatrix::from_fn(data.rows(), d, |i, j| data.row(i)[j] - mean[j]);
        x.svd(false, false).singular_values.iter().cloned().collect()
    }

    #[test]
    fn rows_lie_on_the_subspace() {
        let spec = SubspaceSpec::random(20, 3, 1.0, 4).unwrap();
        let data = sample_subspace_dataset(&spec, 500, 1).unwrap();
        assert!(data.iter_rows().all(|r| spec.distance(r).unwrap() < 1e-10));
        let sv = singular_values(&data);
        assert_eq!(sv.iter().filter(|s| **s > 1e-8).count(), 3);
    }

    #[test]
    fn saturated_and_degenerate_dimensions() {
        let full = SubspaceSpec::random(5, 5, 1.0, 0).unwrap();
        let sv = singular_values(&sample_subspace_dataset(&full, 100, 0).unwrap());
        assert_eq!(sv.iter().filter(|s| **s > 1e-8).count(), 5);
        let point = SubspaceSpec::random(5, 0, 1.0, 0).unwrap();
        let data = sample_subspace_dataset(&point, 10, 0).unwrap();
        assert!(data.iter_rows().all(|r| r == point.offset()));
        assert!(SubspaceSpec::random(3, 4, 1.0, 0).is_err());
        let skew = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(SubspaceSpec::new(skew, vec![0.0; 2], vec![1.0]).is_err());
    }

    #[test]
    fn gmm_samples() {
        let g = GmmSpec::single(vec![1.0, -2.0], 0.25).unwrap();
        let n = 20_000;
        let data = sample_gmm_dataset(&g, n, 3).unwrap();
        for j in 0..2 {
            let m: f64 = data.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64;
            assert!((m - g.components()[0].mean[j]).abs() < 3.0 * 0.5 / (n as f64).sqrt());
        }
        let two = GmmSpec::new(vec![
            GmmComponent { weight: 1.0, mean: vec![5.0], var: 0.01 },
            GmmComponent { weight: 0.0, mean: vec![-5.0], var: 0.01 },
        ])
        .unwrap();
        let data = sample_gmm_dataset(&two, 200, 0).unwrap();
        assert!(data.iter_rows().all(|r| r[0] > 0.0));
        assert_eq!(data, sample_gmm_dataset(&two, 200, 0).unwrap());
    }
}
