//! Rank-selected local PCA bases and the projections they induce.

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    /// `mean + U U^T (x - mean)` with a centered basis.
    #[default]
    Affine,
    /// `U U^T x` with an uncentered basis.
    Literal,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(Self::Affine),
            "literal" => Ok(Self::Literal),
            other => Err(Error::Parameter(format!("unknown projection mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Affine => "affine",
            Self::Literal => "literal",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    /// `d x r`, orthonormal columns.
    u: DMatrix<f64>,
    /// Neighbourhood mean in affine mode, zero in literal mode.
    mean: Vec<f64>,
    captured: f64,
    mode: ProjectionMode,
}

/// Fits a local basis to the rows of `neighbors`.
///
/// Keeps the leading singular directions until their share of the total
/// (centered in affine mode) second moment reaches `lambda`. `lambda = 1`
/// keeps the full numerical rank. Affine mode never keeps more than `k - 1`
/// directions. A neighbourhood with no spread yields rank 0.
pub fn local_basis(neighbors: &RowMatrix, lambda: f64, mode: ProjectionMode) -> Result<LocalBasis> {
    let (k, d) = (neighbors.rows(), neighbors.cols());
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Parameter(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    let min_k = if mode == ProjectionMode::Affine { 2 } else { 1 };
    if k < min_k || d == 0 {
        return Err(Error::Parameter(format!(
            "{mode} basis needs at least {min_k} neighbours of positive dimension, got {k}x{d}"
        )));
    }
    let mut mean = vec![0.0; d];
    if mode == ProjectionMode::Affine {
        for row in neighbors.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / k as f64;
            }
        }
    }
    let x = DMatrix::from_fn(k, d, |r, c| neighbors.row(r)[c] - mean[c]);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("neighbours contain non-finite entries".into()));
    }
    let svd = x.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let energies: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let total: f64 = energies.iter().sum();
    let smax = energies.first().copied().unwrap_or(0.0).sqrt();
    let tol = smax * (k.max(d) as f64) * f64::EPSILON;
    let numerical_rank = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();
    let cap = match mode {
        ProjectionMode::Affine => numerical_rank.min(k - 1),
        ProjectionMode::Literal => numerical_rank,
    };
    let r = if total == 0.0 || cap == 0 {
        0
    } else if lambda >= 1.0 {
        cap
    } else {
        let mut acc = 0.0;
        let mut r = cap;
        for (j, e) in energies.iter().enumerate().take(cap) {
            acc += e;
            if acc >= lambda * total {
                r = j + 1;
                break;
            }
        }
        r
    };
    let captured = if total == 0.0 {
        1.0
    } else {
        (energies[..r].iter().sum::<f64>() / total).min(1.0)
    };
    let u = DMatrix::from_fn(d, r, |row, col| v_t[(order[col], row)]);
    Ok(LocalBasis {
        u,
        mean,
        captured,
        mode,
    })
}

impl LocalBasis {
    /// Builds a basis from explicit columns, orthonormalizing them.
    pub fn from_columns(u: DMatrix<f64>, mean: Vec<f64>, mode: ProjectionMode) -> Result<Self> {
        crate::error::check_len(u.nrows(), mean.len())?;
        let r = u.ncols();
        let q = if r == 0 { u } else { u.qr().q().columns(0, r).into_owned() };
        Ok(Self {
            u: q,
            mean,
            captured: 1.0,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn captured_variance(&self) -> f64 {
        self.captured
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    /// `max |U^T U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.u.transpose() * &self.u;
        let r = self.rank();
        (g - DMatrix::<f64>::identity(r, r)).amax()
    }

    /// `mean + U U^T (x - mean)`; the mean is zero in literal mode.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.dim(), x.len())?;
        let centered = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        let coords = self.u.transpose() * centered;
        let back = &self.u * coords;
        Ok(back.iter().zip(&self.mean).map(|(b, m)| b + m).collect())
    }

    /// Euclidean distance from `x` to the affine span of the basis.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let p = self.project(x)?;
        Ok(x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    }
}
