//! Per-feature affine scaling to `[-1, 1]`.

use crate::error::{check_len, Error, Result};
use crate::matrix::RowMatrix;

/// Feature `j % period` of every row is mapped linearly from its observed
/// `[lo, hi]` onto `[-1, 1]`. Constant features map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &RowMatrix, period: usize) -> Result<Self> {
        if data.is_empty() || period == 0 || !data.cols().is_multiple_of(period) {
            return Err(Error::Parameter(format!(
                "cannot fit a period-{period} normalizer to {}x{} data",
                data.rows(),
                data.cols()
            )));
        }
        let mut lo = vec![f64::INFINITY; period];
        let mut hi = vec![f64::NEG_INFINITY; period];
        for row in data.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                lo[j % period] = lo[j % period].min(*v);
                hi[j % period] = hi[j % period].max(*v);
            }
        }
        Self::from_bounds(lo, hi)
    }

    pub fn from_bounds(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len(lo.len(), hi.len())?;
        if lo.is_empty() || lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
            return Err(Error::Numerical("normalizer bounds must be finite with lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn period(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    fn affine(&self, j: usize) -> (f64, f64) {
        let (l, h) = (self.lo[j % self.period()], self.hi[j % self.period()]);
        if h > l {
            (0.5 * (h + l), 0.5 * (h - l))
        } else {
            (l, 1.0)
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if !x.len().is_multiple_of(self.period()) {
            return Err(Error::Shape {
                expected: self.period(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(j, v)| {
                let (c, s) = self.affine(j);
                (v - c) / s
            })
            .collect())
    }

    pub fn denormalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(j, v)| {
                let (c, s) = self.affine(j);
                c + s * v
            })
            .collect())
    }

    /// Normalizes the vector as if it started at feature `offset`.
    pub fn normalize_at(&self, x: &[f64], offset: usize) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let (c, s) = self.affine(offset + j);
                (v - c) / s
            })
            .collect()
    }

    pub fn denormalize_at(&self, x: &[f64], offset: usize) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let (c, s) = self.affine(offset + j);
                c + s * v
            })
            .collect()
    }

    pub fn normalize_rows(&self, data: &RowMatrix) -> Result<RowMatrix> {
        let mut out = Vec::with_capacity(data.as_slice().len());
        for row in data.iter_rows() {
            out.extend(self.normalize(row)?);
        }
        RowMatrix::new(data.rows(), data.cols(), out)
    }
}
