//! Two-sample energy-distance test.

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, RowMatrix};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTest {
    /// `2 E|X - Y| - E|X - X'| - E|Y - Y'|` over the observed split.
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

fn split_statistic(dist: &[f64], n: usize, in_a: &[bool]) -> f64 {
    let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        for j in i + 1..n {
            match (in_a[i], in_a[j]) {
                (true, true) => aa += row[j],
                (false, false) => bb += row[j],
                _ => ab += row[j],
            }
        }
    }
    let na = in_a.iter().filter(|&&x| x).count() as f64;
    let nb = n as f64 - na;
    2.0 * ab / (na * nb) - 2.0 * aa / (na * na) - 2.0 * bb / (nb * nb)
}

/// Permutation test of equal distributions; the p-value counts the
/// observed split among the permutations.
pub fn energy_test<R: Rng + ?Sized>(
    a: &RowMatrix,
    b: &RowMatrix,
    permutations: usize,
    rng: &mut R,
) -> Result<EnergyTest> {
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::Parameter("each sample needs at least two rows".into()));
    }
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            expected: a.cols(),
            got: b.cols(),
        });
    }
    if permutations == 0 {
        return Err(Error::Parameter("need at least one permutation".into()));
    }
    let pooled: Vec<&[f64]> = a.iter_rows().chain(b.iter_rows()).collect();
    let n = pooled.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(pooled[i], pooled[j]).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut labels: Vec<bool> = (0..n).map(|i| i < a.rows()).collect();
    let statistic = split_statistic(&dist, n, &labels);
    let mut extreme = 0;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if split_statistic(&dist, n, &labels) >= statistic {
            extreme += 1;
        }
    }
    Ok(EnergyTest {
        statistic,
        p_value: (extreme + 1) as f64 / (permutations + 1) as f64,
        permutations,
    })
}
