//! Inverted-file nearest-neighbour index under cosine similarity.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, sq_dist, RowMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::sync::Arc;

/// Iteration cap for the coarse k-means.
pub const KMEANS_ITERS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    /// Cosine similarity, or negative Euclidean distance for a zero query.
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct AnnIndex {
    data: Arc<RowMatrix>,
    norms: Vec<f64>,
    centroids: RowMatrix,
    lists: Vec<Vec<usize>>,
    seed: u64,
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

fn descending(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.id.cmp(&b.id))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Nearest centroid by cosine; ties go to the lower centroid id.
fn assign(row: &[f64], centroids: &RowMatrix) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, cen) in centroids.iter_rows().enumerate() {
        let s = dot(row, cen);
        if s > best.1 {
            best = (c, s);
        }
    }
    best
}

impl AnnIndex {
    /// Spherical k-means over unit-normalized rows with seeded random-row
    /// initialization. Empty clusters are reseeded to the row least similar
    /// to its current centroid.
    pub fn build(data: Arc<RowMatrix>, n_list: usize, seed: u64) -> Result<Self> {
        let n = data.rows();
        if n == 0 || data.cols() == 0 {
            return Err(Error::Parameter("cannot index an empty dataset".into()));
        }
        if n_list == 0 || n_list > n {
            return Err(Error::Parameter(format!(
                "n_list must lie in [1, {n}], got {n_list}"
            )));
        }
        let d = data.cols();
        let unit_rows: Vec<Vec<f64>> = data.iter_rows().map(unit).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = rand::seq::index::sample(&mut rng, n, n_list).into_vec();
        picks.sort_unstable();
        let mut centroids = RowMatrix::new(
            n_list,
            d,
            picks.iter().flat_map(|&i| unit_rows[i].clone()).collect(),
        )?;
        let mut assignment = vec![usize::MAX; n];
        for _ in 0..KMEANS_ITERS {
            let mut changed = false;
            let mut sims = vec![0.0; n];
            for (i, row) in unit_rows.iter().enumerate() {
                let (c, s) = assign(row, &centroids);
                sims[i] = s;
                if assignment[i] != c {
                    assignment[i] = c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = vec![0.0; n_list * d];
            let mut counts = vec![0usize; n_list];
            for (i, row) in unit_rows.iter().enumerate() {
                let c = assignment[i];
                counts[c] += 1;
                for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(row) {
                    *s += v;
                }
            }
            let mut taken = vec![false; n];
            for c in 0..n_list {
                let target = centroids.row_mut(c);
                if counts[c] > 0 {
                    target.copy_from_slice(&unit(&sums[c * d..(c + 1) * d]));
                    continue;
                }
                // farthest row: lowest similarity, then lowest id
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .min_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b)))
                    .unwrap_or(0);
                taken[far] = true;
                target.copy_from_slice(&unit_rows[far]);
            }
        }
        let mut lists = vec![Vec::new(); n_list];
        for (i, row) in unit_rows.iter().enumerate() {
            lists[assign(row, &centroids).0].push(i);
        }
        let norms = data.iter_rows().map(norm).collect();
        Ok(Self {
            data,
            norms,
            centroids,
            lists,
            seed,
        })
    }

    /// Reassembles an index from stored parts, checking that the lists
    /// partition the dataset rows.
    pub fn from_parts(
        data: Arc<RowMatrix>,
        centroids: RowMatrix,
        lists: Vec<Vec<usize>>,
        seed: u64,
    ) -> Result<Self> {
        if centroids.cols() != data.cols() {
            return Err(Error::Shape {
                expected: data.cols(),
                got: centroids.cols(),
            });
        }
        if lists.len() != centroids.rows() || lists.is_empty() {
            return Err(Error::Format(format!(
                "{} inverted lists for {} centroids",
                lists.len(),
                centroids.rows()
            )));
        }
        let mut seen = vec![false; data.rows()];
        for &id in lists.iter().flatten() {
            if id >= seen.len() || seen[id] {
                return Err(Error::Format(format!("row id {id} is out of range or repeated")));
            }
            seen[id] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("inverted lists do not cover every row".into()));
        }
        let norms = data.iter_rows().map(norm).collect();
        Ok(Self {
            data,
            norms,
            centroids,
            lists,
            seed,
        })
    }

    pub fn n_list(&self) -> usize {
        self.lists.len()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> &RowMatrix {
        &self.centroids
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn data(&self) -> &Arc<RowMatrix> {
        &self.data
    }

    fn check_query(&self, query: &[f64], k: usize) -> Result<()> {
        crate::error::check_len(self.dim(), query.len())?;
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("query has non-finite entries".into()));
        }
        Ok(())
    }

    fn top_k(&self, query: &[f64], ids: impl Iterator<Item = usize>, k: usize) -> Vec<Neighbor> {
        let qn = norm(query);
        let mut out: Vec<Neighbor> = if qn == 0.0 {
            ids.map(|id| Neighbor {
                id,
                similarity: -sq_dist(query, self.data.row(id)).sqrt(),
            })
            .collect()
        } else {
            ids.map(|id| Neighbor {
                id,
                similarity: cosine(query, qn, self.data.row(id), self.norms[id]),
            })
            .collect()
        };
        out.sort_unstable_by(descending);
        out.truncate(k);
        out
    }

    /// Top-`k` rows by cosine similarity among the `n_probe` nearest lists.
    ///
    /// A zero query has no direction; it is ranked by Euclidean distance over
    /// every row instead.
    pub fn knn(&self, query: &[f64], k: usize, n_probe: usize) -> Result<Vec<Neighbor>> {
        self.check_query(query, k)?;
        if n_probe == 0 || n_probe > self.n_list() {
            return Err(Error::Parameter(format!(
                "n_probe must lie in [1, {}], got {n_probe}",
                self.n_list()
            )));
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Ok(self.top_k(query, 0..self.len(), k));
        }
        let mut probes: Vec<Neighbor> = self
            .centroids
            .iter_rows()
            .enumerate()
            .map(|(id, c)| Neighbor {
                id,
                similarity: dot(query, c) / qn,
            })
            .collect();
        probes.sort_unstable_by(descending);
        let ids = probes[..n_probe]
            .iter()
            .flat_map(|p| self.lists[p.id].iter().copied());
        Ok(self.top_k(query, ids, k))
    }

    /// Linear scan over every row with the same ranking rule as `knn`.
    pub fn exact_knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(query, k)?;
        Ok(self.top_k(query, 0..self.len(), k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Arc<RowMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Arc::new(RowMatrix::new(n, d, data).unwrap())
    }

    #[test]
    fn single_list_holds_everything() {
        let idx = AnnIndex::build(random_rows(50, 3, 1), 1, 0).unwrap();
        assert_eq!(idx.lists()[0], (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn separated_clusters_split_cleanly() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![1.0, 0.01 * i as f64]);
            rows.push(vec![0.01 * i as f64, -1.0]);
        }
        let data = Arc::new(RowMatrix::from_rows(&rows).unwrap());
        let idx = AnnIndex::build(data, 2, 3).unwrap();
        for list in idx.lists() {
            let parity = list[0] % 2;
            assert_eq!(list.len(), 10);
            assert!(list.iter().all(|i| i % 2 == parity));
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let data = random_rows(300, 4, 2);
        let a = AnnIndex::build(data.clone(), 8, 11).unwrap();
        let b = AnnIndex::build(data, 8, 11).unwrap();
        assert_eq!(a.centroids(), b.centroids());
        assert_eq!(a.lists(), b.lists());
    }

    #[test]
    fn self_retrieval_and_metric() {
        let data = random_rows(200, 5, 4);
        let idx = AnnIndex::build(data.clone(), 6, 0).unwrap();
        let hit = idx.knn(data.row(17), 1, 6).unwrap()[0];
        assert_eq!(hit.id, 17);
        assert!((hit.similarity - 1.0).abs() < 1e-12);

        let two = Arc::new(RowMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let idx = AnnIndex::build(two, 1, 0).unwrap();
        let hit = idx.knn(&[1.0, 0.0], 1, 1).unwrap()[0];
        assert_eq!((hit.id, hit.similarity), (0, 1.0));
    }

    #[test]
    fn ties_break_by_row_id() {
        let rows = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        let idx = AnnIndex::build(Arc::new(RowMatrix::from_rows(&rows).unwrap()), 2, 0).unwrap();
        let ids: Vec<usize> = idx.knn(&[3.0, 3.0], 3, 2).unwrap().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn zero_query_uses_euclidean() {
        let rows = vec![vec![3.0, 0.0], vec![0.0, 0.5], vec![1.0, 1.0]];
        let idx = AnnIndex::build(Arc::new(RowMatrix::from_rows(&rows).unwrap()), 1, 0).unwrap();
        let ids: Vec<usize> = idx.knn(&[0.0, 0.0], 3, 1).unwrap().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    #[test]
    fn bad_arguments() {
        let data = random_rows(10, 2, 0);
        assert!(AnnIndex::build(data.clone(), 11, 0).is_err());
        assert!(AnnIndex::build(data.clone(), 0, 0).is_err());
        assert!(AnnIndex::build(Arc::new(RowMatrix::new(0, 2, vec![]).unwrap()), 1, 0).is_err());
        let idx = AnnIndex::build(data, 2, 0).unwrap();
        assert!(idx.knn(&[1.0, 0.0], 0, 1).is_err());
        assert!(idx.knn(&[1.0, 0.0], 1, 3).is_err());
        assert!(idx.knn(&[1.0], 1, 1).is_err());
    }

    #[test]
    fn from_parts_rejects_bad_partition() {
        let data = random_rows(4, 2, 0);
        let cen = RowMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(AnnIndex::from_parts(data.clone(), cen.clone(), vec![vec![0, 1], vec![2]], 0).is_err());
        assert!(AnnIndex::from_parts(data.clone(), cen.clone(), vec![vec![0, 1], vec![1, 2, 3]], 0).is_err());
        assert!(AnnIndex::from_parts(data, cen, vec![vec![0, 3], vec![1, 2]], 0).is_ok());
    }
}
