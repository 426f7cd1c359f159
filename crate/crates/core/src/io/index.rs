//! `LMPI` retrieval indices. The indexed rows themselves are not stored.

use super::codec::{ArtifactMeta, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::lomap::{AnnIndex, RetrievalKey};
use crate::matrix::RowMatrix;
use std::sync::Arc;

pub const INDEX_MAGIC: &[u8; 4] = b"LMPI";
pub const INDEX_VERSION: u32 = 1;

/// Index structure as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile {
    pub n_list: usize,
    pub dim: usize,
    pub rows: usize,
    pub build_seed: u64,
    pub key: RetrievalKey,
    pub centroids: RowMatrix,
    pub lists: Vec<Vec<usize>>,
}

impl IndexFile {
    pub fn from_index(index: &AnnIndex, key: &RetrievalKey) -> Self {
        Self {
            n_list: index.n_list(),
            dim: index.dim(),
            rows: index.len(),
            build_seed: index.seed(),
            key: key.clone(),
            centroids: index.centroids().clone(),
            lists: index.lists().to_vec(),
        }
    }

    /// Attaches the stored structure to the (key-extracted) rows it indexes.
    pub fn attach(&self, keys: Arc<RowMatrix>) -> Result<AnnIndex> {
        if keys.rows() != self.rows || keys.cols() != self.dim {
            return Err(Error::Format(format!(
                "index covers {}x{} rows, data is {}x{}",
                self.rows,
                self.dim,
                keys.rows(),
                keys.cols()
            )));
        }
        AnnIndex::from_parts(keys, self.centroids.clone(), self.lists.clone(), self.build_seed)
    }
}

pub fn encode_index(idx: &IndexFile, meta: &ArtifactMeta) -> Result<Vec<u8>> {
    let mut e = Encoder::new(INDEX_MAGIC, INDEX_VERSION, meta);
    e.len32(idx.n_list)?;
    e.len32(idx.dim)?;
    e.u64(idx.rows as u64);
    e.u64(idx.build_seed);
    match &idx.key {
        RetrievalKey::Full => e.len32(0)?,
        RetrievalKey::Columns(c) => {
            e.len32(c.len())?;
            for col in c {
                e.len32(*col)?;
            }
        }
    }
    for v in idx.centroids.as_slice() {
        e.f64(*v);
    }
    let mut offset = 0u64;
    e.u64(offset);
    for l in &idx.lists {
        offset += l.len() as u64;
        e.u64(offset);
    }
    for id in idx.lists.iter().flatten() {
        e.u64(*id as u64);
    }
    Ok(e.finish())
}

pub fn decode_index(bytes: &[u8]) -> Result<(IndexFile, ArtifactMeta)> {
    let (mut d, meta) = Decoder::open(bytes, INDEX_MAGIC, INDEX_VERSION)?;
    let n_list = d.usize32()?;
    let dim = d.usize32()?;
    let rows = d.usize64()?;
    let build_seed = d.u64()?;
    let n_key = d.usize32()?;
    d.expect_block(n_key, 4)?;
    let key = if n_key == 0 {
        RetrievalKey::Full
    } else {
        RetrievalKey::Columns((0..n_key).map(|_| d.usize32()).collect::<Result<_>>()?)
    };
    d.expect_block(n_list.saturating_mul(dim), 8)?;
    let centroids = (0..n_list * dim).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
    d.expect_block(n_list + 1, 8)?;
    let offsets = (0..=n_list).map(|_| d.usize64()).collect::<Result<Vec<_>>>()?;
    if offsets[0] != 0 || offsets.windows(2).any(|w| w[1] < w[0]) || offsets[n_list] != rows {
        return Err(Error::Format("list offsets are not a partition of the rows".into()));
    }
    d.expect_block(rows, 8)?;
    let ids = (0..rows).map(|_| d.usize64()).collect::<Result<Vec<_>>>()?;
    d.finish()?;
    let lists = offsets.windows(2).map(|w| ids[w[0]..w[1]].to_vec()).collect();
    Ok((
        IndexFile {
            n_list,
            dim,
            rows,
            build_seed,
            key,
            centroids: RowMatrix::new(n_list, dim, centroids)?,
            lists,
        },
        meta,
    ))
}
