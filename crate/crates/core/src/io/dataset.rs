//! `LMPD` trajectory datasets.

use super::codec::{ArtifactMeta, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::synthworld::OfflineDataset;
use crate::trajectory::TrajectoryLayout;

pub const DATASET_MAGIC: &[u8; 4] = b"LMPD";
pub const DATASET_VERSION: u32 = 1;

/// Values are stored as `f32`.
pub fn encode_dataset(ds: &OfflineDataset, meta: &ArtifactMeta) -> Result<Vec<u8>> {
    let l = ds.layout;
    let mut e = Encoder::new(DATASET_MAGIC, DATASET_VERSION, meta);
    e.u64(ds.len() as u64);
    e.len32(l.horizon)?;
    e.len32(l.state_dim)?;
    e.len32(l.action_dim)?;
    for v in ds.trajectories.as_slice() {
        e.f32(*v);
    }
    for r in &ds.returns {
        e.f32(*r);
    }
    Ok(e.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(OfflineDataset, ArtifactMeta)> {
    let (mut d, meta) = Decoder::open(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let n = d.usize64()?;
    let (t, sd, ad) = (d.usize32()?, d.usize32()?, d.usize32()?);
    let layout = TrajectoryLayout::new(t, sd, ad).map_err(|e| Error::Format(e.to_string()))?;
    let width = layout.dim();
    d.expect_block(n, (width + 1) * 4)?;
    let data = (0..n * width).map(|_| d.f32()).collect::<Result<Vec<_>>>()?;
    let returns = (0..n).map(|_| d.f32()).collect::<Result<Vec<_>>>()?;
    d.finish()?;
    let ds = OfflineDataset::new(layout, RowMatrix::new(n, width, data)?, returns)?;
    Ok((ds, meta))
}
