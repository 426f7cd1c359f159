//! Binary artifact formats. All integers and floats are little-endian and
//! every file ends in a CRC-64 of the preceding bytes.

mod checkpoint;
mod codec;
mod dataset;
mod index;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, ModelRole, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use codec::{checksum, ArtifactMeta};
pub use dataset::{decode_dataset, encode_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use index::{decode_index, encode_index, IndexFile, INDEX_MAGIC, INDEX_VERSION};
