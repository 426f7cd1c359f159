use lomap_core::denoiser::{Activation, ConditionedMlp};
use lomap_core::io::*;
use lomap_core::lomap::{AnnIndex, RetrievalKey};
use lomap_core::synthworld::{
    generate_offline_dataset, DatasetConfig, EnvParams, MazeSpec, Normalizer, PointMassEnv,
};
use lomap_core::{Error, NoiseSchedule, RowMatrix, ScheduleKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn meta() -> ArtifactMeta {
    let mut config_hash = [0u8; 32];
    for (i, b) in config_hash.iter_mut().enumerate() {
        *b = i as u8 * 7;
    }
    ArtifactMeta { seed: 42, config_hash }
}

fn small_dataset() -> lomap_core::synthworld::OfflineDataset {
    let env = PointMassEnv::new(Arc::new(MazeSpec::corridor()), EnvParams::default()).unwrap();
    let cfg = DatasetConfig {
        horizon: 9,
        episodes: 12,
        ..DatasetConfig::default()
    };
    generate_offline_dataset(&env, &cfg, 3).unwrap()
}

#[test]
fn dataset_write_read_write_is_identical() {
    let ds = small_dataset();
    let bytes = encode_dataset(&ds, &meta()).unwrap();
    assert_eq!(&bytes[..4], b"LMPD");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), DATASET_VERSION);
    let (back, m) = decode_dataset(&bytes).unwrap();
    assert_eq!(m, meta());
    assert_eq!(back.len(), 12);
    assert_eq!(back.layout, ds.layout);
    assert_eq!(encode_dataset(&back, &m).unwrap(), bytes);
    for (a, b) in back.trajectories.as_slice().iter().zip(ds.trajectories.as_slice()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
}

#[test]
fn corrupted_files_are_refused() {
    let bytes = encode_dataset(&small_dataset(), &meta()).unwrap();
    let mut flipped = bytes.clone();
    flipped[100] ^= 0x10;
    assert!(matches!(decode_dataset(&flipped), Err(Error::Format(_))));
    assert!(matches!(decode_dataset(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_dataset(&magic), Err(Error::Format(_))));
    assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let schedule = NoiseSchedule::build(10, ScheduleKind::Cosine, 1e-4, 0.999, false).unwrap();
    let ds = small_dataset();
    let net = ConditionedMlp::random(ds.layout.dim(), ds.layout.dim(), &[16, 8], 6, 10, Activation::Tanh, &mut rng).unwrap();
    let ck = Checkpoint {
        role: ModelRole::Denoiser,
        net,
        schedule,
        layout: ds.layout,
        normalizer: Some(Normalizer::fit(&ds.trajectories, 6).unwrap()),
    };
    let bytes = encode_checkpoint(&ck, &meta()).unwrap();
    assert_eq!(&bytes[..4], b"LMPC");
    let (back, m) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(encode_checkpoint(&back, &m).unwrap(), bytes);
    assert_eq!(back.schedule, ck.schedule);
    assert_eq!(back.normalizer, ck.normalizer);
    assert_eq!(back.net.net().sizes(), ck.net.net().sizes());
    let x = vec![0.1; ds.layout.dim()];
    let (a, b) = (ck.net.predict(&x, 3).unwrap(), back.net.predict(&x, 3).unwrap());
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-4);
    }

    let explicit = NoiseSchedule::from_betas(&[0.1, 0.5, 0.999], false).unwrap();
    let guide = ConditionedMlp::random(4, 1, &[3], 2, 3, Activation::Silu, &mut rng).unwrap();
    let ck = Checkpoint {
        role: ModelRole::Guide,
        net: guide,
        schedule: explicit,
        layout: lomap_core::TrajectoryLayout::new(2, 2, 0).unwrap(),
        normalizer: None,
    };
    let bytes = encode_checkpoint(&ck, &ArtifactMeta::default()).unwrap();
    let (back, m) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back.role, ModelRole::Guide);
    assert_eq!(encode_checkpoint(&back, &m).unwrap(), bytes);
}

#[test]
fn index_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..300 * 4).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
    let rows = Arc::new(RowMatrix::new(300, 4, data).unwrap());
    let idx = AnnIndex::build(rows.clone(), 7, 9).unwrap();
    let file = IndexFile::from_index(&idx, &RetrievalKey::Columns(vec![0, 1, 2, 3]));
    let bytes = encode_index(&file, &meta()).unwrap();
    assert_eq!(&bytes[..4], b"LMPI");
    let (back, m) = decode_index(&bytes).unwrap();
    assert_eq!(back, file);
    assert_eq!(encode_index(&back, &m).unwrap(), bytes);
    let again = back.attach(rows.clone()).unwrap();
    let q = [0.3, -0.2, 0.9, 0.1];
    assert_eq!(again.knn(&q, 5, 3).unwrap(), idx.knn(&q, 5, 3).unwrap());
    let other = Arc::new(RowMatrix::new(299, 4, rows.as_slice()[..299 * 4].to_vec()).unwrap());
    assert!(back.attach(other).is_err());
}
