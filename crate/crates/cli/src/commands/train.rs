use super::{meta, settings, some};
use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use crate::output::{fmt, out_dir, read_file, write_csv, write_file, write_meta};
use crate::Shared;
use clap::Args;
use lomap_core::denoiser::{train_mlp_denoiser, TrainConfig};
use lomap_core::experiment::endpoint_blocks;
use lomap_core::guidance::train_mse_guide;
use lomap_core::io::{decode_dataset, encode_checkpoint, encode_index, Checkpoint, IndexFile, ModelRole};
use lomap_core::lomap::{AnnIndex, RetrievalKey};
use lomap_core::synthworld::{Normalizer, OfflineDataset, STATE_DIM};
use lomap_core::{NoiseSchedule, RowMatrix, ScheduleKind, TrajectoryLayout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::sync::Arc;

const KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("model", "denoiser"),
    ("level", "flat"),
    ("stride", "8"),
    ("inpaint", "endpoints"),
    ("steps", "10000"),
    ("batch_size", "64"),
    ("lr", "0.001"),
    ("hidden", "256,256"),
    ("embed_width", "32"),
    ("activation", "silu"),
    ("steps_per_epoch", "500"),
    ("schedule", "cosine"),
    ("diffusion_steps", "20"),
    ("beta_min", "0.0001"),
    ("beta_max", "0.999"),
    ("n_list", "32"),
];

#[derive(Args, Debug)]
pub struct Flags {
    /// Dataset file (LMPD).
    #[arg(long)]
    data: Option<PathBuf>,
    /// denoiser, guide or both.
    #[arg(long)]
    model: Option<String>,
    /// flat, high (state-only subgoals) or low (short windows).
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

pub fn schedule(cfg: &RunConfig) -> Result<NoiseSchedule> {
    let kind: ScheduleKind = cfg.get("schedule")?;
    Ok(NoiseSchedule::build(
        cfg.get("diffusion_steps")?,
        kind,
        cfg.get("beta_min")?,
        cfg.get("beta_max")?,
        false,
    )?)
}

pub fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    Ok(decode_dataset(&read_file(path)?)?.0)
}

/// Training rows and their layout for the requested level.
pub fn level_rows(ds: &OfflineDataset, level: &str, stride: usize) -> Result<(RowMatrix, TrajectoryLayout)> {
    match level {
        "flat" => Ok((ds.trajectories.clone(), ds.layout)),
        "high" => {
            if ds.layout.state_dim != STATE_DIM {
                return Err(Failure::Data("subgoal levels need maze trajectories".into()));
            }
            let rows = ds.subgoal_rows(stride)?;
            let layout = TrajectoryLayout::new(rows.cols() / STATE_DIM, STATE_DIM, 0)?;
            Ok((rows, layout))
        }
        "low" => {
            let rows = ds.windows(stride + 1)?;
            let layout = TrajectoryLayout::new(stride + 1, ds.layout.state_dim, ds.layout.action_dim)?;
            Ok((rows, layout))
        }
        other => Err(Failure::Param(format!("level={other}: expected flat, high or low"))),
    }
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        steps: cfg.get("steps")?,
        batch_size: cfg.get("batch_size")?,
        learning_rate: cfg.get("lr")?,
        hidden: cfg.list("hidden")?,
        embed_width: cfg.get("embed_width")?,
        activation: cfg.get("activation")?,
        steps_per_epoch: cfg.get("steps_per_epoch")?,
        inpaint: Vec::new(),
    })
}

pub fn run(shared: &Shared, f: Flags) -> Result<()> {
    let cfg = settings(
        "train",
        KEYS,
        shared,
        vec![
            ("data", some(f.data.map(|p| p.display().to_string()))),
            ("model", f.model),
            ("level", f.level),
            ("steps", some(f.steps)),
            ("lr", some(f.lr)),
        ],
    )?;
    let data_path = cfg
        .opt::<PathBuf>("data")?
        .ok_or_else(|| Failure::Param("train needs --data".into()))?;
    let (want_den, want_guide) = match cfg.raw("model") {
        "denoiser" => (true, false),
        "guide" => (false, true),
        "both" => (true, true),
        other => return Err(Failure::Param(format!("model={other}: expected denoiser, guide or both"))),
    };
    let level = cfg.raw("level").to_string();
    if want_guide && level != "flat" {
        return Err(Failure::Param("guides are trained on flat trajectories only".into()));
    }
    let sched = schedule(&cfg)?;
    let mut tc = train_config(&cfg)?;
    let ds = load_dataset(&data_path)?;
    let (raw_rows, layout) = level_rows(&ds, &level, cfg.get("stride")?)?;
    let normalizer = Normalizer::fit(&raw_rows, layout.step_width())?;
    let rows = normalizer.normalize_rows(&raw_rows)?;
    tc.inpaint = match cfg.raw("inpaint") {
        "endpoints" => endpoint_blocks(layout),
        "none" => Vec::new(),
        other => return Err(Failure::Param(format!("inpaint={other}: expected endpoints or none"))),
    };
    let dir = out_dir(shared.out.as_deref(), "train")?;
    let am = meta(&cfg, shared.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(shared.seed);
    let mut loss_rows = Vec::new();
    if want_den {
        let (den, report) = train_mlp_denoiser(&rows, &sched, &tc, &mut rng)?;
        let ck = Checkpoint {
            role: ModelRole::Denoiser,
            net: den.network().clone(),
            schedule: sched.clone(),
            layout,
            normalizer: Some(normalizer.clone()),
        };
        write_file(&dir.join("denoiser.lmpc"), &encode_checkpoint(&ck, &am)?)?;
        for (e, l) in report.epoch_losses.iter().enumerate() {
            loss_rows.push(vec!["denoiser".into(), e.to_string(), fmt(*l)]);
        }
        let index = AnnIndex::build(Arc::new(rows.clone()), cfg.get("n_list")?, shared.seed)?;
        let file = IndexFile::from_index(&index, &RetrievalKey::Full);
        write_file(&dir.join("index.lmpi"), &encode_index(&file, &am)?)?;
    }
    if want_guide {
        let guide_cfg = TrainConfig {
            inpaint: Vec::new(),
            ..tc.clone()
        };
        let (guide, report) = train_mse_guide(&rows, &ds.returns, &sched, &guide_cfg, &mut rng)?;
        let ck = Checkpoint {
            role: ModelRole::Guide,
            net: guide.network().clone(),
            schedule: sched.clone(),
            layout,
            normalizer: Some(normalizer.clone()),
        };
        write_file(&dir.join("guide.lmpc"), &encode_checkpoint(&ck, &am)?)?;
        for (e, l) in report.epoch_losses.iter().enumerate() {
            loss_rows.push(vec!["guide".into(), e.to_string(), fmt(*l)]);
        }
    }
    write_csv(&dir.join("losses.csv"), &["model", "epoch", "loss"], &loss_rows, &cfg)?;
    write_meta(&dir, &cfg, shared.seed, &[("data", data_path.display().to_string())])?;
    println!("wrote {}", dir.display());
    Ok(())
}
