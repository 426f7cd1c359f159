use super::{meta, settings, some};
use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use crate::output::write_file;
use crate::world::{self, ENV_KEYS, MAZE_KEYS};
use crate::Shared;
use clap::Args;
use lomap_core::denoiser::{GmmComponent, GmmSpec};
use lomap_core::io::encode_dataset;
use lomap_core::synthworld::{
    generate_offline_dataset, sample_gmm_dataset, sample_subspace_dataset, DatasetConfig, Endpoints, OfflineDataset,
    SubspaceSpec,
};
use lomap_core::{RowMatrix, TrajectoryLayout};
use std::path::PathBuf;

const KEYS: &[(&str, &str)] = &[
    ("world", "maze"),
    ("episodes", "1000"),
    ("horizon", "17"),
    ("noise", "0.3"),
    ("gamma", "0.99"),
    ("endpoints", "random"),
    ("speed", "1.5"),
    ("gain", "2"),
    ("waypoint_radius", "0.35"),
    ("max_path_cells", ""),
    ("max_attempts", "200"),
    ("dim", "20"),
    ("intrinsic", "3"),
    ("coeff_sd", "1"),
    ("rows", "1000"),
    ("gmm_means", "1,0;-1,0"),
    ("gmm_weights", "0.5,0.5"),
    ("gmm_var", "0.1"),
];

#[derive(Args, Debug)]
pub struct Flags {
    /// maze, subspace or gmm.
    #[arg(long)]
    world: Option<String>,
    /// four-rooms, corridor, or a maze text file.
    #[arg(long)]
    maze: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// fixed or random.
    #[arg(long)]
    endpoints: Option<String>,
}

pub fn defaults() -> Vec<(&'static str, &'static str)> {
    [MAZE_KEYS, ENV_KEYS, KEYS].concat()
}

fn dataset_config(cfg: &RunConfig) -> Result<DatasetConfig> {
    let endpoints = match cfg.raw("endpoints") {
        "fixed" => Endpoints::Fixed,
        "random" => Endpoints::Random,
        other => return Err(Failure::Param(format!("endpoints={other}: expected fixed or random"))),
    };
    Ok(DatasetConfig {
        horizon: cfg.get("horizon")?,
        episodes: cfg.get("episodes")?,
        noise: cfg.get("noise")?,
        gamma: cfg.get("gamma")?,
        endpoints,
        speed: cfg.get("speed")?,
        gain: cfg.get("gain")?,
        waypoint_radius: cfg.get("waypoint_radius")?,
        max_path_cells: cfg.opt("max_path_cells")?,
        max_attempts: cfg.get("max_attempts")?,
    })
}

/// Unstructured rows stored as one-step, state-only trajectories.
fn flat_dataset(rows: RowMatrix) -> Result<OfflineDataset> {
    let layout = TrajectoryLayout::new(1, rows.cols(), 0)?;
    let returns = vec![0.0; rows.rows()];
    Ok(OfflineDataset::new(layout, rows, returns)?)
}

fn gmm(cfg: &RunConfig) -> Result<GmmSpec> {
    let var: f64 = cfg.get("gmm_var")?;
    let weights: Vec<f64> = cfg.list("gmm_weights")?;
    let means: Vec<Vec<f64>> = cfg
        .raw("gmm_means")
        .split(';')
        .map(|m| {
            m.split(',')
                .map(|v| v.trim().parse().map_err(|e| Failure::Param(format!("gmm_means: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if means.len() != weights.len() {
        return Err(Failure::Param(format!(
            "{} mixture means but {} weights",
            means.len(),
            weights.len()
        )));
    }
    let comps = means
        .into_iter()
        .zip(weights)
        .map(|(mean, weight)| GmmComponent { weight, mean, var })
        .collect();
    Ok(GmmSpec::new(comps)?)
}

pub fn build(cfg: &RunConfig, seed: u64) -> Result<OfflineDataset> {
    match cfg.raw("world") {
        "maze" => {
            let env = world::env(cfg)?;
            Ok(generate_offline_dataset(&env, &dataset_config(cfg)?, seed)?)
        }
        "subspace" => {
            let spec = SubspaceSpec::random(cfg.get("dim")?, cfg.get("intrinsic")?, cfg.get("coeff_sd")?, seed)?;
            flat_dataset(sample_subspace_dataset(&spec, cfg.get("rows")?, seed.wrapping_add(1))?)
        }
        "gmm" => flat_dataset(sample_gmm_dataset(&gmm(cfg)?, cfg.get("rows")?, seed)?),
        other => Err(Failure::Param(format!("world={other}: expected maze, subspace or gmm"))),
    }
}

pub fn run(shared: &Shared, f: Flags) -> Result<()> {
    let cfg = settings(
        "gen-data",
        &defaults(),
        shared,
        vec![
            ("world", f.world),
            ("maze", f.maze),
            ("episodes", some(f.episodes)),
            ("horizon", some(f.horizon)),
            ("noise", some(f.noise)),
            ("endpoints", f.endpoints),
        ],
    )?;
    let ds = build(&cfg, shared.seed)?;
    let bytes = encode_dataset(&ds, &meta(&cfg, shared.seed))?;
    let path = shared.out.clone().unwrap_or_else(|| PathBuf::from("dataset.lmpd"));
    write_file(&path, &bytes)?;
    println!("wrote {} ({} rows)", path.display(), ds.len());
    Ok(())
}
