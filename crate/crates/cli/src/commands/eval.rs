use super::plan::{load_model, projection, required, PLANNER_KEYS};
use super::{settings, some};
use crate::fail::{Failure, Result};
use crate::output::{fmt, out_dir, write_csv, write_meta};
use crate::world::{self, ENV_KEYS, MAZE_KEYS};
use crate::Shared;
use clap::Args;
use lomap_core::denoiser::TrainReport;
use lomap_core::experiment::{artifact_sweep, paired_plans, plan_metrics, sample_pairs, MazeModel};
use lomap_core::synthworld::{default_path_budget, wall_collision_oracle, DatasetConfig};
use lomap_core::Trajectory;
use std::path::PathBuf;

const KEYS: &[(&str, &str)] = &[
    ("pairs", "100"),
    ("plan_counts", "10,20,30,50,100"),
    ("path_budget", ""),
    ("k_nn", "5"),
    ("dump_pairs", "0"),
];

#[derive(Args, Debug)]
pub struct Flags {
    #[arg(long)]
    denoiser: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<usize>,
    /// Comma-separated plan counts per pair.
    #[arg(long)]
    plan_counts: Option<String>,
}

pub fn run(shared: &Shared, f: Flags) -> Result<()> {
    let defaults = [MAZE_KEYS, ENV_KEYS, PLANNER_KEYS, KEYS].concat();
    let cfg = settings(
        "eval",
        &defaults,
        shared,
        vec![
            ("denoiser", some(f.denoiser.map(|p| p.display().to_string()))),
            ("data", some(f.data.map(|p| p.display().to_string()))),
            ("pairs", some(f.pairs)),
            ("plan_counts", f.plan_counts),
        ],
    )?;
    let n_pairs: usize = cfg.get("pairs")?;
    let counts: Vec<usize> = cfg.list("plan_counts")?;
    if n_pairs == 0 || counts.is_empty() || counts.contains(&0) {
        return Err(Failure::Param("need at least one pair and positive plan counts".into()));
    }
    let env = world::env(&cfg)?;
    let data = required(&cfg, "data")?;
    let index = cfg.opt::<PathBuf>("index")?;
    let loaded = load_model(&cfg, &required(&cfg, "denoiser")?, Some(&data), index.as_deref(), "flat", 1, shared.seed)?;
    let proj = projection(&cfg, loaded.ck.schedule.steps())?
        .ok_or_else(|| Failure::Param("eval compares against projection; it cannot be disabled".into()))?;
    let layout = loaded.ck.layout;
    let budget = match cfg.opt::<usize>("path_budget")? {
        Some(b) => b,
        None => default_path_budget(
            &env,
            &DatasetConfig {
                horizon: layout.horizon,
                ..DatasetConfig::default()
            },
        ),
    };
    let clip: f64 = cfg.get("clip")?;
    let model = MazeModel {
        env: env.clone(),
        dataset: loaded.dataset.expect("dataset given"),
        normalizer: loaded.normalizer,
        schedule: loaded.ck.schedule,
        denoiser: loaded.denoiser,
        report: TrainReport::default(),
        context: loaded.context.expect("dataset given"),
        clip,
    };
    let maze = env.maze();
    let pairs = sample_pairs(maze, budget, n_pairs, shared.seed)?;
    let per_pair = *counts.iter().max().expect("nonempty");
    let planner = model.planner()?;
    let plans = paired_plans(&planner, maze, &pairs, per_pair, &proj, shared.seed)?;
    let k_nn: usize = cfg.get("k_nn")?;
    let mut rows = Vec::new();
    for (method, set) in [("baseline", &plans.baseline), ("lomap", &plans.lomap)] {
        let sweep = artifact_sweep(set, maze, &counts)?;
        for row in sweep {
            let m = plan_metrics(set, row.plans, &model, k_nn)?;
            rows.push(vec![
                method.to_string(),
                row.plans.to_string(),
                fmt(row.artifact_ratio),
                fmt(row.pair_collision_rate),
                fmt(m.realism),
                fmt(m.dynamic_mse),
            ]);
        }
    }
    let dir = out_dir(shared.out.as_deref(), "eval")?;
    write_csv(
        &dir.join("metrics.csv"),
        &["method", "plans", "artifact_ratio", "pair_collision_rate", "realism", "dynamic_mse"],
        &rows,
        &cfg,
    )?;
    let dump: usize = cfg.get("dump_pairs")?;
    if dump > 0 {
        let mut out = Vec::new();
        let mut push = |method: &str, p: usize, j: usize, t: &Trajectory| {
            let hit = wall_collision_oracle(t, maze);
            for (k, s) in t.states().enumerate() {
                out.push(vec![
                    method.to_string(),
                    p.to_string(),
                    j.to_string(),
                    k.to_string(),
                    fmt(s[0]),
                    fmt(s[1]),
                    fmt(s[2]),
                    fmt(s[3]),
                    hit.to_string(),
                ]);
            }
        };
        for p in 0..dump.min(pairs.len()) {
            for (j, t) in plans.baseline[p].iter().enumerate() {
                push("baseline", p, j, t);
            }
            for (j, t) in plans.lomap[p].iter().enumerate() {
                push("lomap", p, j, t);
            }
        }
        write_csv(
            &dir.join("plans.csv"),
            &["method", "pair", "plan", "t", "x", "y", "vx", "vy", "collided"],
            &out,
            &cfg,
        )?;
    }
    write_meta(&dir, &cfg, shared.seed, &[("denoiser_config_hash", loaded.meta.hash_hex())])?;
    for r in &rows {
        println!("{:<8} plans={:<4} artifact={} realism={} dynamic_mse={}", r[0], r[1], r[2], r[4], r[5]);
    }
    Ok(())
}
