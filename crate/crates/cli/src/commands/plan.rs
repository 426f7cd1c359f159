use super::train::{level_rows, load_dataset};
use super::{settings, some};
use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use crate::output::{fmt, out_dir, read_file, write_csv, write_meta};
use crate::world::{self, ENV_KEYS, MAZE_KEYS};
use crate::Shared;
use clap::Args;
use lomap_core::denoiser::MlpDenoiser;
use lomap_core::experiment::stream_rng;
use lomap_core::guidance::MseGuide;
use lomap_core::io::{decode_checkpoint, decode_index, ArtifactMeta, Checkpoint, ModelRole};
use lomap_core::lomap::{LomapContext, ProjectionSchedule, RetrievalKey};
use lomap_core::planner::{hierarchical_plan, plan_episode, Constraint, EpisodeResult, Planner, PlannerConfig};
use lomap_core::synthworld::{Normalizer, OfflineDataset, PointMassEnv};
use lomap_core::Trajectory;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const PLANNER_KEYS: &[(&str, &str)] = &[
    ("denoiser", ""),
    ("data", ""),
    ("index", ""),
    ("projection", "true"),
    ("proj_lo", "1"),
    ("proj_hi", "12"),
    ("k", "10"),
    ("lambda", "0.99"),
    ("mode", "affine"),
    ("neighbor_noise", "fresh"),
    ("n_list", "32"),
    ("n_probe", "8"),
    ("clip", "1"),
];

const KEYS: &[(&str, &str)] = &[
    ("guide", ""),
    ("episodes", "10"),
    ("omega", "0"),
    ("candidates", "1"),
    ("goal", "true"),
    ("hier", "false"),
    ("high", ""),
    ("high_data", ""),
    ("stride", "8"),
    ("dump", "false"),
];

#[derive(Args, Debug)]
pub struct Flags {
    /// Denoiser checkpoint (the low level with --hier).
    #[arg(long)]
    denoiser: Option<PathBuf>,
    #[arg(long)]
    guide: Option<PathBuf>,
    /// Dataset the denoiser was trained on; required for projection.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    no_projection: bool,
    /// Two-level planning; needs `high` and `high_data`.
    #[arg(long)]
    hier: bool,
    /// Write executed trajectories.
    #[arg(long)]
    dump: bool,
}

pub fn load_checkpoint(path: &Path, role: ModelRole) -> Result<(Checkpoint, ArtifactMeta)> {
    let (ck, meta) = decode_checkpoint(&read_file(path)?)?;
    if ck.role != role {
        return Err(Failure::Data(format!("{} holds a {:?}, expected a {role:?}", path.display(), ck.role)));
    }
    Ok((ck, meta))
}

pub fn required(cfg: &RunConfig, key: &str) -> Result<PathBuf> {
    cfg.opt::<PathBuf>(key)?
        .ok_or_else(|| Failure::Param(format!("missing required '{key}'")))
}

pub fn projection(cfg: &RunConfig, steps: usize) -> Result<Option<ProjectionSchedule>> {
    if !cfg.flag("projection")? {
        return Ok(None);
    }
    Ok(Some(ProjectionSchedule::new(
        (cfg.get("proj_lo")?, cfg.get("proj_hi")?),
        cfg.get("k")?,
        cfg.get("lambda")?,
        cfg.get("mode")?,
        cfg.get("neighbor_noise")?,
        steps,
    )?))
}

/// A checkpointed denoiser with its normalizer and, when a dataset is
/// given, the retrieval context over its normalized rows.
pub struct Loaded {
    pub ck: Checkpoint,
    pub meta: ArtifactMeta,
    pub denoiser: MlpDenoiser,
    pub normalizer: Normalizer,
    pub dataset: Option<OfflineDataset>,
    pub context: Option<LomapContext>,
}

pub fn load_model(
    cfg: &RunConfig,
    ck_path: &Path,
    data: Option<&Path>,
    index: Option<&Path>,
    level: &str,
    stride: usize,
    seed: u64,
) -> Result<Loaded> {
    let (ck, meta) = load_checkpoint(ck_path, ModelRole::Denoiser)?;
    let normalizer = ck
        .normalizer
        .clone()
        .ok_or_else(|| Failure::Data(format!("{} has no normalizer", ck_path.display())))?;
    let denoiser = MlpDenoiser::new(ck.net.clone())?;
    let (dataset, context) = match data {
        None => (None, None),
        Some(path) => {
            let ds = load_dataset(path)?;
            let (raw, layout) = level_rows(&ds, level, stride)?;
            if layout != ck.layout {
                return Err(Failure::Data(format!(
                    "dataset {} does not match the checkpoint layout",
                    path.display()
                )));
            }
            let rows = Arc::new(normalizer.normalize_rows(&raw)?);
            let n_probe = cfg.get("n_probe")?;
            let ctx = match index {
                Some(ipath) => {
                    let (file, imeta) = decode_index(&read_file(ipath)?)?;
                    if imeta.config_hash != meta.config_hash {
                        return Err(Failure::Data(format!(
                            "index {} was built under config {} but the denoiser under {}",
                            ipath.display(),
                            imeta.hash_hex(),
                            meta.hash_hex()
                        )));
                    }
                    let idx = file.attach(rows.clone())?;
                    LomapContext::from_index(rows, idx, RetrievalKey::Full, n_probe)?
                }
                None => LomapContext::build(rows, RetrievalKey::Full, cfg.get("n_list")?, n_probe, seed)?,
            };
            (Some(ds), Some(ctx))
        }
    };
    Ok(Loaded {
        ck,
        meta,
        denoiser,
        normalizer,
        dataset,
        context,
    })
}

impl Loaded {
    pub fn planner(&self, clip: f64) -> Result<Planner<'_>> {
        let mut p = Planner::new(&self.denoiser, &self.ck.schedule, self.ck.layout)?
            .with_normalizer(&self.normalizer)
            .with_clip(clip);
        if let Some(ctx) = &self.context {
            p = p.with_lomap(ctx);
        }
        Ok(p)
    }
}

fn goal_state(env: &PointMassEnv) -> Vec<f64> {
    let g = env.maze().goal_position();
    vec![g[0], g[1], 0.0, 0.0]
}

fn execute(env: &mut PointMassEnv, plan: &Trajectory, keep: bool) -> Result<EpisodeResult> {
    let mut r = EpisodeResult {
        states: vec![env.state()],
        actions: Vec::new(),
        plans: if keep { vec![plan.clone()] } else { Vec::new() },
        success: env.at_goal(),
        total_return: 0.0,
        collided: false,
        steps: 0,
    };
    let mut discount = 1.0;
    for t in 0..plan.layout().horizon - 1 {
        if r.success || env.steps() >= env.params().max_steps {
            break;
        }
        let out = env.step(plan.action(t))?;
        r.total_return += discount * out.reward;
        discount *= 0.99;
        r.collided |= out.collided;
        r.states.push(out.state);
        r.actions.push(plan.action(t).to_vec());
        r.steps += 1;
        r.success = out.reward > 0.0;
    }
    Ok(r)
}

pub fn run(shared: &Shared, f: Flags) -> Result<()> {
    let defaults = [MAZE_KEYS, ENV_KEYS, PLANNER_KEYS, KEYS].concat();
    let cfg = settings(
        "plan",
        &defaults,
        shared,
        vec![
            ("denoiser", some(f.denoiser.map(|p| p.display().to_string()))),
            ("guide", some(f.guide.map(|p| p.display().to_string()))),
            ("data", some(f.data.map(|p| p.display().to_string()))),
            ("episodes", some(f.episodes)),
            ("omega", some(f.omega)),
            ("projection", f.no_projection.then(|| "false".to_string())),
            ("hier", f.hier.then(|| "true".to_string())),
            ("dump", f.dump.then(|| "true".to_string())),
        ],
    )?;
    let env = world::env(&cfg)?;
    let episodes: usize = cfg.get("episodes")?;
    if episodes == 0 {
        return Err(Failure::Param("episodes must be positive".into()));
    }
    let hier = cfg.flag("hier")?;
    let dump = cfg.flag("dump")?;
    let clip: f64 = cfg.get("clip")?;
    let stride: usize = cfg.get("stride")?;
    let den_path = required(&cfg, "denoiser")?;
    let data = cfg.opt::<PathBuf>("data")?;
    let index = cfg.opt::<PathBuf>("index")?;
    let mut extra = Vec::new();

    let results: Vec<EpisodeResult> = if hier {
        let low = load_model(&cfg, &den_path, None, None, "low", stride, shared.seed)?;
        let high_data = required(&cfg, "high_data")?;
        let high = load_model(&cfg, &required(&cfg, "high")?, Some(&high_data), None, "high", stride, shared.seed)?;
        if high.ck.schedule != low.ck.schedule {
            return Err(Failure::Data("high and low levels were trained under different schedules".into()));
        }
        extra.push(("low_config_hash", low.meta.hash_hex()));
        extra.push(("high_config_hash", high.meta.hash_hex()));
        extra.push(("high_horizon", high.ck.layout.horizon.to_string()));
        extra.push(("low_horizon", low.ck.layout.horizon.to_string()));
        let (hp, lp) = (high.planner(clip)?, low.planner(clip)?);
        let proj = projection(&cfg, high.ck.schedule.steps())?;
        (0..episodes)
            .into_par_iter()
            .map(|e| {
                let mut env = env.clone();
                let start = env.reset();
                let high_cfg = PlannerConfig {
                    projection: proj.clone(),
                    conditioning: vec![
                        Constraint { t: 0, state: start.to_vec() },
                        Constraint {
                            t: high.ck.layout.horizon - 1,
                            state: goal_state(&env),
                        },
                    ],
                    ..PlannerConfig::default()
                };
                let mut rng = stream_rng(shared.seed, e as u64);
                let plan = hierarchical_plan(&hp, &lp, stride, &high_cfg, &PlannerConfig::default(), &mut rng)?;
                execute(&mut env, &plan, dump)
            })
            .collect::<Result<_>>()?
    } else {
        let model = load_model(&cfg, &den_path, data.as_deref(), index.as_deref(), "flat", stride, shared.seed)?;
        let guide = match cfg.opt::<PathBuf>("guide")? {
            Some(p) => {
                let (gck, gmeta) = load_checkpoint(&p, ModelRole::Guide)?;
                if gck.schedule != model.ck.schedule || gck.layout != model.ck.layout {
                    return Err(Failure::Data(format!(
                        "guide (config {}) and denoiser (config {}) disagree on schedule or layout",
                        gmeta.hash_hex(),
                        model.meta.hash_hex()
                    )));
                }
                Some(MseGuide::new(gck.net)?)
            }
            None => None,
        };
        let proj = projection(&cfg, model.ck.schedule.steps())?;
        if proj.is_some() && model.context.is_none() {
            return Err(Failure::Param("projection needs the training dataset (--data)".into()));
        }
        extra.push(("denoiser_config_hash", model.meta.hash_hex()));
        let mut planner = model.planner(clip)?;
        if let Some(g) = &guide {
            planner = planner.with_guide(g);
        }
        let horizon = model.ck.layout.horizon;
        let base = PlannerConfig {
            omega: cfg.get("omega")?,
            projection: proj,
            num_candidate_plans: cfg.get("candidates")?,
            seed: shared.seed,
            conditioning: Vec::new(),
        };
        let with_goal = cfg.flag("goal")?;
        (0..episodes)
            .into_par_iter()
            .map(|e| {
                let mut env = env.clone();
                env.reset();
                let mut pc = base.clone();
                if with_goal {
                    pc.conditioning.push(Constraint {
                        t: horizon - 1,
                        state: goal_state(&env),
                    });
                }
                let mut rng = stream_rng(shared.seed, e as u64);
                Ok(plan_episode(&mut env, &planner, &pc, false, &mut rng)?)
            })
            .collect::<Result<_>>()?
    };

    let dir = out_dir(shared.out.as_deref(), "plan")?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(e, r)| {
            vec![
                e.to_string(),
                r.success.to_string(),
                fmt(r.total_return),
                r.steps.to_string(),
                r.collided.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("episodes.csv"),
        &["episode", "success", "return", "steps", "collided"],
        &rows,
        &cfg,
    )?;
    if dump {
        let mut traj = Vec::new();
        for (e, r) in results.iter().enumerate() {
            for (t, s) in r.states.iter().enumerate() {
                traj.push(vec![e.to_string(), t.to_string(), fmt(s[0]), fmt(s[1]), fmt(s[2]), fmt(s[3])]);
            }
        }
        write_csv(&dir.join("trajectories.csv"), &["episode", "t", "x", "y", "vx", "vy"], &traj, &cfg)?;
    }
    write_meta(&dir, &cfg, shared.seed, &extra)?;
    let wins = results.iter().filter(|r| r.success).count();
    println!("{wins}/{episodes} episodes reached the goal; wrote {}", dir.display());
    Ok(())
}
