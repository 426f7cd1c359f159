//! End-to-end maze experiments shared by the command-line harness and the
//! acceptance suite: training a planner on scripted data, paired
//! baseline/projected sampling, and the two-level variant.

use crate::denoiser::{train_mlp_denoiser, MlpDenoiser, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::lomap::{LomapContext, NeighborNoise, ProjectionMode, ProjectionSchedule, RetrievalKey};
use crate::matrix::RowMatrix;
use crate::planner::{hierarchical_plan, Constraint, Planner, PlannerConfig};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::synthworld::{
    default_path_budget, dynamic_mse, generate_offline_dataset, wall_collision_oracle, Cell, DatasetConfig,
    EnvParams, MazeSpec, Normalizer, OfflineDataset, PointMassEnv, RealismReference, STATE_DIM,
};
use crate::trajectory::{Trajectory, TrajectoryLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::ops::Range;
use std::sync::Arc;

/// Settings for training and sampling one flat maze planner.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeExperiment {
    pub maze: MazeSpec,
    pub env: EnvParams,
    pub data: DatasetConfig,
    pub train: TrainConfig,
    pub schedule_steps: usize,
    pub n_list: usize,
    pub n_probe: usize,
    pub projection: ProjectionSchedule,
    /// Bound on the model-space clean estimate during sampling.
    pub clip: f64,
    pub realism_k: usize,
}

impl Default for MazeExperiment {
    fn default() -> Self {
        Self {
            maze: MazeSpec::four_rooms(),
            env: EnvParams::default(),
            data: DatasetConfig {
                episodes: 2000,
                ..DatasetConfig::default()
            },
            train: TrainConfig {
                steps: 40_000,
                hidden: vec![256, 256],
                ..TrainConfig::default()
            },
            schedule_steps: 20,
            n_list: 32,
            n_probe: 8,
            projection: default_projection(20),
            clip: 1.0,
            realism_k: 5,
        }
    }
}

fn default_projection(steps: usize) -> ProjectionSchedule {
    let hi = (steps * 3).div_ceil(5);
    ProjectionSchedule::new((1, hi), 10, 0.99, ProjectionMode::Affine, NeighborNoise::Fresh, steps)
        .expect("valid default range")
}

pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule> {
    NoiseSchedule::build(steps, ScheduleKind::Cosine, 1e-4, 0.999, false)
}

/// Column ranges of the first and last state blocks.
pub fn endpoint_blocks(layout: TrajectoryLayout) -> Vec<Range<usize>> {
    vec![layout.state_range(0), layout.state_range(layout.horizon - 1)]
}

/// A trained flat planner and everything needed to sample from it.
pub struct MazeModel {
    pub env: PointMassEnv,
    pub dataset: OfflineDataset,
    pub normalizer: Normalizer,
    pub schedule: NoiseSchedule,
    pub denoiser: MlpDenoiser,
    pub report: TrainReport,
    pub context: LomapContext,
    pub clip: f64,
}

impl MazeModel {
    pub fn planner(&self) -> Result<Planner<'_>> {
        Ok(Planner::new(&self.denoiser, &self.schedule, self.dataset.layout)?
            .with_normalizer(&self.normalizer)
            .with_lomap(&self.context)
            .with_clip(self.clip))
    }

    /// Normalized training rows, the reference set for retrieval and realism.
    pub fn model_rows(&self) -> &Arc<RowMatrix> {
        self.context.dataset()
    }
}

impl MazeExperiment {
    /// Generates data with `seed`, then trains and indexes with derived seeds.
    pub fn prepare(&self, seed: u64) -> Result<MazeModel> {
        let env = PointMassEnv::new(Arc::new(self.maze.clone()), self.env)?;
        let dataset = generate_offline_dataset(&env, &self.data, seed)?;
        let layout = dataset.layout;
        let normalizer = Normalizer::fit(&dataset.trajectories, layout.step_width())?;
        let rows = Arc::new(normalizer.normalize_rows(&dataset.trajectories)?);
        let schedule = cosine_schedule(self.schedule_steps)?;
        let train = TrainConfig {
            inpaint: endpoint_blocks(layout),
            ..self.train.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let (denoiser, report) = train_mlp_denoiser(&rows, &schedule, &train, &mut rng)?;
        let context = LomapContext::build(rows, RetrievalKey::Full, self.n_list, self.n_probe, seed.wrapping_add(2))?;
        Ok(MazeModel {
            env,
            dataset,
            normalizer,
            schedule,
            denoiser,
            report,
            context,
            clip: self.clip,
        })
    }

    pub fn path_budget(&self) -> Result<usize> {
        let env = PointMassEnv::new(Arc::new(self.maze.clone()), self.env)?;
        Ok(default_path_budget(&env, &self.data))
    }
}

/// Distinct start and goal cells at most `budget` grid moves apart.
pub fn sample_pairs(maze: &MazeSpec, budget: usize, count: usize, seed: u64) -> Result<Vec<(Cell, Cell)>> {
    let free = maze.free_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let a = free[rng.random_range(0..free.len())];
        let mut near = Vec::new();
        for &c in &free {
            if c != a && maze.astar(a, c)?.len() - 1 <= budget {
                near.push(c);
            }
        }
        if near.is_empty() {
            if budget == 0 {
                return Err(Error::Parameter("path budget admits no goal".into()));
            }
            continue;
        }
        pairs.push((a, near[rng.random_range(0..near.len())]));
    }
    Ok(pairs)
}

/// Start and goal constraints at rest in the centres of the pair's cells.
pub fn pair_conditioning(maze: &MazeSpec, pair: (Cell, Cell), horizon: usize) -> Vec<Constraint> {
    let at_rest = |c: Cell| {
        let p = maze.cell_center(c);
        vec![p[0], p[1], 0.0, 0.0]
    };
    vec![
        Constraint {
            t: 0,
            state: at_rest(pair.0),
        },
        Constraint {
            t: horizon - 1,
            state: at_rest(pair.1),
        },
    ]
}

/// Plans per start/goal pair, with and without projection, drawn from the
/// same random stream for each (pair, plan) cell.
#[derive(Debug, Clone)]
pub struct PairedPlans {
    pub baseline: Vec<Vec<Trajectory>>,
    pub lomap: Vec<Vec<Trajectory>>,
}

pub fn paired_plans(
    planner: &Planner,
    maze: &MazeSpec,
    pairs: &[(Cell, Cell)],
    per_pair: usize,
    projection: &ProjectionSchedule,
    seed: u64,
) -> Result<PairedPlans> {
    let horizon = planner.layout.horizon;
    let per_pair_plans: Vec<(Vec<Trajectory>, Vec<Trajectory>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &pair)| {
            let conditioning = pair_conditioning(maze, pair, horizon);
            let base = PlannerConfig {
                conditioning,
                ..PlannerConfig::default()
            };
            let proj = PlannerConfig {
                projection: Some(projection.clone()),
                ..base.clone()
            };
            let mut out = (Vec::with_capacity(per_pair), Vec::with_capacity(per_pair));
            for j in 0..per_pair {
                let stream = (i * per_pair + j) as u64;
                out.0.push(planner.sample(&base, &mut stream_rng(seed, stream))?);
                out.1.push(planner.sample(&proj, &mut stream_rng(seed, stream))?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let (baseline, lomap) = per_pair_plans.into_iter().unzip();
    Ok(PairedPlans { baseline, lomap })
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub plans: usize,
    /// Colliding fraction over the first `plans` plans of every pair.
    pub artifact_ratio: f64,
    /// Fraction of pairs with at least one colliding plan among them.
    pub pair_collision_rate: f64,
}

pub fn artifact_sweep(plans: &[Vec<Trajectory>], maze: &MazeSpec, counts: &[usize]) -> Result<Vec<SweepRow>> {
    if plans.is_empty() {
        return Err(Error::Parameter("no plans to evaluate".into()));
    }
    let hits: Vec<Vec<bool>> = plans
        .iter()
        .map(|p| p.iter().map(|t| wall_collision_oracle(t, maze)).collect())
        .collect();
    counts
        .iter()
        .map(|&n| {
            if n == 0 || hits.iter().any(|h| h.len() < n) {
                return Err(Error::Parameter(format!("plan count {n} exceeds the plans available")));
            }
            let colliding: usize = hits.iter().map(|h| h[..n].iter().filter(|&&x| x).count()).sum();
            let pairs_hit = hits.iter().filter(|h| h[..n].iter().any(|&x| x)).count();
            Ok(SweepRow {
                plans: n,
                artifact_ratio: colliding as f64 / (n * hits.len()) as f64,
                pair_collision_rate: pairs_hit as f64 / hits.len() as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanMetrics {
    pub artifact_ratio: f64,
    pub realism: f64,
    pub dynamic_mse: f64,
}

/// Metrics over the first `per_pair` plans of every pair.
pub fn plan_metrics(plans: &[Vec<Trajectory>], per_pair: usize, model: &MazeModel, k_nn: usize) -> Result<PlanMetrics> {
    let flat: Vec<&Trajectory> = plans.iter().flat_map(|p| p.iter().take(per_pair)).collect();
    if flat.is_empty() {
        return Err(Error::Parameter("no plans to evaluate".into()));
    }
    let maze = model.env.maze();
    let n = flat.len() as f64;
    let hits = flat.iter().filter(|t| wall_collision_oracle(t, maze)).count();
    let mut dyn_sum = 0.0;
    let mut rows = Vec::with_capacity(flat.len() * model.dataset.layout.dim());
    for t in &flat {
        dyn_sum += dynamic_mse(t, &model.env)?;
        rows.extend(model.normalizer.normalize(t.as_slice())?);
    }
    let samples = RowMatrix::new(flat.len(), model.dataset.layout.dim(), rows)?;
    let reference = RealismReference::new((**model.model_rows()).clone(), k_nn)?;
    Ok(PlanMetrics {
        artifact_ratio: hits as f64 / n,
        realism: reference.score(&samples)?.mean,
        dynamic_mse: dyn_sum / n,
    })
}

/// Settings for the two-level planner: a state-only subgoal model over
/// long trajectories and a state-action model over short windows.
#[derive(Debug, Clone, PartialEq)]
pub struct HierExperiment {
    pub maze: MazeSpec,
    pub env: EnvParams,
    pub data: DatasetConfig,
    pub stride: usize,
    pub train_high: TrainConfig,
    pub train_low: TrainConfig,
    pub schedule_steps: usize,
    pub n_list: usize,
    pub n_probe: usize,
    pub projection: ProjectionSchedule,
    pub clip: f64,
}

impl Default for HierExperiment {
    fn default() -> Self {
        Self {
            maze: MazeSpec::four_rooms(),
            env: EnvParams::default(),
            data: DatasetConfig {
                horizon: 33,
                episodes: 2000,
                ..DatasetConfig::default()
            },
            stride: 8,
            train_high: TrainConfig {
                steps: 20_000,
                hidden: vec![256, 256],
                ..TrainConfig::default()
            },
            train_low: TrainConfig {
                steps: 20_000,
                hidden: vec![256, 256],
                ..TrainConfig::default()
            },
            schedule_steps: 20,
            n_list: 32,
            n_probe: 8,
            projection: default_projection(20),
            clip: 1.0,
        }
    }
}

pub struct HierModel {
    pub env: PointMassEnv,
    pub stride: usize,
    pub schedule: NoiseSchedule,
    pub high_layout: TrajectoryLayout,
    pub low_layout: TrajectoryLayout,
    pub high_normalizer: Normalizer,
    pub low_normalizer: Normalizer,
    pub high: MlpDenoiser,
    pub low: MlpDenoiser,
    pub high_report: TrainReport,
    pub low_report: TrainReport,
    pub high_context: LomapContext,
    pub clip: f64,
}

impl HierModel {
    pub fn planners(&self) -> Result<(Planner<'_>, Planner<'_>)> {
        let high = Planner::new(&self.high, &self.schedule, self.high_layout)?
            .with_normalizer(&self.high_normalizer)
            .with_lomap(&self.high_context)
            .with_clip(self.clip);
        let low = Planner::new(&self.low, &self.schedule, self.low_layout)?
            .with_normalizer(&self.low_normalizer)
            .with_clip(self.clip);
        Ok((high, low))
    }
}

impl HierExperiment {
    pub fn prepare(&self, seed: u64) -> Result<HierModel> {
        let env = PointMassEnv::new(Arc::new(self.maze.clone()), self.env)?;
        let dataset = generate_offline_dataset(&env, &self.data, seed)?;
        let schedule = cosine_schedule(self.schedule_steps)?;
        let high_rows = dataset.subgoal_rows(self.stride)?;
        let high_layout = TrajectoryLayout::new(high_rows.cols() / STATE_DIM, STATE_DIM, 0)?;
        let low_rows = dataset.windows(self.stride + 1)?;
        let low_layout = TrajectoryLayout::new(self.stride + 1, STATE_DIM, dataset.layout.action_dim)?;
        let high_normalizer = Normalizer::fit(&high_rows, STATE_DIM)?;
        let low_normalizer = Normalizer::fit(&low_rows, low_layout.step_width())?;
        let high_rows = Arc::new(high_normalizer.normalize_rows(&high_rows)?);
        let low_rows = low_normalizer.normalize_rows(&low_rows)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let cfg = TrainConfig {
            inpaint: endpoint_blocks(high_layout),
            ..self.train_high.clone()
        };
        let (high, high_report) = train_mlp_denoiser(&high_rows, &schedule, &cfg, &mut rng)?;
        let cfg = TrainConfig {
            inpaint: endpoint_blocks(low_layout),
            ..self.train_low.clone()
        };
        let (low, low_report) = train_mlp_denoiser(&low_rows, &schedule, &cfg, &mut rng)?;
        let high_context =
            LomapContext::build(high_rows, RetrievalKey::Full, self.n_list, self.n_probe, seed.wrapping_add(2))?;
        Ok(HierModel {
            env,
            stride: self.stride,
            schedule,
            high_layout,
            low_layout,
            high_normalizer,
            low_normalizer,
            high,
            low,
            high_report,
            low_report,
            high_context,
            clip: self.clip,
        })
    }

    pub fn path_budget(&self) -> Result<usize> {
        let env = PointMassEnv::new(Arc::new(self.maze.clone()), self.env)?;
        Ok(default_path_budget(&env, &self.data))
    }
}

/// Stitched plans for every pair, with and without projection on the high
/// level, paired by random stream.
pub fn paired_hier_plans(
    model: &HierModel,
    pairs: &[(Cell, Cell)],
    projection: &ProjectionSchedule,
    seed: u64,
) -> Result<PairedPlans> {
    let (high, low) = model.planners()?;
    let maze = model.env.maze();
    let out: Vec<(Trajectory, Trajectory)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &pair)| {
            let base = PlannerConfig {
                conditioning: pair_conditioning(maze, pair, model.high_layout.horizon),
                ..PlannerConfig::default()
            };
            let proj = PlannerConfig {
                projection: Some(projection.clone()),
                ..base.clone()
            };
            let low_cfg = PlannerConfig::default();
            let a = hierarchical_plan(&high, &low, model.stride, &base, &low_cfg, &mut stream_rng(seed, i as u64))?;
            let b = hierarchical_plan(&high, &low, model.stride, &proj, &low_cfg, &mut stream_rng(seed, i as u64))?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let (baseline, lomap): (Vec<_>, Vec<_>) = out.into_iter().map(|(a, b)| (vec![a], vec![b])).unzip();
    Ok(PairedPlans { baseline, lomap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_counts_prefixes() {
        let maze = MazeSpec::corridor();
        let layout = TrajectoryLayout::new(2, 4, 0).unwrap();
        let clean = Trajectory::new(layout, vec![1.5, 1.5, 0.0, 0.0, 2.0, 1.5, 0.0, 0.0]).unwrap();
        let wall = Trajectory::new(layout, vec![1.5, 1.5, 0.0, 0.0, 1.5, 0.2, 0.0, 0.0]).unwrap();
        let plans = vec![
            vec![clean.clone(), wall.clone(), clean.clone()],
            vec![clean.clone(), clean.clone(), clean.clone()],
        ];
        let rows = artifact_sweep(&plans, &maze, &[1, 2, 3]).unwrap();
        assert_eq!(rows[0].artifact_ratio, 0.0);
        assert_eq!(rows[1].artifact_ratio, 0.25);
        assert_eq!(rows[1].pair_collision_rate, 0.5);
        assert!((rows[2].artifact_ratio - 1.0 / 6.0).abs() < 1e-15);
        assert!(artifact_sweep(&plans, &maze, &[4]).is_err());
        assert!(artifact_sweep(&[], &maze, &[1]).is_err());
    }

    #[test]
    fn pairs_respect_budget() {
        let maze = MazeSpec::four_rooms();
        let pairs = sample_pairs(&maze, 4, 30, 3).unwrap();
        assert_eq!(pairs, sample_pairs(&maze, 4, 30, 3).unwrap());
        for (a, b) in pairs {
            assert_ne!(a, b);
            assert!(maze.astar(a, b).unwrap().len() - 1 <= 4);
        }
    }

    #[test]
    fn conditioning_pins_cell_centres_at_rest() {
        let maze = MazeSpec::four_rooms();
        let c = pair_conditioning(&maze, ((1, 1), (7, 7)), 9);
        assert_eq!(c[0].t, 0);
        assert_eq!(c[1].t, 8);
        assert_eq!(c[0].state, vec![1.5, 1.5, 0.0, 0.0]);
        assert_eq!(c[1].state, vec![7.5, 7.5, 0.0, 0.0]);
    }
}
