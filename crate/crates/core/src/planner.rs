//! Guided reverse-diffusion planning with optional local manifold projection.

use crate::denoiser::NoisePredictor;
use crate::diffusion::{add_reverse_noise, reverse_mean, reverse_mean_clipped, standard_normal};
use crate::error::{check_len, Error, Result};
use crate::guidance::{apply_guidance, ReturnGuide};
use crate::lomap::{LocalBasis, LomapContext, ProjectionSchedule};
use crate::schedule::NoiseSchedule;
use crate::synthworld::{Normalizer, PointMassEnv, STATE_DIM};
use crate::trajectory::{Trajectory, TrajectoryLayout};
use rand::Rng;

/// A state pinned at trajectory timestep `t`, in raw (unnormalized) units.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub t: usize,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub omega: f64,
    /// `None` samples without projection.
    pub projection: Option<ProjectionSchedule>,
    pub conditioning: Vec<Constraint>,
    pub num_candidate_plans: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            omega: 0.0,
            projection: None,
            conditioning: Vec::new(),
            num_candidate_plans: 1,
            seed: 0,
        }
    }
}

/// One reverse step as seen by `guided_sample_traced`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Step index of the sample after this transition.
    pub step: usize,
    pub before_projection: Vec<f64>,
    pub after_projection: Vec<f64>,
    pub basis: Option<LocalBasis>,
}

/// Everything the sampler needs besides the per-call configuration.
#[derive(Clone, Copy)]
pub struct Planner<'a> {
    pub denoiser: &'a dyn NoisePredictor,
    pub guide: Option<&'a dyn ReturnGuide>,
    pub schedule: &'a NoiseSchedule,
    pub layout: TrajectoryLayout,
    /// Maps raw trajectories to model space; `None` means identity.
    pub normalizer: Option<&'a Normalizer>,
    pub lomap: Option<&'a LomapContext>,
    /// Clamp on the model-space clean estimate inside each reverse mean.
    pub clip: Option<f64>,
}

impl<'a> Planner<'a> {
    pub fn new(
        denoiser: &'a dyn NoisePredictor,
        schedule: &'a NoiseSchedule,
        layout: TrajectoryLayout,
    ) -> Result<Self> {
        check_len(layout.dim(), denoiser.dim())?;
        Ok(Self {
            denoiser,
            guide: None,
            schedule,
            layout,
            normalizer: None,
            lomap: None,
            clip: None,
        })
    }

    pub fn with_guide(mut self, guide: &'a dyn ReturnGuide) -> Self {
        self.guide = Some(guide);
        self
    }

    pub fn with_normalizer(mut self, normalizer: &'a Normalizer) -> Self {
        self.normalizer = Some(normalizer);
        self
    }

    pub fn with_lomap(mut self, ctx: &'a LomapContext) -> Self {
        self.lomap = Some(ctx);
        self
    }

    pub fn with_clip(mut self, bound: f64) -> Self {
        self.clip = Some(bound);
        self
    }

    fn validate(&self, config: &PlannerConfig) -> Result<Vec<(std::ops::Range<usize>, Vec<f64>)>> {
        if !(config.omega >= 0.0 && config.omega.is_finite()) {
            return Err(Error::Parameter(format!("omega must be finite and >= 0, got {}", config.omega)));
        }
        if config.omega > 0.0 && self.guide.is_none() {
            return Err(Error::Config("omega > 0 requires a guide".into()));
        }
        if let Some(p) = &config.projection {
            if self.lomap.is_none() {
                return Err(Error::Config("projection requires a retrieval context".into()));
            }
            if p.active_range().1 > self.schedule.steps() {
                return Err(Error::Config("projection range exceeds the schedule".into()));
            }
        }
        if let Some(ctx) = self.lomap {
            check_len(self.layout.dim(), ctx.dataset().cols())?;
        }
        if config.num_candidate_plans == 0 {
            return Err(Error::Parameter("need at least one candidate plan".into()));
        }
        config
            .conditioning
            .iter()
            .map(|c| {
                if c.t >= self.layout.horizon {
                    return Err(Error::Parameter(format!(
                        "conditioned timestep {} outside horizon {}",
                        c.t, self.layout.horizon
                    )));
                }
                check_len(self.layout.state_dim, c.state.len())?;
                let range = self.layout.state_range(c.t);
                let value = match self.normalizer {
                    Some(n) => n.normalize_at(&c.state, range.start),
                    None => c.state.clone(),
                };
                Ok((range, value))
            })
            .collect()
    }

    /// Samples one plan in model space, recording every transition when
    /// `trace` is given.
    fn sample_model<R: Rng + ?Sized>(
        &self,
        config: &PlannerConfig,
        rng: &mut R,
        mut trace: Option<&mut Vec<StepRecord>>,
    ) -> Result<Vec<f64>> {
        let pins = self.validate(config)?;
        let pin = |x: &mut [f64]| {
            for (range, value) in &pins {
                x[range.clone()].copy_from_slice(value);
            }
        };
        let mut x = standard_normal(rng, self.layout.dim());
        pin(&mut x);
        for step in (1..=self.schedule.steps()).rev() {
            let mut mean = match self.clip {
                Some(b) => reverse_mean_clipped(&x, step, self.denoiser, self.schedule, b)?,
                None => reverse_mean(&x, step, self.denoiser, self.schedule)?,
            };
            if config.omega > 0.0 {
                let guide = self.guide.expect("checked in validate");
                mean = apply_guidance(&mean, step, guide, config.omega, self.schedule)?;
            }
            add_reverse_noise(&mut mean, step, self.schedule, rng);
            let before = mean;
            let next = step - 1;
            let (after, basis) = match (&config.projection, self.lomap) {
                (Some(p), Some(ctx)) if p.is_active(next) => {
                    let basis = ctx.fit_basis(&before, next, p, self.denoiser, self.schedule, rng)?;
                    (basis.project(&before)?, Some(basis))
                }
                _ => (before.clone(), None),
            };
            if after.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("sample diverged at step {step}")));
            }
            x = after;
            if let Some(t) = trace.as_deref_mut() {
                t.push(StepRecord {
                    step: next,
                    before_projection: before,
                    after_projection: x.clone(),
                    basis,
                });
            }
            pin(&mut x);
        }
        Ok(x)
    }

    fn raw_plan(&self, x: Vec<f64>) -> Result<Trajectory> {
        let data = match self.normalizer {
            Some(n) => n.denormalize(&x)?,
            None => x,
        };
        Trajectory::new(self.layout, data)
    }

    /// One plan in raw units; conditioned state blocks are copied verbatim.
    pub fn sample<R: Rng + ?Sized>(&self, config: &PlannerConfig, rng: &mut R) -> Result<Trajectory> {
        self.sample_traced(config, rng).map(|(t, _)| t)
    }

    pub fn sample_traced<R: Rng + ?Sized>(
        &self,
        config: &PlannerConfig,
        rng: &mut R,
    ) -> Result<(Trajectory, Vec<StepRecord>)> {
        let mut trace = Vec::with_capacity(self.schedule.steps());
        let x = self.sample_model(config, rng, Some(&mut trace))?;
        let mut traj = self.raw_plan(x)?;
        for c in &config.conditioning {
            traj.set_state(c.t, &c.state);
        }
        Ok((traj, trace))
    }

    /// Samples `num_candidate_plans` plans and keeps the one with the highest
    /// guide value at step 0 (the first on ties, or the first without a guide).
    pub fn best_plan<R: Rng + ?Sized>(&self, config: &PlannerConfig, rng: &mut R) -> Result<(Trajectory, f64)> {
        let mut best: Option<(Trajectory, f64)> = None;
        for _ in 0..config.num_candidate_plans {
            let mut model = self.sample_model(config, rng, None)?;
            for (range, value) in self.validate(config)? {
                model[range].copy_from_slice(&value);
            }
            let score = match self.guide {
                Some(g) => g.value(&model, 0)?,
                None => 0.0,
            };
            let mut traj = self.raw_plan(model)?;
            for c in &config.conditioning {
                traj.set_state(c.t, &c.state);
            }
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((traj, score));
            }
            if self.guide.is_none() {
                break;
            }
        }
        Ok(best.expect("at least one candidate"))
    }
}

/// Guided reverse sampling; see [`Planner::sample`].
pub fn guided_sample<R: Rng + ?Sized>(
    denoiser: &dyn NoisePredictor,
    guide: Option<&dyn ReturnGuide>,
    schedule: &NoiseSchedule,
    layout: TrajectoryLayout,
    config: &PlannerConfig,
    lomap: Option<&LomapContext>,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut p = Planner::new(denoiser, schedule, layout)?;
    p.guide = guide;
    p.lomap = lomap;
    p.sample(config, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub states: Vec<[f64; STATE_DIM]>,
    pub actions: Vec<Vec<f64>>,
    pub plans: Vec<Trajectory>,
    pub success: bool,
    pub total_return: f64,
    /// Any executed transition was stopped by a wall.
    pub collided: bool,
    pub steps: usize,
}

/// Receding-horizon control: replan from the observed state every step and
/// execute the first planned action.
///
/// `config.conditioning` entries other than `t = 0` (for instance a goal at
/// the last timestep) are kept on every replan.
pub fn plan_episode<R: Rng + ?Sized>(
    env: &mut PointMassEnv,
    planner: &Planner,
    config: &PlannerConfig,
    keep_plans: bool,
    rng: &mut R,
) -> Result<EpisodeResult> {
    if planner.layout.state_dim != STATE_DIM {
        return Err(Error::Shape {
            expected: STATE_DIM,
            got: planner.layout.state_dim,
        });
    }
    let mut result = EpisodeResult {
        states: vec![env.state()],
        actions: Vec::new(),
        plans: Vec::new(),
        success: env.at_goal(),
        total_return: 0.0,
        collided: false,
        steps: 0,
    };
    let mut discount = 1.0;
    let gamma = 0.99;
    while !result.success && env.steps() < env.params().max_steps {
        let mut cfg = config.clone();
        cfg.conditioning.retain(|c| c.t != 0);
        cfg.conditioning.push(Constraint {
            t: 0,
            state: env.state().to_vec(),
        });
        let (plan, _) = planner.best_plan(&cfg, rng)?;
        let action = plan.action(0).to_vec();
        let out = env.step(&action)?;
        result.total_return += discount * out.reward;
        discount *= gamma;
        result.collided |= out.collided;
        result.states.push(out.state);
        result.actions.push(action);
        result.steps += 1;
        result.success = out.reward > 0.0;
        if keep_plans {
            result.plans.push(plan);
        }
        if out.done {
            break;
        }
    }
    Ok(result)
}

/// Two-level planning: a state-only subgoal plan with stride `stride`,
/// stitched by a low-level state-action planner of horizon `stride + 1`.
///
/// The stitched trajectory has `stride * (H_hi - 1) + 1` timesteps. The
/// final action is zero.
pub fn hierarchical_plan<R: Rng + ?Sized>(
    high: &Planner,
    low: &Planner,
    stride: usize,
    high_config: &PlannerConfig,
    low_config: &PlannerConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    if stride < 1 {
        return Err(Error::Parameter("subgoal stride must be at least 1".into()));
    }
    let (hl, ll) = (high.layout, low.layout);
    if hl.action_dim != 0 {
        return Err(Error::Parameter("high-level plans must be state-only".into()));
    }
    check_len(hl.state_dim, ll.state_dim)?;
    check_len(stride + 1, ll.horizon)?;
    let subgoals = high.best_plan(high_config, rng)?.0;
    let horizon = stride * (hl.horizon - 1) + 1;
    let layout = TrajectoryLayout::new(horizon, ll.state_dim, ll.action_dim)?;
    let mut out = Trajectory::zeros(layout);
    out.set_state(0, subgoals.state(0));
    for j in 0..hl.horizon - 1 {
        let mut cfg = low_config.clone();
        cfg.conditioning.retain(|c| c.t != 0 && c.t != stride);
        cfg.conditioning.push(Constraint {
            t: 0,
            state: subgoals.state(j).to_vec(),
        });
        cfg.conditioning.push(Constraint {
            t: stride,
            state: subgoals.state(j + 1).to_vec(),
        });
        let seg = low.best_plan(&cfg, rng)?.0;
        for t in 0..stride {
            let at = j * stride + t;
            let range = layout.action_range(at);
            out.as_mut_slice()[range].copy_from_slice(seg.action(t));
            out.set_state(at + 1, seg.state(t + 1));
        }
    }
    Ok(out)
}
