//! `LMPC` network checkpoints.

use super::codec::{ArtifactMeta, Decoder, Encoder};
use crate::denoiser::{Activation, ConditionedMlp, Mlp, TimeEmbedding};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::synthworld::Normalizer;
use crate::trajectory::TrajectoryLayout;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LMPC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    Denoiser,
    Guide,
}

impl ModelRole {
    fn tag(self) -> u8 {
        match self {
            ModelRole::Denoiser => 0,
            ModelRole::Guide => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(ModelRole::Denoiser),
            1 => Ok(ModelRole::Guide),
            other => Err(Error::Format(format!("unknown model role {other}"))),
        }
    }
}

/// A trained network with the schedule, layout and scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: ModelRole,
    pub net: ConditionedMlp,
    pub schedule: NoiseSchedule,
    pub layout: TrajectoryLayout,
    pub normalizer: Option<Normalizer>,
}

/// Parameters are stored as `f32`; everything else is exact.
pub fn encode_checkpoint(ck: &Checkpoint, meta: &ArtifactMeta) -> Result<Vec<u8>> {
    let mut e = Encoder::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, meta);
    e.u8(ck.role.tag());
    let l = ck.layout;
    e.len32(l.horizon)?;
    e.len32(l.state_dim)?;
    e.len32(l.action_dim)?;
    let s = &ck.schedule;
    e.u8(s.kind().tag());
    e.len32(s.steps())?;
    let (lo, hi) = s.beta_bounds();
    e.f64(lo);
    e.f64(hi);
    for b in s.betas() {
        e.f64(*b);
    }
    match &ck.normalizer {
        None => e.len32(0)?,
        Some(n) => {
            e.len32(n.period())?;
            for v in n.lo().iter().chain(n.hi()) {
                e.f64(*v);
            }
        }
    }
    let net = ck.net.net();
    e.u8(net.activation().tag());
    e.len32(ck.net.data_dim())?;
    e.len32(ck.net.embedding().width())?;
    e.len32(ck.net.embedding().steps())?;
    let sizes = net.sizes();
    e.len32(sizes.len())?;
    for s in &sizes {
        e.len32(*s)?;
    }
    for p in net.params() {
        e.f32(p);
    }
    Ok(e.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Checkpoint, ArtifactMeta)> {
    let fmt = |e: Error| Error::Format(e.to_string());
    let (mut d, meta) = Decoder::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let role = ModelRole::from_tag(d.u8()?)?;
    let layout = TrajectoryLayout::new(d.usize32()?, d.usize32()?, d.usize32()?).map_err(fmt)?;
    let kind = ScheduleKind::from_tag(d.u8()?).map_err(fmt)?;
    let steps = d.usize32()?;
    let (lo, hi) = (d.f64()?, d.f64()?);
    d.expect_block(steps, 8)?;
    let betas = (0..steps).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
    let schedule = match kind {
        ScheduleKind::Explicit => NoiseSchedule::from_betas(&betas, true),
        other => NoiseSchedule::build(steps, other, lo, hi, true),
    }
    .map_err(fmt)?;
    if schedule.betas() != &betas[..] {
        return Err(Error::Format("stored betas disagree with the schedule".into()));
    }
    let period = d.usize32()?;
    let normalizer = if period == 0 {
        None
    } else {
        d.expect_block(2 * period, 8)?;
        let lo = (0..period).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
        let hi = (0..period).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
        Some(Normalizer::from_bounds(lo, hi).map_err(fmt)?)
    };
    let activation = Activation::from_tag(d.u8()?).map_err(fmt)?;
    let data_dim = d.usize32()?;
    let (width, emb_steps) = (d.usize32()?, d.usize32()?);
    let n_sizes = d.usize32()?;
    d.expect_block(n_sizes, 4)?;
    let sizes = (0..n_sizes).map(|_| d.usize32()).collect::<Result<Vec<_>>>()?;
    let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    d.expect_block(count, 4)?;
    let params = (0..count).map(|_| d.f32()).collect::<Result<Vec<_>>>()?;
    d.finish()?;
    let net = Mlp::from_flat(&sizes, activation, &params).map_err(fmt)?;
    let net = ConditionedMlp::new(net, TimeEmbedding::new(width, emb_steps), data_dim).map_err(fmt)?;
    if role == ModelRole::Denoiser && net.output_dim() != layout.dim() {
        return Err(Error::Format("denoiser output does not match the layout".into()));
    }
    if emb_steps != schedule.steps() {
        return Err(Error::Format("embedding and schedule step counts differ".into()));
    }
    Ok((
        Checkpoint {
            role,
            net,
            schedule,
            layout,
            normalizer,
        },
        meta,
    ))
}
