//! Return functions, the MSE-trained guide and the guidance-gap laboratory.

mod gap;
mod guide;
mod returns;

pub use gap::{
    exact_guidance_mc, fit_loglog, gap_scaling_experiment, guidance_gap, mse_guidance_mc,
    GapReport, GuidanceEstimate, ReturnFamily, ScalingResult, ScalingRow,
};
pub use guide::{apply_guidance, train_mse_guide, LinearGuide, MseGuide, ReturnGuide};
pub use returns::{ReturnFunction, ReturnKind};
