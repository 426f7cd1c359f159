pub mod eval;
pub mod gap;
pub mod gen_data;
pub mod plan;
pub mod plot;
pub mod train;

use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use crate::Shared;
use lomap_core::io::ArtifactMeta;

/// Merges defaults, the `--config` file, named flags and `--set` entries.
pub fn settings(
    command: &'static str,
    defaults: &[(&str, &str)],
    shared: &Shared,
    named: Vec<(&str, Option<String>)>,
) -> Result<RunConfig> {
    let mut flags: Vec<(String, Option<String>)> = named.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    for entry in &shared.set {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| Failure::Param(format!("--set expects key=value, got '{entry}'")))?;
        flags.push((k.trim().to_string(), Some(v.trim().to_string())));
    }
    RunConfig::new(command, defaults, shared.config.as_deref(), flags)
}

pub fn meta(cfg: &RunConfig, seed: u64) -> ArtifactMeta {
    ArtifactMeta {
        seed,
        config_hash: cfg.hash(),
    }
}

pub fn some<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|v| v.to_string())
}
