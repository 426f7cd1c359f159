//! Output files: CSV tables, run metadata and SVG provenance.

use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Creates the output directory if needed.
pub fn out_dir(out: Option<&Path>, default: &str) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

/// Writes a header row and records to `path`; every record gains a trailing
/// `config_hash` column.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], cfg: &RunConfig) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<&str> = header.to_vec();
    head.push("config_hash");
    w.write_record(&head)?;
    let hash = cfg.hash_hex();
    for row in rows {
        let mut rec = row.clone();
        rec.push(hash.clone());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Data(e.to_string()))?;
    write_file(path, &bytes)
}

/// `run.meta`: version, seed, hash and the effective configuration.
pub fn write_meta(dir: &Path, cfg: &RunConfig, seed: u64, extra: &[(&str, String)]) -> Result<()> {
    let mut text = format!("version={VERSION}\nseed={seed}\nconfig_hash={}\n", cfg.hash_hex());
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    text.push_str(&cfg.canonical());
    write_file(&dir.join("run.meta"), text.as_bytes())
}

/// Inserts a provenance comment after the XML declaration (or at the top).
pub fn stamp_svg(svg: &str, cfg: &RunConfig, seed: u64) -> String {
    let note = format!(
        "<!-- lomap version={VERSION} seed={seed} config_hash={} -->\n",
        cfg.hash_hex()
    );
    match svg.find("?>") {
        Some(end) if svg.starts_with("<?xml") => {
            let cut = end + 2;
            let rest = svg[cut..].trim_start_matches('\n');
            format!("{}\n{note}{rest}", &svg[..cut])
        }
        _ => format!("{note}{svg}"),
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}
