use super::settings;
use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use crate::output::{out_dir, read_file, stamp_svg, write_file, write_meta};
use crate::world::{self, MAZE_KEYS};
use crate::Shared;
use clap::Args;
use lomap_core::synthworld::MazeSpec;
use plotters::prelude::*;
use std::path::PathBuf;

const KEYS: &[(&str, &str)] = &[("trajectories", ""), ("scale", "40")];

#[derive(Args, Debug)]
pub struct Flags {
    /// CSV with identifier columns, then `t`, `x`, `y`; omit for walls only.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

/// One polyline per distinct identifier prefix, in file order.
pub fn read_paths(bytes: &[u8]) -> Result<Vec<(String, Vec<[f64; 2]>)>> {
    let mut r = csv::Reader::from_reader(bytes);
    let head = r.headers()?.clone();
    let col = |name: &str| {
        head.iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::Data(format!("trajectory CSV has no '{name}' column")))
    };
    let (t, x, y) = (col("t")?, col("x")?, col("y")?);
    let mut paths: Vec<(String, Vec<[f64; 2]>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id: Vec<&str> = rec.iter().take(t).collect();
        let id = id.join("/");
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::Data(format!("bad coordinate '{s}' in trajectory CSV")))
        };
        let p = [num(x)?, num(y)?];
        match paths.last_mut() {
            Some((last, pts)) if *last == id => pts.push(p),
            _ => paths.push((id, vec![p])),
        }
    }
    Ok(paths)
}

pub fn render(maze: &MazeSpec, paths: &[(String, Vec<[f64; 2]>)], scale: f64) -> Result<String> {
    let (w, h) = maze.bounds();
    for (id, pts) in paths {
        if let Some(p) = pts.iter().find(|p| !(0.0..=w).contains(&p[0]) || !(0.0..=h).contains(&p[1])) {
            return Err(Failure::Data(format!(
                "path {id} leaves the maze at ({}, {})",
                p[0], p[1]
            )));
        }
    }
    let px = |p: [f64; 2]| ((p[0] * scale).round() as i32, (p[1] * scale).round() as i32);
    let size = ((w * scale).ceil() as u32, (h * scale).ceil() as u32);
    let err = |e: &dyn std::fmt::Display| Failure::Data(format!("drawing failed: {e}"));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, size).into_drawing_area();
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let cs = maze.cell_size();
        for r in 0..maze.rows() {
            for c in 0..maze.cols() {
                if maze.is_wall(r, c) {
                    let a = px([c as f64 * cs, r as f64 * cs]);
                    let b = px([(c + 1) as f64 * cs, (r + 1) as f64 * cs]);
                    root.draw(&Rectangle::new([a, b], RGBColor(60, 60, 60).filled()))
                        .map_err(|e| err(&e))?;
                }
            }
        }
        for (_, pts) in paths {
            let colour = if maze.path_collides(pts) { RED } else { BLUE };
            let line: Vec<(i32, i32)> = pts.iter().map(|&p| px(p)).collect();
            root.draw(&PathElement::new(line, colour.stroke_width(2)))
                .map_err(|e| err(&e))?;
        }
        let marker = (scale * 0.2).max(3.0) as i32;
        root.draw(&Circle::new(px(maze.start_position()), marker, GREEN.filled()))
            .map_err(|e| err(&e))?;
        root.draw(&Circle::new(px(maze.goal_position()), marker, MAGENTA.filled()))
            .map_err(|e| err(&e))?;
        root.present().map_err(|e| err(&e))?;
    }
    Ok(svg)
}

pub fn run(shared: &Shared, f: Flags) -> Result<()> {
    let defaults = [MAZE_KEYS, KEYS].concat();
    let cfg: RunConfig = settings(
        "plot",
        &defaults,
        shared,
        vec![("trajectories", super::some(f.trajectories.map(|p| p.display().to_string())))],
    )?;
    let scale: f64 = cfg.get("scale")?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Failure::Param(format!("scale={scale}: must be positive")));
    }
    let maze = world::maze(&cfg)?;
    let paths = match cfg.opt::<PathBuf>("trajectories")? {
        Some(p) => read_paths(&read_file(&p)?)?,
        None => Vec::new(),
    };
    let svg = render(&maze, &paths, scale)?;
    let dir = out_dir(shared.out.as_deref(), "plot")?;
    write_file(&dir.join("maze.svg"), stamp_svg(&svg, &cfg, shared.seed).as_bytes())?;
    write_meta(&dir, &cfg, shared.seed, &[])?;
    let hits = paths.iter().filter(|(_, p)| maze.path_collides(p)).count();
    println!("{} paths ({hits} colliding); wrote {}", paths.len(), dir.display());
    Ok(())
}
