use super::settings;
use super::train::schedule;
use crate::config::RunConfig;
use crate::fail::{Failure, Result};
use crate::output::{fmt, out_dir, stamp_svg, write_csv, write_file, write_meta};
use crate::Shared;
use clap::Args;
use lomap_core::guidance::{gap_scaling_experiment, ReturnFamily, ScalingResult};
use plotters::prelude::*;

const KEYS: &[(&str, &str)] = &[
    ("dims", "4,16,64,256"),
    ("step", "10"),
    ("family", "quadratic"),
    ("samples", "100000"),
    ("trials", "20"),
    ("schedule", "cosine"),
    ("diffusion_steps", "20"),
    ("beta_min", "0.0001"),
    ("beta_max", "0.999"),
];

#[derive(Args, Debug)]
pub struct Flags {
    /// Comma-separated dimensions: at least three, spanning a decade.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    step: Option<usize>,
    /// quadratic, quadratic-normalized, constant or linear.
    #[arg(long)]
    family: Option<String>,
    /// Monte-Carlo samples per estimate.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

fn figure(result: &ScalingResult) -> Result<String> {
    let xs: Vec<f64> = result.rows.iter().map(|r| r.dim as f64).collect();
    let ys: Vec<f64> = result.rows.iter().map(|r| r.delta_mean.max(f64::MIN_POSITIVE)).collect();
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = (lo(&xs) / 1.5, hi(&xs) * 1.5);
    let (y0, y1) = (lo(&ys) / 2.0, hi(&ys) * 2.0);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (640, 480)).into_drawing_area();
        let err = |e: &dyn std::fmt::Display| Failure::Data(format!("drawing failed: {e}"));
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let caption = match result.fit {
            Some((slope, _)) => format!("guidance gap vs dimension (slope {slope:.3})"),
            None => "guidance gap vs dimension (unresolved)".to_string(),
        };
        let mut chart = ChartBuilder::on(&root)
            .caption(caption, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
            .map_err(|e| err(&e))?;
        chart
            .configure_mesh()
            .x_desc("dimension")
            .y_desc("mean gap")
            .draw()
            .map_err(|e| err(&e))?;
        chart
            .draw_series(xs.iter().zip(&ys).map(|(&x, &y)| Circle::new((x, y), 4, BLUE.filled())))
            .map_err(|e| err(&e))?;
        if let Some((slope, intercept)) = result.fit {
            let line = |x: f64| (intercept + slope * x.ln()).exp();
            chart
                .draw_series(LineSeries::new([(x0, line(x0)), (x1, line(x1))], &BLACK))
                .map_err(|e| err(&e))?;
        }
        root.present().map_err(|e| err(&e))?;
    }
    Ok(svg)
}

fn rows(result: &ScalingResult) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                "data".to_string(),
                r.dim.to_string(),
                r.step.to_string(),
                r.samples.to_string(),
                fmt(r.delta_mean),
                fmt(r.delta_stderr),
                fmt(r.noise_floor),
                String::new(),
                String::new(),
            ]
        })
        .collect();
    let mut summary = vec![String::new(); 9];
    match result.fit {
        Some((slope, intercept)) => {
            summary[0] = "fit".into();
            summary[7] = fmt(slope);
            summary[8] = fmt(intercept);
        }
        None => summary[0] = "degenerate".into(),
    }
    out.push(summary);
    out
}

pub fn run(shared: &Shared, f: Flags) -> Result<()> {
    let cfg: RunConfig = settings(
        "gap",
        KEYS,
        shared,
        vec![
            ("dims", f.dims),
            ("step", super::some(f.step)),
            ("family", f.family),
            ("samples", super::some(f.samples)),
            ("trials", super::some(f.trials)),
        ],
    )?;
    let dims: Vec<usize> = cfg.list("dims")?;
    let family: ReturnFamily = cfg.get("family")?;
    let sched = schedule(&cfg)?;
    let result = gap_scaling_experiment(
        &dims,
        cfg.get("step")?,
        family,
        &sched,
        cfg.get("samples")?,
        cfg.get("trials")?,
        shared.seed,
    )?;
    let dir = out_dir(shared.out.as_deref(), "gap")?;
    write_csv(
        &dir.join("gap.csv"),
        &["kind", "dim", "step", "samples", "delta_mean", "delta_stderr", "noise_floor", "slope", "intercept"],
        &rows(&result),
        &cfg,
    )?;
    let svg = figure(&result)?;
    write_file(&dir.join("gap.svg"), stamp_svg(&svg, &cfg, shared.seed).as_bytes())?;
    write_meta(&dir, &cfg, shared.seed, &[])?;
    match result.fit {
        Some((slope, _)) => println!("slope {slope:.4}; wrote {}", dir.display()),
        None => println!("gap not resolved above the noise floor; wrote {}", dir.display()),
    }
    Ok(())
}
