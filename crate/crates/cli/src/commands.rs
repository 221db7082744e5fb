use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mvmds_core::datasets::{self, PatternOptions};
use mvmds_core::embed::{self, EmbeddingProblem, EmbeddingResult, OptimizerConfig, WarmStart};
use mvmds_core::io::{self, format_sig};
use mvmds_core::manifolds::ManifoldKind;
use mvmds_core::redistrict::{self, AlignMode};
use mvmds_core::srgw::{self, SolverConfig, SolverInit};
use mvmds_core::{gromov, svg, Error, MetricMeasureSpace, Result};
use serde::Serialize;

use crate::{AlignArg, EmbedArgs, GhArgs, InitArg, OptimizerArgs, PlotArgs, RedistrictArgs, SrgwArgs, SynthArgs, SynthKind};

/// Prefixes I/O failures with the path involved.
fn at_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

fn read_space(path: &Path, weights: Option<&PathBuf>) -> Result<MetricMeasureSpace> {
    let space = at_path(path, io::read_distance_csv(path))?;
    match weights {
        None => Ok(space),
        Some(wp) => {
            let w = at_path(wp, io::read_weights(wp, space.len()))?;
            MetricMeasureSpace::new(space.distances().clone(), Some(w), space.labels().map(<[String]>::to_vec))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    at_path(path, fs::write(path, text).map_err(Error::from))
}

fn optimizer_config(a: &OptimizerArgs) -> Result<OptimizerConfig> {
    let cfg = OptimizerConfig {
        learning_rate: a.lr,
        max_steps: a.max_steps,
        rel_threshold: a.rel_threshold,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn labels_of(space: &MetricMeasureSpace) -> Vec<String> {
    (0..space.len()).map(|i| space.label(i)).collect()
}

fn scatter_for(result: &EmbeddingResult, labels: &[String], title: &str) -> String {
    match &result.circular_coords {
        Some(c) => svg::circle_scatter(c, Some(labels), title),
        None => {
            let charts: Vec<Vec<f64>> = result.points.iter().map(|p| p.chart().to_vec()).collect();
            planar(&charts, labels, title)
        }
    }
}

fn planar(charts: &[Vec<f64>], labels: &[String], title: &str) -> String {
    let pts: Vec<(f64, f64)> = match charts.first().map_or(0, Vec::len) {
        3 => svg::equirectangular(&charts.iter().map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>()),
        1 => charts.iter().map(|c| (c[0], 0.0)).collect(),
        _ => charts.iter().map(|c| (c[0], c[1])).collect(),
    };
    svg::plane_scatter(&pts, Some(labels), title)
}

#[derive(Serialize)]
struct EmbedMetadata<'a> {
    input: String,
    manifold: String,
    learn_scale: bool,
    grid_count: usize,
    jitter: f64,
    seed: u64,
    optimizer: &'a OptimizerConfig,
    solver: &'a SolverConfig,
    scale: f64,
    stress: f64,
    dis2: f64,
    steps: usize,
    final_learning_rate: f64,
    warm_start: &'a Option<WarmStart>,
    trace: &'a [f64],
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let space = read_space(&a.input, a.weights.as_ref())?;
    let cfg = optimizer_config(&a.optimizer)?;
    let mut problem = EmbeddingProblem::new(space, a.manifold);
    problem.learn_scale = a.learn_scale;
    problem.grid_count = a.grid;
    problem.jitter = a.jitter;
    problem.seed = a.seed;
    let result = embed::srgw_gd(&problem, &cfg)?;

    io::write_embedding_csv(&a.output, &problem.space, &result)?;
    let meta = EmbedMetadata {
        input: a.input.display().to_string(),
        manifold: a.manifold.to_string(),
        learn_scale: a.learn_scale,
        grid_count: a.grid,
        jitter: a.jitter,
        seed: a.seed,
        optimizer: &cfg,
        solver: &problem.solver,
        scale: result.scale,
        stress: result.stress,
        dis2: result.dis2,
        steps: result.steps,
        final_learning_rate: result.final_learning_rate,
        warm_start: &result.warm_start,
        trace: &result.trace,
    };
    io::write_metadata(&io::sibling(&a.output, "json"), &meta)?;
    let labels = labels_of(&problem.space);
    write_text(&io::sibling(&a.output, "svg"), &scatter_for(&result, &labels, "embedding"))?;
    if let Some(c) = &result.circular_coords {
        io::write_histogram_csv(&io::suffixed(&a.output, "_hist", "csv"), c)?;
    }
    println!("dis2 = {}", format_sig(result.dis2, 6));
    println!("stress = {}", format_sig(result.stress, 6));
    println!("scale = {}", format_sig(result.scale, 6));
    if let Some(w) = &result.warm_start {
        println!("warm start dis2 = {}", format_sig(w.dis2, 6));
    }
    println!("steps = {}", result.steps);
    Ok(())
}

pub fn srgw(a: &SrgwArgs) -> Result<()> {
    let x = read_space(&a.x, a.x_weights.as_ref())?;
    let y = read_space(&a.y, None)?;
    let init = match (a.init, a.seed) {
        (InitArg::Product, _) => SolverInit::Product,
        (InitArg::Random, Some(s)) => SolverInit::Random(s),
        (InitArg::Random, None) => return Err(Error::Domain("--init random needs --seed".into())),
    };
    let cfg = SolverConfig {
        max_iterations: a.max_iter,
        rel_tolerance: a.tol,
        init,
        polish_budget: a.polish_budget,
        ..Default::default()
    };
    let result = srgw::solve_srgw2(&x, y.distances(), &cfg)?;
    if let Some(out) = &a.output {
        io::write_coupling(out, &io::sibling(out, "json"), &x, &result)?;
    }
    println!("dis2 = {}", format_sig(result.distortion, 6));
    println!("unrounded dis2 = {}", format_sig(result.unrounded_distortion, 6));
    println!("iterations = {}", result.iterations);
    if let Some(f) = &result.monge_map {
        let mut line = String::from("map =");
        for t in f {
            let _ = write!(line, " {t}");
        }
        println!("{line}");
    }
    Ok(())
}

#[derive(Serialize)]
struct GhReport {
    srgh_xy: f64,
    srgh_yx: f64,
    mgh: f64,
    map_xy: Vec<usize>,
    map_yx: Vec<usize>,
}

pub fn gh(a: &GhArgs) -> Result<()> {
    let x = read_space(&a.x, None)?;
    let y = read_space(&a.y, None)?;
    let (xy, fxy) = gromov::srgh_with_map(x.distances(), y.distances())?;
    let (yx, fyx) = gromov::srgh_with_map(y.distances(), x.distances())?;
    let report = GhReport {
        srgh_xy: xy,
        srgh_yx: yx,
        mgh: xy.max(yx),
        map_xy: fxy.targets().to_vec(),
        map_yx: fyx.targets().to_vec(),
    };
    if let Some(out) = &a.output {
        io::write_metadata(out, &report)?;
    }
    println!("srgh(X,Y) = {}", format_sig(report.srgh_xy, 6));
    println!("srgh(Y,X) = {}", format_sig(report.srgh_yx, 6));
    println!("mgh = {}", format_sig(report.mgh, 6));
    Ok(())
}

fn write_points(path: &Path, header: &str, rows: impl Iterator<Item = (String, Vec<f64>)>) -> Result<()> {
    let mut text = format!("{header}\n");
    for (id, values) in rows {
        text.push_str(&id);
        for v in values {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    match &a.kind {
        SynthKind::Pattern { anchors, samples, two_fold, seed, output } => {
            let mut opts = PatternOptions::new(*anchors, *samples, *seed);
            opts.two_fold = *two_fold;
            let p = datasets::rotated_pattern_with(&opts)?;
            io::write_distance_csv(output, &p.space)?;
            write_points(
                &io::suffixed(output, "_angles", "csv"),
                "id,angle",
                p.angles.iter().enumerate().map(|(i, &t)| (p.space.label(i), vec![t])),
            )?;
            println!("wrote {} samples to {}", p.space.len(), output.display());
        }
        SynthKind::Manifold { manifold, n, noise, seed, output } => {
            let (points, space) = datasets::sample_manifold(manifold, *n, *noise, *seed)?;
            io::write_distance_csv(output, &space)?;
            let header = (0..manifold.chart_dim()).fold(String::from("id"), |mut h, k| {
                let _ = write!(h, ",coord_{k}");
                h
            });
            write_points(
                &io::suffixed(output, "_points", "csv"),
                &header,
                points.iter().enumerate().map(|(i, p)| (i.to_string(), p.chart().to_vec())),
            )?;
            println!("wrote {n} samples on {manifold} to {}", output.display());
        }
        SynthKind::Cities { n, seed, output } => {
            let (points, space, fallbacks) = datasets::cities(*n, *seed)?;
            io::write_distance_csv(output, &space)?;
            write_points(
                &io::suffixed(output, "_locations", "csv"),
                "id,latitude,longitude",
                points.iter().enumerate().map(|(i, p)| (space.label(i), vec![p.latitude, p.longitude])),
            )?;
            println!("wrote {n} locations to {} ({fallbacks} spherical fallbacks)", output.display());
        }
        SynthKind::Plans { plans, units, flip, seed, output } => {
            let e = redistrict::synthetic_ensemble(*plans, *units, *flip, *seed)?;
            io::write_plans_csv(output, &e)?;
            println!("wrote {plans} plans over {units} units to {}", output.display());
        }
    }
    Ok(())
}

pub fn redistrict(a: &RedistrictArgs) -> Result<()> {
    let ensemble = at_path(&a.plans, io::read_plans_csv(&a.plans))?;
    let space = redistrict::ensemble_distances(&ensemble)?;
    let cfg = optimizer_config(&a.optimizer)?;
    let mut problem = EmbeddingProblem::new(space, ManifoldKind::circle(1.0)?);
    problem.learn_scale = true;
    problem.grid_count = a.grid;
    problem.jitter = a.jitter;
    problem.seed = a.seed;
    let result = embed::srgw_gd(&problem, &cfg)?;
    let coords = result
        .circular_coords
        .as_ref()
        .ok_or_else(|| Error::Domain("circle embedding produced no circular coordinates".into()))?;
    let mode = match a.align {
        AlignArg::ArcFirst => AlignMode::ArcFirst,
        AlignArg::EnsembleFirst => AlignMode::EnsembleFirst,
    };
    let arcs = redistrict::arc_summaries(coords, &ensemble, a.arcs, mode)?;
    at_path(&a.out_dir, fs::create_dir_all(&a.out_dir).map_err(Error::from))?;
    let files = io::write_arc_summaries(&a.out_dir, &a.prefix, &ensemble, &arcs)?;
    let emb_path = a.out_dir.join(format!("{}_embedding.csv", a.prefix));
    io::write_embedding_csv(&emb_path, &problem.space, &result)?;
    let labels = labels_of(&problem.space);
    write_text(
        &a.out_dir.join(format!("{}_scatter.svg", a.prefix)),
        &svg::circle_scatter(coords, Some(&labels), "plans"),
    )?;
    io::write_histogram_csv(&a.out_dir.join(format!("{}_hist.csv", a.prefix)), coords)?;
    println!("dis2 = {}", format_sig(result.dis2, 6));
    println!("scale = {}", format_sig(result.scale, 6));
    for arc in &arcs {
        println!("arc {}: {} plans", arc.arc_index, arc.plan_indices.len());
    }
    println!("wrote {} arc files to {}", files.len() - 1, a.out_dir.display());
    Ok(())
}

pub fn plot(a: &PlotArgs) -> Result<()> {
    let table = at_path(&a.input, io::read_embedding_csv(&a.input))?;
    let text = match &table.circular {
        Some(c) => svg::circle_scatter(c, Some(&table.ids), "embedding"),
        None => planar(&table.coords, &table.ids, "embedding"),
    };
    write_text(&a.output, &text)?;
    if let Some(h) = &a.hist {
        let c = table
            .circular
            .as_ref()
            .ok_or_else(|| Error::Domain("histogram needs a circular_coordinate column".into()))?;
        io::write_histogram_csv(h, c)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvmds_core::manifolds::ManifoldPoint;

    #[test]
    fn planar_projection_by_dimension() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let line = planar(&[vec![0.0], vec![1.0]], &labels, "t");
        assert!(line.contains("cx=\"360.000\" cy=\"360.000\""));
        let sphere = planar(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], &labels, "t");
        assert!(sphere.contains("<title>b</title>"));
    }

    #[test]
    fn circle_results_plot_on_the_circle() {
        let result = EmbeddingResult {
            manifold: ManifoldKind::circle(1.0).unwrap(),
            points: vec![ManifoldPoint::Angle(0.0)],
            scale: 1.0,
            stress: 0.0,
            dis2: 0.0,
            trace: vec![0.0],
            circular_coords: Some(vec![0.0]),
            steps: 0,
            final_learning_rate: 0.01,
            warm_start: None,
        };
        let s = scatter_for(&result, &["p".to_string()], "t");
        assert!(s.contains("cx=\"360.000\" cy=\"200.000\""));
    }
}
