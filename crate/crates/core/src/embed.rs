//! Embedding a finite metric space into a manifold: an srGW warm start on a
//! jittered grid followed by Adam on the stress functional.
//!
//! Stress is `S = 1/2 sum_{i,j} (dx[i,j] - d(y_i, y_j))^2` over ordered
//! pairs. Under uniform weights the induced Monge coupling has
//! `dis_2 = sqrt(S / 2) / n`.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifolds::{self, grid, pairwise_distances, random_point, ManifoldKind, ManifoldPoint};
use crate::mmspace::MetricMeasureSpace;
use crate::srgw::{solve_srgw2, SolverConfig};
use crate::{Error, Result};

/// Stress blow-up factor (relative to the best seen) that triggers a
/// learning-rate halving.
pub const BLOWUP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct EmbeddingProblem {
    pub space: MetricMeasureSpace,
    pub manifold: ManifoldKind,
    pub learn_scale: bool,
    pub grid_count: usize,
    pub jitter: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl EmbeddingProblem {
    pub fn new(space: MetricMeasureSpace, manifold: ManifoldKind) -> Self {
        Self {
            space,
            manifold,
            learn_scale: false,
            grid_count: 100,
            jitter: 0.1,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.space.is_empty() {
            return Err(Error::Structural("cannot embed an empty space".into()));
        }
        if self.grid_count == 0 {
            return Err(Error::Domain("grid_count must be at least 1".into()));
        }
        if self.grid_count < self.space.len() {
            log::warn!(
                "grid of {} points is smaller than the {}-point space",
                self.grid_count,
                self.space.len()
            );
        }
        Ok(())
    }

    /// Starting radius. With scale learning on, the manifold is sized so its
    /// diameter matches the data's; otherwise the given radius is kept.
    pub fn initial_scale(&self) -> f64 {
        let diam = self.space.diameter();
        if self.learn_scale && self.manifold.has_radius() && diam > 0.0 {
            diam / PI
        } else {
            self.manifold.radius()
        }
    }

    fn learns_scale(&self) -> bool {
        self.learn_scale && self.manifold.has_radius()
    }

    /// Euclidean grids and random starts live on the unit cube; this factor
    /// stretches them to the data's diameter.
    fn euclidean_stretch(&self) -> f64 {
        match self.manifold {
            ManifoldKind::Euclidean { dim } => {
                let diam = self.space.diameter();
                if diam > 0.0 {
                    diam / (dim as f64).sqrt()
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    pub rel_threshold: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_steps: 10_000,
            rel_threshold: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Domain(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain("epsilon must be positive".into()));
        }
        if !(self.rel_threshold >= 0.0) {
            return Err(Error::Domain("rel_threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

/// What the srGW stage produced before gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub map: Vec<usize>,
    pub srgw_distortion: f64,
    pub srgw_iterations: usize,
    pub stress: f64,
    pub dis2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub manifold: ManifoldKind,
    pub points: Vec<ManifoldPoint>,
    pub scale: f64,
    pub stress: f64,
    pub dis2: f64,
    pub trace: Vec<f64>,
    pub circular_coords: Option<Vec<f64>>,
    pub steps: usize,
    pub final_learning_rate: f64,
    pub warm_start: Option<WarmStart>,
}

fn flatten(points: &[ManifoldPoint]) -> Vec<f64> {
    points.iter().flat_map(|p| p.chart().iter().copied()).collect()
}

fn unflatten(kind: &ManifoldKind, charts: &[f64]) -> Result<Vec<ManifoldPoint>> {
    charts.chunks(kind.chart_dim()).map(|c| kind.point_from_chart(c)).collect()
}

fn check_inputs(points: &[ManifoldPoint], kind: &ManifoldKind, dx: &Array2<f64>) -> Result<()> {
    if dx.dim() != (points.len(), points.len()) {
        return Err(Error::Structural(format!(
            "{} points against a {}x{} distance matrix",
            points.len(),
            dx.nrows(),
            dx.ncols()
        )));
    }
    points.iter().try_for_each(|p| kind.check_point(p))
}

/// Stress over flat chart coordinates. Row sums are formed in parallel and
/// added in index order.
fn stress_flat(kind: &ManifoldKind, charts: &[f64], radius: f64, dx: &Array2<f64>) -> f64 {
    let k = kind.chart_dim();
    let n = dx.nrows();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &charts[i * k..(i + 1) * k];
            (0..n)
                .map(|j| {
                    let e = dx[[i, j]] - radius * manifolds::unit_distance(kind, a, &charts[j * k..(j + 1) * k]);
                    e * e
                })
                .sum::<f64>()
        })
        .collect();
    0.5 * rows.iter().sum::<f64>()
}

/// Stress, its chart gradient and its derivative with respect to log-radius.
fn stress_and_gradient_flat(kind: &ManifoldKind, charts: &[f64], radius: f64, dx: &Array2<f64>) -> (f64, Vec<f64>, f64) {
    let k = kind.chart_dim();
    let n = dx.nrows();
    let rows: Vec<(f64, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &charts[i * k..(i + 1) * k];
            let mut g = vec![0.0; k];
            let mut scratch = vec![0.0; k];
            let (mut sq, mut scale) = (0.0, 0.0);
            for j in 0..n {
                let u = manifolds::unit_distance_gradient(kind, a, &charts[j * k..(j + 1) * k], &mut scratch);
                let d = radius * u;
                let e = dx[[i, j]] - d;
                sq += e * e;
                scale -= e * d;
                for (gv, s) in g.iter_mut().zip(&scratch) {
                    *gv -= 2.0 * e * radius * s;
                }
            }
            (sq, g, scale)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    let mut dscale = 0.0;
    for (sq, g, s) in rows {
        total += sq;
        grad.extend(g);
        dscale += s;
    }
    (0.5 * total, grad, dscale)
}

/// `1/2 sum_{i,j} (dx[i,j] - d(y_i, y_j))^2` over ordered pairs, with the
/// distance scaled by the manifold's radius.
pub fn stress(points: &[ManifoldPoint], manifold: &ManifoldKind, dx: &Array2<f64>) -> Result<f64> {
    check_inputs(points, manifold, dx)?;
    Ok(stress_flat(manifold, &flatten(points), manifold.radius(), dx))
}

/// Chart gradient of the stress per point and, when `learn_scale` is set and
/// the manifold has a radius, the derivative with respect to log-radius.
pub fn stress_gradient(
    points: &[ManifoldPoint],
    manifold: &ManifoldKind,
    dx: &Array2<f64>,
    learn_scale: bool,
) -> Result<(Vec<Vec<f64>>, Option<f64>)> {
    check_inputs(points, manifold, dx)?;
    let (_, g, ds) = stress_and_gradient_flat(manifold, &flatten(points), manifold.radius(), dx);
    let per_point = g.chunks(manifold.chart_dim()).map(<[f64]>::to_vec).collect();
    Ok((per_point, (learn_scale && manifold.has_radius()).then_some(ds)))
}

/// `1/2 (sum_{i,j} w_i w_j e_ij^2)^(1/2)` for an embedding given as a
/// distance matrix.
pub fn embedding_dis2(space: &MetricMeasureSpace, embedded: &Array2<f64>) -> f64 {
    let w = space.weights();
    let dx = space.distances();
    let mut acc = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            let e = dx[[i, j]] - embedded[[i, j]];
            acc += w[i] * w[j] * e * e;
        }
    }
    0.5 * acc.sqrt()
}

/// Position in `[0, 1)` counter-clockwise from angle 0.
pub fn circular_coordinate(point: &ManifoldPoint) -> Result<f64> {
    match point {
        ManifoldPoint::Angle(a) => {
            let c = manifolds::wrap_angle(*a) / TAU;
            Ok(if c >= 1.0 { 0.0 } else { c })
        }
        _ => Err(Error::Domain("circular coordinates exist only for circle points".into())),
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// Writes the descent step for `grad` into `step`.
    fn step(&mut self, grad: &[f64], lr: f64, cfg: &OptimizerConfig, step: &mut [f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..grad.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            step[i] = -lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Adam on the stress, in chart coordinates, retracting after every step.
/// Returns the best configuration seen; its stress is the last trace entry.
pub fn optimize(
    problem: &EmbeddingProblem,
    init_points: &[ManifoldPoint],
    init_scale: f64,
    cfg: &OptimizerConfig,
) -> Result<EmbeddingResult> {
    problem.validate()?;
    cfg.validate()?;
    if !(init_scale > 0.0 && init_scale.is_finite()) {
        return Err(Error::Domain(format!("initial scale must be positive, got {init_scale}")));
    }
    let kind = problem.manifold;
    let dx = problem.space.distances();
    check_inputs(init_points, &kind, dx)?;
    let learn = problem.learns_scale();
    let k = kind.chart_dim();
    let n = init_points.len();

    let mut charts = flatten(init_points);
    let mut log_r = if kind.has_radius() { init_scale.ln() } else { 0.0 };
    let radius = |lr: f64| match (learn, kind.has_radius()) {
        (true, _) => lr.exp(),
        (false, true) => init_scale,
        (false, false) => 1.0,
    };

    let (mut value, mut grad, mut dscale) = stress_and_gradient_flat(&kind, &charts, radius(log_r), dx);
    if !value.is_finite() {
        return Err(Error::Numerical { message: "initial stress is not finite".into(), trace: vec![value] });
    }
    let mut trace = vec![value];
    let mut best = (value, charts.clone(), log_r);
    let mut lr = cfg.learning_rate;
    let mut adam = Adam::new(n * k);
    let mut adam_scale = Adam::new(1);
    let mut step = vec![0.0; n * k];
    let mut scale_step = [0.0];
    let mut steps = 0;

    while steps < cfg.max_steps && value > 0.0 {
        steps += 1;
        adam.step(&grad, lr, cfg, &mut step);
        for i in 0..n {
            manifolds::retract_chart(&kind, &mut charts[i * k..(i + 1) * k], &step[i * k..(i + 1) * k])?;
        }
        if learn {
            adam_scale.step(&[dscale], lr, cfg, &mut scale_step);
            log_r += scale_step[0];
        }
        let (next, next_grad, next_dscale) = stress_and_gradient_flat(&kind, &charts, radius(log_r), dx);
        trace.push(next);
        if !next.is_finite() {
            return Err(Error::Numerical { message: format!("stress diverged at step {steps}"), trace });
        }
        if next > BLOWUP_FACTOR * best.0 {
            lr *= 0.5;
            log::debug!("stress blew up to {next:e} at step {steps}; learning rate now {lr:e}");
            charts.clone_from(&best.1);
            log_r = best.2;
            adam.reset();
            adam_scale.reset();
            (value, grad, dscale) = stress_and_gradient_flat(&kind, &charts, radius(log_r), dx);
            continue;
        }
        if next < best.0 {
            best = (next, charts.clone(), log_r);
        }
        let rel = (value - next).abs() / value;
        value = next;
        grad = next_grad;
        dscale = next_dscale;
        if rel < cfg.rel_threshold {
            break;
        }
    }

    let (stress_value, best_charts, best_log_r) = best;
    if trace.last() != Some(&stress_value) {
        trace.push(stress_value);
    }
    let final_kind = kind.with_radius(radius(best_log_r));
    let points = unflatten(&final_kind, &best_charts)?;
    let embedded = pairwise_distances(&final_kind, &points);
    let circular_coords = match kind {
        ManifoldKind::Circle { .. } => Some(points.iter().map(circular_coordinate).collect::<Result<Vec<_>>>()?),
        _ => None,
    };
    Ok(EmbeddingResult {
        manifold: final_kind,
        scale: final_kind.radius(),
        stress: stress_value,
        dis2: embedding_dis2(&problem.space, &embedded),
        trace,
        circular_coords,
        steps,
        final_learning_rate: lr,
        warm_start: None,
        points,
    })
}

fn stretch(points: Vec<ManifoldPoint>, factor: f64) -> Vec<ManifoldPoint> {
    if factor == 1.0 {
        return points;
    }
    points
        .into_iter()
        .map(|p| match p {
            ManifoldPoint::Coords(c) => ManifoldPoint::Coords(c.into_iter().map(|v| v * factor).collect()),
            other => other,
        })
        .collect()
}

/// srGW onto a jittered grid, Monge rounding, then [`optimize`] from the
/// grid points the map selects.
pub fn srgw_gd(problem: &EmbeddingProblem, cfg: &OptimizerConfig) -> Result<EmbeddingResult> {
    problem.validate()?;
    cfg.validate()?;
    let scale = problem.initial_scale();
    let kind = problem.manifold.with_radius(scale);
    let sites = stretch(grid(&kind, problem.grid_count, problem.jitter, problem.seed)?, problem.euclidean_stretch());
    let dy = pairwise_distances(&kind, &sites);
    let solution = solve_srgw2(&problem.space, &dy, &problem.solver)?;
    let map = match &solution.monge_map {
        Some(f) => f.clone(),
        None => solution
            .coupling
            .plan()
            .rows()
            .into_iter()
            .map(|row| {
                // heaviest column, lowest index on ties
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect(),
    };
    let init: Vec<ManifoldPoint> = map.iter().map(|&j| sites[j].clone()).collect();
    let init_stress = stress_flat(&kind, &flatten(&init), kind.radius(), problem.space.distances());
    let init_dis2 = embedding_dis2(&problem.space, &pairwise_distances(&kind, &init));
    log::info!(
        "srGW warm start: dis2 {:.6} after {} iterations",
        solution.distortion,
        solution.iterations
    );
    let mut result = optimize(problem, &init, scale, cfg)?;
    result.warm_start = Some(WarmStart {
        map,
        srgw_distortion: solution.distortion,
        srgw_iterations: solution.iterations,
        stress: init_stress,
        dis2: init_dis2,
    });
    Ok(result)
}

/// Gradient descent from `trials` independent uniform random starts. Trial
/// `t` draws from stream `t` of a generator seeded by `problem.seed`. A
/// failing trial is reported in place and does not stop the others.
pub fn random_init_gd(problem: &EmbeddingProblem, trials: usize, cfg: &OptimizerConfig) -> Result<Vec<Result<EmbeddingResult>>> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    problem.validate()?;
    cfg.validate()?;
    let scale = problem.initial_scale();
    let kind = problem.manifold.with_radius(scale);
    let n = problem.space.len();
    Ok((0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
            rng.set_stream(t as u64);
            let init: Vec<ManifoldPoint> = (0..n).map(|_| random_point(&kind, &mut rng)).collect();
            optimize(problem, &stretch(init, problem.euclidean_stretch()), scale, cfg)
        })
        .collect())
}

/// Final `dis2` statistics over the successful trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub succeeded: usize,
    pub failed: usize,
}

impl TrialSummary {
    /// `None` when every trial failed.
    pub fn from_results(results: &[Result<EmbeddingResult>]) -> Option<Self> {
        let mut values: Vec<f64> = results.iter().filter_map(|r| r.as_ref().ok().map(|e| e.dis2)).collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let len = values.len();
        let median = if len % 2 == 1 {
            values[len / 2]
        } else {
            0.5 * (values[len / 2 - 1] + values[len / 2])
        };
        Some(Self {
            min: values[0],
            max: values[len - 1],
            median,
            succeeded: len,
            failed: results.len() - len,
        })
    }
}
