//! Semi-relaxed Gromov-Wasserstein distortions, a conditional-gradient
//! (Frank-Wolfe) solver for the p = 2 problem, and Monge rounding.
//!
//! A semi-coupling only prescribes its row marginal, so the feasible set is a
//! product of scaled simplices, one per source point. Its vertices put all of
//! a row's mass on a single column, which makes the linear minimization
//! oracle a row-wise argmin and lets rounding replace one row at a time.

use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mmspace::{validate_metric, MetricMeasureSpace};
use crate::{Error, Result};

/// Tolerance on each row sum of a semi-coupling.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Default relative support threshold: an entry is in the support when it
/// exceeds this factor times the largest plan entry.
pub const DEFAULT_SUPPORT_REL: f64 = 1e-12;
pub const DEFAULT_POLISH_BUDGET: usize = 10_000_000;

const MAX_ROUNDING_PASSES: usize = 10;

/// An n x m nonnegative plan whose row sums equal the source weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiCoupling {
    plan: Array2<f64>,
    source_weights: Vec<f64>,
}

impl SemiCoupling {
    pub fn new(plan: Array2<f64>, source_weights: Vec<f64>) -> Result<Self> {
        let (n, m) = plan.dim();
        if n != source_weights.len() {
            return Err(Error::Structural(format!(
                "plan has {n} rows but {} source weights",
                source_weights.len()
            )));
        }
        if m == 0 {
            return Err(Error::Structural("plan has no columns".into()));
        }
        if let Some(((i, j), v)) = plan.indexed_iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("plan entry ({i},{j}) = {v} is not a finite nonnegative mass")));
        }
        for (i, row) in plan.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - source_weights[i]).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!(
                    "row {i} sums to {s}, source weight is {}",
                    source_weights[i]
                )));
            }
        }
        Ok(Self { plan, source_weights })
    }

    /// `mu (x) uniform(m)`.
    pub fn product(source_weights: &[f64], m: usize) -> Self {
        let n = source_weights.len();
        let plan = Array2::from_shape_fn((n, m), |(i, _)| source_weights[i] / m as f64);
        Self {
            plan,
            source_weights: source_weights.to_vec(),
        }
    }

    /// The semi-coupling induced by a map `f`: row `i` is a Dirac of mass
    /// `w_i` at column `f[i]`.
    pub fn from_map(f: &[usize], source_weights: &[f64], m: usize) -> Result<Self> {
        if f.len() != source_weights.len() {
            return Err(Error::Structural(format!(
                "map has {} entries for {} points",
                f.len(),
                source_weights.len()
            )));
        }
        if let Some(&j) = f.iter().find(|&&j| j >= m) {
            return Err(Error::Domain(format!("map target {j} out of range for {m} columns")));
        }
        let mut plan = Array2::zeros((f.len(), m));
        for (i, &j) in f.iter().enumerate() {
            plan[[i, j]] = source_weights[i];
        }
        Ok(Self {
            plan,
            source_weights: source_weights.to_vec(),
        })
    }

    /// Each row an independent uniform draw, rescaled to the row's mass.
    pub fn random<R: Rng>(source_weights: &[f64], m: usize, rng: &mut R) -> Self {
        let n = source_weights.len();
        let mut plan = Array2::zeros((n, m));
        for i in 0..n {
            let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            for (j, r) in raw.into_iter().enumerate() {
                plan[[i, j]] = source_weights[i] * r / total;
            }
        }
        Self {
            plan,
            source_weights: source_weights.to_vec(),
        }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn source_weights(&self) -> &[f64] {
        &self.source_weights
    }

    pub fn nrows(&self) -> usize {
        self.plan.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.plan.ncols()
    }

    pub fn column_sums(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(0))
    }

    pub fn max_entry(&self) -> f64 {
        self.plan.iter().fold(0.0f64, |a, &v| a.max(v))
    }

    /// Absolute cutoff for a relative support threshold.
    pub fn support_cutoff(&self, relative: f64) -> f64 {
        relative * self.max_entry()
    }

    /// The inducing map when every row has exactly one entry above `threshold`.
    pub fn as_map(&self, threshold: f64) -> Option<Vec<usize>> {
        self.plan
            .rows()
            .into_iter()
            .map(|row| {
                let mut hit = None;
                for (j, &v) in row.iter().enumerate() {
                    if v > threshold {
                        if hit.is_some() {
                            return None;
                        }
                        hit = Some(j);
                    }
                }
                hit
            })
            .collect()
    }
}

/// True iff each row has exactly one entry above the (absolute) threshold.
pub fn is_monge(gamma: &SemiCoupling, threshold: f64) -> bool {
    gamma.as_map(threshold).is_some()
}

fn check_shapes(gamma: &SemiCoupling, dx: &Array2<f64>, dy: &Array2<f64>) -> Result<()> {
    let (n, m) = gamma.plan.dim();
    if dx.dim() != (n, n) {
        return Err(Error::Structural(format!(
            "source matrix is {:?}, coupling has {n} rows",
            dx.dim()
        )));
    }
    if dy.dim() != (m, m) {
        return Err(Error::Structural(format!(
            "target matrix is {:?}, coupling has {m} columns",
            dy.dim()
        )));
    }
    Ok(())
}

fn check_finite_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(Error::Domain(format!("finite p >= 1 expected, got {p}")));
    }
    Ok(())
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        x.abs().powf(p)
    }
}

/// `dis_p(gamma) = 1/2 (sum_{i,j,k,l} |dx[i,k] - dy[j,l]|^p g[i,j] g[k,l])^(1/p)`
/// by direct summation over the support.
pub fn distortion_p(gamma: &SemiCoupling, dx: &Array2<f64>, dy: &Array2<f64>, p: f64) -> Result<f64> {
    check_shapes(gamma, dx, dy)?;
    check_finite_p(p)?;
    let cells: Vec<(usize, usize, f64)> = gamma
        .plan
        .indexed_iter()
        .filter(|(_, &v)| v > 0.0)
        .map(|((i, j), &v)| (i, j, v))
        .collect();
    let mut total = 0.0;
    for &(i, j, a) in &cells {
        let mut inner = 0.0;
        for &(k, l, b) in &cells {
            inner += pow_abs(dx[[i, k]] - dy[[j, l]], p) * b;
        }
        total += inner * a;
    }
    Ok(0.5 * total.powf(1.0 / p))
}

/// `dis_inf(gamma)`: half the largest discrepancy over pairs of support cells,
/// where the support is every entry strictly above `support_threshold`.
pub fn distortion_inf(
    gamma: &SemiCoupling,
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    support_threshold: f64,
) -> Result<f64> {
    check_shapes(gamma, dx, dy)?;
    let support: Vec<(usize, usize)> = gamma
        .plan
        .indexed_iter()
        .filter(|(_, &v)| v > support_threshold)
        .map(|(ij, _)| ij)
        .collect();
    if support.is_empty() {
        return Err(Error::Domain("coupling has empty support".into()));
    }
    let mut worst = 0.0f64;
    for &(i, j) in &support {
        for &(k, l) in &support {
            worst = worst.max((dx[[i, k]] - dy[[j, l]]).abs());
        }
    }
    Ok(0.5 * worst)
}

/// Distortion of the semi-coupling induced by `f`, in O(n^2). `p` may be
/// infinite.
pub fn monge_distortion(f: &[usize], weights: &[f64], dx: &Array2<f64>, dy: &Array2<f64>, p: f64) -> f64 {
    let n = f.len();
    if p.is_infinite() {
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in 0..n {
                worst = worst.max((dx[[i, k]] - dy[[f[i], f[k]]]).abs());
            }
        }
        return 0.5 * worst;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for k in 0..n {
            row += pow_abs(dx[[i, k]] - dy[[f[i], f[k]]], p) * weights[k];
        }
        total += row * weights[i];
    }
    0.5 * total.powf(1.0 / p)
}

/// The p = 2 objective with squared distance matrices cached.
struct Quadratic<'a> {
    dx: &'a Array2<f64>,
    dy: &'a Array2<f64>,
    dx2: Array2<f64>,
    dy2: Array2<f64>,
}

impl<'a> Quadratic<'a> {
    fn new(dx: &'a Array2<f64>, dy: &'a Array2<f64>) -> Self {
        Self {
            dx,
            dy,
            dx2: dx.mapv(|v| v * v),
            dy2: dy.mapv(|v| v * v),
        }
    }

    /// `sum (dx[i,k] - dy[j,l])^2 a[i,j] b[k,l]` in O(n^2 m + n m^2).
    fn form(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let ra = a.sum_axis(ndarray::Axis(1));
        let rb = b.sum_axis(ndarray::Axis(1));
        let ca = a.sum_axis(ndarray::Axis(0));
        let cb = b.sum_axis(ndarray::Axis(0));
        let source = ra.dot(&self.dx2.dot(&rb));
        let target = ca.dot(&self.dy2.dot(&cb));
        let cross = self.dx.dot(b).dot(self.dy);
        let coupled: f64 = Zip::from(a).and(&cross).fold(0.0, |acc, &x, &y| acc + x * y);
        source + target - 2.0 * coupled
    }

    fn value_and_gradient(&self, g: &Array2<f64>) -> (f64, Array2<f64>) {
        let mu = g.sum_axis(ndarray::Axis(1));
        let nu = g.sum_axis(ndarray::Axis(0));
        let a = self.dx2.dot(&mu);
        let c = self.dy2.dot(&nu);
        let cross = self.dx.dot(g).dot(self.dy);
        let coupled: f64 = Zip::from(g).and(&cross).fold(0.0, |acc, &x, &y| acc + x * y);
        let value = mu.dot(&a) + nu.dot(&c) - 2.0 * coupled;
        let grad = Array2::from_shape_fn(g.dim(), |(i, j)| 2.0 * (a[i] + c[j] - 2.0 * cross[[i, j]]));
        (value, grad)
    }
}

/// `E = sum (dx[i,k] - dy[j,l])^2 g[i,j] g[k,l]` and its gradient with respect
/// to the plan entries, via the marginal decomposition.
pub fn objective_and_gradient(
    gamma: &SemiCoupling,
    dx: &Array2<f64>,
    dy: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    check_shapes(gamma, dx, dy)?;
    Ok(Quadratic::new(dx, dy).value_and_gradient(&gamma.plan))
}

/// Vertex of the semi-coupling polytope minimizing `<G, gamma>`: each row's
/// mass goes to its smallest gradient entry, ties to the lowest column.
pub fn lmo(g: &Array2<f64>, mu: &[f64]) -> SemiCoupling {
    let f: Vec<usize> = g.rows().into_iter().map(|row| argmin(row.iter().copied())).collect();
    let mut plan = Array2::zeros(g.dim());
    for (i, &j) in f.iter().enumerate() {
        plan[[i, j]] = mu[i];
    }
    SemiCoupling {
        plan,
        source_weights: mu.to_vec(),
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, v) in values.enumerate() {
        if v < best.1 {
            best = (j, v);
        }
    }
    best.0
}

fn step_from_coefficients(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b < 0.0 {
        // concave or linear along the segment: the better endpoint
        1.0
    } else {
        0.0
    }
}

/// Exact minimizer over `tau in [0,1]` of `E(gamma + tau (vertex - gamma))`.
/// Along the segment `E = E0 + b tau + a tau^2` with `b = <G, delta>` and
/// `a = E-form(delta, delta)`.
pub fn exact_line_search(
    gamma: &SemiCoupling,
    vertex: &SemiCoupling,
    dx: &Array2<f64>,
    dy: &Array2<f64>,
) -> Result<f64> {
    check_shapes(gamma, dx, dy)?;
    check_shapes(vertex, dx, dy)?;
    let q = Quadratic::new(dx, dy);
    let delta = &vertex.plan - &gamma.plan;
    if delta.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let b = 2.0 * q.form(&gamma.plan, &delta);
    let a = q.form(&delta, &delta);
    Ok(step_from_coefficients(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverInit {
    /// `mu (x) uniform(m)`.
    Product,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `(E_prev - E) / E_prev` drops below this.
    pub rel_tolerance: f64,
    pub init: SolverInit,
    /// Relative support threshold, scaled by the largest plan entry.
    pub support_threshold: f64,
    /// Cost evaluations allowed for the branch-and-bound search over Monge
    /// maps that runs after rounding; 0 disables it.
    pub polish_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            rel_tolerance: 1e-9,
            init: SolverInit::Product,
            support_threshold: DEFAULT_SUPPORT_REL,
            polish_budget: DEFAULT_POLISH_BUDGET,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::Domain("rel_tolerance must be positive".into()));
        }
        if !(self.support_threshold >= 0.0) {
            return Err(Error::Domain("support_threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub coupling: SemiCoupling,
    /// Values of `E` (four times the squared 2-distortion) per accepted iterate.
    pub objective_trace: Vec<f64>,
    /// `dis_2` of `coupling`.
    pub distortion: f64,
    /// `dis_2` of the conditional-gradient iterate before rounding.
    pub unrounded_distortion: f64,
    pub monge_map: Option<Vec<usize>>,
    pub iterations: usize,
}

/// Frank-Wolfe on the p = 2 srGW objective, followed by Monge rounding.
pub fn solve_srgw2(x: &MetricMeasureSpace, dy: &Array2<f64>, cfg: &SolverConfig) -> Result<SolverResult> {
    cfg.validate()?;
    let report = validate_metric(dy, false)?;
    if !report.is_valid() {
        return Err(Error::Structural(format!("target matrix: {}", report.summary())));
    }
    let m = dy.nrows();
    if m == 0 {
        return Err(Error::Structural("target space is empty".into()));
    }
    let dx = x.distances();
    let mu = x.weights();
    let q = Quadratic::new(dx, dy);

    let mut gamma = match cfg.init {
        SolverInit::Product => SemiCoupling::product(mu, m),
        SolverInit::Random(seed) => SemiCoupling::random(mu, m, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let (mut value, mut grad) = q.value_and_gradient(&gamma.plan);
    let mut trace = vec![value];
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if value <= 0.0 {
            break;
        }
        let vertex = lmo(&grad, mu);
        let delta = &vertex.plan - &gamma.plan;
        let b: f64 = Zip::from(&grad).and(&delta).fold(0.0, |acc, &g, &d| acc + g * d);
        if !(b < 0.0) {
            // no descent direction left in the polytope
            break;
        }
        let a = q.form(&delta, &delta);
        let tau = step_from_coefficients(a, b);
        if tau <= 0.0 {
            break;
        }
        let next = Zip::from(&gamma.plan)
            .and(&vertex.plan)
            .map_collect(|&g, &v| (1.0 - tau) * g + tau * v);
        let (next_value, next_grad) = q.value_and_gradient(&next);
        if !next_value.is_finite() {
            return Err(Error::Numerical {
                message: "objective became non-finite".into(),
                trace,
            });
        }
        if next_value > value {
            // roundoff on a flat segment
            break;
        }
        iterations += 1;
        let rel = (value - next_value) / value;
        gamma.plan = next;
        value = next_value;
        grad = next_grad;
        trace.push(value);
        if rel < cfg.rel_tolerance {
            break;
        }
    }

    let cutoff = gamma.support_cutoff(cfg.support_threshold);
    let unrounded_distortion = match gamma.as_map(cutoff) {
        Some(f) => monge_distortion(&f, mu, dx, dy, 2.0),
        None => 0.5 * value.max(0.0).sqrt(),
    };
    let (mut f, mut rounded) = monge_round(&gamma, dx, dy, 2.0)?;
    let mut rounded_distortion = monge_distortion(&f, mu, dx, dy, 2.0);
    if rounded_distortion > 0.0 && cfg.polish_budget > 0 {
        if let Some(g) = polish_map(&f, mu, dx, dy, cfg.polish_budget) {
            let d = monge_distortion(&g, mu, dx, dy, 2.0);
            if d < rounded_distortion {
                rounded = SemiCoupling::from_map(&g, mu, m)?;
                rounded_distortion = d;
                f = g;
            }
        }
    }
    if rounded_distortion <= unrounded_distortion + 1e-12 {
        Ok(SolverResult {
            coupling: rounded,
            objective_trace: trace,
            distortion: rounded_distortion,
            unrounded_distortion,
            monge_map: Some(f),
            iterations,
        })
    } else {
        Ok(SolverResult {
            coupling: gamma,
            objective_trace: trace,
            distortion: unrounded_distortion,
            unrounded_distortion,
            monge_map: None,
            iterations,
        })
    }
}

/// Branch-and-bound over maps `f: X -> Y` for one with smaller `p = 2`
/// objective than `start`. Each unassigned point contributes its cheapest
/// placement against the points already fixed to the lower bound, and the
/// point with the largest such cost is branched on next. Stops after
/// `budget` cost evaluations and returns the best improving map, if any.
pub fn polish_map(start: &[usize], mu: &[f64], dx: &Array2<f64>, dy: &Array2<f64>, budget: usize) -> Option<Vec<usize>> {
    let n = start.len();
    let m = dy.nrows();
    let best = map_objective(start, mu, dx, dy);
    if n == 0 || m == 0 || !(best > 0.0) {
        return None;
    }
    let mut search = Polish {
        mu,
        dx,
        dy,
        m,
        costs: vec![0.0; n * m],
        map: vec![usize::MAX; n],
        best,
        best_map: None,
        spent: 0,
        budget,
    };
    search.descend(0.0, n);
    search.best_map
}

fn map_objective(f: &[usize], mu: &[f64], dx: &Array2<f64>, dy: &Array2<f64>) -> f64 {
    let n = f.len();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            let r = dx[[a, b]] - dy[[f[a], f[b]]];
            s += mu[a] * mu[b] * r * r;
        }
    }
    s
}

struct Polish<'a> {
    mu: &'a [f64],
    dx: &'a Array2<f64>,
    dy: &'a Array2<f64>,
    m: usize,
    /// `costs[u * m + t]`: pair cost of sending unassigned `u` to `t` against
    /// the assigned points.
    costs: Vec<f64>,
    map: Vec<usize>,
    best: f64,
    best_map: Option<Vec<usize>>,
    spent: usize,
    budget: usize,
}

impl Polish<'_> {
    fn shift(&mut self, i: usize, t: usize, sign: f64) {
        let m = self.m;
        for u in 0..self.map.len() {
            if self.map[u] != usize::MAX {
                continue;
            }
            let w = sign * 2.0 * self.mu[u] * self.mu[i];
            let d = self.dx[[u, i]];
            let row = &mut self.costs[u * m..(u + 1) * m];
            for (s, c) in row.iter_mut().enumerate() {
                let r = d - self.dy[[s, t]];
                *c += w * r * r;
            }
            self.spent += m;
        }
    }

    /// Returns false once the search should stop.
    fn descend(&mut self, partial: f64, unassigned: usize) -> bool {
        let m = self.m;
        if unassigned == 0 {
            let exact = map_objective(&self.map, self.mu, self.dx, self.dy);
            if exact < self.best {
                self.best = exact;
                self.best_map = Some(self.map.clone());
            }
            return self.best > 0.0;
        }
        let mut bound = partial;
        let mut pick = (usize::MAX, f64::NEG_INFINITY);
        for u in 0..self.map.len() {
            if self.map[u] != usize::MAX {
                continue;
            }
            let low = self.costs[u * m..(u + 1) * m].iter().copied().fold(f64::INFINITY, f64::min);
            bound += low;
            if low > pick.1 {
                pick = (u, low);
            }
        }
        if bound >= self.best {
            return true;
        }
        let (u, low) = pick;
        let rest = bound - low;
        let mut cands: Vec<(f64, usize)> = self.costs[u * m..(u + 1) * m].iter().copied().zip(0..m).collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (c, t) in cands {
            if rest + c >= self.best {
                break;
            }
            if self.spent >= self.budget {
                return false;
            }
            self.map[u] = t;
            self.shift(u, t, 1.0);
            let go_on = self.descend(partial + c, unassigned - 1);
            self.shift(u, t, -1.0);
            self.map[u] = usize::MAX;
            if !go_on {
                return false;
            }
        }
        true
    }
}

/// Replaces each row's kernel by a Dirac mass at the minimizer of the row's
/// distortion against all other rows, sweeping rows in index order until a
/// fixed point (at most ten sweeps). Never increases `dis_p`.
pub fn monge_round(
    gamma: &SemiCoupling,
    dx: &Array2<f64>,
    dy: &Array2<f64>,
    p: f64,
) -> Result<(Vec<usize>, SemiCoupling)> {
    check_shapes(gamma, dx, dy)?;
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("p >= 1 expected, got {p}")));
    }
    let mu = gamma.source_weights();
    let (n, m) = gamma.plan.dim();
    let mut plan = gamma.plan.clone();
    let cutoff = gamma.support_cutoff(DEFAULT_SUPPORT_REL);
    let mut fast = if p == 2.0 { Some(SquaredCosts::new(&plan, dy)) } else { None };
    let mut costs = vec![0.0; m];

    for _ in 0..MAX_ROUNDING_PASSES {
        let mut changed = false;
        for i in 0..n {
            match fast.as_mut() {
                Some(state) => state.row_costs(i, &plan, dx, dy, &mut costs),
                None if p.is_infinite() => sup_row_costs(i, &plan, dx, dy, cutoff, &mut costs),
                None => power_row_costs(i, &plan, dx, dy, p, &mut costs),
            }
            let best = argmin(costs.iter().copied());
            let current = single_support(plan.row(i), cutoff);
            let target = match current {
                Some(j) if costs[j] <= costs[best] => j,
                _ => best,
            };
            let exact = plan.row(i).iter().enumerate().all(|(j, &v)| {
                if j == target {
                    v == mu[i]
                } else {
                    v == 0.0
                }
            });
            if exact {
                continue;
            }
            if let Some(state) = fast.as_mut() {
                state.replace_row(i, target, mu[i], &plan, dy);
            }
            plan.row_mut(i).fill(0.0);
            plan[[i, target]] = mu[i];
            changed |= current != Some(target);
        }
        if !changed {
            break;
        }
    }
    let f: Vec<usize> = (0..n)
        .map(|i| single_support(plan.row(i), 0.0).expect("every row is a Dirac after one sweep"))
        .collect();
    let rounded = SemiCoupling::from_map(&f, mu, m)?;
    Ok((f, rounded))
}

fn single_support(row: ndarray::ArrayView1<f64>, cutoff: f64) -> Option<usize> {
    let mut hit = None;
    for (j, &v) in row.iter().enumerate() {
        if v > cutoff {
            if hit.is_some() {
                return None;
            }
            hit = Some(j);
        }
    }
    hit
}

/// `cost[j] = sum_{k != i} sum_l |dx[i,k] - dy[j,l]|^p plan[k,l]`.
fn power_row_costs(i: usize, plan: &Array2<f64>, dx: &Array2<f64>, dy: &Array2<f64>, p: f64, costs: &mut [f64]) {
    let (n, m) = plan.dim();
    for (j, cost) in costs.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let dik = dx[[i, k]];
            for l in 0..m {
                let w = plan[[k, l]];
                if w > 0.0 {
                    acc += pow_abs(dik - dy[[j, l]], p) * w;
                }
            }
        }
        *cost = acc;
    }
}

/// `cost[j] = max_{k != i, (k,l) in supp} |dx[i,k] - dy[j,l]|`.
fn sup_row_costs(i: usize, plan: &Array2<f64>, dx: &Array2<f64>, dy: &Array2<f64>, cutoff: f64, costs: &mut [f64]) {
    let (n, m) = plan.dim();
    for (j, cost) in costs.iter_mut().enumerate() {
        let mut worst = 0.0f64;
        for k in 0..n {
            if k == i {
                continue;
            }
            for l in 0..m {
                if plan[[k, l]] > cutoff {
                    worst = worst.max((dx[[i, k]] - dy[[j, l]]).abs());
                }
            }
        }
        *cost = worst;
    }
}

/// Incremental p = 2 row costs. Expanding the square,
/// `cost[j] = sum_k dx[i,k]^2 mu_k - 2 (dx P dy)[i,j] + sum_l dy[j,l]^2 c_l`
/// where `c` is the column mass of the other rows; the `k = i` terms of the
/// first two sums vanish because `dx[i,i] = 0`.
struct SquaredCosts {
    plan_dy: Array2<f64>,
    col_mass: Array1<f64>,
}

impl SquaredCosts {
    fn new(plan: &Array2<f64>, dy: &Array2<f64>) -> Self {
        Self {
            plan_dy: plan.dot(dy),
            col_mass: plan.sum_axis(ndarray::Axis(0)),
        }
    }

    fn row_costs(&self, i: usize, plan: &Array2<f64>, dx: &Array2<f64>, dy: &Array2<f64>, costs: &mut [f64]) {
        let (n, m) = plan.dim();
        let mut source = 0.0;
        for k in 0..n {
            source += dx[[i, k]] * dx[[i, k]] * plan.row(k).sum();
        }
        let others: Vec<f64> = (0..m).map(|l| self.col_mass[l] - plan[[i, l]]).collect();
        for (j, cost) in costs.iter_mut().enumerate() {
            let mut cross = 0.0;
            for k in 0..n {
                cross += dx[[i, k]] * self.plan_dy[[k, j]];
            }
            let mut target = 0.0;
            for l in 0..m {
                target += dy[[j, l]] * dy[[j, l]] * others[l];
            }
            *cost = source - 2.0 * cross + target;
        }
    }

    fn replace_row(&mut self, i: usize, j: usize, mass: f64, plan: &Array2<f64>, dy: &Array2<f64>) {
        for l in 0..plan.ncols() {
            self.col_mass[l] -= plan[[i, l]];
        }
        self.col_mass[j] += mass;
        for l in 0..plan.ncols() {
            self.plan_dy[[i, l]] = mass * dy[[j, l]];
        }
    }
}
