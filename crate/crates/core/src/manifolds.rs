//! Target geometry for embeddings: circles, 2-spheres and Euclidean spaces.
//!
//! Points live in a chart: an angle in `[0, 2pi)` for the circle, a unit
//! 3-vector for the sphere (the radius is carried by [`ManifoldKind`]), and
//! plain coordinates for Euclidean space. Tangent vectors use the same chart
//! coordinates; for the sphere they are ambient 3-vectors orthogonal to the
//! base point.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this distance (or this close to antipodal) gradients are zero.
pub const CUT_LOCUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldKind {
    Circle { radius: f64 },
    Sphere { radius: f64 },
    Euclidean { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifoldPoint {
    Angle(f64),
    Unit([f64; 3]),
    Coords(Vec<f64>),
}

impl ManifoldPoint {
    pub fn chart(&self) -> &[f64] {
        match self {
            ManifoldPoint::Angle(a) => std::slice::from_ref(a),
            ManifoldPoint::Unit(v) => v,
            ManifoldPoint::Coords(c) => c,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match self {
            ManifoldPoint::Angle(a) => Some(*a),
            _ => None,
        }
    }
}

impl ManifoldKind {
    pub fn circle(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(ManifoldKind::Circle { radius })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(ManifoldKind::Sphere { radius })
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("euclidean dimension must be at least 1".into()));
        }
        Ok(ManifoldKind::Euclidean { dim })
    }

    /// Radius of a circle or sphere; 1 for Euclidean space.
    pub fn radius(&self) -> f64 {
        match *self {
            ManifoldKind::Circle { radius } | ManifoldKind::Sphere { radius } => radius,
            ManifoldKind::Euclidean { .. } => 1.0,
        }
    }

    /// Same manifold with a new radius; Euclidean space is returned as is.
    pub fn with_radius(&self, radius: f64) -> Self {
        match *self {
            ManifoldKind::Circle { .. } => ManifoldKind::Circle { radius },
            ManifoldKind::Sphere { .. } => ManifoldKind::Sphere { radius },
            e @ ManifoldKind::Euclidean { .. } => e,
        }
    }

    pub fn has_radius(&self) -> bool {
        !matches!(self, ManifoldKind::Euclidean { .. })
    }

    /// Number of chart coordinates per point.
    pub fn chart_dim(&self) -> usize {
        match *self {
            ManifoldKind::Circle { .. } => 1,
            ManifoldKind::Sphere { .. } => 3,
            ManifoldKind::Euclidean { dim } => dim,
        }
    }

    pub fn point_from_chart(&self, chart: &[f64]) -> Result<ManifoldPoint> {
        if chart.len() != self.chart_dim() {
            return Err(Error::Structural(format!(
                "{self} points have {} coordinates, got {}",
                self.chart_dim(),
                chart.len()
            )));
        }
        let p = match self {
            ManifoldKind::Circle { .. } => ManifoldPoint::Angle(chart[0]),
            ManifoldKind::Sphere { .. } => ManifoldPoint::Unit([chart[0], chart[1], chart[2]]),
            ManifoldKind::Euclidean { .. } => ManifoldPoint::Coords(chart.to_vec()),
        };
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn check_point(&self, p: &ManifoldPoint) -> Result<()> {
        let ok = match (self, p) {
            (ManifoldKind::Circle { .. }, ManifoldPoint::Angle(a)) => (0.0..TAU).contains(a),
            (ManifoldKind::Sphere { .. }, ManifoldPoint::Unit(v)) => (norm(v) - 1.0).abs() <= 1e-10,
            (ManifoldKind::Euclidean { dim }, ManifoldPoint::Coords(c)) => {
                c.len() == *dim && c.iter().all(|v| v.is_finite())
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{p:?} is not a valid point of {self}")))
        }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("radius must be positive, got {radius}")))
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::Circle { radius } => write!(f, "circle:r={radius}"),
            ManifoldKind::Sphere { radius } => write!(f, "sphere:r={radius}"),
            ManifoldKind::Euclidean { dim } => write!(f, "euclidean:d={dim}"),
        }
    }
}

impl FromStr for ManifoldKind {
    type Err = Error;

    /// `circle:r=1.0`, `sphere:r=6371`, `euclidean:d=2`. A bare `circle` or
    /// `sphere` means radius 1.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("unrecognized manifold spec '{s}'"));
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let value = |key: &str| -> Result<Option<&str>> {
            match params {
                None => Ok(None),
                Some(p) => {
                    let (k, v) = p.split_once('=').ok_or_else(bad)?;
                    if k.trim() != key {
                        return Err(bad());
                    }
                    Ok(Some(v.trim()))
                }
            }
        };
        match name {
            "circle" | "sphere" => {
                let r = match value("r")? {
                    Some(v) => v.parse::<f64>().map_err(|_| bad())?,
                    None => 1.0,
                };
                if name == "circle" {
                    ManifoldKind::circle(r)
                } else {
                    ManifoldKind::sphere(r)
                }
            }
            "euclidean" => {
                let d = value("d")?.ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())?;
                ManifoldKind::euclidean(d)
            }
            _ => Err(bad()),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angle difference wrapped into `(-pi, pi]`.
pub fn wrapped_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Wraps into `[0, 2pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Chart-level distance at unit scale (radius 1 for circle and sphere).
pub(crate) fn unit_distance(kind: &ManifoldKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        ManifoldKind::Circle { .. } => {
            let d = (a[0] - b[0]).abs();
            d.min(TAU - d).max(0.0)
        }
        ManifoldKind::Sphere { .. } => {
            // atan2 keeps full precision near 0 and pi where acos does not
            let c = cross(a, b);
            norm(&c).atan2(dot(a, b))
        }
        ManifoldKind::Euclidean { .. } => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
    }
}

/// Gradient of the unit-scale distance with respect to `a`, written into
/// `out`. Returns the distance. Zero at coincident or antipodal pairs.
pub(crate) fn unit_distance_gradient(kind: &ManifoldKind, a: &[f64], b: &[f64], out: &mut [f64]) -> f64 {
    out.iter_mut().for_each(|v| *v = 0.0);
    match kind {
        ManifoldKind::Circle { .. } => {
            let delta = wrapped_difference(a[0], b[0]);
            let d = delta.abs();
            if d > CUT_LOCUS_TOL && PI - d > CUT_LOCUS_TOL {
                out[0] = delta.signum();
            }
            d
        }
        ManifoldKind::Sphere { .. } => {
            let s = norm(&cross(a, b));
            let c = dot(a, b);
            let theta = s.atan2(c);
            if theta > CUT_LOCUS_TOL && PI - theta > CUT_LOCUS_TOL {
                for k in 0..3 {
                    out[k] = -(b[k] - c * a[k]) / s;
                }
            }
            theta
        }
        ManifoldKind::Euclidean { .. } => {
            let d = unit_distance(kind, a, b);
            if d > CUT_LOCUS_TOL {
                for k in 0..a.len() {
                    out[k] = (a[k] - b[k]) / d;
                }
            }
            d
        }
    }
}

pub fn geodesic_distance(kind: &ManifoldKind, p: &ManifoldPoint, q: &ManifoldPoint) -> f64 {
    kind.radius() * unit_distance(kind, p.chart(), q.chart())
}

/// Gradient of `d(p, q)` with respect to `p`, in chart coordinates, and the
/// derivative of the distance with respect to log-radius (which is `d`).
pub fn distance_gradient(kind: &ManifoldKind, p: &ManifoldPoint, q: &ManifoldPoint) -> (Vec<f64>, f64) {
    let r = kind.radius();
    let mut g = vec![0.0; kind.chart_dim()];
    let d = unit_distance_gradient(kind, p.chart(), q.chart(), &mut g);
    g.iter_mut().for_each(|v| *v *= r);
    (g, r * d)
}

/// Moves `p` by a chart step: wrapped addition on the circle, addition then
/// renormalization on the sphere, plain addition in Euclidean space.
pub fn retract(kind: &ManifoldKind, p: &ManifoldPoint, step: &[f64]) -> Result<ManifoldPoint> {
    if step.len() != kind.chart_dim() {
        return Err(Error::Structural(format!(
            "step has {} coordinates, {kind} needs {}",
            step.len(),
            kind.chart_dim()
        )));
    }
    let mut chart = p.chart().to_vec();
    retract_chart(kind, &mut chart, step)?;
    kind.point_from_chart(&chart)
}

pub(crate) fn retract_chart(kind: &ManifoldKind, chart: &mut [f64], step: &[f64]) -> Result<()> {
    for (c, s) in chart.iter_mut().zip(step) {
        *c += s;
    }
    match kind {
        ManifoldKind::Circle { .. } => chart[0] = wrap_angle(chart[0]),
        ManifoldKind::Sphere { .. } => {
            let n = norm(chart);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::numerical("sphere retraction of a zero or non-finite vector"));
            }
            chart.iter_mut().for_each(|c| *c /= n);
        }
        ManifoldKind::Euclidean { .. } => {}
    }
    Ok(())
}

/// A regular grid on the manifold, each point perturbed by uniform noise of
/// size `jitter` times the nominal spacing. Circle: equispaced angles. Sphere:
/// Fibonacci lattice. Euclidean: axis-aligned lattice on the unit cube (the
/// last layer is partial when `count` is not a perfect power).
pub fn grid(kind: &ManifoldKind, count: usize, jitter: f64, seed: u64) -> Result<Vec<ManifoldPoint>> {
    if count == 0 {
        return Err(Error::Domain("grid needs at least one point".into()));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::Domain(format!("jitter must be in [0, 0.5), got {jitter}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |scale: f64| -> f64 { (2.0 * rng.random::<f64>() - 1.0) * jitter * scale };
    let points = match *kind {
        ManifoldKind::Circle { .. } => {
            let spacing = TAU / count as f64;
            (0..count)
                .map(|k| ManifoldPoint::Angle(wrap_angle(k as f64 * spacing + noise(spacing))))
                .collect()
        }
        ManifoldKind::Sphere { .. } => {
            let spacing = (4.0 * PI / count as f64).sqrt();
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    let mut v = [rho * phi.cos() + noise(spacing), rho * phi.sin() + noise(spacing), z + noise(spacing)];
                    let n = norm(&v);
                    v.iter_mut().for_each(|c| *c /= n);
                    ManifoldPoint::Unit(v)
                })
                .collect()
        }
        ManifoldKind::Euclidean { dim } => {
            let mut side = (count as f64).powf(1.0 / dim as f64).round().max(1.0) as usize;
            while side.pow(dim as u32) < count {
                side += 1;
            }
            let spacing = if side > 1 { 1.0 / (side - 1) as f64 } else { 1.0 };
            (0..count)
                .map(|mut code| {
                    let mut c = vec![0.0; dim];
                    for axis in (0..dim).rev() {
                        c[axis] = (code % side) as f64 * spacing;
                        code /= side;
                    }
                    c.iter_mut().for_each(|v| *v += noise(spacing));
                    ManifoldPoint::Coords(c)
                })
                .collect()
        }
    };
    Ok(points)
}

/// A uniform random point (Euclidean: uniform on the unit cube).
pub fn random_point<R: Rng>(kind: &ManifoldKind, rng: &mut R) -> ManifoldPoint {
    match *kind {
        ManifoldKind::Circle { .. } => ManifoldPoint::Angle(wrap_angle(rng.random::<f64>() * TAU)),
        ManifoldKind::Sphere { .. } => loop {
            let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let n = norm(&v);
            if n > 1e-12 {
                break ManifoldPoint::Unit([v[0] / n, v[1] / n, v[2] / n]);
            }
        },
        ManifoldKind::Euclidean { dim } => ManifoldPoint::Coords((0..dim).map(|_| rng.random::<f64>()).collect()),
    }
}

/// Symmetric matrix of geodesic distances; rows are computed in parallel and
/// mirrored from the upper triangle.
pub fn pairwise_distances(kind: &ManifoldKind, points: &[ManifoldPoint]) -> Array2<f64> {
    let n = points.len();
    let r = kind.radius();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| r * unit_distance(kind, points[i].chart(), points[j].chart()))
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}
