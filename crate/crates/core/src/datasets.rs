//! Seeded synthetic data and geodetic ground truth.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifolds::{pairwise_distances, random_point, ManifoldKind, ManifoldPoint};
use crate::mmspace::MetricMeasureSpace;
use crate::{Error, Result};

/// WGS-84 semi-major axis in kilometers.
pub const WGS84_A_KM: f64 = 6378.137;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257223563;
/// Radius of the spherical fallback in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const GEODESIC_MAX_ITERATIONS: usize = 200;

/// Settings for [`rotated_pattern_with`]. Each sample is a grayscale image of
/// Gaussian blobs centered on the rotated anchor points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternOptions {
    pub n_anchor: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Pixels per side of the image covering `[-1, 1]^2`.
    pub resolution: usize,
    pub blob_width: f64,
    /// Mirror the anchors through the origin so the pattern is invariant
    /// under a half turn.
    pub two_fold: bool,
}

impl PatternOptions {
    pub fn new(n_anchor: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            n_anchor,
            n_samples,
            seed,
            resolution: 28,
            blob_width: 0.15,
            two_fold: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RotatedPattern {
    pub space: MetricMeasureSpace,
    /// Rotation angle of each sample, in `[0, 2pi)`.
    pub angles: Vec<f64>,
    pub anchors: Vec<[f64; 2]>,
}

fn anchors(opts: &PatternOptions, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let drawn = if opts.two_fold { opts.n_anchor.div_ceil(2) } else { opts.n_anchor };
    let mut pts: Vec<[f64; 2]> = (0..drawn)
        .map(|_| {
            // uniform on the disk of radius 0.7 so rotations stay in frame
            let r = 0.7 * rng.random::<f64>().sqrt();
            let t = TAU * rng.random::<f64>();
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    if opts.two_fold {
        let mirrored: Vec<[f64; 2]> = pts.iter().map(|p| [-p[0], -p[1]]).collect();
        pts.extend(mirrored);
    }
    pts
}

fn render(anchors: &[[f64; 2]], angle: f64, resolution: usize, width: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let moved: Vec<[f64; 2]> = anchors.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
    let pixel = 2.0 / resolution as f64;
    let denom = 2.0 * width * width;
    let mut image = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        let y = -1.0 + (row as f64 + 0.5) * pixel;
        for col in 0..resolution {
            let x = -1.0 + (col as f64 + 0.5) * pixel;
            image.push(moved.iter().map(|p| (-((x - p[0]).powi(2) + (y - p[1]).powi(2)) / denom).exp()).sum());
        }
    }
    image
}

/// Root-sum-square pixel distances between renderings of the anchor pattern
/// at the given angles.
pub fn pattern_distances(anchors: &[[f64; 2]], angles: &[f64], resolution: usize, blob_width: f64) -> Array2<f64> {
    let images: Vec<Vec<f64>> = angles
        .par_iter()
        .map(|&a| render(anchors, a, resolution, blob_width))
        .collect();
    let n = angles.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| images[i].iter().zip(&images[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            d[[i, i + 1 + offset]] = v;
            d[[i + 1 + offset, i]] = v;
        }
    }
    d
}

/// `n_samples` copies of a seeded planar pattern at uniform random angles.
pub fn rotated_pattern(n_anchor: usize, n_samples: usize, seed: u64) -> Result<RotatedPattern> {
    rotated_pattern_with(&PatternOptions::new(n_anchor, n_samples, seed))
}

pub fn rotated_pattern_with(opts: &PatternOptions) -> Result<RotatedPattern> {
    if opts.n_anchor < 2 || opts.n_samples < 2 {
        return Err(Error::Domain("rotated pattern needs at least two anchors and two samples".into()));
    }
    if opts.resolution == 0 || !(opts.blob_width > 0.0) {
        return Err(Error::Domain("resolution and blob width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let anchors = anchors(opts, &mut rng);
    let angles: Vec<f64> = (0..opts.n_samples).map(|_| TAU * rng.random::<f64>()).collect();
    let d = pattern_distances(&anchors, &angles, opts.resolution, opts.blob_width);
    let labels = (0..opts.n_samples).map(|i| format!("sample_{i}")).collect();
    Ok(RotatedPattern {
        space: MetricMeasureSpace::new(d, None, Some(labels))?,
        angles,
        anchors,
    })
}

/// Uniform seeded samples on `kind` with geodesic distances, optionally
/// perturbed by Gaussian noise (symmetric, floored at zero, zero diagonal).
pub fn sample_manifold(
    kind: &ManifoldKind,
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(Vec<ManifoldPoint>, MetricMeasureSpace)> {
    if n == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Domain(format!("noise standard deviation must be nonnegative, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<ManifoldPoint> = (0..n).map(|_| random_point(kind, &mut rng)).collect();
    let mut d = pairwise_distances(kind, &points);
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
        for i in 0..n {
            for j in i + 1..n {
                let v = (d[[i, j]] + rng.sample(normal)).max(0.0);
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
    }
    Ok((points, MetricMeasureSpace::uniform(d)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    /// Degrees; latitude in `[-90, 90]`, longitude in `[-180, 180)`.
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::Domain(format!("latitude {latitude} outside [-90, 90]")));
        }
        if !(-180.0..180.0).contains(&longitude) {
            return Err(Error::Domain(format!("longitude {longitude} outside [-180, 180)")));
        }
        Ok(Self { latitude, longitude })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicDistance {
    pub km: f64,
    /// Set when the ellipsoidal iteration did not converge and the spherical
    /// distance was used instead.
    pub spherical_fallback: bool,
}

/// Great-circle distance on the sphere of radius [`EARTH_RADIUS_KM`].
pub fn spherical_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dl = (b.longitude - a.longitude).to_radians();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let y = p2.cos() * dl.sin();
    let z = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    EARTH_RADIUS_KM * (x.hypot(y)).atan2(z)
}

/// Inverse geodesic on the WGS-84 ellipsoid by Vincenty's iteration.
pub fn wgs84_geodesic(a: GeoPoint, b: GeoPoint) -> GeodesicDistance {
    let semi_minor = (1.0 - WGS84_F) * WGS84_A_KM;
    let f = WGS84_F;
    let l = (b.longitude - a.longitude).to_radians();
    let u1 = ((1.0 - f) * a.latitude.to_radians().tan()).atan();
    let u2 = ((1.0 - f) * b.latitude.to_radians().tan()).atan();
    let (su1, cu1) = u1.sin_cos();
    let (su2, cu2) = u2.sin_cos();

    let mut lambda = l;
    for _ in 0..GEODESIC_MAX_ITERATIONS {
        let (sl, cl) = lambda.sin_cos();
        let sin_sigma = ((cu2 * sl).powi(2) + (cu1 * su2 - su1 * cu2 * cl).powi(2)).sqrt();
        if sin_sigma == 0.0 {
            return GeodesicDistance { km: 0.0, spherical_fallback: false };
        }
        let cos_sigma = su1 * su2 + cu1 * cu2 * cl;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cu1 * cu2 * sl / sin_sigma;
        let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
        let cos_2sm = if cos2_alpha != 0.0 {
            cos_sigma - 2.0 * su1 * su2 / cos2_alpha
        } else {
            0.0
        };
        let c = f / 16.0 * cos2_alpha * (4.0 + f * (4.0 - 3.0 * cos2_alpha));
        let next = l
            + (1.0 - c)
                * f
                * sin_alpha
                * (sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        let done = (next - lambda).abs() < 1e-12;
        lambda = next;
        if done {
            let (sl, cl) = lambda.sin_cos();
            let sin_sigma = ((cu2 * sl).powi(2) + (cu1 * su2 - su1 * cu2 * cl).powi(2)).sqrt();
            let cos_sigma = su1 * su2 + cu1 * cu2 * cl;
            let sigma = sin_sigma.atan2(cos_sigma);
            let sin_alpha = if sin_sigma == 0.0 { 0.0 } else { cu1 * cu2 * sl / sin_sigma };
            let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
            let cos_2sm = if cos2_alpha != 0.0 {
                cos_sigma - 2.0 * su1 * su2 / cos2_alpha
            } else {
                0.0
            };
            let u_sq = cos2_alpha * (WGS84_A_KM.powi(2) - semi_minor.powi(2)) / semi_minor.powi(2);
            let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let delta_sigma = big_b
                * sin_sigma
                * (cos_2sm
                    + big_b / 4.0
                        * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                            - big_b / 6.0
                                * cos_2sm
                                * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                                * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
            return GeodesicDistance {
                km: semi_minor * big_a * (sigma - delta_sigma),
                spherical_fallback: false,
            };
        }
    }
    log::warn!("geodesic iteration did not converge; using the spherical distance");
    GeodesicDistance { km: spherical_distance(a, b), spherical_fallback: true }
}

/// Cities-style data: `n` seeded locations uniform on the globe with WGS-84
/// distances in kilometers. Returns the locations, the space and the number
/// of pairs that fell back to the sphere.
pub fn cities(n: usize, seed: u64) -> Result<(Vec<GeoPoint>, MetricMeasureSpace, usize)> {
    if n == 0 {
        return Err(Error::Domain("need at least one location".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<GeoPoint> = (0..n)
        .map(|_| {
            let lat = (2.0 * rng.random::<f64>() - 1.0).asin().to_degrees();
            let lon = 360.0 * rng.random::<f64>() - 180.0;
            GeoPoint { latitude: lat.clamp(-90.0, 90.0), longitude: lon.clamp(-180.0, 180.0 - 1e-12) }
        })
        .collect();
    let rows: Vec<Vec<GeodesicDistance>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| wgs84_geodesic(points[i], points[j])).collect())
        .collect();
    let mut d = Array2::zeros((n, n));
    let mut fallbacks = 0;
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, g) in row.into_iter().enumerate() {
            d[[i, i + 1 + offset]] = g.km;
            d[[i + 1 + offset, i]] = g.km;
            fallbacks += usize::from(g.spherical_fallback);
        }
    }
    let labels = (0..n).map(|i| format!("city_{i}")).collect();
    Ok((points, MetricMeasureSpace::new(d, None, Some(labels))?, fallbacks))
}
