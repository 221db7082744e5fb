//! Finite metric-measure spaces: a distance matrix plus probability weights.

use ndarray::Array2;
use serde::Serialize;

use crate::{Error, Result};

/// Row sums and weight sums are compared against this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Relative tolerance for symmetry and zero-diagonal checks.
const SYMMETRY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TriangleDefect {
    /// `max d(i,k) - d(i,j) - d(j,k)` over all triples; never negative since
    /// degenerate triples contribute zero.
    pub value: f64,
    /// The worst triple `(i, k, j)`, present only when `value > 0`.
    pub triple: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub size: usize,
    pub asymmetric: Vec<(usize, usize)>,
    pub nonzero_diagonal: Vec<usize>,
    pub negative: Vec<(usize, usize)>,
    pub non_finite: Vec<(usize, usize)>,
    pub triangle: Option<TriangleDefect>,
}

impl ValidationReport {
    /// Symmetric, zero diagonal, finite and nonnegative. Triangle defects are
    /// reported but do not make a matrix structurally invalid.
    pub fn is_valid(&self) -> bool {
        self.asymmetric.is_empty()
            && self.nonzero_diagonal.is_empty()
            && self.negative.is_empty()
            && self.non_finite.is_empty()
    }

    /// Structurally valid and, if the triangle check ran, defect within `tol`.
    pub fn is_metric(&self, tol: f64) -> bool {
        self.is_valid() && self.triangle.as_ref().is_none_or(|t| t.value <= tol)
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(&(i, j)) = self.asymmetric.first() {
            parts.push(format!("{} asymmetric pairs, first at ({i},{j})", self.asymmetric.len()));
        }
        if let Some(&i) = self.nonzero_diagonal.first() {
            parts.push(format!("{} nonzero diagonal entries, first at {i}", self.nonzero_diagonal.len()));
        }
        if let Some(&(i, j)) = self.negative.first() {
            parts.push(format!("{} negative entries, first at ({i},{j})", self.negative.len()));
        }
        if let Some(&(i, j)) = self.non_finite.first() {
            parts.push(format!("{} non-finite entries, first at ({i},{j})", self.non_finite.len()));
        }
        if let Some(TriangleDefect { value, triple: Some((i, k, j)) }) = &self.triangle {
            parts.push(format!("triangle defect {value} at ({i},{k},{j})"));
        }
        if parts.is_empty() {
            "valid".to_string()
        } else {
            parts.join("; ")
        }
    }
}

/// Checks symmetry, zero diagonal and nonnegativity of a square matrix and,
/// when asked, the worst triangle-inequality defect.
pub fn validate_metric(d: &Array2<f64>, check_triangle: bool) -> Result<ValidationReport> {
    let (n, m) = d.dim();
    if n != m {
        return Err(Error::Structural(format!("distance matrix is {n}x{m}, expected square")));
    }
    let scale = d.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = SYMMETRY_REL_TOL * (1.0 + scale);
    let mut report = ValidationReport {
        size: n,
        ..Default::default()
    };
    for i in 0..n {
        for j in 0..n {
            let v = d[[i, j]];
            if !v.is_finite() {
                report.non_finite.push((i, j));
                continue;
            }
            if v < 0.0 {
                report.negative.push((i, j));
            }
            if i == j {
                if v.abs() > tol {
                    report.nonzero_diagonal.push(i);
                }
            } else if j > i && (v - d[[j, i]]).abs() > tol {
                report.asymmetric.push((i, j));
            }
        }
    }
    if check_triangle {
        let mut worst = TriangleDefect::default();
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let defect = d[[i, k]] - d[[i, j]] - d[[j, k]];
                    if defect > worst.value {
                        worst = TriangleDefect {
                            value: defect,
                            triple: Some((i, k, j)),
                        };
                    }
                }
            }
        }
        report.triangle = Some(worst);
    }
    Ok(report)
}

/// A finite metric space with a fully supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMeasureSpace {
    distances: Array2<f64>,
    weights: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl MetricMeasureSpace {
    /// Builds a space, defaulting to uniform weights. Zero weights are
    /// rejected rather than dropped so that indices stay stable.
    pub fn new(
        distances: Array2<f64>,
        weights: Option<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let report = validate_metric(&distances, false)?;
        if !report.is_valid() {
            return Err(Error::Domain(format!("invalid distance matrix: {}", report.summary())));
        }
        let n = distances.nrows();
        if n == 0 {
            return Err(Error::Structural("empty distance matrix".into()));
        }
        let weights = match weights {
            Some(w) => {
                check_weights(&w, n)?;
                w
            }
            None => uniform_weights(n),
        };
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Structural(format!("{} labels for {n} points", l.len())));
            }
        }
        Ok(Self {
            distances,
            weights,
            labels,
        })
    }

    pub fn uniform(distances: Array2<f64>) -> Result<Self> {
        Self::new(distances, None, None)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn distances(&self) -> &Array2<f64> {
        &self.distances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of point `i`, falling back to its index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - u).abs() <= WEIGHT_SUM_TOL)
    }

    /// Largest distance; the support is everything since weights are positive.
    pub fn diameter(&self) -> f64 {
        self.distances.iter().fold(0.0f64, |a, &v| a.max(v))
    }

    /// `diam_p(X)^p = sum_{i,k} d(i,k)^p w_i w_k`; `p = f64::INFINITY` gives
    /// the diameter of the support.
    pub fn p_diameter(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::Domain(format!("p-diameter needs p >= 1, got {p}")));
        }
        if p.is_infinite() {
            return Ok(self.diameter());
        }
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for k in 0..n {
                row += self.distances[[i, k]].powf(p) * self.weights[k];
            }
            acc += row * self.weights[i];
        }
        Ok(acc.powf(1.0 / p))
    }
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub(crate) fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::Structural(format!("{} weights for {n} points", w.len())));
    }
    if let Some(i) = w.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "weight {i} is {}; every point needs positive mass",
            w[i]
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn two_point_metric_is_valid() {
        let r = validate_metric(&array![[0.0, 1.0], [1.0, 0.0]], true).unwrap();
        assert!(r.is_metric(0.0));
    }

    #[test]
    fn asymmetry_reported() {
        let r = validate_metric(&array![[0.0, 1.0], [2.0, 0.0]], false).unwrap();
        assert_eq!(r.asymmetric, vec![(0, 1)]);
        assert!(!r.is_valid());
    }

    #[test]
    fn triangle_defect_matches_enumeration() {
        let d = array![[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]];
        let r = validate_metric(&d, true).unwrap();
        let t = r.triangle.unwrap();
        assert_eq!(t.value, 1.0);
        assert_eq!(t.triple, Some((0, 2, 1)));
    }

    #[test]
    fn non_square_is_structural() {
        let d = Array2::<f64>::zeros((2, 3));
        assert!(matches!(validate_metric(&d, false), Err(Error::Structural(_))));
    }

    #[test]
    fn zero_weight_rejected() {
        let d = array![[0.0, 1.0], [1.0, 0.0]];
        let err = MetricMeasureSpace::new(d, Some(vec![1.0, 0.0]), None).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let d = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(MetricMeasureSpace::new(d, Some(vec![0.5, 0.6]), None).is_err());
    }

    #[test]
    fn p_diameter_examples() {
        let one = MetricMeasureSpace::uniform(array![[0.0]]).unwrap();
        assert_eq!(one.p_diameter(2.0).unwrap(), 0.0);
        assert_eq!(one.p_diameter(f64::INFINITY).unwrap(), 0.0);
        let two = MetricMeasureSpace::uniform(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        // (2 * 1/4)^(1/2)
        assert!((two.p_diameter(2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(two.p_diameter(f64::INFINITY).unwrap(), 1.0);
        assert!(matches!(two.p_diameter(0.5), Err(Error::Domain(_))));
    }

    fn random_space() -> impl Strategy<Value = MetricMeasureSpace> {
        (2usize..7).prop_flat_map(|n| {
            (
                prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), n),
                prop::collection::vec(0.05f64..1.0, n),
            )
                .prop_map(move |(pts, w)| {
                    let d = Array2::from_shape_fn((n, n), |(i, j)| {
                        let (a, b) = (pts[i], pts[j]);
                        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
                    });
                    let total: f64 = w.iter().sum();
                    let mut w: Vec<f64> = w.iter().map(|v| v / total).collect();
                    let s: f64 = w[1..].iter().sum();
                    w[0] = 1.0 - s;
                    MetricMeasureSpace::new(d, Some(w), None).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn p_diameter_bounded_by_diameter(x in random_space(), p in 1.0f64..8.0) {
            let dp = x.p_diameter(p).unwrap();
            prop_assert!(dp <= x.p_diameter(f64::INFINITY).unwrap() * (1.0 + 1e-12));
        }

        #[test]
        fn p_diameter_monotone_in_p(x in random_space(), p in 1.0f64..6.0, dq in 0.0f64..3.0) {
            let a = x.p_diameter(p).unwrap();
            let b = x.p_diameter(p + dq).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn p_diameter_scales_linearly(x in random_space(), c in 0.1f64..10.0, p in 1.0f64..4.0) {
            let scaled = MetricMeasureSpace::new(
                x.distances().mapv(|v| v * c), Some(x.weights().to_vec()), None).unwrap();
            let a = x.p_diameter(p).unwrap() * c;
            let b = scaled.p_diameter(p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }

        #[test]
        fn p_diameter_permutation_invariant(x in random_space(), seed in 0u64..1000, p in 1.0f64..4.0) {
            let n = x.len();
            let mut perm: Vec<usize> = (0..n).collect();
            // simple deterministic shuffle
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let d = Array2::from_shape_fn((n, n), |(i, j)| x.distances()[[perm[i], perm[j]]]);
            let w: Vec<f64> = perm.iter().map(|&i| x.weights()[i]).collect();
            let y = MetricMeasureSpace::new(d, Some(w), None).unwrap();
            let a = x.p_diameter(p).unwrap();
            let b = y.p_diameter(p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
    }
}
