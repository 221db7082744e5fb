//! Brute-force Gromov-Hausdorff type distances on small finite spaces.
//!
//! The semi-relaxed GH distance is an infimum over semi-correspondences, but
//! any semi-correspondence contains the graph of a function with no larger
//! distortion, so enumerating the `m^n` maps `X -> Y` computes it exactly.
//! Relation enumeration is kept for tiny spaces as an independent check.

use ndarray::Array2;
use rayon::prelude::*;

use crate::mmspace::MetricMeasureSpace;
use crate::srgw::{distortion_inf, SemiCoupling};
use crate::{Error, Result};

/// `n * log2(m)` may not exceed this many bits of enumeration.
pub const ENUMERATION_GUARD_BITS: f64 = 30.0;

/// Relation enumeration is limited to `n * m` cells.
pub const RELATION_GUARD_CELLS: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FiniteMap {
    targets: Vec<usize>,
}

impl FiniteMap {
    pub fn new(targets: Vec<usize>, m: usize) -> Result<Self> {
        if let Some(&t) = targets.iter().find(|&&t| t >= m) {
            return Err(Error::Domain(format!("target {t} outside a {m}-point space")));
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// The graph `{(i, f(i))}` as a relation.
    pub fn graph(&self) -> Vec<(usize, usize)> {
        self.targets.iter().copied().enumerate().collect()
    }
}

/// `1/2 max_{i,k} |dx[i,k] - dy[f(i), f(k)]|`.
pub fn function_distortion(f: &FiniteMap, dx: &Array2<f64>, dy: &Array2<f64>) -> f64 {
    let t = &f.targets;
    let mut worst = 0.0f64;
    for i in 0..t.len() {
        for k in 0..t.len() {
            worst = worst.max((dx[[i, k]] - dy[[t[i], t[k]]]).abs());
        }
    }
    0.5 * worst
}

/// `1/2 max over pairs of related pairs of |dx - dy|`.
pub fn relation_distortion(relation: &[(usize, usize)], dx: &Array2<f64>, dy: &Array2<f64>) -> Result<f64> {
    if relation.is_empty() {
        return Err(Error::Domain("relation is empty".into()));
    }
    let mut worst = 0.0f64;
    for &(x, y) in relation {
        for &(x2, y2) in relation {
            worst = worst.max((dx[[x, x2]] - dy[[y, y2]]).abs());
        }
    }
    Ok(0.5 * worst)
}

fn check_guard(n: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Structural("target space is empty".into()));
    }
    let bits = n as f64 * (m as f64).log2();
    if bits > ENUMERATION_GUARD_BITS {
        return Err(Error::Capacity(format!(
            "enumerating {m}^{n} maps needs {bits:.1} bits, limit is {ENUMERATION_GUARD_BITS}"
        )));
    }
    Ok(())
}

fn check_square(d: &Array2<f64>, name: &str) -> Result<usize> {
    let (r, c) = d.dim();
    if r != c {
        return Err(Error::Structural(format!("{name} matrix is {r}x{c}")));
    }
    Ok(r)
}

/// Depth-first branch and bound over maps in lexicographic order. Pruning is
/// strict so the first minimizer found is the lexicographically smallest.
struct MapSearch<'a> {
    dx: &'a Array2<f64>,
    dy: &'a Array2<f64>,
    best: f64,
    best_map: Vec<usize>,
    current: Vec<usize>,
}

impl MapSearch<'_> {
    fn descend(&mut self, depth: usize, worst: f64) {
        let n = self.dx.nrows();
        if depth == n {
            if worst < self.best {
                self.best = worst;
                self.best_map.clone_from(&self.current);
            }
            return;
        }
        for j in 0..self.dy.nrows() {
            let mut w = worst;
            for k in 0..depth {
                w = w.max((self.dx[[depth, k]] - self.dy[[j, self.current[k]]]).abs());
                if w > self.best {
                    break;
                }
            }
            if w > self.best {
                continue;
            }
            self.current.push(j);
            self.descend(depth + 1, w);
            self.current.pop();
        }
    }
}

/// `d_srGH(X, Y)` together with the lexicographically smallest optimal map.
pub fn srgh_with_map(dx: &Array2<f64>, dy: &Array2<f64>) -> Result<(f64, FiniteMap)> {
    let n = check_square(dx, "source")?;
    let m = check_square(dy, "target")?;
    check_guard(n, m)?;
    if n == 0 {
        return Ok((0.0, FiniteMap { targets: Vec::new() }));
    }
    // one independent search per image of the first point
    let branches: Vec<(f64, Vec<usize>)> = (0..m)
        .into_par_iter()
        .map(|first| {
            let mut search = MapSearch {
                dx,
                dy,
                best: f64::INFINITY,
                best_map: Vec::new(),
                current: vec![first],
            };
            search.descend(1, 0.0);
            (search.best, search.best_map)
        })
        .collect();
    let mut winner = (f64::INFINITY, Vec::new());
    for b in branches {
        if b.0 < winner.0 {
            winner = b;
        }
    }
    Ok((0.5 * winner.0, FiniteMap { targets: winner.1 }))
}

/// Semi-relaxed Gromov-Hausdorff distance `d_srGH(X, Y)`.
pub fn srgh(dx: &Array2<f64>, dy: &Array2<f64>) -> Result<f64> {
    srgh_with_map(dx, dy).map(|(v, _)| v)
}

/// Modified Gromov-Hausdorff distance, the larger of the two one-sided values.
pub fn mgh(dx: &Array2<f64>, dy: &Array2<f64>) -> Result<f64> {
    check_guard(dx.nrows(), dy.nrows())?;
    check_guard(dy.nrows(), dx.nrows())?;
    Ok(srgh(dx, dy)?.max(srgh(dy, dx)?))
}

/// `srGH` computed from its definition: the minimum relation distortion over
/// every semi-correspondence (relations covering all of X). Only for
/// `n * m <= 9`.
pub fn srgh_by_relations(dx: &Array2<f64>, dy: &Array2<f64>) -> Result<f64> {
    let n = check_square(dx, "source")?;
    let m = check_square(dy, "target")?;
    if n * m > RELATION_GUARD_CELLS {
        return Err(Error::Capacity(format!(
            "relation enumeration over {n}x{m} cells exceeds {RELATION_GUARD_CELLS}"
        )));
    }
    if m == 0 {
        return Err(Error::Structural("target space is empty".into()));
    }
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << cells.len()) {
        let relation: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &c)| c)
            .collect();
        let covers = (0..n).all(|i| relation.iter().any(|&(x, _)| x == i));
        if covers {
            best = best.min(relation_distortion(&relation, dx, dy)?);
        }
    }
    Ok(best)
}

/// `d_srGW,inf(X, Y)` by enumerating Monge semi-couplings and evaluating
/// their support distortion as couplings. Independent of the map search used
/// by [`srgh`]; the two must agree exactly for fully supported `X`.
pub fn srgw_inf_bruteforce(x: &MetricMeasureSpace, dy: &Array2<f64>) -> Result<(f64, FiniteMap)> {
    let n = x.len();
    let m = check_square(dy, "target")?;
    check_guard(n, m)?;
    let total = (m as u64).pow(n as u32);
    let per_first = total / m as u64;
    let decode = |code: u64| -> Vec<usize> {
        // most significant digit first, so codes run in lexicographic order
        let mut f = vec![0; n];
        let mut c = code;
        for slot in f.iter_mut().rev() {
            *slot = (c % m as u64) as usize;
            c /= m as u64;
        }
        f
    };
    let branches: Result<Vec<(f64, u64)>> = (0..m as u64)
        .into_par_iter()
        .map(|first| {
            let mut best = (f64::INFINITY, 0u64);
            for code in first * per_first..(first + 1) * per_first {
                let f = decode(code);
                let gamma = SemiCoupling::from_map(&f, x.weights(), m)?;
                let v = distortion_inf(&gamma, x.distances(), dy, 0.0)?;
                if v < best.0 {
                    best = (v, code);
                }
            }
            Ok(best)
        })
        .collect();
    let mut winner = (f64::INFINITY, 0u64);
    for b in branches? {
        if b.0 < winner.0 {
            winner = b;
        }
    }
    Ok((winner.0, FiniteMap { targets: decode(winner.1) }))
}

/// Directed Hausdorff distance `sup_{a in A} inf_{b in B} d(a, b)` inside an
/// ambient space; equal to the semi-relaxed Hausdorff distance.
pub fn asymmetric_hausdorff(a: &[usize], b: &[usize], dz: &Array2<f64>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("Hausdorff distance needs nonempty sets".into()));
    }
    let n = check_square(dz, "ambient")?;
    if let Some(&i) = a.iter().chain(b).find(|&&i| i >= n) {
        return Err(Error::Domain(format!("index {i} outside a {n}-point ambient space")));
    }
    Ok(a.iter()
        .map(|&x| b.iter().map(|&y| dz[[x, y]]).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Symmetric Hausdorff distance, the larger directed value.
pub fn hausdorff(a: &[usize], b: &[usize], dz: &Array2<f64>) -> Result<f64> {
    Ok(asymmetric_hausdorff(a, b, dz)?.max(asymmetric_hausdorff(b, a, dz)?))
}

/// Metric on the disjoint union `X ⊔ Y` glued along a relation: X occupies
/// indices `0..n`, Y indices `n..n+m`, and
/// `d(x, y) = min_{(x',y') in R} dx(x,x') + dy(y',y) + eps`.
/// For `eps >= dis(R)` this is a metric in which the directed Hausdorff
/// distance from X to the image of Y is at most `eps` when R covers X.
pub fn glued_metric(dx: &Array2<f64>, dy: &Array2<f64>, relation: &[(usize, usize)], eps: f64) -> Result<Array2<f64>> {
    if relation.is_empty() {
        return Err(Error::Domain("relation is empty".into()));
    }
    let n = check_square(dx, "source")?;
    let m = check_square(dy, "target")?;
    let mut dz = Array2::zeros((n + m, n + m));
    for i in 0..n {
        for k in 0..n {
            dz[[i, k]] = dx[[i, k]];
        }
    }
    for j in 0..m {
        for l in 0..m {
            dz[[n + j, n + l]] = dy[[j, l]];
        }
    }
    for i in 0..n {
        for j in 0..m {
            let v = relation
                .iter()
                .map(|&(x, y)| dx[[i, x]] + dy[[y, j]] + eps)
                .fold(f64::INFINITY, f64::min);
            dz[[i, n + j]] = v;
            dz[[n + j, i]] = v;
        }
    }
    Ok(dz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::validate_metric;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f64]) -> Array2<f64> {
        let n = points.len();
        Array2::from_shape_fn((n, n), |(i, j)| (points[i] - points[j]).abs())
    }

    fn random_metric(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        Array2::from_shape_fn((n, n), |(i, j)| {
            ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
        })
    }

    /// Every map, no pruning.
    fn srgh_exhaustive(dx: &Array2<f64>, dy: &Array2<f64>) -> f64 {
        let (n, m) = (dx.nrows(), dy.nrows());
        let mut best = f64::INFINITY;
        for code in 0..m.pow(n as u32) {
            let mut c = code;
            let t: Vec<usize> = (0..n)
                .map(|_| {
                    let v = c % m;
                    c /= m;
                    v
                })
                .collect();
            best = best.min(function_distortion(&FiniteMap { targets: t }, dx, dy));
        }
        best
    }

    #[test]
    fn function_distortion_examples() {
        let d = line(&[0.0, 1.0]);
        let id = FiniteMap::new(vec![0, 1], 2).unwrap();
        assert_eq!(function_distortion(&id, &d, &d), 0.0);
        let constant = FiniteMap::new(vec![0, 0], 2).unwrap();
        assert_eq!(function_distortion(&constant, &d, &d), 0.5);
        assert_eq!(function_distortion(&id, &d, &line(&[0.0, 2.0])), 0.5);
    }

    #[test]
    fn relation_distortion_examples() {
        let d = line(&[0.0, 1.0]);
        assert_eq!(relation_distortion(&[(0, 0), (1, 1)], &d, &d).unwrap(), 0.0);
        let full = [(0, 0), (0, 1), (1, 0), (1, 1)];
        assert_eq!(relation_distortion(&full, &d, &d).unwrap(), 0.5);
        assert!(matches!(relation_distortion(&[], &d, &d), Err(Error::Domain(_))));
    }

    #[test]
    fn graph_distortion_equals_function_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let dx = random_metric(4, &mut rng);
            let dy = random_metric(5, &mut rng);
            let f = FiniteMap::new((0..4).map(|_| rng.random_range(0..5)).collect(), 5).unwrap();
            assert_eq!(relation_distortion(&f.graph(), &dx, &dy).unwrap(), function_distortion(&f, &dx, &dy));
        }
    }

    #[test]
    fn srgh_examples() {
        let y = line(&[0.0, 1.0, 3.0, 6.0]);
        let x = line(&[1.0, 6.0]);
        assert_eq!(srgh(&x, &y).unwrap(), 0.0);
        assert_eq!(srgh(&line(&[0.0, 1.0]), &line(&[0.0, 2.0])).unwrap(), 0.5);
        assert_eq!(srgh(&array![[0.0]], &y).unwrap(), 0.0);
    }

    #[test]
    fn srgh_guard() {
        let x = Array2::zeros((31, 31));
        let y = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(srgh(&x, &y), Err(Error::Capacity(_))));
    }

    #[test]
    fn branch_and_bound_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(1..=5);
            let m = rng.random_range(1..=4);
            let dx = random_metric(n, &mut rng);
            let dy = random_metric(m, &mut rng);
            let (v, f) = srgh_with_map(&dx, &dy).unwrap();
            assert_eq!(v, srgh_exhaustive(&dx, &dy));
            assert_eq!(function_distortion(&f, &dx, &dy), v);
        }
    }

    #[test]
    fn minimizer_is_lexicographically_smallest() {
        // every map into a one-point-plus-far space ties at the constants
        let dx = array![[0.0]];
        let dy = line(&[0.0, 5.0, 9.0]);
        let (_, f) = srgh_with_map(&dx, &dy).unwrap();
        assert_eq!(f.targets(), &[0]);
    }

    #[test]
    fn mgh_examples() {
        let y = line(&[0.0, 1.0, 3.0]);
        let x = line(&[3.0, 0.0, 1.0]);
        assert_eq!(mgh(&x, &y).unwrap(), 0.0);
        assert_eq!(mgh(&line(&[0.0, 1.0]), &line(&[0.0, 2.0])).unwrap(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_metric(3, &mut rng);
            let b = random_metric(4, &mut rng);
            assert_eq!(mgh(&a, &b).unwrap(), mgh(&b, &a).unwrap());
        }
    }

    #[test]
    fn relations_agree_with_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=3 {
            for m in 1..=3 {
                for _ in 0..10 {
                    let dx = random_metric(n, &mut rng);
                    let dy = random_metric(m, &mut rng);
                    assert_eq!(srgh_by_relations(&dx, &dy).unwrap(), srgh(&dx, &dy).unwrap());
                }
            }
        }
        assert!(matches!(
            srgh_by_relations(&random_metric(4, &mut rng), &random_metric(3, &mut rng)),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn srgw_inf_matches_srgh() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let dx = random_metric(3, &mut rng);
            let dy = random_metric(4, &mut rng);
            let x = MetricMeasureSpace::uniform(dx.clone()).unwrap();
            let (v, f) = srgw_inf_bruteforce(&x, &dy).unwrap();
            let (w, g) = srgh_with_map(&dx, &dy).unwrap();
            assert_eq!(v, w);
            assert_eq!(f, g);
        }
    }

    #[test]
    fn srgw_inf_counterexample_direction() {
        // two points with weights (0.9, 0.1) forced onto one point
        let y = MetricMeasureSpace::new(line(&[0.0, 1.0]), Some(vec![0.9, 0.1]), None).unwrap();
        let (v, _) = srgw_inf_bruteforce(&y, &array![[0.0]]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn hausdorff_examples() {
        let dz = line(&[0.0, 5.0]);
        assert_eq!(asymmetric_hausdorff(&[0], &[0, 1], &dz).unwrap(), 0.0);
        assert_eq!(asymmetric_hausdorff(&[0, 1], &[0], &dz).unwrap(), 5.0);
        assert_eq!(hausdorff(&[0, 1], &[0, 1], &dz).unwrap(), 0.0);
        assert!(matches!(asymmetric_hausdorff(&[], &[0], &dz), Err(Error::Domain(_))));
    }

    #[test]
    fn subsets_bound_srgh_by_directed_hausdorff() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let dz = random_metric(7, &mut rng);
            let a: Vec<usize> = (0..7).filter(|_| rng.random::<bool>()).collect();
            let b: Vec<usize> = (0..7).filter(|_| rng.random::<bool>()).collect();
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let sub = |s: &[usize]| Array2::from_shape_fn((s.len(), s.len()), |(i, j)| dz[[s[i], s[j]]]);
            let lower = srgh(&sub(&a), &sub(&b)).unwrap();
            assert!(lower <= asymmetric_hausdorff(&a, &b, &dz).unwrap() + 1e-12);
        }
    }

    #[test]
    fn glued_metric_realizes_relation_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let dx = random_metric(3, &mut rng);
            let dy = random_metric(4, &mut rng);
            let (eps, f) = srgh_with_map(&dx, &dy).unwrap();
            let relation = f.graph();
            let dz = glued_metric(&dx, &dy, &relation, eps).unwrap();
            assert!(validate_metric(&dz, true).unwrap().is_metric(1e-12));
            let xs: Vec<usize> = (0..3).collect();
            let ys: Vec<usize> = (3..7).collect();
            let directed = asymmetric_hausdorff(&xs, &ys, &dz).unwrap();
            assert!(directed <= eps + 1e-12);
            assert!(directed >= eps - 1e-12);
        }
    }
}
