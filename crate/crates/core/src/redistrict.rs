//! Two-district plan ensembles: the relabeling-invariant Hamming distance,
//! label alignment and arc summaries around an embedded circle.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mmspace::MetricMeasureSpace;
use crate::{Error, Result};

pub const DEFAULT_ARCS: usize = 8;

/// `P` plans over `U` units, each label 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    assignments: Vec<Vec<u8>>,
    unit_ids: Vec<String>,
    plan_ids: Vec<String>,
}

impl Ensemble {
    pub fn new(assignments: Vec<Vec<u8>>, unit_ids: Vec<String>, plan_ids: Vec<String>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::Structural("ensemble has no plans".into()));
        }
        if plan_ids.len() != assignments.len() {
            return Err(Error::Structural(format!(
                "{} plan ids for {} plans",
                plan_ids.len(),
                assignments.len()
            )));
        }
        for (p, plan) in assignments.iter().enumerate() {
            if plan.len() != unit_ids.len() {
                return Err(Error::Structural(format!(
                    "plan {} has {} units, expected {}",
                    plan_ids[p],
                    plan.len(),
                    unit_ids.len()
                )));
            }
            if let Some(bad) = plan.iter().find(|&&l| l != 1 && l != 2) {
                return Err(Error::Domain(format!("plan {} uses label {bad}", plan_ids[p])));
            }
            if !plan.contains(&1) || !plan.contains(&2) {
                return Err(Error::Domain(format!("plan {} leaves a district empty", plan_ids[p])));
            }
        }
        Ok(Self { assignments, unit_ids, plan_ids })
    }

    /// Numbered ids `unit_0..` and `plan_0..`.
    pub fn from_assignments(assignments: Vec<Vec<u8>>) -> Result<Self> {
        let units = assignments.first().map_or(0, Vec::len);
        let unit_ids = (0..units).map(|u| format!("unit_{u}")).collect();
        let plan_ids = (0..assignments.len()).map(|p| format!("plan_{p}")).collect();
        Self::new(assignments, unit_ids, plan_ids)
    }

    pub fn plans(&self) -> &[Vec<u8>] {
        &self.assignments
    }

    pub fn plan(&self, p: usize) -> &[u8] {
        &self.assignments[p]
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn plan_ids(&self) -> &[String] {
        &self.plan_ids
    }

    pub fn n_plans(&self) -> usize {
        self.assignments.len()
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    /// The same ensemble with districts 1 and 2 swapped in every plan.
    pub fn relabeled(&self) -> Self {
        Self {
            assignments: self.assignments.iter().map(|p| swap(p)).collect(),
            unit_ids: self.unit_ids.clone(),
            plan_ids: self.plan_ids.clone(),
        }
    }
}

fn swap(plan: &[u8]) -> Vec<u8> {
    plan.iter().map(|&l| 3 - l).collect()
}

fn direct_differences(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Units that must move to turn `b` into `a`, minimized over swapping the
/// labels of `b`.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Structural(format!("plans have {} and {} units", a.len(), b.len())));
    }
    let direct = direct_differences(a, b);
    Ok(direct.min(a.len() - direct))
}

/// Pairwise Hamming distances with uniform weights; rows in parallel.
pub fn ensemble_distances(e: &Ensemble) -> Result<MetricMeasureSpace> {
    let p = e.n_plans();
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            (0..p)
                .map(|j| {
                    let direct = direct_differences(e.plan(i), e.plan(j));
                    direct.min(e.n_units() - direct) as f64
                })
                .collect()
        })
        .collect();
    let d = Array2::from_shape_fn((p, p), |(i, j)| rows[i][j]);
    MetricMeasureSpace::new(d, None, Some(e.plan_ids.clone()))
}

/// `q` or its label swap, whichever differs from `p` in fewer units; `q` on a
/// tie.
pub fn align(q: &[u8], p: &[u8]) -> Result<Vec<u8>> {
    if q.len() != p.len() {
        return Err(Error::Structural(format!("plans have {} and {} units", q.len(), p.len())));
    }
    let direct = direct_differences(q, p);
    Ok(if q.len() - direct < direct { swap(q) } else { q.to_vec() })
}

/// Reference plan for the non-leading plans of an arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Align to the (already aligned) first plan of the same arc.
    #[default]
    ArcFirst,
    /// Align to the first plan of arc 0.
    EnsembleFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSummary {
    pub arc_index: usize,
    /// Plans on the arc, ordered by coordinate then index.
    pub plan_indices: Vec<usize>,
    /// Share of the arc's plans placing each unit in district 1; `None` for
    /// an empty arc.
    pub fractions: Option<Vec<f64>>,
}

/// Arc `k` covers coordinates `[k/n_arcs, (k+1)/n_arcs)`.
pub fn arc_of(coord: f64, n_arcs: usize) -> usize {
    ((coord * n_arcs as f64).floor() as usize).min(n_arcs - 1)
}

/// Splits the circle into `n_arcs` equal arcs from coordinate 0 and
/// summarizes each arc's aligned plans. The leading plan of each arc (lowest
/// coordinate, then lowest index) is aligned to the leading plan of the
/// previous nonempty arc, the first one keeping its labels.
pub fn arc_summaries(coords: &[f64], e: &Ensemble, n_arcs: usize, mode: AlignMode) -> Result<Vec<ArcSummary>> {
    if coords.len() != e.n_plans() {
        return Err(Error::Structural(format!(
            "{} coordinates for {} plans",
            coords.len(),
            e.n_plans()
        )));
    }
    if n_arcs == 0 {
        return Err(Error::Domain("need at least one arc".into()));
    }
    if let Some(c) = coords.iter().find(|c| !(0.0..1.0).contains(*c)) {
        return Err(Error::Domain(format!("circular coordinate {c} outside [0, 1)")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_arcs];
    for (p, &c) in coords.iter().enumerate() {
        members[arc_of(c, n_arcs)].push(p);
    }
    for arc in &mut members {
        arc.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]).then(a.cmp(&b)));
    }

    let mut previous_lead: Option<Vec<u8>> = None;
    let mut ensemble_lead: Option<Vec<u8>> = None;
    let mut out = Vec::with_capacity(n_arcs);
    for (arc_index, plan_indices) in members.into_iter().enumerate() {
        let Some(&first) = plan_indices.first() else {
            out.push(ArcSummary { arc_index, plan_indices, fractions: None });
            continue;
        };
        let lead = match &previous_lead {
            Some(prev) => align(e.plan(first), prev)?,
            None => e.plan(first).to_vec(),
        };
        let ensemble_ref = ensemble_lead.get_or_insert_with(|| lead.clone()).clone();
        let mut ones = vec![0usize; e.n_units()];
        for &p in &plan_indices {
            let aligned = if p == first {
                lead.clone()
            } else {
                match mode {
                    AlignMode::ArcFirst => align(e.plan(p), &lead)?,
                    AlignMode::EnsembleFirst => align(e.plan(p), &ensemble_ref)?,
                }
            };
            for (count, &l) in ones.iter_mut().zip(&aligned) {
                *count += usize::from(l == 1);
            }
        }
        let total = plan_indices.len() as f64;
        out.push(ArcSummary {
            arc_index,
            fractions: Some(ones.iter().map(|&c| c as f64 / total).collect()),
            plan_indices,
        });
        previous_lead = Some(lead);
    }
    Ok(out)
}

/// Seeded synthetic ensemble: plans are noisy copies of a rotating split of
/// units laid out on a ring, so the plans themselves trace a circle.
pub fn synthetic_ensemble(n_plans: usize, n_units: usize, flip_prob: f64, seed: u64) -> Result<Ensemble> {
    if n_units < 2 || n_plans == 0 {
        return Err(Error::Domain("need at least one plan and two units".into()));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::Domain(format!("flip probability must be in [0, 0.5), got {flip_prob}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans = (0..n_plans)
        .map(|_| {
            // a random diameter of the ring splits the units in half
            let cut = rng.random::<f64>() * PI;
            let mut plan: Vec<u8> = (0..n_units)
                .map(|u| {
                    let t = (u as f64 / n_units as f64 * TAU - cut).rem_euclid(TAU);
                    let label = if t < PI { 1 } else { 2 };
                    if rng.random::<f64>() < flip_prob {
                        3 - label
                    } else {
                        label
                    }
                })
                .collect();
            if !plan.contains(&1) {
                plan[0] = 1;
            }
            if !plan.contains(&2) {
                plan[0] = 2;
            }
            plan
        })
        .collect();
    Ensemble::from_assignments(plans)
}
