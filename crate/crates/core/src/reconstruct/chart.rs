use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ObservationFamily, ReconstructOptions, TopologyProbe};
use crate::error::ReconstructError;
use crate::linalg;
use crate::observe::{angles_contain, chart_distance, chart_offset, detect_regular, PublicView, RegularPatch};

/// Straight segment `gamma(s) = start + (s + 1)/2 * (end - start)` in boundary
/// parameters, `s in [-1, 1]`, periodic angles taken the short way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveInU {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CurveInU {
    pub fn new(start: Vec<f64>, end: Vec<f64>) -> Result<Self, ReconstructError> {
        if start.len() != end.len() || chart_distance(&end, &start) == 0.0 {
            return Err(ReconstructError::InsufficientData("curve needs distinct endpoints of equal dimension".into()));
        }
        Ok(CurveInU { start, end })
    }

    /// Segment in `t` over `t_range` at fixed angles.
    pub fn t_segment(angles: &[f64], t_range: (f64, f64)) -> Self {
        let mut start = vec![t_range.0];
        start.extend_from_slice(angles);
        let mut end = vec![t_range.1];
        end.extend_from_slice(angles);
        CurveInU { start, end }
    }

    fn delta(&self) -> DVector<f64> {
        chart_offset(&self.end, &self.start)
    }

    pub fn at(&self, s: f64) -> Vec<f64> {
        let d = self.delta();
        self.start.iter().zip(d.iter()).map(|(a, b)| a + 0.5 * (s + 1.0) * b).collect()
    }

    pub fn derivative(&self) -> DVector<f64> {
        self.delta() * 0.5
    }

    /// Chart length of one unit of `s`.
    pub fn speed(&self) -> f64 {
        self.derivative().norm()
    }

    /// Whether the curve stays inside `b` (checked on a parameter grid).
    pub fn inside(&self, b: &crate::manifold::BoundaryBox) -> bool {
        (0..=32).all(|i| {
            let u = self.at(-1.0 + i as f64 / 16.0);
            u[0] >= b.t.0 && u[0] <= b.t.1 && angles_contain(b, &u)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Miss {
    NoHit,
    MultipleHits(usize),
    Irregular,
    Tangential,
}

/// Result of an earliest observation time query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Earliest {
    At(f64),
    NotInDomain(Miss),
}

impl Earliest {
    pub fn value(self) -> Option<f64> {
        match self {
            Earliest::At(s) => Some(s),
            Earliest::NotInDomain(_) => None,
        }
    }
}

/// Unit Euclidean normal of a patch in boundary parameters.
pub(crate) fn patch_normal(patch: &RegularPatch) -> DVector<f64> {
    let n = patch.p.len();
    if n == 1 {
        return DVector::from_element(1, 1.0);
    }
    let rows = DMatrix::from_fn(n - 1, n, |r, c| patch.tangent[r][c]);
    linalg::right_null_space(&rows, 1).remove(0)
}

/// Single regular patch of `view` near `u`, if any.
pub(crate) fn regular_patch_near(view: &PublicView, u: &[f64], opts: &ReconstructOptions) -> Option<RegularPatch> {
    let local = detect_regular(view, u, opts.patch_radius, &opts.sheet).ok()?;
    local.regular_patch().cloned()
}

/// Crossing of `curve` with a sheet, refined from `s0` by intersecting with
/// the fitted tangent plane until the step vanishes.
fn refine_hit(view: &PublicView, curve: &CurveInU, s0: f64, opts: &ReconstructOptions) -> Result<f64, Miss> {
    let dgamma = curve.derivative();
    let mut s = s0;
    for _ in 0..12 {
        let q = curve.at(s);
        let patch = regular_patch_near(view, &q, opts).ok_or(Miss::Irregular)?;
        let nu = patch_normal(&patch);
        let across = nu.dot(&dgamma);
        if across.abs() <= dgamma.norm() * opts.alpha_min.sin() {
            return Err(Miss::Tangential);
        }
        let ds = -nu.dot(&chart_offset(&q, &patch.p)) / across;
        s += ds;
        if !(s.abs() <= 1.0 + 1e-12) {
            return Err(Miss::NoHit);
        }
        if (ds * dgamma.norm()).abs() < 1e-13 {
            return Ok(s);
        }
    }
    Ok(s)
}

/// Earliest observation time of the set `view` along `curve`.
/// Every parameter where `curve` crosses the set, sorted, each refined
/// against the regular sheet there.
pub fn observation_times_along(view: &PublicView, curve: &CurveInU, opts: &ReconstructOptions) -> Result<Vec<f64>, Miss> {
    let d = curve.delta();
    let len2 = d.norm_squared();
    let mut candidates: Vec<(f64, f64)> = view
        .points
        .iter()
        .filter_map(|u| {
            let o = chart_offset(u, &curve.start);
            let tau = (o.dot(&d) / len2).clamp(0.0, 1.0);
            let dist = (o - &d * tau).norm();
            (dist <= opts.delta_hit).then_some((2.0 * tau - 1.0, dist))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gap = 4.0 * opts.delta_hit / curve.speed();
    let mut clusters: Vec<Vec<(f64, f64)>> = Vec::new();
    for c in candidates {
        match clusters.last_mut() {
            Some(last) if c.0 - last.last().unwrap().0 <= gap => last.push(c),
            _ => clusters.push(vec![c]),
        }
    }
    let mut hits: Vec<f64> = Vec::new();
    for cluster in &clusters {
        let seed = cluster.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        match refine_hit(view, curve, seed, opts) {
            Ok(s) => {
                if !hits.iter().any(|h| ((h - s) * curve.speed()).abs() < opts.delta_hit) {
                    hits.push(s);
                }
            }
            Err(Miss::NoHit) => {}
            Err(m) => return Err(m),
        }
    }
    hits.sort_by(f64::total_cmp);
    Ok(hits)
}

pub fn earliest_time_in(view: &PublicView, curve: &CurveInU, opts: &ReconstructOptions) -> Earliest {
    match observation_times_along(view, curve, opts) {
        Err(m) => Earliest::NotInDomain(m),
        Ok(hits) => match hits.len() {
            0 => Earliest::NotInDomain(Miss::NoHit),
            1 => Earliest::At(hits[0]),
            k => Earliest::NotInDomain(Miss::MultipleHits(k)),
        },
    }
}

pub fn earliest_observation_time(
    family: &ObservationFamily,
    id: u64,
    curve: &CurveInU,
    opts: &ReconstructOptions,
) -> Result<Earliest, ReconstructError> {
    Ok(earliest_time_in(family.view(id)?, curve, opts))
}

/// Local coordinates from earliest observation times along `n + 1` curves,
/// `x^mu = (s_mu - s_mu(center)) * |gamma_mu'|` so the center sits at the
/// origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chart {
    pub center: u64,
    pub curves: Vec<CurveInU>,
    pub coords: BTreeMap<u64, Vec<f64>>,
    /// Condition number of the coordinate differences across incidence
    /// neighbors of the center.
    pub conditioning: f64,
    /// Smallest distance between coordinates of distinct ids.
    pub min_separation: f64,
}

impl Chart {
    pub fn coord(&self, id: u64) -> Option<DVector<f64>> {
        self.coords.get(&id).map(|c| DVector::from_column_slice(c))
    }
}

/// Greedy selection of `n + 1` curves whose coordinate differentials,
/// estimated across the center's incidence neighbors, are well conditioned.
pub fn build_chart(
    family: &ObservationFamily,
    center: u64,
    candidates: &[CurveInU],
    probe: &TopologyProbe,
    opts: &ReconstructOptions,
) -> Result<Chart, ReconstructError> {
    let n = family.spatial_dim();
    let center_view = family.view(center)?;
    let ids = family.ids();
    // earliest times of every id along every candidate
    let table: Vec<BTreeMap<u64, f64>> = candidates
        .iter()
        .map(|curve| {
            ids.par_iter()
                .filter_map(|&id| earliest_time_in(&family.sets[&id], curve, opts).value().map(|s| (id, s)))
                .collect()
        })
        .collect();
    let usable: Vec<usize> = (0..candidates.len()).filter(|&c| table[c].contains_key(&center)).collect();
    let neighbors = probe.neighbors(center, opts.chart_neighbors.max(n + 1));
    // normalized coordinate increments over neighbors seen by every curve
    let increments = |sel: &[usize]| -> Option<DMatrix<f64>> {
        let rows: Vec<Vec<f64>> = neighbors
            .iter()
            .filter_map(|id| {
                sel.iter().map(|&c| table[c].get(id).map(|s| (s - table[c][&center]) * candidates[c].speed())).collect()
            })
            .collect();
        if rows.len() < sel.len() {
            return None;
        }
        let mut m = DMatrix::from_fn(rows.len(), sel.len(), |r, c| rows[r][c]);
        for mut col in m.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 {
                return None;
            }
            col /= norm;
        }
        Some(m)
    };
    let hit_point = |c: usize| candidates[c].at(table[c][&center]);
    let mut selected: Vec<usize> = Vec::new();
    let mut best_condition = f64::INFINITY;
    for _ in 0..=n {
        let mut best: Option<(f64, usize)> = None;
        for &c in &usable {
            if selected.contains(&c) || selected.iter().any(|&o| chart_distance(&hit_point(o), &hit_point(c)) < opts.delta_hit) {
                continue;
            }
            let trial: Vec<usize> = selected.iter().copied().chain(std::iter::once(c)).collect();
            let Some(m) = increments(&trial) else { continue };
            let cond = linalg::condition_number(&m);
            if best.is_none_or(|(b, _)| cond < b) {
                best = Some((cond, c));
            }
        }
        match best {
            Some((cond, c)) => {
                selected.push(c);
                best_condition = cond;
            }
            None => {
                best_condition = f64::INFINITY;
                break;
            }
        }
    }
    if selected.len() != n + 1 || !(best_condition < opts.kappa_max) {
        return Err(ReconstructError::ChartFailure { best_condition });
    }
    if center_view.len() < n + 1 {
        return Err(ReconstructError::InsufficientData("center set too small".into()));
    }
    let mut coords = BTreeMap::new();
    for &id in &ids {
        let vals: Option<Vec<f64>> = selected
            .iter()
            .map(|&c| table[c].get(&id).map(|s| (s - table[c][&center]) * candidates[c].speed()))
            .collect();
        if let Some(v) = vals {
            coords.insert(id, v);
        }
    }
    let points: Vec<DVector<f64>> = coords.values().map(|c| DVector::from_column_slice(c)).collect();
    let min_separation = (0..points.len())
        .into_par_iter()
        .map(|i| (i + 1..points.len()).map(|j| (&points[i] - &points[j]).norm()).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min);
    Ok(Chart {
        center,
        curves: selected.iter().map(|&c| candidates[c].clone()).collect(),
        coords,
        conditioning: best_condition,
        min_separation,
    })
}
