//! Boundary light observation sets: the points of a region where the future
//! broken light cone of a source meets the boundary.

mod distinct;
mod regular;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use distinct::{distinctness_check, hausdorff, DistinctnessReport};
pub use regular::{detect_regular, outward_null_ray, LocalStructure, RegularPatch, SheetOptions};

use crate::error::{GeometryError, ObserveError};
use crate::manifold::{sample_null_directions, sphere, BoundaryBox, Point, Spacetime};
use crate::raytrace::{expb_differential, trace, IntegratorOptions, Termination, TraceLimits};

/// Observation region `U` with a compactly contained `U'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRegion {
    pub outer: BoundaryBox,
    pub inner: BoundaryBox,
}

impl BoundaryRegion {
    pub fn new(outer: BoundaryBox, inner: BoundaryBox) -> Result<Self, GeometryError> {
        let n = outer.angles.len() + 1;
        let ok_t = inner.t.0 > outer.t.0 && inner.t.1 < outer.t.1 && inner.t.0 < inner.t.1;
        let ok_angles = inner.angles.len() == outer.angles.len()
            && inner.angles.iter().zip(&outer.angles).enumerate().all(|(k, (i, o))| {
                let full = sphere::is_periodic(k, n) && o.1 - o.0 >= std::f64::consts::TAU - 1e-12;
                i.0 < i.1 && ((i.0 > o.0 && i.1 < o.1) || (full && i.0 >= o.0 && i.1 <= o.1))
            });
        if !ok_t || !ok_angles {
            return Err(GeometryError::Config("inner box must sit inside the region box with a margin".into()));
        }
        Ok(BoundaryRegion { outer, inner })
    }

    /// Full angular range over `t in (t0, t1)`, with `U'` shrunk by `margin`
    /// in `t` (and in non-periodic angles).
    pub fn full(spatial_dim: usize, t: (f64, f64), margin: f64) -> Self {
        let outer = BoundaryBox::full(spatial_dim, t);
        let mut inner = BoundaryBox::full(spatial_dim, (t.0 + margin, t.1 - margin));
        for (k, a) in inner.angles.iter_mut().enumerate() {
            if !sphere::is_periodic(k, spatial_dim) {
                *a = (a.0 + margin, a.1 - margin);
            }
        }
        BoundaryRegion { outer, inner }
    }

    pub fn spatial_dim(&self) -> usize {
        self.outer.angles.len() + 1
    }
}

/// Whether boundary coordinates `u` lie in the box (open in `t`, periodic
/// angles wrapped).
pub fn box_contains(b: &BoundaryBox, u: &[f64]) -> bool {
    u[0] > b.t.0 && u[0] < b.t.1 && angles_contain(b, u)
}

/// Angular part of box membership.
pub(crate) fn angles_contain(b: &BoundaryBox, u: &[f64]) -> bool {
    let n = b.angles.len() + 1;
    b.angles.iter().enumerate().all(|(k, &(lo, hi))| {
        let a = u[k + 1];
        if sphere::is_periodic(k, n) {
            if hi - lo >= std::f64::consts::TAU - 1e-12 {
                return true;
            }
            let off = sphere::wrap_difference(a, lo).rem_euclid(std::f64::consts::TAU);
            off <= hi - lo
        } else {
            a >= lo && a <= hi
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationPoint {
    pub u: Vec<f64>,
    pub s_arrival: f64,
    pub k: usize,
    /// Velocity of the ray as it reaches the boundary (metadata).
    pub w_out: Vec<f64>,
    /// Index of the source ray (metadata).
    pub dir_index: usize,
}

/// Per-ray outcome worth reporting: aborted or non-window terminations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RayDiagnostic {
    pub dir_index: usize,
    pub outcome: String,
}

/// Conjugacy verdict for one recorded arrival.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugacyVerdict {
    pub dir_index: usize,
    pub k: usize,
    pub ratio: f64,
    pub conjugate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub source_id: u64,
    /// Ground-truth source (metadata).
    pub source: Point,
    pub points: Vec<ObservationPoint>,
    pub diagnostics: Vec<RayDiagnostic>,
    pub conjugacy: Vec<ConjugacyVerdict>,
}

/// The part of an observation set visible to reconstruction: the multiset of
/// boundary coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicView {
    pub points: Vec<Vec<f64>>,
}

impl PublicView {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn restricted(&self, b: &BoundaryBox) -> PublicView {
        PublicView { points: self.points.iter().filter(|u| box_contains(b, u)).cloned().collect() }
    }
}

impl ObservationSet {
    pub fn public_view(&self) -> PublicView {
        PublicView { points: self.points.iter().map(|p| p.u.clone()).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserveOptions {
    pub max_reflections: usize,
    pub s_total: f64,
    pub min_chord: f64,
    /// Run the conjugacy screen on every recorded arrival.
    pub screen_conjugacy: bool,
    pub conjugacy_step: f64,
    pub integrator: IntegratorOptions,
}

impl Default for ObserveOptions {
    fn default() -> Self {
        ObserveOptions {
            max_reflections: 32,
            s_total: 1e3,
            min_chord: 1e-4,
            screen_conjugacy: false,
            conjugacy_step: 1e-5,
            integrator: IntegratorOptions::default(),
        }
    }
}

/// Spacing of `m` quasi-uniform directions on `S^{n-1}`.
pub fn sample_spacing(n: usize, m: usize) -> f64 {
    let m = m.max(1) as f64;
    match n {
        0 | 1 => 1.0,
        2 => std::f64::consts::TAU / m,
        _ => (sphere_area(n) / m).powf(1.0 / (n as f64 - 1.0)),
    }
}

/// Area of the unit sphere `S^{n-1}` in `R^n`.
fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::TAU,
        _ => std::f64::consts::TAU / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// Traces `m` future null rays from `q` and records every boundary arrival
/// inside `region.outer`, with all reflection counts.
pub fn compute_observation_set(
    spec: &dyn Spacetime,
    source_id: u64,
    q: &Point,
    region: &BoundaryRegion,
    m: usize,
    opts: &ObserveOptions,
) -> Result<ObservationSet, ObserveError> {
    if m == 0 {
        return Err(GeometryError::Precondition("need at least one ray".into()).into());
    }
    let dirs = sample_null_directions(spec, q, m)?;
    let limits = TraceLimits {
        s_total: opts.s_total,
        max_reflections: opts.max_reflections,
        t_min: f64::NEG_INFINITY,
        t_max: region.outer.t.1,
        min_chord: opts.min_chord,
    };
    let per_ray: Vec<(Vec<ObservationPoint>, Option<RayDiagnostic>, Vec<ConjugacyVerdict>)> = dirs
        .par_iter()
        .enumerate()
        .map(|(i, dir)| {
            let geo = match trace(spec, q, &dir.components, &limits, &opts.integrator) {
                Ok(geo) => geo,
                Err(e) => {
                    return (Vec::new(), Some(RayDiagnostic { dir_index: i, outcome: e.to_string() }), Vec::new());
                }
            };
            let points: Vec<ObservationPoint> = geo
                .arrivals
                .iter()
                .filter(|a| box_contains(&region.outer, &a.u))
                .map(|a| ObservationPoint {
                    u: a.u.clone(),
                    s_arrival: a.s,
                    k: a.k,
                    w_out: a.v_in.iter().copied().collect(),
                    dir_index: i,
                })
                .collect();
            let diag = match geo.termination {
                Termination::TimeWindowExit | Termination::AffineLimit => None,
                other => Some(RayDiagnostic { dir_index: i, outcome: format!("{other:?}") }),
            };
            let mut verdicts = Vec::new();
            if opts.screen_conjugacy {
                for p in &points {
                    let scaled = &dir.components * p.s_arrival;
                    if let Ok(d) = expb_differential(spec, q, &scaled, p.k, opts.conjugacy_step) {
                        verdicts.push(ConjugacyVerdict { dir_index: i, k: p.k, ratio: d.ratio, conjugate: d.conjugate });
                    }
                }
            }
            (points, diag, verdicts)
        })
        .collect();
    let mut set =
        ObservationSet { source_id, source: q.clone(), points: Vec::new(), diagnostics: Vec::new(), conjugacy: Vec::new() };
    for (points, diag, verdicts) in per_ray {
        set.points.extend(points);
        set.diagnostics.extend(diag);
        set.conjugacy.extend(verdicts);
    }
    if set.points.is_empty() {
        log::warn!("observation set {source_id} is empty in the region");
    }
    Ok(set)
}

/// Offset `u - p` with periodic angles wrapped into `(-pi, pi]`.
pub fn chart_offset(u: &[f64], p: &[f64]) -> DVector<f64> {
    let n = u.len();
    DVector::from_iterator(
        n,
        (0..n).map(|i| if i >= 1 && sphere::is_periodic(i - 1, n) { sphere::wrap_difference(u[i], p[i]) } else { u[i] - p[i] }),
    )
}

/// Boundary chart distance with periodic angles wrapped.
pub fn chart_distance(u: &[f64], p: &[f64]) -> f64 {
    chart_offset(u, p).norm()
}
