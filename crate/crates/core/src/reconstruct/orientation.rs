use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::chart::regular_patch_near;
use super::oracle::back_trace;
use super::{ObservationFamily, ReconstructOptions};
use crate::error::ReconstructError;
use crate::linalg;
use crate::manifold::{boundary_chart_jacobian, boundary_point, Point, Spacetime};
use crate::observe::{chart_distance, chart_offset, RegularPatch, SheetOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TimeVerdict {
    Future,
    Past,
    Unavailable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrientationResult {
    pub verdict: TimeVerdict,
    /// `g(p'(0), N)` in the boundary representative.
    pub pairing: f64,
    /// Derivative of the tracked point per path step, boundary parameters.
    pub p_prime: Vec<f64>,
    /// Future unit normal to the patch inside the boundary.
    pub normal: Vec<f64>,
    pub track: Vec<Vec<f64>>,
    /// Patch at the middle of the path.
    pub patch: RegularPatch,
}

/// Central difference at the middle sample, fourth order when five samples
/// are available.
fn middle_derivative(track: &[Vec<f64>]) -> DVector<f64> {
    let m = track.len() / 2;
    let d = |i: usize, j: usize| chart_offset(&track[i], &track[j]);
    if track.len() >= 5 {
        (d(m + 1, m - 1) * 8.0 - d(m + 2, m - 2)) / 12.0
    } else {
        d(m + 1, m - 1) / 2.0
    }
}

/// Decides whether the ordered path of sources runs to the future: tracks
/// the point of each set nearest `anchor`, differentiates at the middle, and
/// pairs the derivative with the future normal of the middle patch.
///
/// Path ids are taken as equally spaced in the path parameter; the path
/// needs an odd number of ids, at least three.
pub fn time_orientation_test(
    family: &ObservationFamily,
    path: &[u64],
    anchor: &[f64],
    opts: &ReconstructOptions,
) -> Result<OrientationResult, ReconstructError> {
    if path.len() < 3 || path.len() % 2 == 0 {
        return Err(ReconstructError::InsufficientData("orientation path needs an odd number (>= 3) of ids".into()));
    }
    // sheets along the path may sit up to a tracking step from the anchor
    let opts = &ReconstructOptions {
        sheet: SheetOptions { delta_hit: opts.track_tol, ..opts.sheet.clone() },
        patch_radius: opts.patch_radius.max(opts.track_tol),
        ..opts.clone()
    };
    let mut track: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    let mut patches = Vec::with_capacity(path.len());
    for (i, &id) in path.iter().enumerate() {
        let patch = regular_patch_near(family.view(id)?, anchor, opts).ok_or(ReconstructError::Tracking(i))?;
        if let Some(prev) = track.last() {
            if chart_distance(prev, &patch.p) > opts.track_tol {
                return Err(ReconstructError::Tracking(i));
            }
        }
        track.push(patch.p.clone());
        patches.push(patch);
    }
    let mid = path.len() / 2;
    let patch = patches.swap_remove(mid);
    let p_prime = middle_derivative(&track);
    let Some(future) = family.boundary.future.as_ref() else {
        return Ok(OrientationResult {
            verdict: TimeVerdict::Unavailable,
            pairing: f64::NAN,
            p_prime: p_prime.iter().copied().collect(),
            normal: Vec::new(),
            track,
            patch,
        });
    };
    let g = family.boundary.metric(&patch.p);
    let n = g.nrows();
    let normal = if n == 1 {
        DVector::from_element(1, 1.0)
    } else {
        let t = DMatrix::from_fn(n, n - 1, |r, c| patch.tangent[c][r]);
        let constraints = t.transpose() * &g;
        linalg::right_null_space(&constraints, 1).remove(0)
    };
    let norm2 = linalg::bilinear(&g, &normal, &normal);
    if !(norm2 < 0.0) {
        return Err(ReconstructError::InsufficientData("patch normal is not timelike in the boundary".into()));
    }
    let mut normal = normal / (-norm2).sqrt();
    if linalg::bilinear(&g, &normal, &DVector::from_column_slice(future)) > 0.0 {
        normal = -normal;
    }
    let pairing = linalg::bilinear(&g, &p_prime, &normal);
    Ok(OrientationResult {
        verdict: if pairing < 0.0 { TimeVerdict::Future } else { TimeVerdict::Past },
        pairing,
        p_prime: p_prime.iter().copied().collect(),
        normal: normal.iter().copied().collect(),
        track,
        patch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationCheck {
    /// `g(q'(0), V(0))`.
    pub source_side: f64,
    /// `g(p'(0), gamma'(1))`.
    pub boundary_side: f64,
    /// Distance from the source at which the back-traced ray passed.
    pub miss: f64,
}

impl VariationCheck {
    pub fn defect(&self) -> f64 {
        (self.source_side - self.boundary_side).abs()
    }
}

/// Both sides of the variation identity along a tracked orientation result,
/// with the true metric: `q_prime` is the source velocity per path step.
pub fn variation_identity(
    spec: &dyn Spacetime,
    family: &ObservationFamily,
    middle_id: u64,
    q: &Point,
    q_prime: &DVector<f64>,
    result: &OrientationResult,
    opts: &ReconstructOptions,
) -> Result<VariationCheck, ReconstructError> {
    let view = family.view(middle_id)?;
    let (geo, w) = back_trace(spec, view, &result.patch.p, opts)?;
    // affine parameter of closest approach to q
    let samples = 400;
    let end = geo.s_end();
    let dist = |s: f64| (geo.evaluate(s).unwrap().0 - q).norm();
    let mut s_best = (0..=samples).map(|i| end * i as f64 / samples as f64).min_by(|a, b| dist(*a).total_cmp(&dist(*b))).unwrap();
    for _ in 0..50 {
        let (x, v) = geo.evaluate(s_best).unwrap();
        let step = -v.dot(&(&x - q)) / v.dot(&v);
        s_best = (s_best + step).clamp(0.0, end);
        if step.abs() < 1e-15 {
            break;
        }
    }
    let (x, v_back) = geo.evaluate(s_best).unwrap();
    let v0 = -&v_back * s_best;
    let gamma_end = &w * s_best;
    let p = boundary_point(spec, &result.patch.p);
    let p_dot = boundary_chart_jacobian(spec, &result.patch.p) * DVector::from_column_slice(&result.p_prime);
    Ok(VariationCheck {
        source_side: linalg::bilinear(&spec.metric(q)?, q_prime, &v0),
        boundary_side: linalg::bilinear(&spec.metric(&p)?, &p_dot, &gamma_end),
        miss: (x - q).norm(),
    })
}
