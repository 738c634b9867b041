//! Simulation-mode helpers that use the true spacetime.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::chart::{earliest_time_in, regular_patch_near};
use super::{Chart, ConformalFit, ReconstructOptions};
use crate::error::ReconstructError;
use crate::manifold::{Point, Spacetime};
use crate::observe::{
    compute_observation_set, hausdorff, outward_null_ray, sample_spacing, BoundaryRegion, ObserveOptions, PublicView,
};
use crate::raytrace::{trace, BrokenGeodesic, IntegratorOptions, TraceLimits};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Triangulation {
    pub point: Vec<f64>,
    /// `g+` distance between the two back-traced rays at closest approach.
    pub miss: f64,
    /// Backward affine parameters of the closest approach.
    pub params: (f64, f64),
    pub reflections: (usize, usize),
    /// Clean intersections found before disambiguation.
    pub candidates: usize,
}

/// Backward broken geodesic from the regular point `p` of `view` along the
/// past of its outward null ray.
pub(crate) fn back_trace(
    spec: &dyn Spacetime,
    view: &PublicView,
    p: &[f64],
    opts: &ReconstructOptions,
) -> Result<(BrokenGeodesic, DVector<f64>), ReconstructError> {
    let patch = regular_patch_near(view, p, opts)
        .ok_or_else(|| ReconstructError::InsufficientData(format!("{p:?} is not a regular point")))?;
    let w = outward_null_ray(spec, &patch)?;
    let limits = TraceLimits {
        s_total: 4.0 * opts.back_span,
        max_reflections: 32,
        t_min: w.base[0] - opts.back_span,
        t_max: f64::INFINITY,
        min_chord: 1e-6,
    };
    let geo = trace(spec, &w.base, &(-&w.components), &limits, &IntegratorOptions::default())?;
    Ok((geo, w.components))
}

fn aux_distance(spec: &dyn Spacetime, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a - b;
    let mid = (a + b) * 0.5;
    crate::linalg::bilinear(&spec.aux_metric(&mid), &d, &d).max(0.0).sqrt()
}

/// Local closest approaches of two broken geodesics: grid local minima of
/// the sampled distance, refined by Gauss-Newton on the parameter pair.
/// Sorted by distance.
fn approaches(a: &BrokenGeodesic, b: &BrokenGeodesic) -> Vec<(f64, f64, DVector<f64>, DVector<f64>)> {
    let samples = 240;
    let grid = |g: &BrokenGeodesic| -> Vec<(f64, DVector<f64>)> {
        let end = g.s_end();
        (0..=samples)
            .map(|i| {
                let s = end * i as f64 / samples as f64;
                (s, g.evaluate(s).expect("inside trajectory").0)
            })
            .collect()
    };
    let (ga, gb) = (grid(a), grid(b));
    let dist = |i: usize, j: usize| (&ga[i].1 - &gb[j].1).norm();
    let mut minima: Vec<(f64, usize, usize)> = (0..=samples)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..=samples).filter_map(move |j| {
                let d = dist(i, j);
                let lower = (i.saturating_sub(1)..=(i + 1).min(samples))
                    .flat_map(|k| (j.saturating_sub(1)..=(j + 1).min(samples)).map(move |l| (k, l)))
                    .any(|(k, l)| (k, l) != (i, j) && dist(k, l) < d);
                (!lower).then_some((d, i, j))
            })
        })
        .collect();
    minima.sort_by(|p, q| p.0.total_cmp(&q.0));
    minima.truncate(12);
    let mut out: Vec<(f64, f64, f64, DVector<f64>, DVector<f64>)> = Vec::new();
    for (_, i, j) in minima {
        let (mut s, mut r) = (ga[i].0, gb[j].0);
        for _ in 0..50 {
            let (x, vx) = a.evaluate(s).unwrap();
            let (y, vy) = b.evaluate(r).unwrap();
            let d = &x - &y;
            let m = nalgebra::Matrix2::new(vx.dot(&vx), -vx.dot(&vy), -vx.dot(&vy), vy.dot(&vy));
            let rhs = nalgebra::Vector2::new(-vx.dot(&d), vy.dot(&d));
            let Some(step) = m.lu().solve(&rhs) else { break };
            let s_new = (s + step[0]).clamp(0.0, a.s_end());
            let r_new = (r + step[1]).clamp(0.0, b.s_end());
            let moved = (s_new - s).abs() + (r_new - r).abs();
            s = s_new;
            r = r_new;
            if moved < 1e-15 {
                break;
            }
        }
        let x = a.evaluate(s).unwrap().0;
        let y = b.evaluate(r).unwrap().0;
        let d = (&x - &y).norm();
        if !out.iter().any(|o| (&o.3 - &x).norm() < 1e-6) {
            out.push((d, s, r, x, y));
        }
    }
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out.into_iter().map(|(_, s, r, x, y)| (s, r, x, y)).collect()
}

/// Source of `view` recovered by intersecting the back-traced outward null
/// rays of two regular points.
///
/// When the rays meet cleanly more than once (refocusing), each candidate's
/// observation set is simulated on `region`; among those matching `view`
/// within three sample spacings the first along the back-trace wins.
pub fn triangulate_source(
    spec: &dyn Spacetime,
    view: &PublicView,
    p1: &[f64],
    p2: &[f64],
    region: &BoundaryRegion,
    opts: &ReconstructOptions,
) -> Result<Triangulation, ReconstructError> {
    let (a, _) = back_trace(spec, view, p1, opts)?;
    let (b, _) = back_trace(spec, view, p2, opts)?;
    let found = approaches(&a, &b);
    let scored: Vec<(f64, f64, f64, DVector<f64>)> = found
        .iter()
        .map(|(s, r, x, y)| (aux_distance(spec, x, y), *s, *r, (x + y) * 0.5))
        .collect();
    let best_miss = scored.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let mut clean: Vec<&(f64, f64, f64, DVector<f64>)> = scored
        .iter()
        .filter(|c| c.0 <= opts.delta_tri && spec.boundary_fn(&c.3) > 0.0)
        .collect();
    if clean.is_empty() {
        return Err(ReconstructError::NoCleanIntersection { miss: best_miss, tolerance: opts.delta_tri });
    }
    if clean.len() > 1 {
        let n = spec.spatial_dim();
        let target = view.restricted(&region.inner);
        let tol = 3.0 * sample_spacing(n, opts.oracle_rays);
        let distances: Vec<f64> = clean
            .par_iter()
            .map(|c| {
                compute_observation_set(spec, 0, &c.3, region, opts.oracle_rays, &ObserveOptions::default())
                    .map(|set| hausdorff(&set.public_view().restricted(&region.inner), &target))
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        let best = distances.iter().copied().fold(f64::INFINITY, f64::min);
        clean = clean.into_iter().zip(&distances).filter(|(_, &d)| d <= best + tol).map(|(c, _)| c).collect();
        clean.sort_by(|p, q| (p.1 + p.2).total_cmp(&(q.1 + q.2)));
    }
    let &(miss, s, r, ref point) = clean[0];
    let reflections = |g: &BrokenGeodesic, s: f64| g.reflections.iter().filter(|e| e.s < s).count();
    Ok(Triangulation {
        point: point.iter().copied().collect(),
        miss,
        params: (s, r),
        reflections: (reflections(&a, s), reflections(&b, r)),
        candidates: scored.iter().filter(|c| c.0 <= opts.delta_tri).count(),
    })
}

/// Jacobian `d x^mu / d q^a` of the chart at the ambient point `q`, by central
/// differences of freshly simulated observation sets.
#[allow(clippy::too_many_arguments)]
pub fn chart_jacobian(
    spec: &dyn Spacetime,
    chart: &Chart,
    q: &Point,
    h: f64,
    region: &BoundaryRegion,
    rays: usize,
    observe: &ObserveOptions,
    opts: &ReconstructOptions,
) -> Result<DMatrix<f64>, ReconstructError> {
    let d = q.len();
    let coords = |x: &Point| -> Result<Vec<f64>, ReconstructError> {
        let view = compute_observation_set(spec, 0, x, region, rays, observe)?.public_view();
        chart
            .curves
            .iter()
            .map(|c| {
                earliest_time_in(&view, c, opts)
                    .value()
                    .map(|s| s * c.speed())
                    .ok_or_else(|| ReconstructError::InsufficientData(format!("{x:?} outside the chart domain")))
            })
            .collect()
    };
    let mut jac = DMatrix::zeros(chart.curves.len(), d);
    for a in 0..d {
        let mut e = DVector::zeros(d);
        e[a] = h;
        let plus = coords(&(q + &e))?;
        let minus = coords(&(q - &e))?;
        for mu in 0..chart.curves.len() {
            jac[(mu, a)] = (plus[mu] - minus[mu]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Relative Frobenius deviation of the fitted chart metric, pulled back to
/// the ambient chart by `jacobian`, from the true metric `g`, both in the
/// same gauge (unit norm, negative time-time entry).
pub fn conformal_deviation(fit: &ConformalFit, jacobian: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let gauge = |m: DMatrix<f64>| {
        let m = &m / m.norm();
        if m[(0, 0)] > 0.0 {
            -m
        } else {
            m
        }
    };
    let pulled = gauge(jacobian.transpose() * fit.matrix() * jacobian);
    let truth = gauge(g.clone());
    (pulled - &truth).norm() / truth.norm()
}
