use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::chart::{patch_normal, regular_patch_near};
use super::{Chart, ObservationFamily, ReconstructOptions};
use crate::error::ReconstructError;
use crate::linalg;
use crate::observe::chart_distance;

/// Null direction at a chart center, recovered from ids sharing a light ray.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullDirection {
    /// Boundary point where the shared ray arrives.
    pub p: Vec<f64>,
    /// Unit direction in chart coordinates.
    pub direction: Vec<f64>,
    pub members: Vec<u64>,
    /// RMS distance of member coordinates from the fitted line.
    pub residual: f64,
}

/// Ids whose sets pass through `p` with the center's tangent there, with
/// their sheet distance from `p`.
fn shared_ray_members(
    family: &ObservationFamily,
    chart: &Chart,
    p: &[f64],
    normal: &DVector<f64>,
    opts: &ReconstructOptions,
) -> Vec<(u64, f64)> {
    let origin = chart.coord(chart.center).expect("center in chart");
    chart
        .coords
        .keys()
        .filter(|&&id| id != chart.center)
        .filter(|&&id| (chart.coord(id).unwrap() - &origin).norm() <= opts.q_radius)
        .filter_map(|&id| {
            let view = &family.sets[&id];
            if !view.points.iter().any(|u| chart_distance(u, p) <= opts.delta_hit) {
                return None;
            }
            let patch = regular_patch_near(view, p, opts)?;
            let miss = chart_distance(&patch.p, p);
            let tilt = linalg::line_angle(&patch_normal(&patch), normal);
            (miss <= opts.q_hit && tilt <= opts.alpha_q).then_some((id, miss))
        })
        .collect()
}

/// Null direction at the chart center through the regular point `p` of its
/// set: the total least squares line through the chart coordinates of the
/// center and every id sharing the outgoing ray at `p`.
pub fn recover_null_direction(
    family: &ObservationFamily,
    chart: &Chart,
    p: &[f64],
    opts: &ReconstructOptions,
) -> Result<NullDirection, ReconstructError> {
    let center_view = family.view(chart.center)?;
    let patch = regular_patch_near(center_view, p, opts)
        .ok_or_else(|| ReconstructError::InsufficientData(format!("{p:?} is not a regular point of the center")))?;
    let normal = patch_normal(&patch);
    let members = shared_ray_members(family, chart, &patch.p, &normal, opts);
    if members.len() < 2 {
        return Err(ReconstructError::InsufficientData(format!(
            "{} ids share the ray at {:?}, need 2",
            members.len(),
            patch.p
        )));
    }
    let mut ids: Vec<u64> = vec![chart.center];
    ids.extend(members.iter().map(|m| m.0));
    let points: Vec<DVector<f64>> = ids.iter().map(|&id| chart.coord(id).unwrap()).collect();
    let (direction, residual) = tls_line(&points);
    Ok(NullDirection { p: patch.p, direction: direction.iter().copied().collect(), members: ids, residual })
}

/// Principal direction of a point cloud, sign fixed so the largest component
/// is positive, and the RMS distance from the line.
fn tls_line(points: &[DVector<f64>]) -> (DVector<f64>, f64) {
    let dim = points[0].len();
    let m = points.len();
    let mean = points.iter().fold(DVector::zeros(dim), |a, p| a + p) / m as f64;
    let centered = DMatrix::from_fn(m, dim, |r, c| points[r][c] - mean[c]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.imax();
    let mut d = v_t.row(top).transpose().into_owned();
    if d[d.iamax()] < 0.0 {
        d = -d;
    }
    let off: f64 = points
        .iter()
        .map(|p| {
            let r = p - &mean;
            (&r - &d * d.dot(&r)).norm_squared()
        })
        .sum();
    (d, (off / m as f64).sqrt())
}

/// Searches the center's set for arrival points of rays shared with other
/// ids and recovers one null direction per shared ray.
pub fn null_cone(
    family: &ObservationFamily,
    chart: &Chart,
    opts: &ReconstructOptions,
) -> Result<Vec<NullDirection>, ReconstructError> {
    let center_view = family.view(chart.center)?;
    let scored: Vec<(usize, usize, f64)> = center_view
        .points
        .par_iter()
        .enumerate()
        .filter_map(|(i, u)| {
            let patch = regular_patch_near(center_view, u, opts)?;
            let members = shared_ray_members(family, chart, &patch.p, &patch_normal(&patch), opts);
            let worst = members.iter().map(|m| m.1).fold(0.0, f64::max);
            (members.len() >= 2).then_some((i, members.len(), worst))
        })
        .collect();
    // one representative per cluster of neighboring candidates
    let mut reps: Vec<(usize, usize, f64)> = Vec::new();
    for cand in scored {
        let u = &center_view.points[cand.0];
        match reps.iter_mut().find(|r| chart_distance(&center_view.points[r.0], u) <= opts.patch_radius) {
            Some(r) => {
                if (cand.1, -cand.2) > (r.1, -r.2) {
                    *r = cand;
                }
            }
            None => reps.push(cand),
        }
    }
    reps.iter().map(|r| recover_null_direction(family, chart, &center_view.points[r.0], opts)).collect()
}

/// Symmetric matrix, up to scale, whose quadratic form vanishes on the given
/// directions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformalFit {
    /// Unit Frobenius norm, sign fixed to Lorentzian signature.
    pub matrix: Vec<Vec<f64>>,
    /// RMS of the quadratic form over the unit directions.
    pub residual: f64,
    pub eigenvalues: Vec<f64>,
    pub lorentzian: bool,
}

impl ConformalFit {
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.matrix.len();
        DMatrix::from_fn(d, d, |r, c| self.matrix[r][c])
    }
}

fn negatives(m: &DMatrix<f64>) -> usize {
    m.clone().symmetric_eigen().eigenvalues.iter().filter(|&&e| e < 0.0).count()
}

pub fn fit_conformal_metric(directions: &[DVector<f64>]) -> Result<ConformalFit, ReconstructError> {
    let Some(first) = directions.first() else {
        return Err(ReconstructError::FitFailure("no directions".into()));
    };
    let d = first.len();
    let unknowns = d * (d + 1) / 2;
    if directions.len() < unknowns - 1 {
        return Err(ReconstructError::FitFailure(format!(
            "{} directions cannot fix {} unknowns up to scale",
            directions.len(),
            unknowns
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let a = DMatrix::from_fn(directions.len(), unknowns, |r, c| {
        let v = &directions[r] / directions[r].norm();
        let (i, j) = pairs[c];
        if i == j {
            v[i] * v[i]
        } else {
            2.0 * v[i] * v[j]
        }
    });
    let sv = linalg::singular_values(&a);
    if sv.len() < unknowns || sv[unknowns - 2] <= 1e-8 * sv[0] {
        return Err(ReconstructError::FitFailure("directions do not determine a unique quadric".into()));
    }
    let (x, r) = linalg::smallest_singular_vector(&a);
    let mut g = DMatrix::zeros(d, d);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        g[(i, j)] = x[c];
        g[(j, i)] = x[c];
    }
    g /= g.norm();
    let flip = match (negatives(&g) == 1, negatives(&(-&g)) == 1) {
        (true, true) => g[(0, 0)] > 0.0,
        (false, true) => true,
        _ => false,
    };
    if flip {
        g = -g;
    }
    let mut eigenvalues: Vec<f64> = g.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(ConformalFit {
        matrix: (0..d).map(|i| (0..d).map(|j| g[(i, j)]).collect()).collect(),
        residual: r / (directions.len() as f64).sqrt(),
        lorentzian: negatives(&g) == 1 && eigenvalues.iter().all(|e| e.abs() > 1e-12),
        eigenvalues,
    })
}
