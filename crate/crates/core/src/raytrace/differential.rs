use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{trace, IntegratorOptions, TraceLimits};
use crate::error::{GeometryError, TraceError};
use crate::linalg;
use crate::manifold::{boundary_params, null_vector_with_spatial, sphere, Point, Spacetime};

/// Conjugacy threshold on the singular-value ratio.
pub const EPS_CONJ: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpbDifferential {
    /// Boundary coordinates of the unperturbed arrival.
    pub u: Vec<f64>,
    /// Rows are boundary coordinates `u`; columns are the direction angles
    /// followed by the scaling direction.
    pub jacobian: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub ratio: f64,
    pub conjugate: bool,
}

fn arrival_u(
    spec: &dyn Spacetime,
    q: &Point,
    v: &DVector<f64>,
    k_target: usize,
    limits: &TraceLimits,
    opts: &IntegratorOptions,
) -> Result<Option<(Vec<f64>, f64, super::BrokenGeodesic)>, TraceError> {
    let geo = trace(spec, q, v, limits, opts)?;
    Ok(geo.arrival(k_target).map(|a| (a.u.clone(), a.s, geo.clone())))
}

fn coordinate_difference(n: usize, plus: &[f64], minus: &[f64]) -> Vec<f64> {
    (0..plus.len())
        .map(|i| {
            let d = plus[i] - minus[i];
            if i >= 1 && sphere::is_periodic(i - 1, n) {
                sphere::wrap_difference(d, 0.0)
            } else {
                d
            }
        })
        .collect()
}

/// Finite-difference differential of the broken exponential map at `v`,
/// restricted to the map onto the boundary near the `k_target`-th arrival.
///
/// `v` is rescaled so that its `k_target`-th arrival sits at affine
/// parameter 1. The angular columns follow the arrival point as the spatial
/// direction of `v` varies on the null cone; the last column differentiates
/// `u(exp(lambda v))` in `lambda` at `lambda = 1 - 10 h`, with `u` the radial
/// projection onto boundary coordinates.
pub fn expb_differential(
    spec: &dyn Spacetime,
    q: &Point,
    v: &DVector<f64>,
    k_target: usize,
    h: f64,
) -> Result<ExpbDifferential, TraceError> {
    let n = spec.spatial_dim();
    if !(h > 0.0) {
        return Err(GeometryError::Precondition("finite-difference step must be positive".into()).into());
    }
    let opts = IntegratorOptions::default();
    let limits = TraceLimits {
        s_total: 1e4 * spec.length_scale(),
        max_reflections: k_target,
        ..TraceLimits::default()
    };
    let (u0, s_k, geo) =
        arrival_u(spec, q, v, k_target, &limits, &opts)?.ok_or(TraceError::MissingArrival { k_target })?;
    let future = v[0] > 0.0;
    let spatial = v.rows(1, n).into_owned();
    let angles0 = sphere::angles_of(spatial.as_slice());

    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n.saturating_sub(1) {
        let mut hits = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let mut angles = angles0.clone();
            angles[j] += sign * h;
            let w = sphere::unit_vector(&angles, n);
            let vj = null_vector_with_spatial(spec, q, &w, future)?;
            let hit = arrival_u(spec, q, &vj, k_target, &limits, &opts)?;
            match hit {
                Some((u, _, _)) => hits.push(u),
                None => return Err(TraceError::StratumBoundary { k_target }),
            }
        }
        let d = coordinate_difference(n, &hits[0], &hits[1]);
        for i in 0..n {
            jac[(i, j)] = d[i] / (2.0 * h);
        }
    }

    let lambda = 1.0 - 10.0 * h;
    let at = |l: f64| -> Result<Vec<f64>, TraceError> {
        let (x, _) = geo.evaluate(l * s_k).ok_or(TraceError::MissingArrival { k_target })?;
        Ok(boundary_params(&x))
    };
    let d = coordinate_difference(n, &at(lambda + h)?, &at(lambda - h)?);
    for i in 0..n {
        jac[(i, n - 1)] = d[i] / (2.0 * h);
    }

    let singular_values = linalg::singular_values(&jac);
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let smallest = singular_values.last().copied().unwrap_or(0.0);
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    Ok(ExpbDifferential {
        u: u0,
        jacobian: jac.row_iter().map(|r| r.iter().copied().collect()).collect(),
        singular_values,
        ratio,
        conjugate: ratio < EPS_CONJ,
    })
}
