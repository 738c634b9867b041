//! Chart-based Lorentzian manifolds with timelike boundary.
//!
//! Every manifold kind lives in a single global chart `(t, x_1, ..., x_n)`
//! and implements [`Spacetime`]. Kinds are registered by name in
//! [`registry::ManifoldRegistry`] so experiments can pick one from config.

mod cylinder;
mod perturbed;
mod product;
pub mod registry;
pub mod sphere;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::GeometryError;
use crate::linalg;

pub use cylinder::MinkowskiCylinder;
pub use perturbed::{PerturbationTerm, PerturbedCylinder};
pub use product::{SpatialFactor, StaticProduct};
pub use registry::ManifoldRegistry;

pub type Point = DVector<f64>;

/// Relative nullity tolerance `|g(V,V)| <= EPS_NULL * g+(V,V)`.
pub const EPS_NULL: f64 = 1e-10;
/// Boundary localization tolerance, multiplied by the length scale.
pub const EPS_BDY: f64 = 1e-10;
/// Threshold separating strict from weak null-convexity.
pub const EPS_STRICT: f64 = 1e-6;
/// Relative tolerance for the tangency precondition of the second fundamental form.
pub const EPS_TANGENT: f64 = 1e-6;
/// Finite-difference step for Christoffel symbols, multiplied by the length scale.
pub const H_CHRISTOFFEL: f64 = 1e-5;

/// Christoffel symbols `gamma[a][(b, c)] = Gamma^a_{bc}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel(pub Vec<DMatrix<f64>>);

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel(vec![DMatrix::zeros(dim, dim); dim])
    }

    /// `-Gamma^a_{bc} v^b v^c`, the geodesic acceleration.
    pub fn acceleration(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|g| -linalg::bilinear(g, v, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flat_map(|m| m.iter()).fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

/// An admissible Lorentzian manifold with boundary, described in one chart.
///
/// Points are `(t, x_1, ..., x_n)`. The boundary is `{x = 0}` for the
/// defining function returned by [`Spacetime::boundary_fn`], with `x > 0`
/// inside. Formulas are evaluated slightly past `x = 0` when needed, which
/// plays the role of the ambient extension.
pub trait Spacetime: Send + Sync + fmt::Debug {
    /// Registry name of the kind.
    fn kind(&self) -> &'static str;

    /// Spatial dimension `n`; the spacetime has dimension `n + 1`.
    fn spatial_dim(&self) -> usize;

    /// Typical spatial length, used to scale tolerances and step sizes.
    fn length_scale(&self) -> f64;

    fn metric(&self, p: &Point) -> Result<DMatrix<f64>, GeometryError>;

    fn christoffel(&self, p: &Point) -> Result<Christoffel, GeometryError> {
        christoffel_fd(self, p, H_CHRISTOFFEL * self.length_scale())
    }

    /// True when the Christoffel symbols vanish identically in the chart.
    fn is_flat(&self) -> bool {
        false
    }

    /// True when the metric and boundary are independent of `t`.
    fn is_static(&self) -> bool;

    fn boundary_fn(&self, p: &Point) -> f64;

    /// Coordinate differential `dx` of the boundary defining function.
    fn boundary_gradient(&self, p: &Point) -> DVector<f64>;

    /// Coordinate second derivatives of the boundary defining function.
    fn boundary_hessian(&self, p: &Point) -> DMatrix<f64>;

    /// Auxiliary Riemannian metric `g+`; the Euclidean metric of the chart.
    fn aux_metric(&self, p: &Point) -> DMatrix<f64> {
        DMatrix::identity(p.len(), p.len())
    }

    /// Radius of the boundary along the spatial ray from the origin in
    /// direction `omega` at time `t`. Built-in domains are star-shaped.
    fn boundary_radius(&self, t: f64, omega: &DVector<f64>) -> f64 {
        radial_root(self, t, omega)
    }

    /// Number of angle parameters of the boundary chart.
    fn angle_count(&self) -> usize {
        self.spatial_dim().saturating_sub(1)
    }

    fn check_point(&self, p: &Point) -> Result<(), GeometryError> {
        if p.len() != self.spatial_dim() + 1 || p.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::Domain(p.iter().copied().collect()));
        }
        Ok(())
    }
}

/// Bisection for the boundary radius along a spatial ray.
fn radial_root<S: Spacetime + ?Sized>(spec: &S, t: f64, omega: &DVector<f64>) -> f64 {
    let at = |r: f64| {
        let mut p = DVector::zeros(omega.len() + 1);
        p[0] = t;
        for i in 0..omega.len() {
            p[i + 1] = r * omega[i];
        }
        spec.boundary_fn(&p)
    };
    let mut lo = 0.0;
    let mut hi = spec.length_scale();
    let mut guard = 0;
    while at(hi) > 0.0 && guard < 60 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Generic Christoffel symbols from central differences of the metric.
pub fn christoffel_fd<S: Spacetime + ?Sized>(
    spec: &S,
    p: &Point,
    h: f64,
) -> Result<Christoffel, GeometryError> {
    let dim = p.len();
    let g = spec.metric(p)?;
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| GeometryError::SingularMetric(p.iter().copied().collect()))?;
    // dg[c][(a, b)] = d_c g_ab
    let mut dg = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut pp = p.clone();
        let mut pm = p.clone();
        pp[c] += h;
        pm[c] -= h;
        dg.push((spec.metric(&pp)? - spec.metric(&pm)?) / (2.0 * h));
    }
    let mut out = Christoffel::zeros(dim);
    for a in 0..dim {
        for b in 0..dim {
            for c in b..dim {
                let mut acc = 0.0;
                for d in 0..dim {
                    acc += g_inv[(a, d)] * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
                }
                out.0[a][(b, c)] = 0.5 * acc;
                out.0[a][(c, b)] = 0.5 * acc;
            }
        }
    }
    Ok(out)
}

/// Vector at a base point, in chart components.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CausalType {
    Timelike,
    Null,
    Spacelike,
}

impl TangentVector {
    pub fn new(base: Point, components: DVector<f64>) -> Self {
        TangentVector { base, components }
    }

    pub fn from_slices(base: &[f64], components: &[f64]) -> Self {
        TangentVector {
            base: DVector::from_column_slice(base),
            components: DVector::from_column_slice(components),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        TangentVector { base: self.base.clone(), components: &self.components * k }
    }

    pub fn causal_type(&self, spec: &dyn Spacetime) -> Result<CausalType, GeometryError> {
        let g = spec.metric(&self.base)?;
        let q = linalg::bilinear(&g, &self.components, &self.components);
        let norm = linalg::bilinear(&spec.aux_metric(&self.base), &self.components, &self.components);
        Ok(if q.abs() <= EPS_NULL * norm {
            CausalType::Null
        } else if q < 0.0 {
            CausalType::Timelike
        } else {
            CausalType::Spacelike
        })
    }

    /// Future-directed means `dt(V) > 0`.
    pub fn is_future(&self) -> bool {
        self.components[0] > 0.0
    }

    /// Inward-pointing at the boundary means `dx(V) > 0`.
    pub fn is_inward(&self, spec: &dyn Spacetime) -> bool {
        spec.boundary_gradient(&self.base).dot(&self.components) > 0.0
    }

    pub fn aux_norm(&self, spec: &dyn Spacetime) -> f64 {
        linalg::bilinear(&spec.aux_metric(&self.base), &self.components, &self.components).sqrt()
    }
}

pub fn metric_at(spec: &dyn Spacetime, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
    spec.check_point(p)?;
    spec.metric(p)
}

pub fn christoffel_at(spec: &dyn Spacetime, p: &Point) -> Result<Christoffel, GeometryError> {
    spec.check_point(p)?;
    if spec.is_flat() {
        return Ok(Christoffel::zeros(p.len()));
    }
    spec.christoffel(p)
}

pub fn inner(spec: &dyn Spacetime, p: &Point, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64, GeometryError> {
    Ok(linalg::bilinear(&spec.metric(p)?, v, w))
}

fn check_on_boundary(spec: &dyn Spacetime, p: &Point) -> Result<(), GeometryError> {
    spec.check_point(p)?;
    let x = spec.boundary_fn(p);
    if x.abs() > 1e3 * EPS_BDY * spec.length_scale() {
        return Err(GeometryError::Precondition(format!("point is not on the boundary (x = {x:e})")));
    }
    Ok(())
}

/// Metric gradient `grad x` (index raised) and its norm `|grad x|_g`.
fn boundary_normal_parts(spec: &dyn Spacetime, p: &Point) -> Result<(DVector<f64>, f64), GeometryError> {
    let g = spec.metric(p)?;
    let g_inv = g
        .try_inverse()
        .ok_or_else(|| GeometryError::SingularMetric(p.iter().copied().collect()))?;
    let dx = spec.boundary_gradient(p);
    let grad = &g_inv * &dx;
    let sq = dx.dot(&grad);
    if !(sq > 1e-24) {
        return Err(GeometryError::DegenerateBoundary { point: p.iter().copied().collect(), norm: sq.max(0.0).sqrt() });
    }
    Ok((grad, sq.sqrt()))
}

/// Outward unit normal `nu = -|grad x|^{-1} grad x`.
pub fn outward_normal(spec: &dyn Spacetime, p: &Point) -> Result<TangentVector, GeometryError> {
    check_on_boundary(spec, p)?;
    outward_normal_unchecked(spec, p)
}

pub(crate) fn outward_normal_unchecked(spec: &dyn Spacetime, p: &Point) -> Result<TangentVector, GeometryError> {
    let (grad, norm) = boundary_normal_parts(spec, p)?;
    Ok(TangentVector::new(p.clone(), -grad / norm))
}

/// Covariant Hessian `(Hx)_{ab} = d_a d_b x - Gamma^c_{ab} d_c x`.
pub fn covariant_hessian(spec: &dyn Spacetime, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
    let mut h = spec.boundary_hessian(p);
    if !spec.is_flat() {
        let gamma = spec.christoffel(p)?;
        let dx = spec.boundary_gradient(p);
        for (c, gc) in gamma.0.iter().enumerate() {
            h -= gc * dx[c];
        }
    }
    Ok(h)
}

/// `II(V, W) = -|grad x|^{-1} (Hx)(V, W)` for `V, W` tangent to the boundary.
pub fn second_fundamental_form(
    spec: &dyn Spacetime,
    p: &Point,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64, GeometryError> {
    check_on_boundary(spec, p)?;
    let dx = spec.boundary_gradient(p);
    let aux = spec.aux_metric(p);
    for (name, u) in [("V", v), ("W", w)] {
        let scale = dx.norm() * linalg::bilinear(&aux, u, u).sqrt();
        if dx.dot(u).abs() > EPS_TANGENT * scale.max(1e-300) {
            return Err(GeometryError::Precondition(format!("{name} is not tangent to the boundary")));
        }
    }
    let (_, norm) = boundary_normal_parts(spec, p)?;
    let hess = covariant_hessian(spec, p)?;
    Ok(-linalg::bilinear(&hess, v, w) / norm)
}

/// `rho(V) = V - 2 g(V, nu) nu`.
pub fn reflect(spec: &dyn Spacetime, p: &Point, v: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    check_on_boundary(spec, p)?;
    let g = spec.metric(p)?;
    let aux = linalg::bilinear(&spec.aux_metric(p), v, v);
    if linalg::bilinear(&g, v, v).abs() > EPS_NULL * aux.max(1e-300) {
        return Err(GeometryError::Precondition("reflect expects a lightlike vector".into()));
    }
    reflect_unchecked(spec, p, v)
}

pub(crate) fn reflect_unchecked(spec: &dyn Spacetime, p: &Point, v: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    let g = spec.metric(p)?;
    let nu = outward_normal_unchecked(spec, p)?.components;
    let gvn = linalg::bilinear(&g, v, &nu);
    Ok(v - nu * (2.0 * gvn))
}

/// Quasi-uniform unit vectors on `S^{n-1}`; index 0 is `e_1`.
pub fn sphere_directions(n: usize, m: usize) -> Vec<DVector<f64>> {
    match n {
        0 => Vec::new(),
        1 => (0..m).map(|k| DVector::from_element(1, if k % 2 == 0 { 1.0 } else { -1.0 })).collect(),
        2 => (0..m)
            .map(|k| {
                let phi = std::f64::consts::TAU * k as f64 / m as f64;
                DVector::from_vec(vec![phi.cos(), phi.sin()])
            })
            .collect(),
        3 => {
            // Fibonacci lattice about the x_1 axis
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let z = if m == 1 { 1.0 } else { 1.0 - 2.0 * k as f64 / (m - 1) as f64 };
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    DVector::from_vec(vec![z, r * a.cos(), r * a.sin()])
                })
                .collect()
        }
        _ => {
            // Halton points pushed through Box-Muller and normalized
            const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            let halton = |mut i: u64, b: u32| {
                let (mut f, mut r) = (1.0, 0.0);
                while i > 0 {
                    f /= b as f64;
                    r += f * (i % b as u64) as f64;
                    i /= b as u64;
                }
                r
            };
            (0..m)
                .map(|k| {
                    if k == 0 {
                        let mut e = DVector::zeros(n);
                        e[0] = 1.0;
                        return e;
                    }
                    let mut v = DVector::zeros(n);
                    for i in 0..n {
                        let u1 = halton(k as u64, PRIMES[(2 * i) % 12]).max(1e-12);
                        let u2 = halton(k as u64, PRIMES[(2 * i + 1) % 12]);
                        v[i] = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    }
                    let norm = v.norm();
                    v / norm
                })
                .collect()
        }
    }
}

/// Future null vector at `p` whose spatial part is parallel to `spatial`,
/// normalized to unit `g+` norm.
pub fn null_vector_with_spatial(
    spec: &dyn Spacetime,
    p: &Point,
    spatial: &DVector<f64>,
    future: bool,
) -> Result<DVector<f64>, GeometryError> {
    let g = spec.metric(p)?;
    let a = linalg::null_time_component(&g, spatial.as_slice(), future)
        .ok_or_else(|| GeometryError::Precondition("no null completion of spatial direction".into()))?;
    let mut v = DVector::zeros(p.len());
    v[0] = a;
    v.rows_mut(1, spatial.len()).copy_from(spatial);
    let norm = linalg::bilinear(&spec.aux_metric(p), &v, &v).sqrt();
    Ok(v / norm)
}

/// `m` future null vectors at an interior point with unit `g+` norm.
pub fn sample_null_directions(spec: &dyn Spacetime, q: &Point, m: usize) -> Result<Vec<TangentVector>, GeometryError> {
    spec.check_point(q)?;
    if spec.boundary_fn(q) <= 0.0 {
        return Err(GeometryError::Precondition("sample point is not interior".into()));
    }
    sphere_directions(spec.spatial_dim(), m)
        .into_iter()
        .map(|w| Ok(TangentVector::new(q.clone(), null_vector_with_spatial(spec, q, &w, true)?)))
        .collect()
}

/// Outcome of a null-convexity audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Convexity {
    Strict,
    Weak,
    Violated,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub min_second_fundamental_form: f64,
    pub classification: Convexity,
    pub argmin_point: Vec<f64>,
    pub argmin_vector: Vec<f64>,
    pub samples: usize,
}

/// Boundary parameter box `t in [t0, t1]` times an angle box.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct BoundaryBox {
    pub t: (f64, f64),
    pub angles: Vec<(f64, f64)>,
}

impl BoundaryBox {
    pub fn full(spatial_dim: usize, t: (f64, f64)) -> Self {
        let mut angles = Vec::new();
        for k in 0..spatial_dim.saturating_sub(1) {
            if sphere::is_periodic(k, spatial_dim) {
                angles.push((-std::f64::consts::PI, std::f64::consts::PI));
            } else {
                angles.push((0.0, std::f64::consts::PI));
            }
        }
        BoundaryBox { t, angles }
    }
}

/// Boundary point in chart coordinates for boundary parameters `(t, angles)`.
pub fn boundary_point(spec: &dyn Spacetime, u: &[f64]) -> Point {
    let n = spec.spatial_dim();
    let omega = sphere::unit_vector(&u[1..], n);
    let r = spec.boundary_radius(u[0], &omega);
    let mut p = DVector::zeros(n + 1);
    p[0] = u[0];
    for i in 0..n {
        p[i + 1] = r * omega[i];
    }
    p
}

/// Boundary parameters `(t, angles)` of a chart point (radial projection).
pub fn boundary_params(p: &Point) -> Vec<f64> {
    let mut u = vec![p[0]];
    u.extend(sphere::angles_of(&p.as_slice()[1..]));
    u
}

/// Columns are the chart images of the boundary parameter directions at the
/// boundary point with parameters `u`: an `(n+1) x n` matrix.
pub fn boundary_chart_jacobian(spec: &dyn Spacetime, u: &[f64]) -> DMatrix<f64> {
    let n = spec.spatial_dim();
    let p = boundary_point(spec, u);
    let omega = sphere::unit_vector(&u[1..], n);
    let r = spec.boundary_radius(u[0], &omega);
    let d_omega = sphere::unit_vector_jacobian(&u[1..], n);
    let dx = spec.boundary_gradient(&p);
    let mut radial = DVector::zeros(n + 1);
    radial.rows_mut(1, n).copy_from(&omega);
    let dx_radial = dx.dot(&radial);
    let mut jac = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        // variation at fixed radius, then slide radially back onto {x = 0}
        let mut col = DVector::zeros(n + 1);
        if j == 0 {
            col[0] = 1.0;
        } else {
            for i in 0..n {
                col[i + 1] = r * d_omega[(i, j - 1)];
            }
        }
        let c = -dx.dot(&col) / dx_radial;
        col += &radial * c;
        jac.set_column(j, &col);
    }
    jac
}

/// Induced boundary metric in boundary parameters, `J^T g J`.
pub fn boundary_metric(spec: &dyn Spacetime, u: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    let p = boundary_point(spec, u);
    let jac = boundary_chart_jacobian(spec, u);
    Ok(jac.transpose() * spec.metric(&p)? * jac)
}

/// Minimum of `II(V,V)` over sampled boundary points and unit-`g+` null
/// tangent vectors.
pub fn audit_null_convexity(
    spec: &dyn Spacetime,
    region: &BoundaryBox,
    samples: usize,
) -> Result<ConvexityReport, GeometryError> {
    if samples == 0 {
        return Err(GeometryError::Precondition("samples must be at least 1".into()));
    }
    let n = spec.spatial_dim();
    if region.angles.len() != n.saturating_sub(1) || !(region.t.0 <= region.t.1) {
        return Err(GeometryError::Domain(vec![region.t.0, region.t.1]));
    }
    // lattice over (t, angles) with roughly `samples` points
    let dims = n; // t plus n-1 angles
    let per_axis = ((samples as f64).powf(1.0 / dims as f64).ceil() as usize).max(1);
    let lerp = |(a, b): (f64, f64), k: usize| {
        if per_axis == 1 {
            0.5 * (a + b)
        } else {
            a + (b - a) * k as f64 / (per_axis - 1) as f64
        }
    };
    let mut best = (f64::INFINITY, Vec::new(), Vec::new());
    let mut count = 0;
    let total = per_axis.pow(dims as u32);
    let dir_count = 16usize.max(2 * n * n);
    for flat in 0..total {
        let mut idx = flat;
        let mut u = Vec::with_capacity(dims);
        u.push(lerp(region.t, idx % per_axis));
        idx /= per_axis;
        for a in &region.angles {
            u.push(lerp(*a, idx % per_axis));
            idx /= per_axis;
        }
        let p = boundary_point(spec, &u);
        let jac = boundary_chart_jacobian(spec, &u);
        let g = spec.metric(&p)?;
        let aux = spec.aux_metric(&p);
        let gb = jac.transpose() * &g * &jac;
        // null tangent vectors: time-like parameter direction plus spatial unit directions
        for w in sphere_directions(n - 1, if n == 1 { 2 } else { dir_count }) {
            let Some(a) = linalg::null_time_component(&gb, w.as_slice(), true) else { continue };
            let mut coeff = DVector::zeros(n);
            coeff[0] = a;
            coeff.rows_mut(1, n - 1).copy_from(&w);
            let v = &jac * coeff;
            let norm = linalg::bilinear(&aux, &v, &v).sqrt();
            let v = v / norm;
            let val = second_fundamental_form(spec, &p, &v, &v)?;
            count += 1;
            if val < best.0 {
                best = (val, p.iter().copied().collect(), v.iter().copied().collect());
            }
        }
    }
    let min = best.0;
    let classification = if min > EPS_STRICT {
        Convexity::Strict
    } else if min >= -EPS_STRICT {
        Convexity::Weak
    } else {
        Convexity::Violated
    };
    Ok(ConvexityReport {
        min_second_fundamental_form: min,
        classification,
        argmin_point: best.1,
        argmin_vector: best.2,
        samples: count,
    })
}
