//! Dormand-Prince 5(4) for the geodesic equation with cubic Hermite dense
//! output.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::linalg;
use crate::manifold::{christoffel_at, Spacetime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step, in units of the manifold length scale.
    pub h_max: f64,
    /// Smallest step before giving up, in units of the length scale.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { rtol: 1e-10, atol: 1e-12, h_max: 0.05, h_min: 1e-13, max_steps: 2_000_000 }
    }
}

/// Phase-space state `(x, v)` with its geodesic acceleration.
#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub s: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub a: DVector<f64>,
}

pub(crate) fn acceleration(spec: &dyn Spacetime, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    if spec.is_flat() {
        return Ok(DVector::zeros(v.len()));
    }
    Ok(christoffel_at(spec, x)?.acceleration(v))
}

pub(crate) fn node(spec: &dyn Spacetime, s: f64, x: DVector<f64>, v: DVector<f64>) -> Result<Node, GeometryError> {
    let a = acceleration(spec, &x, &v)?;
    Ok(Node { s, x, v, a })
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step of size `h` from `start`. Returns the fifth-order
/// node (velocity re-projected onto the null cone) and the scaled error.
pub(crate) fn dp_step(
    spec: &dyn Spacetime,
    start: &Node,
    h: f64,
    opts: &IntegratorOptions,
    project: bool,
) -> Result<(Node, f64), GeometryError> {
    let mut kx: Vec<DVector<f64>> = Vec::with_capacity(7);
    let mut kv: Vec<DVector<f64>> = Vec::with_capacity(7);
    kx.push(start.v.clone());
    kv.push(start.a.clone());
    for stage in 1..7 {
        let mut x = start.x.clone();
        let mut v = start.v.clone();
        for j in 0..stage {
            let c = A[stage][j] * h;
            if c != 0.0 {
                x.axpy(c, &kx[j], 1.0);
                v.axpy(c, &kv[j], 1.0);
            }
        }
        let a = acceleration(spec, &x, &v)?;
        kx.push(v);
        kv.push(a);
    }
    let mut x5 = start.x.clone();
    let mut v5 = start.v.clone();
    let mut ex = DVector::zeros(start.x.len());
    let mut ev = DVector::zeros(start.v.len());
    for j in 0..7 {
        if B5[j] != 0.0 {
            x5.axpy(h * B5[j], &kx[j], 1.0);
            v5.axpy(h * B5[j], &kv[j], 1.0);
        }
        let d = B5[j] - B4[j];
        if d != 0.0 {
            ex.axpy(h * d, &kx[j], 1.0);
            ev.axpy(h * d, &kv[j], 1.0);
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..x5.len() {
        let sx = opts.atol + opts.rtol * start.x[i].abs().max(x5[i].abs());
        let sv = opts.atol + opts.rtol * start.v[i].abs().max(v5[i].abs());
        err = err.max(ex[i].abs() / sx).max(ev[i].abs() / sv);
    }
    if project {
        reproject_null(spec, &x5, &mut v5, start.v[0] > 0.0)?;
    }
    let out = node(spec, start.s + h, x5, v5)?;
    Ok((out, err))
}

/// Re-solves the time component of `v` so that `g(v, v) = 0`, keeping the
/// spatial part.
pub(crate) fn reproject_null(
    spec: &dyn Spacetime,
    x: &DVector<f64>,
    v: &mut DVector<f64>,
    future: bool,
) -> Result<(), GeometryError> {
    let g = spec.metric(x)?;
    if let Some(a) = linalg::null_time_component(&g, &v.as_slice()[1..], future) {
        v[0] = a;
    }
    Ok(())
}

/// Cubic Hermite interpolation between two nodes at parameter `s`.
pub fn hermite(n0: &Node, n1: &Node, s: f64) -> (DVector<f64>, DVector<f64>) {
    let h = n1.s - n0.s;
    if h == 0.0 {
        return (n0.x.clone(), n0.v.clone());
    }
    let t = (s - n0.s) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let x = &n0.x * h00 + &n0.v * (h10 * h) + &n1.x * h01 + &n1.v * (h11 * h);
    let v = &n0.v * h00 + &n0.a * (h10 * h) + &n1.v * h01 + &n1.a * (h11 * h);
    (x, v)
}

/// Proposed next step size from the scaled error of the current one.
pub(crate) fn next_step(h: f64, err: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    h * factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{MinkowskiCylinder, SpatialFactor, StaticProduct};

    #[test]
    fn straight_line_in_flat_space() {
        let spec = MinkowskiCylinder::new(1.0, 2).unwrap();
        let x = DVector::from_column_slice(&[0.0, 0.1, 0.2]);
        let v = DVector::from_column_slice(&[1.0, 0.6, 0.8]);
        let start = node(&spec, 0.0, x.clone(), v.clone()).unwrap();
        let (end, err) = dp_step(&spec, &start, 0.3, &IntegratorOptions::default(), true).unwrap();
        assert!(err < 1e-3);
        assert!((end.x - (x + v * 0.3)).amax() < 1e-15);
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        // x(s) = s^3, v = 3 s^2, a = 6 s
        let mk = |s: f64| Node {
            s,
            x: DVector::from_element(1, s * s * s),
            v: DVector::from_element(1, 3.0 * s * s),
            a: DVector::from_element(1, 6.0 * s),
        };
        let (x, _) = hermite(&mk(0.5), &mk(1.5), 0.8);
        assert!((x[0] - 0.512).abs() < 1e-14);
    }

    #[test]
    fn conformal_geodesic_conserves_energy() {
        let spec = StaticProduct::new(2, SpatialFactor::ConformalDisk { radius: 1.0, strength: 0.5 }).unwrap();
        let x = DVector::from_column_slice(&[0.0, 0.1, -0.2]);
        let mut v = DVector::from_column_slice(&[1.0, 0.6, 0.8]);
        let opts = IntegratorOptions::default();
        reproject_null(&spec, &x, &mut v, true).unwrap();
        let e0 = v[0];
        let mut n = node(&spec, 0.0, x, v).unwrap();
        let mut h = 0.01;
        while n.s < 0.5 {
            let (m, err) = dp_step(&spec, &n, h, &opts, true).unwrap();
            if err <= 1.0 {
                n = m;
            }
            h = next_step(h, err).min(0.05);
        }
        assert!((n.v[0] - e0).abs() < 1e-9);
    }
}
