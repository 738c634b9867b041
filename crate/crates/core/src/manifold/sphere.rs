//! Hyperspherical angles on `S^{n-1}`.
//!
//! `omega_1 = cos a_1`, `omega_k = sin a_1 ... sin a_{k-1} cos a_k`,
//! `omega_n = sin a_1 ... sin a_{n-1}`. For `n = 2` this is the usual polar
//! angle `phi`, with `omega = (cos phi, sin phi)`. For `n = 1` there are no
//! angles and the sphere is `{-1, +1}`.

use nalgebra::{DMatrix, DVector};

pub fn unit_vector(angles: &[f64], n: usize) -> DVector<f64> {
    assert_eq!(angles.len() + 1, n.max(1), "need n-1 angles");
    if n == 1 {
        return DVector::from_element(1, 1.0);
    }
    let mut out = DVector::zeros(n);
    let mut prod = 1.0;
    for k in 0..n - 1 {
        out[k] = prod * angles[k].cos();
        prod *= angles[k].sin();
    }
    out[n - 1] = prod;
    out
}

/// Derivatives `d omega / d angle_j`, as an `n x (n-1)` matrix.
pub fn unit_vector_jacobian(angles: &[f64], n: usize) -> DMatrix<f64> {
    let m = n.saturating_sub(1);
    let mut jac = DMatrix::zeros(n, m);
    if n < 2 {
        return jac;
    }
    let (s, c): (Vec<f64>, Vec<f64>) = angles.iter().map(|a| (a.sin(), a.cos())).unzip();
    for k in 0..n {
        for j in 0..m {
            // component k = prod_{i<min(k,n-1)} s_i * (c_k if k < n-1)
            let upto = k.min(n - 1);
            if j > k || (j == k && k == n - 1) {
                continue;
            }
            let mut val = 1.0;
            for i in 0..upto {
                val *= if i == j { c[i] } else { s[i] };
            }
            if k < n - 1 {
                val *= if j == k { -s[k] } else { c[k] };
            }
            jac[(k, j)] = val;
        }
    }
    jac
}

/// Inverse of [`unit_vector`] for any nonzero vector (the norm is ignored).
pub fn angles_of(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n < 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n - 1);
    for k in 0..n - 2 {
        let tail: f64 = v[k + 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(tail.atan2(v[k]));
    }
    out.push(v[n - 1].atan2(v[n - 2]));
    out
}

/// Which angles are periodic (only the last one, with period `2 pi`).
pub fn is_periodic(index: usize, n: usize) -> bool {
    n >= 2 && index == n - 2
}

/// Wraps `a - b` of a periodic angle into `(-pi, pi]`.
pub fn wrap_difference(a: f64, b: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut d = (a - b) % two_pi;
    if d > std::f64::consts::PI {
        d -= two_pi;
    } else if d <= -std::f64::consts::PI {
        d += two_pi;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_angle_for_two_dims() {
        let w = unit_vector(&[0.3], 2);
        assert!((w[0] - 0.3f64.cos()).abs() < 1e-15);
        assert!((w[1] - 0.3f64.sin()).abs() < 1e-15);
        assert!((angles_of(w.as_slice())[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for n in 2..=4 {
            let angles: Vec<f64> = (0..n - 1).map(|k| 0.4 + 0.3 * k as f64).collect();
            let jac = unit_vector_jacobian(&angles, n);
            let h = 1e-6;
            for j in 0..n - 1 {
                let mut ap = angles.clone();
                let mut am = angles.clone();
                ap[j] += h;
                am[j] -= h;
                let fd = (unit_vector(&ap, n) - unit_vector(&am, n)) / (2.0 * h);
                for k in 0..n {
                    assert!((fd[k] - jac[(k, j)]).abs() < 1e-9, "n={n} k={k} j={j}");
                }
            }
        }
    }

    #[test]
    fn roundtrip_three_dims() {
        let a = [1.1, -2.0];
        let w = unit_vector(&a, 3);
        let back = angles_of(w.as_slice());
        assert!((back[0] - a[0]).abs() < 1e-14);
        assert!((back[1] - a[1]).abs() < 1e-14);
    }

    #[test]
    fn wrap() {
        assert!((wrap_difference(3.1, -3.1) - (6.2 - std::f64::consts::TAU)).abs() < 1e-14);
    }
}
