//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Solves `g(V, V) = 0` for the time component of `V` with the spatial part
/// held fixed, returning the root with the requested sign of `V^0`.
///
/// Writes `g00 a^2 + 2 b a + c = 0` with `b = g_{0i} w^i`, `c = g_{ij} w^i w^j`.
pub fn null_time_component(g: &DMatrix<f64>, spatial: &[f64], future: bool) -> Option<f64> {
    let n = spatial.len();
    let a = g[(0, 0)];
    let mut b = 0.0;
    let mut c = 0.0;
    for i in 0..n {
        b += g[(0, i + 1)] * spatial[i];
        for j in 0..n {
            c += g[(i + 1, j + 1)] * spatial[i] * spatial[j];
        }
    }
    if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            return None;
        }
        let root = -c / (2.0 * b);
        return ((root > 0.0) == future).then_some(root);
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -(b + sgn * sq);
    let (r1, r2) = if q.abs() > 0.0 { (q / a, c / q) } else { ((-b + sq) / a, (-b - sq) / a) };
    let pick = |r: f64| if future { r > 0.0 } else { r < 0.0 };
    match (pick(r1), pick(r2)) {
        (true, false) => Some(r1),
        (false, true) => Some(r2),
        (true, true) => Some(if future { r1.max(r2) } else { r1.min(r2) }),
        _ => None,
    }
}

/// `v^T m w` for square `m`.
pub fn bilinear(m: &DMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let mut row = 0.0;
        for j in 0..m.ncols() {
            row += m[(i, j)] * w[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Ratio of largest to smallest singular value over `min(rows, cols)` values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis of the right null space of `m`, taking the `dim` smallest
/// singular directions.
pub fn right_null_space(m: &DMatrix<f64>, dim: usize) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    // pad to square so the SVD returns a full right basis
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    idx.into_iter()
        .take(dim)
        .map(|k| v_t.row(k).transpose().into_owned())
        .collect()
}

/// Least-squares unit vector minimizing `|A x|`, plus the attained `|A x|`.
pub fn smallest_singular_vector(a: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let basis = right_null_space(a, 1);
    let x = basis.into_iter().next().expect("nonempty basis");
    let r = (a * &x).norm();
    (x, r)
}

pub fn angle_between(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

/// Angle between the lines spanned by `a` and `b`, in `[0, pi/2]`.
pub fn line_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs();
    c.clamp(0.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_component_minkowski() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        let a = null_time_component(&g, &[0.6, 0.8], true).unwrap();
        assert!((a - 1.0).abs() < 1e-15);
        let a = null_time_component(&g, &[0.6, 0.8], false).unwrap();
        assert!((a + 1.0).abs() < 1e-15);
    }

    #[test]
    fn null_component_with_shift() {
        // g = -dt^2 + 2 beta dt dx + dx^2 + dy^2
        let beta = 0.3;
        let mut g = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        g[(0, 1)] = beta;
        g[(1, 0)] = beta;
        let w = [0.8, -0.6];
        let a = null_time_component(&g, &w, true).unwrap();
        let v = DVector::from_vec(vec![a, w[0], w[1]]);
        assert!(bilinear(&g, &v, &v).abs() < 1e-14);
        assert!(a > 0.0);
    }

    #[test]
    fn null_space_of_row() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let basis = right_null_space(&m, 2);
        for b in &basis {
            assert!((&m * b).norm() < 1e-14);
        }
        assert!(basis[0].dot(&basis[1]).abs() < 1e-14);
    }
}
