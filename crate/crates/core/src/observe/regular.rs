use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chart_offset, PublicView};
use crate::error::{GeometryError, ObserveError};
use crate::linalg;
use crate::manifold::{boundary_chart_jacobian, boundary_point, outward_normal_unchecked, Spacetime, TangentVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SheetOptions {
    /// RMS residual a sheet fit must stay below.
    pub eps_fit: f64,
    /// A sheet counts at `p` when it passes within this chart distance.
    pub delta_hit: f64,
    /// Coarse consensus tolerance is `curvature * radius^2`.
    pub curvature: f64,
    pub max_degree: usize,
}

impl Default for SheetOptions {
    fn default() -> Self {
        SheetOptions { eps_fit: 1e-6, delta_hit: 0.0175, curvature: 2.0, max_degree: 6 }
    }
}

/// A codimension-one sheet of an observation set near a boundary point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularPatch {
    /// Foot point of the sheet nearest the query point, in boundary
    /// coordinates.
    pub p: Vec<f64>,
    /// `n - 1` tangent vectors in boundary coordinates.
    pub tangent: Vec<Vec<f64>>,
    pub residual: f64,
    pub sheet_id: usize,
    pub members: usize,
}

/// Sheets of an observation set near a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalStructure {
    /// Sheets passing within `delta_hit` of the query point.
    pub patches: Vec<RegularPatch>,
    /// All sheets fitted in the neighborhood.
    pub sheets: usize,
    /// Consensus failed somewhere: a sheet did not fit or points were left
    /// unexplained.
    pub singular: bool,
}

impl LocalStructure {
    pub fn is_regular(&self) -> bool {
        !self.singular && self.patches.len() == 1
    }

    pub fn regular_patch(&self) -> Option<&RegularPatch> {
        if self.is_regular() {
            self.patches.first()
        } else {
            None
        }
    }
}

/// Exponent tuples of monomials in `vars` variables with total degree at
/// most `degree`.
fn monomials(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    if vars == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for d in 0..=degree {
        for mut rest in monomials(vars - 1, degree - d) {
            rest.insert(0, d);
            out.push(rest);
        }
    }
    out.sort_by_key(|e| e.iter().sum::<usize>());
    out
}

/// Graph `nu . (u - c) = h(T^T (u - c))` over a tangent frame.
#[derive(Clone, Debug)]
struct SheetFit {
    center: DVector<f64>,
    frame: DMatrix<f64>,
    normal: DVector<f64>,
    exps: Vec<Vec<usize>>,
    coef: DVector<f64>,
    scale: f64,
    rms: f64,
}

impl SheetFit {
    fn local(&self, u: &DVector<f64>) -> (DVector<f64>, f64) {
        let d = u - &self.center;
        (self.frame.transpose() * &d / self.scale, self.normal.dot(&d))
    }

    fn height(&self, y: &DVector<f64>) -> f64 {
        self.exps
            .iter()
            .zip(self.coef.iter())
            .map(|(e, c)| c * e.iter().enumerate().map(|(i, &k)| y[i].powi(k as i32)).product::<f64>())
            .sum::<f64>()
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = y.len();
        DVector::from_iterator(
            m,
            (0..m).map(|j| {
                self.exps
                    .iter()
                    .zip(self.coef.iter())
                    .filter(|(e, _)| e[j] > 0)
                    .map(|(e, c)| {
                        let mut term = c * e[j] as f64;
                        for (i, &k) in e.iter().enumerate() {
                            let power = if i == j { k - 1 } else { k };
                            term *= y[i].powi(power as i32);
                        }
                        term
                    })
                    .sum::<f64>()
                    / self.scale
            }),
        )
    }

    fn residual(&self, u: &DVector<f64>) -> f64 {
        let (y, z) = self.local(u);
        z - self.height(&y)
    }
}

fn fit_sheet(points: &[DVector<f64>], members: &[usize], max_degree: usize, scale: f64) -> Option<SheetFit> {
    let n = points[0].len();
    let count = members.len();
    if count < n + 1 {
        return None;
    }
    let center = members.iter().fold(DVector::zeros(n), |acc, &i| acc + &points[i]) / count as f64;
    let mut cov = DMatrix::zeros(n, n);
    for &i in members {
        let d = &points[i] - &center;
        cov += &d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let frame = DMatrix::from_fn(n, n - 1, |r, c| eig.eigenvectors[(r, order[c])]);
    let normal = eig.eigenvectors.column(order[n - 1]).into_owned();

    let mut degree = max_degree;
    let mut exps = monomials(n - 1, degree);
    while degree > 1 && exps.len() + 2 > count {
        degree -= 1;
        exps = monomials(n - 1, degree);
    }
    let mut fit = SheetFit {
        center,
        frame,
        normal,
        exps,
        coef: DVector::zeros(0),
        scale: scale.max(f64::MIN_POSITIVE),
        rms: 0.0,
    };
    let mut a = DMatrix::zeros(count, fit.exps.len());
    let mut b = DVector::zeros(count);
    for (row, &i) in members.iter().enumerate() {
        let (y, z) = fit.local(&points[i]);
        for (col, e) in fit.exps.iter().enumerate() {
            a[(row, col)] = e.iter().enumerate().map(|(j, &k)| y[j].powi(k as i32)).product::<f64>();
        }
        b[row] = z;
    }
    let svd = a.svd(true, true);
    fit.coef = svd.solve(&b, 1e-13).ok()?;
    let ss: f64 = members.iter().map(|&i| fit.residual(&points[i]).powi(2)).sum();
    fit.rms = (ss / count as f64).sqrt();
    Some(fit)
}

/// Hyperplane through the given points: `(point, unit normal)`.
fn hyperplane(points: &[&DVector<f64>]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = points[0].len();
    let base = points[0].clone();
    let rows = DMatrix::from_fn(n - 1, n, |r, c| points[r + 1][c] - base[c]);
    if n == 1 {
        return Some((base, DVector::from_element(1, 1.0)));
    }
    let sv = linalg::singular_values(&rows);
    if sv.last().copied().unwrap_or(0.0) < 1e-14 {
        return None;
    }
    let normal = linalg::right_null_space(&rows, 1).into_iter().next()?;
    Some((base, normal))
}

/// Best consensus hyperplane among `candidates`; returns its inliers.
fn consensus(points: &[DVector<f64>], candidates: &[usize], tol: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points[0].len();
    let mut best: Vec<usize> = Vec::new();
    let mut try_plane = |sample: &[usize]| {
        let refs: Vec<&DVector<f64>> = sample.iter().map(|&i| &points[i]).collect();
        if let Some((base, normal)) = hyperplane(&refs) {
            let inliers: Vec<usize> =
                candidates.iter().copied().filter(|&i| normal.dot(&(&points[i] - &base)).abs() <= tol).collect();
            if inliers.len() > best.len() {
                best = inliers;
            }
        }
    };
    if n == 2 {
        for a in 0..candidates.len() {
            for b in a + 1..candidates.len() {
                try_plane(&[candidates[a], candidates[b]]);
            }
        }
    } else {
        let mut pool = candidates.to_vec();
        for _ in 0..400 {
            pool.shuffle(rng);
            try_plane(&pool[..n.min(pool.len())]);
        }
    }
    best
}

/// Local structure of a public observation set within `radius` of the
/// boundary point `p`.
///
/// Neighbors are clustered into sheets by hyperplane consensus, each sheet
/// is fitted as a polynomial graph over its principal tangent frame, and
/// members are re-selected with a shrinking tolerance until stable.
pub fn detect_regular(
    view: &PublicView,
    p: &[f64],
    radius: f64,
    opts: &SheetOptions,
) -> Result<LocalStructure, ObserveError> {
    let n = p.len();
    let points: Vec<DVector<f64>> =
        view.points.iter().map(|u| chart_offset(u, p)).filter(|d| d.norm() <= radius).collect();
    let needed = n + 2;
    if points.len() < needed {
        return Err(ObserveError::InsufficientSampling { found: points.len(), needed });
    }
    let coarse = (opts.curvature * radius * radius).max(10.0 * opts.eps_fit);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fits: Vec<(SheetFit, Vec<usize>)> = Vec::new();
    let mut singular = false;

    while remaining.len() >= needed {
        let seed = consensus(&points, &remaining, coarse, &mut rng);
        if seed.len() < needed {
            break;
        }
        let mut members = seed;
        let mut tol = coarse;
        let mut fit = None;
        for _ in 0..12 {
            let Some(f) = fit_sheet(&points, &members, opts.max_degree, radius) else { break };
            tol = (tol * 0.1).max(10.0 * opts.eps_fit);
            let next: Vec<usize> = remaining.iter().copied().filter(|&i| f.residual(&points[i]).abs() <= tol).collect();
            let stable = next == members;
            fit = Some(f);
            if next.len() < needed {
                break;
            }
            members = next;
            if stable && tol <= 10.0 * opts.eps_fit {
                break;
            }
        }
        let Some(f) = fit else { break };
        let f = fit_sheet(&points, &members, opts.max_degree, radius).unwrap_or(f);
        if f.rms > opts.eps_fit || members.len() < needed {
            singular = true;
            break;
        }
        remaining.retain(|i| !members.contains(i));
        fits.push((f, members));
    }
    if remaining.len() >= needed {
        singular = true;
    }

    let mut patches = Vec::new();
    for (id, (fit, members)) in fits.iter().enumerate() {
        let origin = DVector::zeros(n);
        let (y, z) = fit.local(&origin);
        if (z - fit.height(&y)).abs() > opts.delta_hit || y.norm() * fit.scale > radius {
            continue;
        }
        // refit on the nearer half of the sheet; curved sheets fit better locally
        let mut near = members.clone();
        near.sort_by(|&a, &b| points[a].norm().total_cmp(&points[b].norm()));
        near.truncate(members.len().div_ceil(2));
        let fit = match fit_sheet(&points, &near, opts.max_degree, radius / 2.0) {
            Some(local) if near.len() >= 2 * needed && local.rms <= fit.rms => local,
            _ => fit.clone(),
        };
        let (y, _) = fit.local(&origin);
        let h = fit.height(&y);
        let foot = &fit.center + &fit.frame * (&y * fit.scale) + &fit.normal * h;
        let grad = fit.gradient(&y);
        let tangent = (0..n - 1)
            .map(|j| {
                let t = fit.frame.column(j) + &fit.normal * grad[j];
                (t.clone() / t.norm()).iter().copied().collect()
            })
            .collect();
        patches.push(RegularPatch {
            p: (0..n).map(|i| p[i] + foot[i]).collect(),
            tangent,
            residual: fit.rms,
            sheet_id: id,
            members: members.len(),
        });
    }
    Ok(LocalStructure { patches, sheets: fits.len(), singular })
}

/// The future-directed, outward null ray orthogonal to the patch, as a unit
/// `g+` vector at the patch point.
pub fn outward_null_ray(spec: &dyn Spacetime, patch: &RegularPatch) -> Result<TangentVector, ObserveError> {
    let n = spec.spatial_dim();
    let point = boundary_point(spec, &patch.p);
    let jac = boundary_chart_jacobian(spec, &patch.p);
    let g = spec.metric(&point)?;
    let s = DMatrix::from_fn(n + 1, n - 1, |r, c| {
        (0..n).map(|i| jac[(r, i)] * patch.tangent[c][i]).sum::<f64>()
    });
    if n > 1 {
        let gram = s.transpose() * &g * &s;
        if gram.clone().cholesky().is_none() {
            return Err(ObserveError::NonSpacelike(gram.determinant()));
        }
    }
    let constraints = s.transpose() * &g;
    let basis = if n > 1 {
        linalg::right_null_space(&constraints, 2)
    } else {
        vec![DVector::from_fn(2, |i, _| if i == 0 { 1.0 } else { 0.0 }), DVector::from_fn(2, |i, _| if i == 1 { 1.0 } else { 0.0 })]
    };
    let (a, b) = (&basis[0], &basis[1]);
    let gaa = linalg::bilinear(&g, a, a);
    let gab = linalg::bilinear(&g, a, b);
    let gbb = linalg::bilinear(&g, b, b);
    // null directions alpha a + beta b: gaa alpha^2 + 2 gab alpha beta + gbb beta^2 = 0
    let disc = gab * gab - gaa * gbb;
    if !(disc > 0.0) {
        return Err(ObserveError::NonSpacelike(disc));
    }
    let mut candidates = Vec::with_capacity(2);
    if gbb.abs() > gaa.abs() {
        for r in [(-gab + disc.sqrt()) / gbb, (-gab - disc.sqrt()) / gbb] {
            candidates.push(a + b * r);
        }
    } else {
        for r in [(-gab + disc.sqrt()) / gaa, (-gab - disc.sqrt()) / gaa] {
            candidates.push(a * r + b);
        }
    }
    let nu = outward_normal_unchecked(spec, &point)?.components;
    let aux = spec.aux_metric(&point);
    let mut chosen = None;
    for c in candidates {
        for sign in [1.0, -1.0] {
            let w = &c * sign;
            if w[0] > 0.0 && linalg::bilinear(&g, &w, &nu) > 0.0 {
                chosen = Some(w);
            }
        }
    }
    let w = chosen.ok_or_else(|| GeometryError::Precondition("no future outward null ray".into()))?;
    let norm = linalg::bilinear(&aux, &w, &w).sqrt();
    Ok(TangentVector::new(point, w / norm))
}
