use rayon::prelude::*;
use serde::Serialize;

use super::{chart_distance, PublicView};
use crate::manifold::BoundaryBox;

/// Symmetric Hausdorff distance in boundary chart coordinates, periodic
/// angles wrapped. Infinite if exactly one set is empty.
pub fn hausdorff(a: &PublicView, b: &PublicView) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |x: &PublicView, y: &PublicView| {
        x.points
            .par_iter()
            .map(|u| y.points.iter().map(|v| chart_distance(u, v)).fold(f64::INFINITY, f64::min))
            .reduce(|| 0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistinctnessReport {
    pub distances: Vec<Vec<f64>>,
    /// Indices of sets empty on the inner box; excluded from the verdict.
    pub empty: Vec<usize>,
    pub min_off_diagonal: f64,
    /// Pairs closer than the tolerance.
    pub coincident: Vec<(usize, usize)>,
    pub pass: bool,
}

/// Pairwise Hausdorff distances of the sets restricted to `inner`; passes
/// when every pair of nonempty sets is at least `tol` apart.
pub fn distinctness_check(sets: &[PublicView], inner: &BoundaryBox, tol: f64) -> DistinctnessReport {
    let restricted: Vec<PublicView> = sets.iter().map(|s| s.restricted(inner)).collect();
    let k = restricted.len();
    let empty: Vec<usize> = (0..k).filter(|&i| restricted[i].is_empty()).collect();
    for &i in &empty {
        log::warn!("observation set {i} is empty on the inner box; excluded from distinctness");
    }
    let mut distances = vec![vec![0.0; k]; k];
    let mut min_off = f64::INFINITY;
    let mut coincident = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = hausdorff(&restricted[i], &restricted[j]);
            distances[i][j] = d;
            distances[j][i] = d;
            if empty.contains(&i) || empty.contains(&j) {
                continue;
            }
            min_off = min_off.min(d);
            if d < tol {
                coincident.push((i, j));
            }
        }
    }
    let compared = k - empty.len();
    DistinctnessReport { distances, empty, min_off_diagonal: min_off, pass: compared >= 2 && coincident.is_empty(), coincident }
}
