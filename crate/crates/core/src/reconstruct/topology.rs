use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ObservationFamily;
use crate::manifold::{sphere, BoundaryBox, Point};
use crate::observe::{angles_contain, box_contains, BoundaryRegion, PublicView};

/// Finite sample of subbasis boxes: opens `O` and compacts `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxFamily {
    pub opens: Vec<BoundaryBox>,
    pub compacts: Vec<BoundaryBox>,
}

/// `count` boxes inside the region box, half open and half compact, with
/// side lengths a random fraction in `sizes` of the region extent.
pub fn random_boxes(region: &BoundaryRegion, count: usize, sizes: (f64, f64), seed: u64) -> BoxFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer = &region.outer;
    let n = outer.angles.len() + 1;
    let draw = |rng: &mut ChaCha8Rng| {
        let side = |lo: f64, hi: f64, periodic: bool, rng: &mut ChaCha8Rng| {
            let span = hi - lo;
            let w = span * rng.gen_range(sizes.0..=sizes.1);
            let a = if periodic { rng.gen_range(lo..hi) } else { rng.gen_range(lo..=(hi - w).max(lo)) };
            (a, a + w)
        };
        let t = side(outer.t.0, outer.t.1, false, rng);
        let angles = outer
            .angles
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| side(lo, hi, sphere::is_periodic(k, n), rng))
            .collect();
        BoundaryBox { t, angles }
    };
    let opens = (0..count / 2).map(|_| draw(&mut rng)).collect();
    let compacts = (0..count - count / 2).map(|_| draw(&mut rng)).collect();
    BoxFamily { opens, compacts }
}

fn closed_contains(b: &BoundaryBox, u: &[f64]) -> bool {
    u[0] >= b.t.0 && u[0] <= b.t.1 && angles_contain(b, u)
}

/// Incidence of each set with the subbasis: `meets[i][j]` when set `i` meets
/// open `j` (membership in `U_O`), `misses[i][j]` when it avoids compact `j`
/// (membership in `U^K`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopologyProbe {
    pub ids: Vec<u64>,
    pub meets: Vec<Vec<bool>>,
    pub misses: Vec<Vec<bool>>,
}

pub fn topology_probe(family: &ObservationFamily, opens: &[BoundaryBox], compacts: &[BoundaryBox]) -> TopologyProbe {
    let ids = family.ids();
    let rows: Vec<(Vec<bool>, Vec<bool>)> = ids
        .par_iter()
        .map(|id| {
            let view: &PublicView = &family.sets[id];
            let meets = opens.iter().map(|o| view.points.iter().any(|u| box_contains(o, u))).collect();
            let misses = compacts.iter().map(|k| !view.points.iter().any(|u| closed_contains(k, u))).collect();
            (meets, misses)
        })
        .collect();
    let (meets, misses) = rows.into_iter().unzip();
    TopologyProbe { ids, meets, misses }
}

impl TopologyProbe {
    fn index(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn hamming(&self, a: u64, b: u64) -> Option<usize> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        let d = |x: &[bool], y: &[bool]| x.iter().zip(y).filter(|(p, q)| p != q).count();
        Some(d(&self.meets[i], &self.meets[j]) + d(&self.misses[i], &self.misses[j]))
    }

    /// The `k` ids closest to `id` in incidence, ties broken by id.
    pub fn neighbors(&self, id: u64, k: usize) -> Vec<u64> {
        let mut others: Vec<(usize, u64)> =
            self.ids.iter().filter(|&&o| o != id).filter_map(|&o| Some((self.hamming(id, o)?, o))).collect();
        others.sort();
        others.into_iter().take(k).map(|(_, o)| o).collect()
    }

    /// Ids lying in every sampled subbasis set that contains `id`'s set.
    pub fn cell(&self, id: u64) -> Vec<u64> {
        let Some(i) = self.index(id) else { return Vec::new() };
        (0..self.ids.len())
            .filter(|&j| {
                let covers = |a: &[bool], b: &[bool]| a.iter().zip(b).all(|(&x, &y)| !x || y);
                covers(&self.meets[i], &self.meets[j]) && covers(&self.misses[i], &self.misses[j])
            })
            .map(|j| self.ids[j])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopologyVerdict {
    pub sources: usize,
    /// Sources whose finest sampled subbasis cell lies within `eps_top`.
    pub separated: usize,
    /// Largest ambient distance from a source to a member of its cell.
    pub worst_spread: f64,
    pub opens: usize,
    pub compacts: usize,
    pub pass: bool,
}

/// Checks that the finest intersection of sampled subbasis sets around each
/// source excludes every source farther than `eps_top` (ambient Euclidean
/// chart distance).
pub fn topology_verdict(probe: &TopologyProbe, positions: &BTreeMap<u64, Point>, eps_top: f64) -> TopologyVerdict {
    let spreads: Vec<f64> = probe
        .ids
        .par_iter()
        .filter(|id| positions.contains_key(id))
        .map(|&id| {
            let q = &positions[&id];
            probe.cell(id).iter().filter_map(|o| positions.get(o)).map(|p| (p - q).norm()).fold(0.0, f64::max)
        })
        .collect();
    let separated = spreads.iter().filter(|&&s| s <= eps_top).count();
    TopologyVerdict {
        sources: spreads.len(),
        separated,
        worst_spread: spreads.iter().copied().fold(0.0, f64::max),
        opens: probe.meets.first().map_or(0, Vec::len),
        compacts: probe.misses.first().map_or(0, Vec::len),
        pass: !spreads.is_empty() && separated == spreads.len(),
    }
}
