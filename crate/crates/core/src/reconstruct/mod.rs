//! Reconstruction of interior structure from public observation sets: the
//! subbasis topology, charts from earliest observation times, null cones and
//! the conformal class, and time orientation. Oracle helpers compare against
//! ground truth in simulation mode.

mod chart;
mod cone;
mod oracle;
mod orientation;
mod topology;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use chart::{
    build_chart, earliest_observation_time, earliest_time_in, observation_times_along, Chart, CurveInU, Earliest, Miss,
};
pub use cone::{fit_conformal_metric, null_cone, recover_null_direction, ConformalFit, NullDirection};
pub use oracle::{chart_jacobian, conformal_deviation, triangulate_source, Triangulation};
pub use orientation::{time_orientation_test, variation_identity, OrientationResult, TimeVerdict, VariationCheck};
pub use topology::{random_boxes, topology_probe, topology_verdict, BoxFamily, TopologyProbe, TopologyVerdict};

use crate::error::ReconstructError;
use crate::manifold::{boundary_metric, Point, Spacetime};
use crate::observe::{BoundaryRegion, ObservationSet, PublicView, SheetOptions};

type BoundaryMetricFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Conformal class of the boundary metric on the region: one representative
/// in boundary parameters, plus an optional vector field declared future.
#[derive(Clone)]
pub struct BoundaryConformal {
    representative: Arc<BoundaryMetricFn>,
    /// Constant boundary-parameter vector declared future-pointing. Without
    /// it the orientation test is unavailable.
    pub future: Option<Vec<f64>>,
}

impl fmt::Debug for BoundaryConformal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryConformal").field("future", &self.future).finish_non_exhaustive()
    }
}

impl BoundaryConformal {
    pub fn new(representative: Arc<BoundaryMetricFn>, future: Option<Vec<f64>>) -> Self {
        BoundaryConformal { representative, future }
    }

    /// Induced metric of `spec`, oriented by `dt`.
    pub fn from_spec(spec: Arc<dyn Spacetime>) -> Self {
        let n = spec.spatial_dim();
        let mut future = vec![0.0; n];
        future[0] = 1.0;
        let rep = move |u: &[f64]| boundary_metric(spec.as_ref(), u).expect("boundary metric on the chart");
        BoundaryConformal { representative: Arc::new(rep), future: Some(future) }
    }

    pub fn metric(&self, u: &[f64]) -> DMatrix<f64> {
        (self.representative)(u)
    }

    /// Same class, representative multiplied by a positive function.
    pub fn rescaled(&self, factor: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>) -> Self {
        let base = self.representative.clone();
        let rep = move |u: &[f64]| base(u) * factor(u);
        BoundaryConformal { representative: Arc::new(rep), future: self.future.clone() }
    }

    pub fn without_orientation(&self) -> Self {
        BoundaryConformal { representative: self.representative.clone(), future: None }
    }
}

/// Public observation sets keyed by opaque ids.
#[derive(Clone, Debug)]
pub struct ObservationFamily {
    pub sets: BTreeMap<u64, PublicView>,
    pub region: BoundaryRegion,
    pub boundary: BoundaryConformal,
}

/// Ground truth kept apart from the family: opaque id to source.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Oracle {
    pub positions: BTreeMap<u64, Point>,
    pub source_ids: BTreeMap<u64, u64>,
}

impl Oracle {
    /// Opaque id of the set simulated from `source_id`.
    pub fn id_of(&self, source_id: u64) -> Option<u64> {
        self.source_ids.iter().find(|(_, &s)| s == source_id).map(|(&id, _)| id)
    }
}

impl ObservationFamily {
    pub fn new(sets: BTreeMap<u64, PublicView>, region: BoundaryRegion, boundary: BoundaryConformal) -> Self {
        ObservationFamily { sets, region, boundary }
    }

    /// Strips simulated sets to public views under shuffled opaque ids.
    /// Empty sets are left out with a warning.
    pub fn from_simulation(
        sets: &[ObservationSet],
        region: BoundaryRegion,
        boundary: BoundaryConformal,
        seed: u64,
    ) -> (Self, Oracle) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..sets.len()).collect();
        order.shuffle(&mut rng);
        let mut views = BTreeMap::new();
        let mut oracle = Oracle::default();
        for i in order {
            let set = &sets[i];
            if set.points.is_empty() {
                log::warn!("observation set {} is empty; excluded from reconstruction", set.source_id);
                continue;
            }
            let mut id: u64 = rng.gen();
            while views.contains_key(&id) {
                id = rng.gen();
            }
            views.insert(id, set.public_view());
            oracle.positions.insert(id, set.source.clone());
            oracle.source_ids.insert(id, set.source_id);
        }
        (ObservationFamily { sets: views, region, boundary }, oracle)
    }

    pub fn view(&self, id: u64) -> Result<&PublicView, ReconstructError> {
        self.sets.get(&id).ok_or(ReconstructError::UnknownId(id))
    }

    pub fn ids(&self) -> Vec<u64> {
        self.sets.keys().copied().collect()
    }

    pub fn spatial_dim(&self) -> usize {
        self.region.spatial_dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    /// A curve meets a set where it passes within this chart distance.
    pub delta_hit: f64,
    /// Neighborhood radius for local sheet fits.
    pub patch_radius: f64,
    /// Minimum angle between a curve and the sheet it crosses (radians).
    pub alpha_min: f64,
    /// Tangent agreement for the shared-ray criterion (radians).
    pub alpha_q: f64,
    /// Sheet distance from the shared point for the shared-ray criterion.
    pub q_hit: f64,
    /// Null-direction fits use ids within this chart distance of the center.
    pub q_radius: f64,
    pub kappa_max: f64,
    pub delta_tri: f64,
    pub eps_top: f64,
    /// Incidence neighbors used to estimate chart differentials.
    pub chart_neighbors: usize,
    /// Largest step between tracked points along an orientation path.
    pub track_tol: f64,
    /// Backward time span searched by triangulation.
    pub back_span: f64,
    /// Rays per simulated set in oracle comparisons.
    pub oracle_rays: usize,
    pub sheet: SheetOptions,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            delta_hit: 0.0175,
            patch_radius: 0.05,
            alpha_min: 10f64.to_radians(),
            alpha_q: 2f64.to_radians(),
            q_hit: 1e-5,
            q_radius: 0.08,
            kappa_max: 1e3,
            delta_tri: 1e-3,
            eps_top: 0.1,
            chart_neighbors: 12,
            track_tol: 0.05,
            back_span: 6.0,
            oracle_rays: 720,
            sheet: SheetOptions::default(),
        }
    }
}

/// Per-id orientation summary for the report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrientationSummary {
    pub path: Vec<u64>,
    pub verdict: TimeVerdict,
    pub pairing: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub config_hash: String,
    pub topology: Option<TopologyVerdict>,
    pub charts: Vec<Chart>,
    pub null_cones: BTreeMap<u64, Vec<NullDirection>>,
    pub conformal_fits: BTreeMap<u64, ConformalFit>,
    pub orientation: BTreeMap<String, OrientationSummary>,
    /// `g+` distance between triangulated and true source (simulation only).
    pub oracle_errors: BTreeMap<u64, f64>,
    /// Conformal fit deviation from the true metric class (simulation only).
    pub conformal_errors: BTreeMap<u64, f64>,
}

impl ReconstructionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Error metrics as CSV rows `metric,id,value`.
    pub fn error_csv(&self) -> String {
        let mut out = format!("# config_hash={}\nmetric,id,value\n", self.config_hash);
        for (id, e) in &self.oracle_errors {
            out.push_str(&format!("triangulation,{id},{e:e}\n"));
        }
        for (id, e) in &self.conformal_errors {
            out.push_str(&format!("conformal,{id},{e:e}\n"));
        }
        for (id, fit) in &self.conformal_fits {
            out.push_str(&format!("conformal_residual,{id},{:e}\n", fit.residual));
        }
        for chart in &self.charts {
            out.push_str(&format!("chart_condition,{},{:e}\n", chart.center, chart.conditioning));
        }
        out
    }
}
