//! Broken null-geodesics: interior geodesic segments joined by specular
//! reflections at the boundary.

mod differential;
pub mod integrator;
mod tameness;
#[cfg(test)]
mod tests;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use differential::{expb_differential, ExpbDifferential, EPS_CONJ};
pub use integrator::{hermite, IntegratorOptions, Node};
pub use tameness::{sequence_lemma, tameness_monitor, SequenceLemmaReport, TamenessReport};

use crate::error::{GeometryError, TraceError};
use crate::linalg;
use crate::manifold::{boundary_params, reflect_unchecked, Point, Spacetime, EPS_BDY, EPS_NULL, EPS_TANGENT};
use integrator::{dp_step, next_step, node};

/// Base point and velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub point: Point,
    pub velocity: DVector<f64>,
}

impl PhasePoint {
    pub fn new(point: Point, velocity: DVector<f64>) -> Self {
        PhasePoint { point, velocity }
    }

    /// Checks membership in the phase space of broken null-geodesics: null,
    /// inside the closed manifold, and inward when on the boundary.
    pub fn validate(&self, spec: &dyn Spacetime) -> Result<(), GeometryError> {
        spec.check_point(&self.point)?;
        let g = spec.metric(&self.point)?;
        let q = linalg::bilinear(&g, &self.velocity, &self.velocity);
        let norm = linalg::bilinear(&spec.aux_metric(&self.point), &self.velocity, &self.velocity);
        if !(norm > 0.0) || q.abs() > 1e2 * EPS_NULL * norm {
            return Err(GeometryError::Precondition(format!("initial velocity is not null (g(V,V) = {q:e})")));
        }
        let x = spec.boundary_fn(&self.point);
        let tol = EPS_BDY * spec.length_scale();
        if x < -tol {
            return Err(GeometryError::Precondition(format!("initial point outside the manifold (x = {x:e})")));
        }
        if x <= tol && spec.boundary_gradient(&self.point).dot(&self.velocity) <= 0.0 {
            return Err(GeometryError::Precondition("boundary start needs an inward velocity".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceLimits {
    pub s_total: f64,
    pub max_reflections: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Affine gap between reflections below which accumulation is suspected.
    pub min_chord: f64,
}

impl Default for TraceLimits {
    fn default() -> Self {
        TraceLimits {
            s_total: 100.0,
            max_reflections: 64,
            t_min: f64::NEG_INFINITY,
            t_max: f64::INFINITY,
            min_chord: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    AffineLimit,
    TimeWindowExit,
    ReflectionLimit,
    GrazingAbort,
    AccumulationSuspected,
    StepUnderflow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionEvent {
    pub s: f64,
    pub p: Point,
    pub v_in: DVector<f64>,
    pub v_out: DVector<f64>,
    /// `dx(v_out)`.
    pub theta: f64,
    pub chord_to_next: Option<f64>,
}

/// A boundary intersection: the incoming velocity points outward, `k` is the
/// number of reflections before it.
#[derive(Clone, Debug, PartialEq)]
pub struct Arrival {
    pub s: f64,
    pub p: Point,
    pub u: Vec<f64>,
    pub v_in: DVector<f64>,
    pub k: usize,
}

/// Accepted integrator nodes of one interior segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub nodes: Vec<Node>,
}

impl Segment {
    pub fn s_start(&self) -> f64 {
        self.nodes[0].s
    }

    pub fn s_end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].s
    }

    pub fn last(&self) -> &Node {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn evaluate(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        if self.nodes.len() == 1 {
            return (self.nodes[0].x.clone(), self.nodes[0].v.clone());
        }
        let i = self.nodes.partition_point(|n| n.s < s).clamp(1, self.nodes.len() - 1);
        hermite(&self.nodes[i - 1], &self.nodes[i], s)
    }
}

/// How a segment ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentEnd {
    Budget,
    Boundary,
    TimeWindow,
    Grazing,
    StepUnderflow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrokenGeodesic {
    pub initial: PhasePoint,
    pub segments: Vec<Segment>,
    pub reflections: Vec<ReflectionEvent>,
    pub arrivals: Vec<Arrival>,
    pub termination: Termination,
}

impl BrokenGeodesic {
    pub fn reflection_count(&self) -> usize {
        self.reflections.len()
    }

    pub fn s_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.s_end())
    }

    pub fn endpoint(&self) -> &Node {
        self.segments.last().expect("geodesic has a segment").last()
    }

    /// `(gamma(s), gamma'(s))` from dense output; `None` past the traversed
    /// range. At a reflection parameter the incoming side is returned.
    pub fn evaluate(&self, s: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let seg = self.segments.iter().find(|seg| s >= seg.s_start() && s <= seg.s_end())?;
        Some(seg.evaluate(s))
    }

    /// The `k`-th boundary arrival, if reached.
    pub fn arrival(&self, k: usize) -> Option<&Arrival> {
        self.arrivals.iter().find(|a| a.k == k)
    }
}

/// `(s_j, p_j, V_j, theta_j)` of each reflection, `V_j` outgoing.
pub fn reflection_data(geo: &BrokenGeodesic) -> Vec<(f64, Point, DVector<f64>, f64)> {
    geo.reflections.iter().map(|r| (r.s, r.p.clone(), r.v_out.clone(), r.theta)).collect()
}

fn normalized_dx(spec: &dyn Spacetime, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let dx = spec.boundary_gradient(x);
    let vn = linalg::bilinear(&spec.aux_metric(x), v, v).sqrt();
    dx.dot(v) / (dx.norm() * vn).max(f64::MIN_POSITIVE)
}

/// Step size `tau in [lo, hi]` with `f(step(tau)) = 0`, given `f > 0` at `lo`
/// and `f < 0` at `hi`; safeguarded Newton with bisection.
fn locate(
    spec: &dyn Spacetime,
    start: &Node,
    mut lo: f64,
    mut hi: f64,
    opts: &IntegratorOptions,
    tol: f64,
    f: &dyn Fn(&Node) -> (f64, f64),
) -> Result<Node, GeometryError> {
    let mut tau = 0.5 * (lo + hi);
    let mut best: Option<(f64, Node)> = None;
    for _ in 0..200 {
        let (n, _) = dp_step(spec, start, tau, opts, true)?;
        let (val, der) = f(&n);
        if best.as_ref().is_none_or(|(b, _)| val.abs() < *b) {
            best = Some((val.abs(), n.clone()));
        }
        if val.abs() <= tol || hi - lo <= 1e-15 * hi.abs().max(1.0) {
            return Ok(n);
        }
        if val > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let newton = tau - val / der;
        tau = if der != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Ok(best.expect("at least one iteration").1)
}

/// Integrates one interior geodesic segment from `start` (at affine parameter
/// `s0`) until the boundary, the time window `[t_min, t_max]`, or the affine
/// budget `s_budget` beyond `s0`. A boundary hit is the last node.
pub fn integrate_segment(
    spec: &dyn Spacetime,
    start: &PhasePoint,
    s0: f64,
    s_budget: f64,
    window: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<(Segment, SegmentEnd), GeometryError> {
    let scale = spec.length_scale();
    let h_max = opts.h_max * scale;
    let h_min = opts.h_min * scale;
    let bdy_tol = EPS_BDY * scale;
    let s_stop = s0 + s_budget;
    let (t_min, t_max) = window;

    let mut current = node(spec, s0, start.point.clone(), start.velocity.clone())?;
    let mut nodes = vec![current.clone()];
    if current.x[0] > t_max || current.x[0] < t_min {
        return Ok((Segment { nodes }, SegmentEnd::TimeWindow));
    }
    let mut on_boundary = spec.boundary_fn(&current.x) <= bdy_tol;
    let mut h = h_max;
    let mut steps = 0usize;

    loop {
        let remaining = s_stop - current.s;
        if remaining <= 0.0 {
            return Ok((Segment { nodes }, SegmentEnd::Budget));
        }
        steps += 1;
        if steps > opts.max_steps {
            return Ok((Segment { nodes }, SegmentEnd::StepUnderflow));
        }
        let h_try = h.min(h_max).min(remaining);
        let (trial, err) = dp_step(spec, &current, h_try, opts, true)?;
        if err > 1.0 || !err.is_finite() {
            h = next_step(h_try, if err.is_finite() { err } else { 1e10 });
            if h < h_min {
                return Ok((Segment { nodes }, SegmentEnd::StepUnderflow));
            }
            continue;
        }

        let x_end = spec.boundary_fn(&trial.x);
        let mut boundary_tau = None;
        if x_end < 0.0 {
            let mut lo = 0.0;
            if on_boundary {
                // the step starts on the boundary: find an interior point first
                lo = f64::NAN;
                for k in 1..16 {
                    let tau = h_try * k as f64 / 16.0;
                    let (n, _) = dp_step(spec, &current, tau, opts, true)?;
                    if spec.boundary_fn(&n.x) > 0.0 {
                        lo = tau;
                        break;
                    }
                }
                if lo.is_nan() {
                    return Ok((Segment { nodes }, SegmentEnd::Grazing));
                }
                let (mid, _) = dp_step(spec, &current, lo, opts, true)?;
                nodes.push(mid.clone());
                current = mid;
                on_boundary = false;
                continue;
            }
            boundary_tau = Some(lo);
        }
        let t_end = trial.x[0];
        let time_exit = t_end > t_max || t_end < t_min;

        if boundary_tau.is_none() && !time_exit {
            // touching the boundary without crossing it
            if x_end < 10.0 * bdy_tol && normalized_dx(spec, &trial.x, &trial.v).abs() < EPS_TANGENT {
                nodes.push(trial);
                return Ok((Segment { nodes }, SegmentEnd::Grazing));
            }
            let reached_budget = h_try >= remaining;
            h = next_step(h_try, err);
            nodes.push(trial.clone());
            current = trial;
            on_boundary = false;
            if reached_budget {
                return Ok((Segment { nodes }, SegmentEnd::Budget));
            }
            continue;
        }

        let hit = match boundary_tau {
            Some(lo) => {
                let fx = |n: &Node| {
                    let dx = spec.boundary_gradient(&n.x);
                    (spec.boundary_fn(&n.x), dx.dot(&n.v))
                };
                Some(locate(spec, &current, lo, h_try, opts, 0.1 * bdy_tol, &fx)?)
            }
            None => None,
        };
        let exit = if time_exit {
            let future = t_end > t_max;
            let bound = if future { t_max } else { t_min };
            let ft = move |n: &Node| if future { (bound - n.x[0], -n.v[0]) } else { (n.x[0] - bound, n.v[0]) };
            Some(locate(spec, &current, 0.0, h_try, opts, 1e-14 * bound.abs().max(1.0), &ft)?)
        } else {
            None
        };
        return Ok(match (hit, exit) {
            (Some(b), Some(e)) if e.s < b.s => {
                nodes.push(e);
                (Segment { nodes }, SegmentEnd::TimeWindow)
            }
            (Some(b), _) => {
                let grazing = normalized_dx(spec, &b.x, &b.v).abs() < EPS_TANGENT;
                nodes.push(b);
                (Segment { nodes }, if grazing { SegmentEnd::Grazing } else { SegmentEnd::Boundary })
            }
            (None, Some(e)) => {
                nodes.push(e);
                (Segment { nodes }, SegmentEnd::TimeWindow)
            }
            (None, None) => unreachable!("event without location"),
        });
    }
}

/// Traces the inextendible broken null-geodesic from `(q, v)` within
/// `limits`. Either time orientation is accepted.
pub fn trace(
    spec: &dyn Spacetime,
    q: &Point,
    v: &DVector<f64>,
    limits: &TraceLimits,
    opts: &IntegratorOptions,
) -> Result<BrokenGeodesic, TraceError> {
    let initial = PhasePoint::new(q.clone(), v.clone());
    initial.validate(spec)?;
    if !(limits.s_total > 0.0) {
        return Err(GeometryError::Precondition("affine budget must be positive".into()).into());
    }
    let mut geo = BrokenGeodesic {
        initial: initial.clone(),
        segments: Vec::new(),
        reflections: Vec::new(),
        arrivals: Vec::new(),
        termination: Termination::AffineLimit,
    };
    let mut start = initial;
    let mut s0 = 0.0;
    loop {
        let (segment, end) =
            integrate_segment(spec, &start, s0, limits.s_total - s0, (limits.t_min, limits.t_max), opts)?;
        let last = segment.last().clone();
        geo.segments.push(segment);
        match end {
            SegmentEnd::Budget => {
                geo.termination = Termination::AffineLimit;
                return Ok(geo);
            }
            SegmentEnd::TimeWindow => {
                geo.termination = Termination::TimeWindowExit;
                return Ok(geo);
            }
            SegmentEnd::Grazing => {
                geo.termination = Termination::GrazingAbort;
                return Ok(geo);
            }
            SegmentEnd::StepUnderflow => {
                geo.termination = Termination::StepUnderflow;
                return Ok(geo);
            }
            SegmentEnd::Boundary => {}
        }
        let k = geo.reflections.len();
        geo.arrivals.push(Arrival {
            s: last.s,
            p: last.x.clone(),
            u: boundary_params(&last.x),
            v_in: last.v.clone(),
            k,
        });
        if let Some(prev) = geo.reflections.last() {
            if last.s - prev.s < limits.min_chord {
                geo.termination = Termination::AccumulationSuspected;
                return Ok(geo);
            }
        }
        if k >= limits.max_reflections {
            geo.termination = Termination::ReflectionLimit;
            return Ok(geo);
        }
        let v_out = reflect_unchecked(spec, &last.x, &last.v)?;
        let theta = spec.boundary_gradient(&last.x).dot(&v_out);
        if let Some(prev) = geo.reflections.last_mut() {
            prev.chord_to_next = Some(last.s - prev.s);
        }
        geo.reflections.push(ReflectionEvent {
            s: last.s,
            p: last.x.clone(),
            v_in: last.v.clone(),
            v_out: v_out.clone(),
            theta,
            chord_to_next: None,
        });
        start = PhasePoint::new(last.x, v_out);
        s0 = last.s;
    }
}

/// The broken exponential map along a future-directed null ray.
pub fn broken_exponential(
    spec: &dyn Spacetime,
    q: &Point,
    v: &DVector<f64>,
    limits: &TraceLimits,
) -> Result<BrokenGeodesic, TraceError> {
    if !(v[0] > 0.0) {
        return Err(GeometryError::Precondition("broken exponential needs a future-directed vector".into()).into());
    }
    trace(spec, q, v, limits, &IntegratorOptions::default())
}
