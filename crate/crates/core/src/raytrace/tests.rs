use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::manifold::{
    null_vector_with_spatial, MinkowskiCylinder, PerturbationTerm, PerturbedCylinder, SpatialFactor, StaticProduct,
};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn unit_cylinder() -> MinkowskiCylinder {
    MinkowskiCylinder::new(1.0, 2).unwrap()
}

fn window(t_max: f64) -> TraceLimits {
    TraceLimits { s_total: 1e3, t_max, ..TraceLimits::default() }
}

#[test]
fn first_hit_of_a_diagonal_ray() {
    let spec = unit_cylinder();
    let start = PhasePoint::new(v(&[0.0, 0.0, 0.0]), v(&[1.0, 1.0, 0.0]) / SQRT_2);
    let (seg, end) =
        integrate_segment(&spec, &start, 0.0, 10.0, (f64::NEG_INFINITY, f64::INFINITY), &IntegratorOptions::default())
            .unwrap();
    assert_eq!(end, SegmentEnd::Boundary);
    let last = seg.last();
    assert!((last.s - SQRT_2).abs() < 1e-10);
    assert!((&last.x - v(&[1.0, 1.0, 0.0])).amax() < 1e-10);
    assert!(spec.boundary_fn(&last.x).abs() < 1e-10);
}

#[test]
fn boundary_start_moves_inward() {
    let spec = unit_cylinder();
    let start = PhasePoint::new(v(&[0.0, 1.0, 0.0]), v(&[1.0, -0.6, 0.8]));
    let (seg, end) =
        integrate_segment(&spec, &start, 0.0, 0.5, (f64::NEG_INFINITY, f64::INFINITY), &IntegratorOptions::default())
            .unwrap();
    assert_eq!(end, SegmentEnd::Budget);
    assert!(spec.boundary_fn(&seg.nodes[1].x) > spec.boundary_fn(&seg.nodes[0].x));
}

#[test]
fn straight_line_within_budget() {
    let spec = unit_cylinder();
    let q = v(&[0.0, 0.1, -0.2]);
    let vel = v(&[1.0, 0.6, 0.8]) / SQRT_2;
    let start = PhasePoint::new(q.clone(), vel.clone());
    let (seg, end) =
        integrate_segment(&spec, &start, 0.0, 0.4, (f64::NEG_INFINITY, f64::INFINITY), &IntegratorOptions::default())
            .unwrap();
    assert_eq!(end, SegmentEnd::Budget);
    assert!((&seg.last().x - (q + vel * 0.4)).amax() < 1e-9);
}

#[test]
fn radial_ray_echoes_every_two_time_units() {
    let spec = unit_cylinder();
    let geo = broken_exponential(&spec, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 1.0, 0.0]), &window(6.0)).unwrap();
    assert_eq!(geo.termination, Termination::TimeWindowExit);
    let data = reflection_data(&geo);
    assert_eq!(data.len(), 3);
    for (j, (s, p, _, theta)) in data.iter().enumerate() {
        let expected = 2.0 * j as f64 + 1.0;
        assert!((s - expected).abs() < 1e-9);
        assert!((p[0] - expected).abs() < 1e-9);
        let side = if j % 2 == 0 { 1.0 } else { -1.0 };
        assert!((p[1] - side).abs() < 1e-9 && p[2].abs() < 1e-9);
        assert!(*theta > 0.0);
    }
    let chords: Vec<f64> = geo.reflections.iter().filter_map(|r| r.chord_to_next).collect();
    assert_eq!(chords.len(), 2);
    assert!((chords[0] - chords[1]).abs() < 1e-9);
    assert!((geo.endpoint().x[0] - 6.0).abs() < 1e-12);
}

#[test]
fn short_budget_stays_interior() {
    let spec = unit_cylinder();
    let limits = TraceLimits { s_total: 0.5, ..TraceLimits::default() };
    let geo = broken_exponential(&spec, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 1.0, 0.0]), &limits).unwrap();
    assert_eq!(geo.termination, Termination::AffineLimit);
    assert_eq!(geo.reflection_count(), 0);
    assert!(reflection_data(&geo).is_empty());
    assert!(spec.boundary_fn(&geo.endpoint().x) > 0.0);
}

fn chord_ray(spec: &dyn Spacetime, d: f64) -> BrokenGeodesic {
    // start at the chord midpoint, moving along the chord
    let q = v(&[0.0, 0.0, d]);
    let vel = null_vector_with_spatial(spec, &q, &v(&[1.0, 0.0]), true).unwrap();
    trace(spec, &q, &vel, &TraceLimits { s_total: 1e3, t_max: 20.0, ..TraceLimits::default() }, &IntegratorOptions::default())
        .unwrap()
}

#[test]
fn chord_geometry_of_circular_billiard() {
    let spec = unit_cylinder();
    let geo = chord_ray(&spec, 0.5);
    let times: Vec<f64> = geo.reflections.iter().map(|r| r.p[0]).collect();
    assert!(times.len() > 5);
    for w in times.windows(2) {
        assert!((w[1] - w[0] - 3f64.sqrt()).abs() < 1e-6);
    }
    let thetas: Vec<f64> = geo.reflections.iter().map(|r| r.theta).collect();
    for th in &thetas {
        assert!((th - thetas[0]).abs() < 1e-8);
    }
    // consecutive reflection points are separated by a chord of length sqrt(3)
    for w in geo.reflections.windows(2) {
        let chord = (w[1].p.rows(1, 2) - w[0].p.rows(1, 2)).norm();
        assert!((chord - 3f64.sqrt()).abs() < 1e-8);
    }
}

#[test]
fn reflection_events_satisfy_the_law() {
    let spec = unit_cylinder();
    let geo = chord_ray(&spec, 0.3);
    for r in &geo.reflections {
        assert!(spec.boundary_fn(&r.p).abs() <= 1e-10);
        let expected = crate::manifold::reflect(&spec, &r.p, &r.v_in).unwrap();
        assert!((&expected - &r.v_out).amax() < 1e-12);
        let dx = spec.boundary_gradient(&r.p);
        assert!(dx.dot(&r.v_in) < 0.0 && dx.dot(&r.v_out) > 0.0);
    }
    // time increases strictly along the broken geodesic
    let mut last_t = f64::NEG_INFINITY;
    for seg in &geo.segments {
        for n in &seg.nodes {
            assert!(n.x[0] >= last_t);
            last_t = n.x[0];
        }
    }
}

#[test]
fn tameness_on_the_cylinder() {
    let spec = unit_cylinder();
    for d in [0.0, 0.4, 0.8] {
        let report = tameness_monitor(&chord_ray(&spec, d), 1e-4);
        assert!(!report.accumulation);
    }
    let report = tameness_monitor(&chord_ray(&spec, 0.99), 1e-4);
    let expected = 1.0 / (2.0 * (1.0 - 0.99f64 * 0.99).sqrt());
    assert!((report.reflections_per_unit_t - expected).abs() < 0.1, "{}", report.reflections_per_unit_t);
    assert!(!report.accumulation);
}

#[test]
fn monitor_flags_injected_accumulation() {
    let spec = unit_cylinder();
    let mut geo = chord_ray(&spec, 0.5);
    let base = geo.reflections[0].clone();
    geo.reflections.truncate(1);
    let mut s = base.s;
    for j in 1..20 {
        s += 0.5f64.powi(j);
        let mut r = base.clone();
        r.s = s;
        geo.reflections.push(r);
    }
    assert!(tameness_monitor(&geo, 1e-4).accumulation);
}

#[test]
fn accumulation_guard_stops_the_tracer() {
    let spec = unit_cylinder();
    let geo = chord_ray(&spec, 0.5);
    let chord = geo.reflections[1].s - geo.reflections[0].s;
    let q = v(&[0.0, 0.0, 0.5]);
    let vel = null_vector_with_spatial(&spec, &q, &v(&[1.0, 0.0]), true).unwrap();
    let limits = TraceLimits { s_total: 1e3, t_max: 20.0, min_chord: chord * 1.01, ..TraceLimits::default() };
    let geo = trace(&spec, &q, &vel, &limits, &IntegratorOptions::default()).unwrap();
    assert_eq!(geo.termination, Termination::AccumulationSuspected);
}

#[test]
fn reflection_limit_keeps_the_terminal_arrival() {
    let spec = unit_cylinder();
    let limits = TraceLimits { max_reflections: 2, ..TraceLimits::default() };
    let geo = broken_exponential(&spec, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 1.0, 0.0]), &limits).unwrap();
    assert_eq!(geo.termination, Termination::ReflectionLimit);
    assert_eq!(geo.reflection_count(), 2);
    assert_eq!(geo.arrivals.len(), 3);
    assert_eq!(geo.arrivals[2].k, 2);
    assert!((geo.arrivals[2].p[0] - 5.0).abs() < 1e-9);
}

#[test]
fn past_directed_trace_retraces_the_ray() {
    let spec = unit_cylinder();
    let q = v(&[0.0, 0.2, 0.1]);
    let vel = null_vector_with_spatial(&spec, &q, &v(&[0.6, 0.8]), true).unwrap();
    let fwd = trace(&spec, &q, &vel, &TraceLimits { s_total: 4.0, ..TraceLimits::default() }, &IntegratorOptions::default())
        .unwrap();
    let end = fwd.endpoint();
    let back = trace(
        &spec,
        &end.x,
        &(-&end.v),
        &TraceLimits { s_total: 4.0, ..TraceLimits::default() },
        &IntegratorOptions::default(),
    )
    .unwrap();
    assert!((&back.endpoint().x - &q).amax() < 1e-9);
    assert_eq!(back.reflection_count(), fwd.reflection_count());
}

#[test]
fn dense_output_matches_lines() {
    let spec = unit_cylinder();
    let geo = broken_exponential(&spec, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.6, 0.8]), &window(4.0)).unwrap();
    let (x, vel) = geo.evaluate(0.37).unwrap();
    assert!((x - v(&[0.37, 0.6 * 0.37, 0.8 * 0.37])).amax() < 1e-12);
    assert!((vel - v(&[1.0, 0.6, 0.8])).amax() < 1e-12);
    // after the first reflection at s = 1 the ray heads back through the center
    let (x, _) = geo.evaluate(2.0).unwrap();
    assert!(x.rows(1, 2).norm() < 1e-9);
    assert!(geo.evaluate(1e6).is_none());
}

#[test]
fn rejects_invalid_initial_data() {
    let spec = unit_cylinder();
    let q = v(&[0.0, 0.0, 0.0]);
    assert!(broken_exponential(&spec, &q, &v(&[1.0, 0.5, 0.0]), &TraceLimits::default()).is_err());
    assert!(broken_exponential(&spec, &q, &v(&[-1.0, 1.0, 0.0]), &TraceLimits::default()).is_err());
    // boundary start pointing outward
    assert!(broken_exponential(&spec, &v(&[0.0, 1.0, 0.0]), &v(&[1.0, 1.0, 0.0]), &TraceLimits::default()).is_err());
}

fn conservation_specs() -> Vec<Box<dyn Spacetime>> {
    vec![
        Box::new(unit_cylinder()),
        Box::new(StaticProduct::new(2, SpatialFactor::FlatDisk { radius: 1.0 }).unwrap()),
        Box::new(StaticProduct::new(2, SpatialFactor::Stadium { radius: 1.0, half_length: 0.5 }).unwrap()),
        Box::new(StaticProduct::new(2, SpatialFactor::ConformalDisk { radius: 1.0, strength: 0.5 }).unwrap()),
        Box::new(PerturbedCylinder::new(1.0, 2, vec![PerturbationTerm::cosine_in_time(0.05, 1.0)]).unwrap()),
    ]
}

#[test]
fn null_residual_and_energy_along_trajectories() {
    for spec in conservation_specs() {
        let q = v(&[0.0, 0.1, 0.2]);
        let vel = null_vector_with_spatial(spec.as_ref(), &q, &v(&[0.8, -0.6]), true).unwrap();
        let limits = TraceLimits { max_reflections: 5, ..TraceLimits::default() };
        let geo = trace(spec.as_ref(), &q, &vel, &limits, &IntegratorOptions::default()).unwrap();
        assert_eq!(geo.termination, Termination::ReflectionLimit, "{}", spec.kind());
        let e0 = vel[0];
        for seg in &geo.segments {
            for n in &seg.nodes {
                let g = spec.metric(&n.x).unwrap();
                let norm = crate::linalg::bilinear(&spec.aux_metric(&n.x), &n.v, &n.v);
                assert!(crate::linalg::bilinear(&g, &n.v, &n.v).abs() < 1e-8 * norm);
                if spec.is_static() {
                    assert!((n.v[0] - e0).abs() < 1e-9, "{}: {}", spec.kind(), n.v[0] - e0);
                }
            }
        }
    }
}

#[test]
fn differential_of_center_source() {
    let spec = unit_cylinder();
    let q = v(&[0.0, 0.0, 0.0]);
    let phi: f64 = 0.3;
    for k in 0..3usize {
        let vel = v(&[1.0, phi.cos(), phi.sin()]) * (2 * k + 1) as f64;
        let d = expb_differential(&spec, &q, &vel, k, 1e-5).unwrap();
        let jac = DMatrix::from_fn(2, 2, |i, j| d.jacobian[i][j]);
        // t does not depend on the direction angle, the hit angle is phi + k pi
        assert!(jac[(0, 0)].abs() < 1e-6);
        assert!((jac[(1, 0)] - 1.0).abs() < 1e-6, "{}", jac[(1, 0)]);
        assert!((jac[(0, 1)] - (2 * k + 1) as f64).abs() < 1e-6);
        assert!(jac[(1, 1)].abs() < 1e-6);
        assert!(!d.conjugate);
        assert!((d.ratio - 1.0 / (2 * k + 1) as f64).abs() < 1e-6);
        let expected_angle = crate::manifold::sphere::wrap_difference(phi + k as f64 * PI, 0.0);
        assert!(crate::manifold::sphere::wrap_difference(d.u[1], expected_angle).abs() < 1e-9);
    }
}

#[test]
fn differential_rejects_nonpositive_step() {
    let spec = unit_cylinder();
    let q = v(&[0.0, 0.0, 0.0]);
    assert!(expb_differential(&spec, &q, &v(&[1.0, 1.0, 0.0]), 0, 0.0).is_err());
}

#[test]
fn sequence_lemma_products() {
    let report = sequence_lemma(0.4, 1_000_000, (0.5, 1.05));
    // j a_j starts at 0.4 and 0.48 before rising toward 1
    assert_eq!(report.argmin_j, 1);
    assert!((report.min_ja - 0.4).abs() < 1e-15);
    assert_eq!(report.outside_band.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2]);
    assert!(report.max_ja < 1.0);
    assert!(report.last_ja > 0.9999);
    assert!(report.increasing_from <= 3);
}
