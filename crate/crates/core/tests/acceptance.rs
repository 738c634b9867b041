//! Acceptance criteria. Prints one PASS/FAIL line per criterion; exits
//! nonzero only when a criterion outside `KNOWN_RED` fails or a known-red
//! criterion stops failing the way its analysis says it does.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use brokenlight::error::ReconstructError;
use brokenlight::linalg;
use brokenlight::manifold::{
    audit_null_convexity, boundary_chart_jacobian, boundary_point, null_vector_with_spatial, reflect, BoundaryBox,
    Convexity, MinkowskiCylinder, PerturbationTerm, PerturbedCylinder, Point, Spacetime, SpatialFactor, StaticProduct,
};
use brokenlight::observe::{
    chart_distance, compute_observation_set, distinctness_check, hausdorff, BoundaryRegion, ObservationSet,
    ObserveOptions, PublicView,
};
use brokenlight::raytrace::{sequence_lemma, tameness_monitor, trace, IntegratorOptions, TraceLimits};
use brokenlight::reconstruct::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to print FAIL, with the reason recorded in the README.
const KNOWN_RED: [usize; 1] = [7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn cylinder() -> Arc<dyn Spacetime> {
    Arc::new(MinkowskiCylinder::new(1.0, 2).unwrap())
}

fn simulate(spec: &dyn Spacetime, sources: &[DVector<f64>], region: &BoundaryRegion, rays: usize) -> Vec<ObservationSet> {
    sources
        .iter()
        .enumerate()
        .map(|(i, q)| compute_observation_set(spec, i as u64, q, region, rays, &ObserveOptions::default()).unwrap())
        .collect()
}

fn c1_intro_cone() -> Verdict {
    let spec = cylinder();
    let region = BoundaryRegion::full(2, (0.0, 2.0), 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sources = Vec::new();
    while sources.len() < 10 {
        let (t, x, y): (f64, f64, f64) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        if t.abs() < 0.5 - x.hypot(y) {
            sources.push(v(&[t, x, y]));
        }
    }
    let start = Instant::now();
    let sets = simulate(spec.as_ref(), &sources, &region, 720);
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for set in &sets {
        let q = &set.source;
        for p in &set.points {
            let dist = (p.u[1].cos() - q[1]).hypot(p.u[1].sin() - q[2]);
            worst = worst.max(((p.u[0] - q[0]) - dist).abs());
            points += 1;
        }
    }
    Verdict {
        pass: points > 0 && worst < 1e-6 && elapsed < 10.0,
        detail: format!("{points} points, max |(t-t0)-|x-x0|| = {worst:.2e}, {elapsed:.2} s"),
    }
}

fn c2_echo_times() -> Verdict {
    let spec = cylinder();
    let region = BoundaryRegion::full(2, (0.0, 3.0), 0.05);
    let set = &simulate(spec.as_ref(), &[v(&[-0.5, 0.0, 0.0])], &region, 720)[0];
    let mut worst: f64 = 0.0;
    let mut counts = [0usize; 2];
    for p in &set.points {
        let (i, d) = if (p.u[0] - 0.5).abs() < (p.u[0] - 2.5).abs() { (0, p.u[0] - 0.5) } else { (1, p.u[0] - 2.5) };
        counts[i] += 1;
        worst = worst.max(d.abs());
    }
    Verdict {
        pass: worst < 1e-6 && counts[0] > 0 && counts[1] > 0,
        detail: format!("{} points at t=0.5, {} at t=2.5, max deviation {worst:.2e}", counts[0], counts[1]),
    }
}

fn c3_indistinguishable() -> Verdict {
    let spec = cylinder();
    let region = BoundaryRegion::full(2, (0.0, 2.0), 0.05);
    let sets = simulate(spec.as_ref(), &[v(&[0.0, 0.0, 0.0]), v(&[-2.0, 0.0, 0.0])], &region, 720);
    let views: Vec<PublicView> = sets.iter().map(|s| s.public_view()).collect();
    let d = hausdorff(&views[0], &views[1]);
    let report = distinctness_check(&views, &region.inner, 1e-6);
    Verdict {
        pass: d < 1e-6 && !report.pass,
        detail: format!("Hausdorff {d:.2e}, distinctness_check {}", if report.pass { "PASS" } else { "FAIL" }),
    }
}

fn all_builtins() -> Vec<Box<dyn Spacetime>> {
    vec![
        Box::new(MinkowskiCylinder::new(1.0, 2).unwrap()),
        Box::new(PerturbedCylinder::new(1.0, 2, vec![PerturbationTerm::cosine_in_time(0.05, 1.0)]).unwrap()),
        Box::new(PerturbedCylinder::new(1.0, 2, vec![PerturbationTerm::bump(0.1, vec![1.0, 0.0], 0.5)]).unwrap()),
        Box::new(StaticProduct::new(2, SpatialFactor::FlatDisk { radius: 1.0 }).unwrap()),
        Box::new(StaticProduct::new(2, SpatialFactor::Stadium { radius: 1.0, half_length: 0.5 }).unwrap()),
        Box::new(StaticProduct::new(2, SpatialFactor::ConformalDisk { radius: 1.0, strength: 0.5 }).unwrap()),
    ]
}

fn c4_reflection_law() -> Verdict {
    let specs = all_builtins();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut inv, mut tan, mut null, mut orient) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for case in 0..1000 {
        let spec = specs[case % specs.len()].as_ref();
        let u = [rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI)];
        let phi: f64 = rng.gen_range(-PI..PI);
        let future = rng.gen_bool(0.5);
        let p = boundary_point(spec, &u);
        let w = null_vector_with_spatial(spec, &p, &v(&[phi.cos(), phi.sin()]), future).unwrap();
        let r = reflect(spec, &p, &w).unwrap();
        let rr = reflect(spec, &p, &r).unwrap();
        inv = inv.max((&rr - &w).amax());
        let g = spec.metric(&p).unwrap();
        null = null.max(linalg::bilinear(&g, &r, &r).abs());
        let jac = boundary_chart_jacobian(spec, &u);
        let tangent = jac.column(0) * rng.gen_range(-2.0..2.0) + jac.column(1) * rng.gen_range(-2.0..2.0);
        tan = tan.max((linalg::bilinear(&g, &w, &tangent) - linalg::bilinear(&g, &r, &tangent)).abs());
        if (r[0] > 0.0) != (w[0] > 0.0) {
            orient += 1;
        }
    }
    Verdict {
        pass: inv < 1e-12 && tan < 1e-12 && null < 1e-12 && orient == 0,
        detail: format!(
            "1000 cases: involution {inv:.1e}, tangential {tan:.1e}, nullity {null:.1e}, orientation flips {orient}"
        ),
    }
}

fn c5_conservation() -> Verdict {
    let mut null_worst: f64 = 0.0;
    let mut drift_worst: f64 = 0.0;
    let mut short = Vec::new();
    for spec in all_builtins() {
        for (k, q) in [v(&[0.0, 0.1, 0.2]), v(&[0.5, -0.3, 0.0])].iter().enumerate() {
            for i in 0..4 {
                let phi = 0.3 + i as f64 * TAU / 4.0 + k as f64;
                let vel = null_vector_with_spatial(spec.as_ref(), q, &v(&[phi.cos(), phi.sin()]), true).unwrap();
                let limits = TraceLimits { max_reflections: 5, ..TraceLimits::default() };
                let geo = trace(spec.as_ref(), q, &vel, &limits, &IntegratorOptions::default()).unwrap();
                if geo.reflections.len() < 5 {
                    short.push(spec.kind());
                }
                let g0 = spec.metric(q).unwrap();
                let e0 = (g0 * &vel)[0];
                for seg in &geo.segments {
                    for n in &seg.nodes {
                        let g = spec.metric(&n.x).unwrap();
                        let norm = linalg::bilinear(&spec.aux_metric(&n.x), &n.v, &n.v);
                        null_worst = null_worst.max(linalg::bilinear(&g, &n.v, &n.v).abs() / norm);
                        if spec.is_static() {
                            drift_worst = drift_worst.max(((g * &n.v)[0] - e0).abs());
                        }
                    }
                }
            }
        }
    }
    Verdict {
        pass: null_worst < 1e-8 && drift_worst < 1e-9 && short.is_empty(),
        detail: format!(
            "6 built-ins x 8 rays, 5 reflections: null residual {null_worst:.1e}, t-momentum drift {drift_worst:.1e} (static kinds)"
        ),
    }
}

fn c6_tameness() -> Verdict {
    let spec = cylinder();
    let mut parts = Vec::new();
    let mut pass = true;
    for d in [0.0f64, 0.3, 0.6, 0.9] {
        let q = v(&[0.0, 0.0, d]);
        let vel = null_vector_with_spatial(spec.as_ref(), &q, &v(&[1.0, 0.0]), true).unwrap();
        let limits = TraceLimits { s_total: 1e3, max_reflections: 10_000, t_max: 20.0, ..TraceLimits::default() };
        let geo = trace(spec.as_ref(), &q, &vel, &limits, &IntegratorOptions::default()).unwrap();
        let report = tameness_monitor(&geo, 1e-4);
        let expected = (20.0 / (2.0 * (1.0 - d * d).sqrt())).floor() as usize;
        pass &= report.reflection_count.abs_diff(expected) <= 1 && !report.accumulation;
        parts.push(format!("d={d}: {}/{expected}{}", report.reflection_count, if report.accumulation { " flagged" } else { "" }));
    }
    Verdict { pass, detail: parts.join(", ") }
}

fn c7_sequence_lemma() -> Verdict {
    let r = sequence_lemma(0.4, 1_000_000, (0.5, 1.05));
    Verdict {
        pass: r.outside_count == 0,
        detail: format!(
            "j*a_j in [{:.4}, {:.4}], {} indices outside [0.5, 1.05]: {:?}",
            r.min_ja, r.max_ja, r.outside_count, r.outside_band
        ),
    }
}

fn c8_convexity() -> Verdict {
    let region = BoundaryBox::full(2, (0.0, 2.0));
    let cyl = audit_null_convexity(cylinder().as_ref(), &region, 400).unwrap();
    let stadium = StaticProduct::new(2, SpatialFactor::Stadium { radius: 1.0, half_length: 0.5 }).unwrap();
    let st = audit_null_convexity(&stadium, &region, 400).unwrap();
    let dented = PerturbedCylinder::new(1.0, 2, vec![PerturbationTerm::bump(-0.5, vec![1.0, 0.0], 0.5)]).unwrap();
    let dn = audit_null_convexity(&dented, &region, 400).unwrap();
    // unit g+ null tangents have |dx(V)|^2 = 1/2, so min II = 1/(2R)
    let err = (cyl.min_second_fundamental_form - 0.5).abs();
    Verdict {
        pass: cyl.classification == Convexity::Strict
            && err < 1e-3
            && st.classification == Convexity::Weak
            && dn.classification == Convexity::Violated,
        detail: format!(
            "cylinder {:?} (min II {:.6}, error {err:.1e}), stadium {:?}, dented {:?}",
            cyl.classification, cyl.min_second_fundamental_form, st.classification, dn.classification
        ),
    }
}

fn c9_conjugacy() -> Verdict {
    let spec = cylinder();
    let region = BoundaryRegion::full(2, (0.0, 5.5), 0.05);
    let opts = ObserveOptions { screen_conjugacy: true, max_reflections: 2, ..ObserveOptions::default() };
    let set = compute_observation_set(spec.as_ref(), 0, &v(&[0.0, 0.0, 0.0]), &region, 120, &opts).unwrap();
    let verdicts: Vec<_> = set.conjugacy.iter().filter(|c| c.k <= 2).collect();
    let worst = verdicts.iter().map(|c| c.ratio).fold(f64::INFINITY, f64::min);
    let conjugate = verdicts.iter().filter(|c| c.conjugate).count();
    let ks: std::collections::BTreeSet<usize> = verdicts.iter().map(|c| c.k).collect();
    Verdict {
        pass: !verdicts.is_empty() && conjugate == 0 && worst > 0.1 && ks.len() == 3,
        detail: format!("{} arrivals (k in {ks:?}), {conjugate} conjugate, min ratio {worst:.4}", verdicts.len()),
    }
}

struct Grid {
    spec: Arc<dyn Spacetime>,
    family: ObservationFamily,
    oracle: Oracle,
    chart: Result<Chart, ReconstructError>,
    center: u64,
}

fn grid() -> Grid {
    let spec = cylinder();
    let region = BoundaryRegion::full(2, (0.0, 2.0), 0.05);
    let steps = [-0.1, -0.05, 0.0, 0.05, 0.1];
    let mut sources = Vec::new();
    for &t in &steps {
        for &x in &steps {
            for &y in &steps {
                sources.push(v(&[t, x, y]));
            }
        }
    }
    for i in 0..12 {
        let phi = i as f64 * TAU / 12.0;
        for r in [-0.008, -0.004, 0.004, 0.008] {
            sources.push(v(&[r, r * phi.cos(), r * phi.sin()]));
        }
    }
    let sets = simulate(spec.as_ref(), &sources, &region, 720);
    let (family, oracle) = ObservationFamily::from_simulation(&sets, region.clone(), BoundaryConformal::from_spec(spec.clone()), 7);
    let boxes = random_boxes(&region, 1000, (0.005, 0.05), 11);
    let probe = topology_probe(&family, &boxes.opens, &boxes.compacts);
    let center = oracle.id_of(62).unwrap();
    let curves: Vec<CurveInU> = (0..6).map(|i| CurveInU::t_segment(&[i as f64 * PI / 3.0], (0.5, 1.5))).collect();
    let chart = build_chart(&family, center, &curves, &probe, &ReconstructOptions::default());
    Grid { spec, family, oracle, chart, center }
}

fn pair(view: &PublicView, inner: &BoundaryBox, t_min: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let restricted = view.restricted(inner);
    let pts: Vec<&Vec<f64>> = restricted.points.iter().filter(|u| u[0] > t_min).collect();
    let first = (*pts.iter().min_by(|a, b| a[0].total_cmp(&b[0]))?).clone();
    let angular = |u: &Vec<f64>| chart_distance(&[first[0], u[1]], &first);
    let second = (*pts.iter().filter(|u| (1.0..=2.0).contains(&angular(u))).min_by(|a, b| a[0].total_cmp(&b[0]))?).clone();
    Some((first, second))
}

fn c10_chart(g: &Grid) -> Verdict {
    let opts = ReconstructOptions::default();
    let Ok(chart) = &g.chart else {
        return Verdict { pass: false, detail: format!("build_chart failed: {:?}", g.chart.as_ref().err()) };
    };
    let grid_ids: Vec<u64> = g.oracle.source_ids.iter().filter(|(_, &s)| s < 125).map(|(&id, _)| id).collect();
    let coords: Vec<Vec<f64>> = grid_ids.iter().filter_map(|id| chart.coords.get(id).cloned()).collect();
    let mut min_sep = f64::INFINITY;
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            min_sep = min_sep.min((v(&coords[i]) - v(&coords[j])).norm());
        }
    }
    let region = &g.family.region;
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    for id in &grid_ids {
        let view = g.family.view(*id).unwrap();
        let truth = &g.oracle.positions[id];
        match pair(view, &region.inner, f64::NEG_INFINITY)
            .and_then(|(a, b)| triangulate_source(g.spec.as_ref(), view, &a, &b, region, &opts).ok())
        {
            Some(t) => worst = worst.max((v(&t.point) - truth).norm()),
            None => failed += 1,
        }
    }
    // once-reflected sheets: the same sources seen on (0,4), late points only
    let late_region = BoundaryRegion::full(2, (0.0, 4.0), 0.05);
    let mut reflected = 0;
    let mut late_worst: f64 = 0.0;
    for s in [62usize, 0, 24, 100, 124] {
        let id = g.oracle.id_of(s as u64).unwrap();
        let q: Point = g.oracle.positions[&id].clone();
        let view = simulate(g.spec.as_ref(), std::slice::from_ref(&q), &late_region, 720).remove(0).public_view();
        if let Some(t) = pair(&view, &late_region.inner, 2.3)
            .and_then(|(a, b)| triangulate_source(g.spec.as_ref(), &view, &a, &b, &late_region, &opts).ok())
        {
            late_worst = late_worst.max((v(&t.point) - &q).norm());
            if t.reflections.0 >= 1 && t.reflections.1 >= 1 && (v(&t.point) - &q).norm() < 1e-4 {
                reflected += 1;
            }
        }
    }
    Verdict {
        pass: chart.conditioning < 1e3
            && coords.len() == 125
            && min_sep > 0.0
            && failed == 0
            && worst < 1e-4
            && reflected >= 1,
        detail: format!(
            "condition {:.2}, {} coords, min separation {min_sep:.2e}, triangulation max error {worst:.1e} ({failed} failed), {reflected}/5 via reflected sheet (max error {late_worst:.1e})",
            chart.conditioning,
            coords.len()
        ),
    }
}

fn c11_conformal(g: &Grid) -> Verdict {
    let opts = ReconstructOptions::default();
    let Ok(chart) = &g.chart else { return Verdict { pass: false, detail: "no chart".into() } };
    let cone = match null_cone(&g.family, chart, &opts) {
        Ok(c) => c,
        Err(e) => return Verdict { pass: false, detail: format!("null cone: {e}") },
    };
    let dirs: Vec<DVector<f64>> = cone.iter().map(|d| v(&d.direction)).collect();
    let fit = match fit_conformal_metric(&dirs) {
        Ok(f) => f,
        Err(e) => return Verdict { pass: false, detail: format!("fit: {e}") },
    };
    let q = &g.oracle.positions[&g.center];
    let jac = chart_jacobian(g.spec.as_ref(), chart, q, 1e-3, &g.family.region, 720, &ObserveOptions::default(), &opts)
        .unwrap();
    let dev = conformal_deviation(&fit, &jac, &g.spec.metric(q).unwrap());
    Verdict {
        pass: dirs.len() >= 12 && dev < 1e-3 && fit.lorentzian,
        detail: format!("{} null directions, relative deviation {dev:.2e}, residual {:.1e}", dirs.len(), fit.residual),
    }
}

fn c12_orientation(spec: &Arc<dyn Spacetime>) -> Verdict {
    let opts = ReconstructOptions::default();
    let region = BoundaryRegion::full(2, (0.0, 2.0), 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut correct, mut invariant, mut worst) = (0, 0, 0.0f64);
    let mut errors = Vec::new();
    let h = 0.01;
    for i in 0..20 {
        let base = v(&[rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)]);
        let mut dir = v(&[0.0, 0.0, 0.0]);
        loop {
            dir[1] = rng.gen_range(-0.8..0.8);
            dir[2] = rng.gen_range(-0.8..0.8);
            if dir[1].hypot(dir[2]) < 0.8 {
                break;
            }
        }
        dir[0] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let factors: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let sources: Vec<DVector<f64>> = (-2..=2).map(|k| &base + &dir * (k as f64 * h)).collect();
        let sets = simulate(spec.as_ref(), &sources, &region, 720);
        let (family, oracle) =
            ObservationFamily::from_simulation(&sets, region.clone(), BoundaryConformal::from_spec(spec.clone()), 100 + i);
        let path: Vec<u64> = (0..5).map(|k| oracle.id_of(k).unwrap()).collect();
        let middle = family.view(path[2]).unwrap();
        let anchor = middle
            .points
            .iter()
            .filter(|u| u[0] > region.inner.t.0 && u[0] < region.inner.t.1 && u[1].abs() < 0.05)
            .min_by(|a, b| a[0].total_cmp(&b[0]))
            .unwrap()
            .clone();
        let res = match time_orientation_test(&family, &path, &anchor, &opts) {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("path {i}: {e}"));
                continue;
            }
        };
        let truth = if dir[0] > 0.0 { TimeVerdict::Future } else { TimeVerdict::Past };
        if res.verdict == truth {
            correct += 1;
        }
        let same = factors.iter().all(|&(a, b)| {
            let scaled = ObservationFamily {
                boundary: family.boundary.rescaled(Arc::new(move |u: &[f64]| (a * u[0] + b * u[1].sin()).exp())),
                ..family.clone()
            };
            time_orientation_test(&scaled, &path, &anchor, &opts).is_ok_and(|r| r.verdict == res.verdict)
        });
        if same {
            invariant += 1;
        }
        let q = &oracle.positions[&path[2]];
        match variation_identity(spec.as_ref(), &family, path[2], q, &(&dir * h), &res, &opts) {
            Ok(c) => worst = worst.max(c.defect()),
            Err(e) => errors.push(format!("variation {i}: {e}")),
        }
    }
    Verdict {
        pass: correct == 20 && invariant == 20 && worst < 1e-6 && errors.is_empty(),
        detail: format!(
            "{correct}/20 correct, {invariant}/20 unchanged under 3 rescalings, variation defect {worst:.1e}{}",
            if errors.is_empty() { String::new() } else { format!(", errors: {errors:?}") }
        ),
    }
}

fn main() -> ExitCode {
    let mut results: BTreeMap<usize, (&str, Verdict)> = BTreeMap::new();
    let mut record = |n: usize, name: &'static str, f: &dyn Fn() -> Verdict| {
        let start = Instant::now();
        let verdict = f();
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.1} s]",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
        results.insert(n, (name, verdict));
    };
    record(1, "intro cone", &c1_intro_cone);
    record(2, "two-sheet echo times", &c2_echo_times);
    record(3, "indistinguishable sources", &c3_indistinguishable);
    record(4, "reflection law", &c4_reflection_law);
    record(5, "conservation", &c5_conservation);
    record(6, "tameness", &c6_tameness);
    record(7, "sequence lemma band", &c7_sequence_lemma);
    record(8, "convexity auditor", &c8_convexity);
    record(9, "conjugacy screening", &c9_conjugacy);
    let g = grid();
    record(10, "chart reconstruction", &|| c10_chart(&g));
    record(11, "conformal recovery", &|| c11_conformal(&g));
    record(12, "time orientation", &|| c12_orientation(&g.spec));

    let passed = results.values().filter(|r| r.1.pass).count();
    println!("acceptance: {passed}/{} criteria PASS", results.len());
    let mut ok = true;
    for (n, (name, verdict)) in &results {
        let known = KNOWN_RED.contains(n);
        if !verdict.pass && !known {
            println!("unexpected FAIL: criterion {n} ({name})");
            ok = false;
        }
        if verdict.pass && known {
            println!("criterion {n} ({name}) now passes; update KNOWN_RED");
            ok = false;
        }
    }
    // the known failure must stay the documented one: j = 1, 2 below the band
    let seq = sequence_lemma(0.4, 1_000_000, (0.5, 1.05));
    if seq.outside_band.iter().map(|x| x.0).collect::<Vec<_>>() != vec![1, 2] {
        println!("criterion 7 fails differently than documented: {:?}", seq.outside_band);
        ok = false;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
