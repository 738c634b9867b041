//! The reconstruct subcommand: simulate the configured sources, strip them to
//! public views, rebuild topology, a chart, the conformal class and time
//! orientation, and score everything against the ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use brokenlight::manifold::{null_vector_with_spatial, sphere_directions, Spacetime};
use brokenlight::observe::{chart_distance, PublicView};
use brokenlight::reconstruct::{
    build_chart, chart_jacobian, conformal_deviation, fit_conformal_metric, null_cone, random_boxes,
    time_orientation_test, topology_probe, topology_verdict, triangulate_source, variation_identity, BoundaryConformal,
    CurveInU, ObservationFamily, OrientationSummary, ReconstructionReport, TimeVerdict,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::Loaded;
use crate::output::{num, Output};
use crate::run::simulate_all;

fn default_curves(l: &Loaded) -> anyhow::Result<Vec<CurveInU>> {
    if !l.config.reconstruct.curves.is_empty() {
        return l
            .config
            .reconstruct
            .curves
            .iter()
            .map(|c| CurveInU::new(c.start.clone(), c.end.clone()).map_err(Into::into))
            .collect();
    }
    if l.spec.spatial_dim() != 2 {
        return Err(anyhow!("reconstruct.curves must be given when dim != 2"));
    }
    let inner = l.region.inner.t;
    let mid = 0.5 * (inner.0 + inner.1);
    let half = (0.5f64).min(0.5 * (inner.1 - inner.0) - 1e-3);
    Ok((0..6).map(|i| CurveInU::t_segment(&[i as f64 * PI / 3.0], (mid - half, mid + half))).collect())
}

/// Sources on null lines through `center`, at the configured parameters.
fn star_sources(spec: &dyn Spacetime, center: &DVector<f64>, radii: &[f64], lines: usize) -> Vec<DVector<f64>> {
    if lines == 0 || radii.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for w in sphere_directions(spec.spatial_dim(), lines) {
        let Ok(v) = null_vector_with_spatial(spec, center, &w, true) else { continue };
        let v = &v / v[0];
        for &r in radii {
            out.push(center + &v * r);
        }
    }
    out
}

/// Two points of a view for triangulation: the earliest arrival on the
/// inner box, and the earliest one between 1 and 2 chart units away in angle.
fn triangulation_pair(view: &PublicView, l: &Loaded) -> Option<(Vec<f64>, Vec<f64>)> {
    let inner = view.restricted(&l.region.inner);
    let by_t = |a: &&Vec<f64>, b: &&Vec<f64>| a[0].total_cmp(&b[0]);
    let first = inner.points.iter().min_by(by_t)?.clone();
    let angular = |u: &Vec<f64>| {
        let mut a = u.clone();
        a[0] = first[0];
        chart_distance(&a, &first)
    };
    let second = inner.points.iter().filter(|u| (1.0..=2.0).contains(&angular(u))).min_by(by_t)?.clone();
    Some((first, second))
}

#[derive(Debug, Default)]
struct OrientationStats {
    total: usize,
    correct: usize,
    invariant: usize,
    max_defect: f64,
    summaries: BTreeMap<String, OrientationSummary>,
}

fn orientation_paths(l: &Loaded, center: &DVector<f64>) -> anyhow::Result<OrientationStats> {
    let spec = &l.spec;
    let cfg = &l.config.reconstruct;
    let opts = &l.config.tolerances;
    let d = spec.spatial_dim() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(l.config.seed ^ 0x6f72_6965);
    let mut stats = OrientationStats::default();
    let mut dirs = Vec::new();
    for _ in 0..cfg.paths {
        let base: DVector<f64> = center + DVector::from_fn(d, |_, _| rng.gen_range(-0.05..0.05));
        let mut dir = DVector::zeros(d);
        loop {
            for a in 1..d {
                dir[a] = rng.gen_range(-0.8..0.8);
            }
            if dir.rows(1, d - 1).norm() < 0.8 {
                break;
            }
        }
        dir[0] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let factors: Vec<(f64, f64)> =
            (0..cfg.rescalings).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        dirs.push((base, dir, factors));
    }
    for (i, (base, dir, factors)) in dirs.into_iter().enumerate() {
        let sources: Vec<DVector<f64>> = (-2..=2).map(|k| &base + &dir * (k as f64 * cfg.path_step)).collect();
        let sets = simulate_all(l, &sources)?;
        let (family, oracle) = ObservationFamily::from_simulation(
            &sets,
            l.region.clone(),
            BoundaryConformal::from_spec(spec.clone()),
            l.config.seed.wrapping_add(i as u64),
        );
        let path: Vec<u64> =
            (0..5).map(|k| oracle.id_of(k).ok_or_else(|| anyhow!("path {i}: source {k} left no data"))).collect::<Result<_, _>>()?;
        let middle = family.view(path[2])?;
        // anchor: earliest point of the middle set near angle zero
        let near_zero: Vec<&Vec<f64>> = {
            let inner = &l.region.inner;
            let inside: Vec<&Vec<f64>> = middle.points.iter().filter(|u| u[0] > inner.t.0 && u[0] < inner.t.1).collect();
            let best = inside.iter().map(|u| u[1..].iter().map(|a| a.abs()).sum::<f64>()).fold(f64::INFINITY, f64::min);
            inside.into_iter().filter(|u| u[1..].iter().map(|a| a.abs()).sum::<f64>() <= best + 0.05).collect()
        };
        let anchor = near_zero
            .into_iter()
            .min_by(|a, b| a[0].total_cmp(&b[0]))
            .ok_or_else(|| anyhow!("path {i}: middle set is empty on the inner box"))?
            .clone();
        let res = time_orientation_test(&family, &path, &anchor, opts).with_context(|| format!("orientation path {i}"))?;
        let truth = if dir[0] > 0.0 { TimeVerdict::Future } else { TimeVerdict::Past };
        stats.total += 1;
        if res.verdict == truth {
            stats.correct += 1;
        }
        let unchanged = factors.iter().all(|&(a, b)| {
            let scaled = ObservationFamily {
                boundary: family.boundary.rescaled(Arc::new(move |u: &[f64]| (a * u[0] + b * u[1].sin()).exp())),
                ..family.clone()
            };
            time_orientation_test(&scaled, &path, &anchor, opts).is_ok_and(|r| r.verdict == res.verdict)
        });
        if unchanged {
            stats.invariant += 1;
        }
        let q_prime = &dir * cfg.path_step;
        let check = variation_identity(spec.as_ref(), &family, path[2], &oracle.positions[&path[2]], &q_prime, &res, opts)?;
        stats.max_defect = stats.max_defect.max(check.defect());
        stats.summaries.insert(format!("path_{i:02}"), OrientationSummary { path, verdict: res.verdict, pairing: res.pairing });
    }
    Ok(stats)
}

pub fn reconstruct(l: &Loaded, out: &Output) -> anyhow::Result<bool> {
    let cfg = &l.config.reconstruct;
    let opts = &l.config.tolerances;
    let spec = &l.spec;
    if l.sources.is_empty() {
        return Err(anyhow!("reconstruct needs at least one configured source"));
    }
    let center_point = match &cfg.center {
        Some(c) => DVector::from_column_slice(c),
        None => l.sources.iter().fold(DVector::zeros(l.sources[0].len()), |a, q| a + q) / l.sources.len() as f64,
    };
    let center_index = (0..l.sources.len())
        .min_by(|&a, &b| (&l.sources[a] - &center_point).norm().total_cmp(&(&l.sources[b] - &center_point).norm()))
        .expect("nonempty");
    let center = l.sources[center_index].clone();
    let star = star_sources(spec.as_ref(), &center, &cfg.star_radii, cfg.star_lines);
    let grid_count = l.sources.len();
    let mut all = l.sources.clone();
    all.extend(star);
    log::info!("simulating {} sources ({} configured)", all.len(), grid_count);
    let sets = simulate_all(l, &all)?;
    let (family, oracle) =
        ObservationFamily::from_simulation(&sets, l.region.clone(), BoundaryConformal::from_spec(spec.clone()), l.config.seed);

    let mut report = ReconstructionReport { config_hash: out.hash.clone(), ..Default::default() };
    let boxes = random_boxes(&l.region, cfg.boxes, cfg.box_sizes, l.config.seed);
    let probe = topology_probe(&family, &boxes.opens, &boxes.compacts);
    let configured: BTreeMap<u64, _> = oracle
        .positions
        .iter()
        .filter(|(id, _)| (oracle.source_ids[id] as usize) < grid_count)
        .map(|(k, p)| (*k, p.clone()))
        .collect();
    let verdict = topology_verdict(&probe, &configured, opts.eps_top);
    let topology_pass = verdict.pass;
    report.topology = Some(verdict);

    let center_id = oracle.id_of(center_index as u64).ok_or_else(|| anyhow!("chart center has an empty set"))?;
    let chart = build_chart(&family, center_id, &default_curves(l)?, &probe, opts);
    let mut chart_ok = false;
    let mut deviation = f64::NAN;
    match chart {
        Ok(chart) => {
            chart_ok = chart.conditioning < opts.kappa_max && chart.min_separation > 0.0;
            match null_cone(&family, &chart, opts) {
                Ok(cone) => {
                    let dirs: Vec<DVector<f64>> = cone.iter().map(|d| DVector::from_column_slice(&d.direction)).collect();
                    match fit_conformal_metric(&dirs) {
                        Ok(fit) => {
                            let jac = chart_jacobian(
                                spec.as_ref(),
                                &chart,
                                &center,
                                1e-3,
                                &l.region,
                                l.config.ray_count,
                                &l.config.limits,
                                opts,
                            )?;
                            deviation = conformal_deviation(&fit, &jac, &spec.metric(&center)?);
                            report.conformal_errors.insert(center_id, deviation);
                            report.conformal_fits.insert(center_id, fit);
                        }
                        Err(e) => log::warn!("conformal fit failed: {e}"),
                    }
                    report.null_cones.insert(center_id, cone);
                }
                Err(e) => log::warn!("null cone recovery failed: {e}"),
            }
            report.charts.push(chart);
        }
        Err(e) => log::warn!("chart construction failed: {e}"),
    }

    let tri: Vec<(u64, Result<f64, String>)> = configured
        .par_iter()
        .map(|(&id, truth)| {
            let view = family.view(id).expect("known id");
            let result = triangulation_pair(view, l)
                .ok_or_else(|| "no triangulation pair".to_string())
                .and_then(|(p1, p2)| {
                    triangulate_source(spec.as_ref(), view, &p1, &p2, &l.region, opts).map_err(|e| e.to_string())
                })
                .map(|t| (DVector::from_vec(t.point) - truth).norm());
            (id, result)
        })
        .collect();
    let mut tri_failures = 0;
    for (id, r) in tri {
        match r {
            Ok(e) => {
                report.oracle_errors.insert(id, e);
            }
            Err(m) => {
                log::warn!("triangulation of {id} failed: {m}");
                tri_failures += 1;
            }
        }
    }
    let max_tri = report.oracle_errors.values().copied().fold(0.0, f64::max);

    let stats = orientation_paths(l, &center)?;
    report.orientation = stats.summaries.clone();

    let checks = json!({
        "topology": topology_pass,
        "chart": chart_ok,
        "conformal_deviation": deviation,
        "conformal": deviation < cfg.conformal_tol,
        "triangulation_max_error": max_tri,
        "triangulation_failures": tri_failures,
        "triangulation": tri_failures == 0 && max_tri < cfg.tri_tol,
        "orientation_correct": stats.correct,
        "orientation_invariant": stats.invariant,
        "orientation_paths": stats.total,
        "orientation": stats.correct == stats.total && stats.invariant == stats.total,
        "variation_max_defect": stats.max_defect,
        "variation": stats.max_defect < cfg.variation_tol,
    });
    let pass = ["topology", "chart", "conformal", "triangulation", "orientation", "variation"]
        .iter()
        .all(|k| checks[k].as_bool() == Some(true));
    out.raw("report.json", &(report.to_json() + "\n"))?;
    out.raw("errors.csv", &report.error_csv())?;
    out.json("checks.json", json!({ "checks": checks, "pass": pass }))?;
    let rows: Vec<String> = ["topology", "chart", "conformal", "triangulation", "orientation", "variation"]
        .iter()
        .map(|k| format!("{k},{}", if checks[k].as_bool() == Some(true) { "PASS" } else { "FAIL" }))
        .collect();
    out.csv("checks.csv", "check,verdict", &rows)?;
    println!(
        "topology {} | chart {} | conformal dev {} | triangulation max {} ({} failed) | orientation {}/{} (invariant {}) | variation {} | {}",
        topology_pass,
        chart_ok,
        num(deviation),
        num(max_tri),
        tri_failures,
        stats.correct,
        stats.total,
        stats.invariant,
        num(stats.max_defect),
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}
