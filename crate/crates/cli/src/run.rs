//! Simulate and audit subcommands.

use brokenlight::io::write_observation_set;
use brokenlight::manifold::{audit_null_convexity, null_vector_with_spatial, Convexity};
use brokenlight::observe::{compute_observation_set, ObservationSet};
use brokenlight::raytrace::{tameness_monitor, trace, TraceLimits};
use nalgebra::DVector;
use rayon::prelude::*;
use serde_json::json;

use crate::config::Loaded;
use crate::output::{num, Output};

pub fn manifold_label(l: &Loaded) -> String {
    serde_json::to_string(&l.config.manifold).expect("manifold table serializes")
}

pub fn simulate_all(l: &Loaded, sources: &[DVector<f64>]) -> anyhow::Result<Vec<ObservationSet>> {
    // sources run one after another; each set already fans out over rays
    sources
        .iter()
        .enumerate()
        .map(|(i, q)| {
            Ok(compute_observation_set(l.spec.as_ref(), i as u64, q, &l.region, l.config.ray_count, &l.config.limits)?)
        })
        .collect()
}

pub fn simulate(l: &Loaded, out: &Output) -> anyhow::Result<bool> {
    let sets = simulate_all(l, &l.sources)?;
    let label = manifold_label(l);
    let mut diag_rows = Vec::new();
    let mut conj_rows = Vec::new();
    let mut summary = Vec::new();
    for set in &sets {
        let id = set.source_id;
        out.raw(&format!("sets/source_{id:04}.full.txt"), &write_observation_set(set, &label, &l.region, &out.hash, false))?;
        out.raw(&format!("sets/source_{id:04}.public.txt"), &write_observation_set(set, &label, &l.region, &out.hash, true))?;
        for d in &set.diagnostics {
            diag_rows.push(format!("{id},{},{}", d.dir_index, d.outcome));
        }
        for c in &set.conjugacy {
            conj_rows.push(format!("{id},{},{},{},{}", c.dir_index, c.k, num(c.ratio), c.conjugate));
        }
        let max_k = set.points.iter().map(|p| p.k).max();
        summary.push(json!({
            "source_id": id,
            "source": set.source.as_slice(),
            "points": set.points.len(),
            "max_reflections": max_k,
            "diagnostics": set.diagnostics.len(),
            "conjugate": set.conjugacy.iter().filter(|c| c.conjugate).count(),
        }));
    }
    out.csv("diagnostics.csv", "source_id,dir_index,outcome", &diag_rows)?;
    if l.config.limits.screen_conjugacy {
        out.csv("conjugacy.csv", "source_id,dir_index,k,ratio,conjugate", &conj_rows)?;
    }
    out.json(
        "simulate.json",
        json!({
            "manifold": l.config.manifold,
            "region": l.region,
            "ray_count": l.config.ray_count,
            "sets": summary,
        }),
    )?;
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TamenessRow {
    pub impact: f64,
    pub reflections: usize,
    pub per_unit_t: f64,
    pub min_chord: Option<f64>,
    pub accumulation: bool,
    /// Chord-formula count, known for the flat cylinder only.
    pub expected: Option<usize>,
}

/// Chord rays: start at `d * L * e_2` heading along `e_1`, traced over the
/// time window.
pub fn tameness_sweep(l: &Loaded) -> anyhow::Result<Vec<TamenessRow>> {
    let spec = l.spec.as_ref();
    let n = spec.spatial_dim();
    let scale = spec.length_scale();
    let cfg = &l.config.audit.tameness;
    let limits = TraceLimits {
        s_total: f64::INFINITY,
        max_reflections: 100_000,
        t_min: f64::NEG_INFINITY,
        t_max: cfg.t_window,
        min_chord: l.config.limits.min_chord,
    };
    cfg.impact
        .par_iter()
        .map(|&d| {
            let mut q = DVector::zeros(n + 1);
            if n >= 2 {
                q[2] = d * scale;
            }
            let mut w = DVector::zeros(n);
            w[0] = 1.0;
            let v = null_vector_with_spatial(spec, &q, &w, true)?;
            let geo = trace(spec, &q, &v, &limits, &l.config.limits.integrator)?;
            let rep = tameness_monitor(&geo, l.config.limits.min_chord);
            let expected = (spec.kind() == "minkowski_cylinder")
                .then(|| (cfg.t_window / (2.0 * scale * (1.0 - d * d).sqrt())).floor() as usize);
            Ok(TamenessRow {
                impact: d,
                reflections: rep.reflection_count,
                per_unit_t: rep.reflections_per_unit_t,
                min_chord: rep.min_chord,
                accumulation: rep.accumulation,
                expected,
            })
        })
        .collect()
}

pub fn audit(l: &Loaded, out: &Output) -> anyhow::Result<bool> {
    let report = audit_null_convexity(l.spec.as_ref(), &l.region.outer, l.config.audit.samples)?;
    let rows = tameness_sweep(l)?;
    let counts_ok = rows.iter().all(|r| r.expected.is_none_or(|e| r.reflections.abs_diff(e) <= 1));
    let tame = rows.iter().all(|r| !r.accumulation);
    let admissible = report.classification != Convexity::Violated;
    let pass = counts_ok && tame && admissible;
    out.csv(
        "tameness.csv",
        "impact,reflections,per_unit_t,min_chord,accumulation,expected",
        &rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.impact,
                    r.reflections,
                    num(r.per_unit_t),
                    r.min_chord.map(num).unwrap_or_default(),
                    r.accumulation,
                    r.expected.map(|e| e.to_string()).unwrap_or_default()
                )
            })
            .collect::<Vec<_>>(),
    )?;
    out.json(
        "audit.json",
        json!({
            "manifold": l.config.manifold,
            "convexity": report,
            "tameness": {
                "t_window": l.config.audit.tameness.t_window,
                "rays": rows.len(),
                "accumulation_flags": rows.iter().filter(|r| r.accumulation).count(),
                "counts_match": counts_ok,
            },
            "pass": pass,
        }),
    )?;
    println!(
        "convexity: {:?} (min II = {:e}); tameness: {} rays, {} flagged; {}",
        report.classification,
        report.min_second_fundamental_form,
        rows.len(),
        rows.iter().filter(|r| r.accumulation).count(),
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}
