use serde::Serialize;

use super::{BrokenGeodesic, Termination};

/// Reflection statistics of a broken geodesic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TamenessReport {
    pub reflection_count: usize,
    pub t_span: f64,
    pub reflections_per_unit_t: f64,
    pub chords: Vec<f64>,
    pub min_chord: Option<f64>,
    pub thetas: Vec<f64>,
    pub accumulation: bool,
}

/// Flags accumulation when a chord gap falls below `min_chord` or the tracer
/// already stopped for that reason.
pub fn tameness_monitor(geo: &BrokenGeodesic, min_chord: f64) -> TamenessReport {
    let t0 = geo.initial.point[0];
    let t1 = geo.segments.last().map_or(t0, |s| s.last().x[0]);
    let t_span = (t1 - t0).abs();
    let chords: Vec<f64> = geo.reflections.windows(2).map(|w| w[1].s - w[0].s).collect();
    let min = chords.iter().copied().fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
    let accumulation =
        geo.termination == Termination::AccumulationSuspected || min.is_some_and(|m| m < min_chord);
    TamenessReport {
        reflection_count: geo.reflections.len(),
        t_span,
        reflections_per_unit_t: if t_span > 0.0 { geo.reflections.len() as f64 / t_span } else { 0.0 },
        chords,
        min_chord: min,
        thetas: geo.reflections.iter().map(|r| r.theta).collect(),
        accumulation,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceLemmaReport {
    pub a1: f64,
    pub j_max: usize,
    pub min_ja: f64,
    pub argmin_j: usize,
    pub max_ja: f64,
    pub argmax_j: usize,
    /// Indices `j` with `j a_j` outside the band, at most the first ten.
    pub outside_band: Vec<(usize, f64)>,
    pub outside_count: usize,
    /// From this index on `j a_j` increases monotonically.
    pub increasing_from: usize,
    pub last_ja: f64,
}

/// Iterates `a_{j+1} = a_j - a_j^2` and tracks `j a_j` against `band`.
pub fn sequence_lemma(a1: f64, j_max: usize, band: (f64, f64)) -> SequenceLemmaReport {
    let mut a = a1;
    let mut report = SequenceLemmaReport {
        a1,
        j_max,
        min_ja: f64::INFINITY,
        argmin_j: 0,
        max_ja: f64::NEG_INFINITY,
        argmax_j: 0,
        outside_band: Vec::new(),
        outside_count: 0,
        increasing_from: 1,
        last_ja: 0.0,
    };
    let mut prev = f64::NEG_INFINITY;
    for j in 1..=j_max {
        let ja = j as f64 * a;
        if ja < report.min_ja {
            report.min_ja = ja;
            report.argmin_j = j;
        }
        if ja > report.max_ja {
            report.max_ja = ja;
            report.argmax_j = j;
        }
        if ja < band.0 || ja > band.1 {
            report.outside_count += 1;
            if report.outside_band.len() < 10 {
                report.outside_band.push((j, ja));
            }
        }
        if ja <= prev {
            report.increasing_from = j + 1;
        }
        prev = ja;
        report.last_ja = ja;
        a -= a * a;
    }
    report
}
