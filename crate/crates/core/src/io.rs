//! Text format for observation sets.
//!
//! A header of `# key: value` lines (manifold, region, counts, config hash)
//! is followed by one line per point, `u0,u1,...,s,k`. Public exports drop the
//! `s,k` columns and the source position. Floats are written in shortest
//! round-trip form, so values read back bit-identical.

use std::fmt::Write as _;

use thiserror::Error;

use crate::observe::{BoundaryRegion, ObservationSet, PublicView};

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header field `{0}`")]
    MissingField(&'static str),
    #[error("header declares {declared} points, found {found}")]
    Count { declared: usize, found: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationHeader {
    pub manifold: String,
    pub region: BoundaryRegion,
    pub source_id: u64,
    /// Present in full exports only.
    pub source: Option<Vec<f64>>,
    pub count: usize,
    pub config_hash: String,
    pub public: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    pub u: Vec<f64>,
    pub s: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFile {
    pub header: ObservationHeader,
    pub records: Vec<ObservationRecord>,
}

impl ObservationFile {
    pub fn public_view(&self) -> PublicView {
        PublicView { points: self.records.iter().map(|r| r.u.clone()).collect() }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// Serializes `set`; `public` drops the metadata columns.
pub fn write_observation_set(
    set: &ObservationSet,
    manifold: &str,
    region: &BoundaryRegion,
    config_hash: &str,
    public: bool,
) -> String {
    let mut out = String::new();
    let dim = set.points.first().map_or(region.spatial_dim(), |p| p.u.len());
    let _ = writeln!(out, "# brokenlight observation set");
    let _ = writeln!(out, "# config_hash: {config_hash}");
    let _ = writeln!(out, "# manifold: {manifold}");
    let _ = writeln!(out, "# region: {}", serde_json::to_string(region).expect("region serializes"));
    let _ = writeln!(out, "# source_id: {}", set.source_id);
    if !public {
        let _ = writeln!(out, "# source: {}", join(set.source.as_slice()));
    }
    let _ = writeln!(out, "# points: {}", set.points.len());
    let mut cols: Vec<String> = (0..dim).map(|i| format!("u{i}")).collect();
    if !public {
        cols.push("s".into());
        cols.push("k".into());
    }
    let _ = writeln!(out, "# columns: {}", cols.join(","));
    for p in &set.points {
        out.push_str(&join(&p.u));
        if !public {
            let _ = write!(out, ",{:?},{}", p.s_arrival, p.k);
        }
        out.push('\n');
    }
    out
}

pub fn read_observation_set(text: &str) -> Result<ObservationFile, FormatError> {
    let mut manifold = None;
    let mut region = None;
    let mut source_id = None;
    let mut source = None;
    let mut count = None;
    let mut config_hash = None;
    let mut columns: Option<Vec<String>> = None;
    let mut records = Vec::new();
    let parse_err = |line: usize, message: String| FormatError::Parse { line: line + 1, message };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let Some((key, value)) = rest.split_once(':') else { continue };
            let value = value.trim();
            match key.trim() {
                "config_hash" => config_hash = Some(value.to_string()),
                "manifold" => manifold = Some(value.to_string()),
                "region" => region = Some(serde_json::from_str(value).map_err(|e| parse_err(i, e.to_string()))?),
                "source_id" => source_id = Some(value.parse().map_err(|e| parse_err(i, format!("source_id: {e}")))?),
                "source" => {
                    let xs: Result<Vec<f64>, _> = value.split(',').map(|x| x.trim().parse::<f64>()).collect();
                    source = Some(xs.map_err(|e| parse_err(i, format!("source: {e}")))?);
                }
                "points" => count = Some(value.parse().map_err(|e| parse_err(i, format!("points: {e}")))?),
                "columns" => columns = Some(value.split(',').map(|c| c.trim().to_string()).collect()),
                _ => {}
            }
            continue;
        }
        let cols = columns.as_ref().ok_or(FormatError::MissingField("columns"))?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(i, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let mut u = Vec::new();
        let mut s = None;
        let mut k = None;
        for (name, field) in cols.iter().zip(&fields) {
            match name.as_str() {
                "s" => s = Some(field.parse::<f64>().map_err(|e| parse_err(i, format!("s: {e}")))?),
                "k" => k = Some(field.parse::<usize>().map_err(|e| parse_err(i, format!("k: {e}")))?),
                _ => u.push(field.parse::<f64>().map_err(|e| parse_err(i, format!("{name}: {e}")))?),
            }
        }
        records.push(ObservationRecord { u, s, k });
    }
    let count = count.ok_or(FormatError::MissingField("points"))?;
    if count != records.len() {
        return Err(FormatError::Count { declared: count, found: records.len() });
    }
    let public = !columns.as_ref().is_some_and(|c| c.iter().any(|n| n == "s"));
    Ok(ObservationFile {
        header: ObservationHeader {
            manifold: manifold.ok_or(FormatError::MissingField("manifold"))?,
            region: region.ok_or(FormatError::MissingField("region"))?,
            source_id: source_id.ok_or(FormatError::MissingField("source_id"))?,
            source,
            count,
            config_hash: config_hash.ok_or(FormatError::MissingField("config_hash"))?,
            public,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;

    use super::*;
    use crate::observe::ObservationPoint;

    fn sample() -> (ObservationSet, BoundaryRegion) {
        let region = BoundaryRegion::full(2, (0.0, 2.0), 0.05);
        let points = (0..50)
            .map(|i| {
                let x = i as f64;
                ObservationPoint {
                    u: vec![1.0 + 1e-17 * x + (x * 0.37).sin() / 3.0, std::f64::consts::PI * x / 7.0 - 1.1e-300],
                    s_arrival: 1.0 / (x + 3.0),
                    k: i % 3,
                    w_out: vec![0.0; 3],
                    dir_index: i,
                }
            })
            .collect();
        let set = ObservationSet {
            source_id: 4,
            source: DVector::from_vec(vec![0.1, -0.2, 1.0 / 3.0]),
            points,
            diagnostics: vec![],
            conjugacy: vec![],
        };
        (set, region)
    }

    #[test]
    fn full_export_round_trips_exactly() {
        let (set, region) = sample();
        let text = write_observation_set(&set, "minkowski_cylinder R=1 n=2", &region, "deadbeef", false);
        let file = read_observation_set(&text).unwrap();
        assert_eq!(file.header.region, region);
        assert_eq!(file.header.config_hash, "deadbeef");
        assert_eq!(file.header.source.as_deref(), Some(set.source.as_slice()));
        assert!(!file.header.public);
        for (r, p) in file.records.iter().zip(&set.points) {
            for (a, b) in r.u.iter().zip(&p.u) {
                assert!((a - b).abs() <= 1e-15 * b.abs());
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(r.s, Some(p.s_arrival));
            assert_eq!(r.k, Some(p.k));
        }
    }

    #[test]
    fn public_export_drops_metadata() {
        let (set, region) = sample();
        let text = write_observation_set(&set, "m", &region, "00", true);
        assert!(!text.contains("# source:"));
        assert!(text.contains("# columns: u0,u1\n"));
        let file = read_observation_set(&text).unwrap();
        assert!(file.header.public);
        assert_eq!(file.public_view(), set.public_view());
        assert!(file.records.iter().all(|r| r.s.is_none() && r.k.is_none()));
    }

    #[test]
    fn malformed_files() {
        let (set, region) = sample();
        let text = write_observation_set(&set, "m", &region, "00", true);
        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_observation_set(&truncated), Err(FormatError::Count { declared: 50, .. })));
        let bad = text.replacen("\n1", "\nx", 1);
        assert!(matches!(read_observation_set(&bad), Err(FormatError::Parse { .. })));
        let headless: String = text.lines().filter(|l| !l.contains("manifold")).map(|l| format!("{l}\n")).collect();
        assert_eq!(read_observation_set(&headless), Err(FormatError::MissingField("manifold")));
    }
}
