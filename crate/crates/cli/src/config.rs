//! Experiment configuration: TOML text, dotted-key overrides, validation with
//! line numbers, and the content hash stamped on every output.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use brokenlight::manifold::{BoundaryBox, ManifoldRegistry, Spacetime};
use brokenlight::observe::{BoundaryRegion, ObserveOptions};
use brokenlight::reconstruct::ReconstructOptions;
use nalgebra::DVector;
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// One located complaint about the config.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub Vec<Diagnostic>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for d in &self.0 {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub spacing: f64,
    /// Points per axis.
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SourceSpec {
    pub grid: Option<GridSpec>,
    pub points: Vec<Vec<f64>>,
    /// Sources must satisfy `x(q) > margin`.
    pub margin: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec { grid: None, points: Vec::new(), margin: 1e-6 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct RegionSpec {
    pub t: (f64, f64),
    /// Shrink of the inner box `U'` in `t` and non-periodic angles.
    pub margin: f64,
    /// Outer angle box; the full sphere when absent.
    pub angles: Option<Vec<(f64, f64)>>,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec { t: (0.0, 2.0), margin: 0.05, angles: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TamenessSpec {
    /// Chord offsets as fractions of the manifold length scale.
    pub impact: Vec<f64>,
    pub t_window: f64,
}

impl Default for TamenessSpec {
    fn default() -> Self {
        TamenessSpec { impact: vec![0.0, 0.3, 0.6, 0.9], t_window: 20.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct AuditSpec {
    pub samples: usize,
    pub tameness: TamenessSpec,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec { samples: 400, tameness: TamenessSpec::default() }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CurveSpec {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct PipelineSpec {
    /// Chart center; the configured source nearest it is used.
    pub center: Option<Vec<f64>>,
    /// Chart curves in boundary parameters. Defaults exist for `dim = 2`.
    pub curves: Vec<CurveSpec>,
    pub boxes: usize,
    pub box_sizes: (f64, f64),
    /// Extra sources on null lines through the center.
    pub star_radii: Vec<f64>,
    pub star_lines: usize,
    pub paths: usize,
    pub path_step: f64,
    pub rescalings: usize,
    pub tri_tol: f64,
    pub conformal_tol: f64,
    pub variation_tol: f64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            center: None,
            curves: Vec::new(),
            boxes: 1000,
            box_sizes: (0.005, 0.05),
            star_radii: vec![-0.008, -0.004, 0.004, 0.008],
            star_lines: 12,
            paths: 20,
            path_step: 0.01,
            rescalings: 3,
            tri_tol: 1e-4,
            conformal_tol: 1e-3,
            variation_tol: 1e-6,
        }
    }
}

fn default_rays() -> usize {
    720
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<String>,
    pub manifold: toml::Table,
    #[serde(default)]
    pub sources: SourceSpec,
    #[serde(default)]
    pub region: RegionSpec,
    #[serde(default = "default_rays")]
    pub ray_count: usize,
    #[serde(default)]
    pub limits: ObserveOptions,
    #[serde(default)]
    pub tolerances: ReconstructOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub reconstruct: PipelineSpec,
}

/// A validated config with everything built from it.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub spec: Arc<dyn Spacetime>,
    pub region: BoundaryRegion,
    pub sources: Vec<DVector<f64>>,
    pub hash: String,
    /// Line of the `mode` key, for mismatch reports.
    pub mode_line: Option<usize>,
}

impl fmt::Debug for Loaded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Loaded").field("kind", &self.spec.kind()).field("hash", &self.hash).finish_non_exhaustive()
    }
}

pub const MODES: [&str; 6] = ["simulate", "audit", "reconstruct", "example:intro", "example:distinct", "example:earliest"];

/// Line of the first table entry matching the dotted `path`, or of its
/// longest matching prefix.
pub fn locate(text: &str, path: &[String]) -> Option<usize> {
    let mut table: Vec<String> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            table = name.split('.').map(|s| s.trim().trim_matches('"').to_string()).collect();
            let depth = matched(&table, path);
            if depth == table.len() && best.is_none_or(|b| depth > b.0) {
                best = Some((depth, i + 1));
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let mut full = table.clone();
        full.extend(key.trim().split('.').map(|s| s.trim().trim_matches('"').to_string()));
        let depth = matched(&full, path);
        if depth == full.len() && best.is_none_or(|b| depth > b.0) {
            best = Some((depth, i + 1));
        }
    }
    best.map(|b| b.1)
}

fn matched(a: &[String], path: &[String]) -> usize {
    a.iter().zip(path).take_while(|(x, y)| x == y).count()
}

fn diag(text: &str, key: &str, message: impl Into<String>) -> Diagnostic {
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    Diagnostic { line: locate(text, &path), key: key.to_string(), message: message.into() }
}

/// Parses `key=value`; values that are not TOML literals are taken as strings.
pub fn parse_override(arg: &str) -> Result<(Vec<String>, toml::Value), Diagnostic> {
    let bad = |m: &str| Diagnostic { line: None, key: format!("--override {arg}"), message: m.into() };
    let (key, value) = arg.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(bad("empty key segment"));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

pub fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), Diagnostic> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cur = table;
    for (depth, seg) in parents.iter().enumerate() {
        let entry = cur.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Diagnostic {
            line: None,
            key: path[..=depth].join("."),
            message: "override descends into a non-table value".into(),
        })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Hex SHA-256 of the canonical form of the effective table; the output
/// directory does not enter.
pub fn config_hash(table: &toml::Table) -> String {
    let mut t = table.clone();
    t.remove("output_dir");
    let canonical = toml::to_string(&t).expect("table serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Hash of a config hash combined with a run tag.
pub fn tagged_hash(hash: &str, tag: &str) -> String {
    hex::encode(Sha256::digest(format!("{hash}\n{tag}").as_bytes()))
}

fn positive_leaves(prefix: &str, value: &toml::Value, out: &mut Vec<(String, f64)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                positive_leaves(&format!("{prefix}.{k}"), v, out);
            }
        }
        toml::Value::Float(x) if !(*x > 0.0) => out.push((prefix.to_string(), *x)),
        _ => {}
    }
}

fn grid_points(g: &GridSpec) -> Vec<DVector<f64>> {
    let d = g.center.len();
    let half = (g.count as f64 - 1.0) / 2.0;
    let total = g.count.pow(d as u32);
    (0..total)
        .map(|flat| {
            let mut idx = flat;
            let mut q = vec![0.0; d];
            for a in (0..d).rev() {
                q[a] = g.center[a] + (((idx % g.count) as f64) - half) * g.spacing;
                idx /= g.count;
            }
            DVector::from_vec(q)
        })
        .collect()
}

fn region_of(spec: &RegionSpec, dim: usize) -> Result<BoundaryRegion, String> {
    let full = BoundaryRegion::full(dim, spec.t, spec.margin);
    let Some(angles) = &spec.angles else {
        if !(spec.t.0 + spec.margin < spec.t.1 - spec.margin) {
            return Err("t range is shorter than twice the margin".into());
        }
        return Ok(full);
    };
    if angles.len() != dim - 1 {
        return Err(format!("expected {} angle ranges, found {}", dim - 1, angles.len()));
    }
    let outer = BoundaryBox { t: spec.t, angles: angles.clone() };
    let inner = BoundaryBox {
        t: (spec.t.0 + spec.margin, spec.t.1 - spec.margin),
        angles: angles.iter().map(|a| (a.0 + spec.margin, a.1 - spec.margin)).collect(),
    };
    BoundaryRegion::new(outer, inner).map_err(|e| e.to_string())
}

/// Reads, overrides and validates. Every problem found is reported, each
/// with the line it comes from when there is one.
pub fn load(text: &str, overrides: &[String], seed: Option<u64>) -> Result<Loaded, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        ConfigError(vec![Diagnostic { line, key: "syntax".into(), message: e.message().trim().to_string() }])
    })?;
    let mut problems = Vec::new();
    for o in overrides {
        match parse_override(o).and_then(|(path, v)| apply_override(&mut table, &path, v)) {
            Ok(()) => {}
            Err(d) => problems.push(d),
        }
    }
    if let Some(seed) = seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if !problems.is_empty() {
        return Err(ConfigError(problems));
    }
    let mut unknown = Vec::new();
    let parsed: Result<ExperimentConfig, _> =
        serde_ignored::deserialize(toml::Value::Table(table.clone()), |p| unknown.push(p.to_string()));
    for key in unknown {
        if !key.starts_with("manifold.") {
            problems.push(diag(text, &key, "unknown key"));
        }
    }
    let config = match parsed {
        Ok(c) => c,
        Err(e) => {
            let msg = e.message().trim().to_string();
            // serde reports the offending key in backticks when it knows it
            let key = msg.split('`').nth(1).unwrap_or("config").to_string();
            problems.push(diag(text, &key, msg));
            return Err(ConfigError(problems));
        }
    };

    let spec = match ManifoldRegistry::with_builtins().build(&config.manifold) {
        Ok(s) => Some(s),
        Err(e) => {
            problems.push(diag(text, "manifold", e.to_string()));
            None
        }
    };
    let mut bad = Vec::new();
    let limits = toml::Value::try_from(&config.limits).expect("limits serialize");
    positive_leaves("limits", &limits, &mut bad);
    let tol = toml::Value::try_from(&config.tolerances).expect("tolerances serialize");
    positive_leaves("tolerances", &tol, &mut bad);
    for (key, x) in bad {
        problems.push(diag(text, &key, format!("must be positive, got {x}")));
    }
    if let Some(m) = &config.mode {
        if !MODES.contains(&m.as_str()) {
            problems.push(diag(text, "mode", format!("unknown mode `{m}` (known: {})", MODES.join(", "))));
        }
    }
    if config.ray_count == 0 {
        problems.push(diag(text, "ray_count", "must be at least 1"));
    }
    if !(config.region.margin > 0.0) {
        problems.push(diag(text, "region.margin", "must be positive"));
    }
    if !(config.region.t.0 < config.region.t.1) {
        problems.push(diag(text, "region.t", "needs t0 < t1"));
    }
    let rec = &config.reconstruct;
    for (key, x) in [
        ("reconstruct.path_step", rec.path_step),
        ("reconstruct.tri_tol", rec.tri_tol),
        ("reconstruct.conformal_tol", rec.conformal_tol),
        ("reconstruct.variation_tol", rec.variation_tol),
        ("reconstruct.box_sizes", rec.box_sizes.0.min(rec.box_sizes.1)),
        ("sources.margin", config.sources.margin),
    ] {
        if !(x > 0.0) {
            problems.push(diag(text, key, format!("must be positive, got {x}")));
        }
    }

    let Some(spec) = spec else { return Err(ConfigError(problems)) };
    let dim = spec.spatial_dim();
    let region = match region_of(&config.region, dim) {
        Ok(r) => Some(r),
        Err(m) => {
            problems.push(diag(text, "region", m));
            None
        }
    };
    let mut sources = Vec::new();
    if let Some(g) = &config.sources.grid {
        if g.center.len() != dim + 1 {
            problems.push(diag(text, "sources.grid.center", format!("expected {} coordinates", dim + 1)));
        } else if g.count == 0 || !(g.spacing > 0.0) {
            problems.push(diag(text, "sources.grid", "count and spacing must be positive"));
        } else {
            sources.extend(grid_points(g));
        }
    }
    for (i, p) in config.sources.points.iter().enumerate() {
        if p.len() != dim + 1 {
            problems.push(diag(text, "sources.points", format!("point {i} needs {} coordinates", dim + 1)));
        } else {
            sources.push(DVector::from_column_slice(p));
        }
    }
    for (i, q) in sources.iter().enumerate() {
        let x = spec.boundary_fn(q);
        if !(x > config.sources.margin) {
            let key = if config.sources.grid.is_some() && i < sources.len() - config.sources.points.len() {
                "sources.grid"
            } else {
                "sources.points"
            };
            problems.push(diag(
                text,
                key,
                format!("source {i} at {:?} is not strictly interior (x = {x:e})", q.as_slice()),
            ));
        }
    }
    if !problems.is_empty() {
        return Err(ConfigError(problems));
    }
    let mode_line = locate(text, &["mode".to_string()]);
    Ok(Loaded { hash: config_hash(&table), config, spec, region: region.expect("checked"), sources, mode_line })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 4

[manifold]
kind = "minkowski_cylinder"
radius = 1.0

[sources]
points = [[0.0, 0.1, 0.0], [0.2, 0.0, -0.3]]

[tolerances]
delta_tri = 1e-3
"#;

    #[test]
    fn loads_and_hashes() {
        let a = load(BASE, &[], None).unwrap();
        assert_eq!(a.sources.len(), 2);
        assert_eq!(a.config.seed, 4);
        assert_eq!(a.hash.len(), 64);
        let b = load(BASE, &["output_dir=\"elsewhere\"".into()], None).unwrap();
        assert_eq!(a.hash, b.hash);
        let c = load(BASE, &[], Some(5)).unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let l = load(BASE, &["manifold.radius=2.0".into(), "tolerances.sheet.eps_fit=1e-5".into()], None).unwrap();
        assert_eq!(l.spec.length_scale(), 2.0);
        assert_eq!(l.config.tolerances.sheet.eps_fit, 1e-5);
        let (path, v) = parse_override("region.t=[0.0, 3.0]").unwrap();
        assert_eq!(path, vec!["region", "t"]);
        assert!(v.is_array());
        assert_eq!(parse_override("mode=simulate").unwrap().1, toml::Value::String("simulate".into()));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn negative_tolerance_is_located() {
        let text = BASE.replace("delta_tri = 1e-3", "delta_tri = -1e-3");
        let err = load(&text, &[], None).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].key, "tolerances.delta_tri");
        assert_eq!(err.0[0].line, Some(12));
    }

    #[test]
    fn exterior_source_is_rejected() {
        let text = BASE.replace("[0.2, 0.0, -0.3]", "[0.2, 1.5, 0.0]");
        let err = load(&text, &[], None).unwrap_err();
        assert!(err.0[0].message.contains("not strictly interior"), "{}", err.0[0]);
        assert_eq!(err.0[0].line, Some(9));
    }

    #[test]
    fn unknown_keys_and_syntax_errors() {
        let err = load(&BASE.replace("seed = 4", "sede = 4"), &[], None).unwrap_err();
        assert_eq!(err.0[0].key, "sede");
        assert_eq!(err.0[0].line, Some(2));
        let err = load(&BASE.replace("radius = 1.0", "radius = = 1.0"), &[], None).unwrap_err();
        assert_eq!(err.0[0].line, Some(6));
        let err = load(&BASE.replace("minkowski_cylinder", "torus"), &[], None).unwrap_err();
        assert!(err.0[0].message.contains("unknown manifold kind"));
        assert_eq!(err.0[0].line, Some(4));
    }

    #[test]
    fn grid_is_centered() {
        let g = GridSpec { center: vec![0.0, 0.0, 0.0], spacing: 0.05, count: 5 };
        let pts = grid_points(&g);
        assert_eq!(pts.len(), 125);
        assert_eq!(pts[62], DVector::from_vec(vec![0.0, 0.0, 0.0]));
        assert!((pts[0][0] + 0.1).abs() < 1e-15);
    }
}
