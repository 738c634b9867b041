//! Name-keyed construction of manifold kinds from config tables.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{MinkowskiCylinder, PerturbationTerm, PerturbedCylinder, Spacetime, SpatialFactor, StaticProduct};
use crate::error::GeometryError;

pub type Builder = fn(&toml::Table) -> Result<Arc<dyn Spacetime>, GeometryError>;

/// Registry of manifold kinds, keyed by the `kind` name used in config.
pub struct ManifoldRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

impl Default for ManifoldRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn parse<T: DeserializeOwned>(table: &toml::Table) -> Result<T, GeometryError> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| GeometryError::Config(e.message().to_string()))
}

fn default_dim() -> usize {
    2
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CylinderParams {
    #[serde(default)]
    #[allow(dead_code)]
    kind: Option<String>,
    #[serde(default = "default_radius")]
    radius: f64,
    #[serde(default = "default_dim")]
    dim: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbedParams {
    #[serde(default)]
    #[allow(dead_code)]
    kind: Option<String>,
    #[serde(default = "default_radius")]
    radius: f64,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default)]
    terms: Vec<PerturbationTerm>,
}

#[derive(Deserialize)]
struct ProductParams {
    #[serde(default)]
    #[allow(dead_code)]
    kind: Option<String>,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(flatten)]
    factor: SpatialFactor,
}

fn build_cylinder(table: &toml::Table) -> Result<Arc<dyn Spacetime>, GeometryError> {
    let p: CylinderParams = parse(table)?;
    Ok(Arc::new(MinkowskiCylinder::new(p.radius, p.dim)?))
}

fn build_perturbed(table: &toml::Table) -> Result<Arc<dyn Spacetime>, GeometryError> {
    let p: PerturbedParams = parse(table)?;
    Ok(Arc::new(PerturbedCylinder::new(p.radius, p.dim, p.terms)?))
}

fn build_product(table: &toml::Table) -> Result<Arc<dyn Spacetime>, GeometryError> {
    let p: ProductParams = parse(table)?;
    Ok(Arc::new(StaticProduct::new(p.dim, p.factor)?))
}

impl ManifoldRegistry {
    pub fn empty() -> Self {
        ManifoldRegistry { builders: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("minkowski_cylinder", build_cylinder);
        reg.register("perturbed_cylinder", build_perturbed);
        reg.register("static_product", build_product);
        reg
    }

    pub fn register(&mut self, name: &'static str, builder: Builder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    /// Builds the kind named by the table's `kind` key.
    pub fn build(&self, table: &toml::Table) -> Result<Arc<dyn Spacetime>, GeometryError> {
        let name = table
            .get("kind")
            .and_then(|v| v.as_str())
            .ok_or_else(|| GeometryError::Config("manifold table needs a string `kind`".into()))?;
        let builder = self.builders.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            GeometryError::Config(format!("unknown manifold kind `{name}` (known: {})", known.join(", ")))
        })?;
        builder(table)
    }
}
