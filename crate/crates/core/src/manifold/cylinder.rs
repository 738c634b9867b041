use nalgebra::{DMatrix, DVector};

use super::{Christoffel, Point, Spacetime};
use crate::error::GeometryError;

/// `{|x| < R}` in Minkowski space `-dt^2 + dx^2`.
///
/// Defining function `x = (R^2 - |x|^2) / (2R)`, which has unit gradient on
/// the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct MinkowskiCylinder {
    pub radius: f64,
    pub dim: usize,
}

impl MinkowskiCylinder {
    pub fn new(radius: f64, dim: usize) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || dim == 0 {
            return Err(GeometryError::Config(format!("cylinder needs R > 0 and n >= 1 (R = {radius}, n = {dim})")));
        }
        Ok(MinkowskiCylinder { radius, dim })
    }
}

pub(crate) fn minkowski(dim: usize) -> DMatrix<f64> {
    let mut g = DMatrix::identity(dim + 1, dim + 1);
    g[(0, 0)] = -1.0;
    g
}

pub(crate) fn round_defining_fn(radius: f64, p: &Point) -> f64 {
    let r2: f64 = p.rows(1, p.len() - 1).norm_squared();
    (radius * radius - r2) / (2.0 * radius)
}

pub(crate) fn round_gradient(radius: f64, p: &Point) -> DVector<f64> {
    let mut d = -p / radius;
    d[0] = 0.0;
    d
}

pub(crate) fn round_hessian(radius: f64, dim: usize) -> DMatrix<f64> {
    let mut h = DMatrix::identity(dim + 1, dim + 1) * (-1.0 / radius);
    h[(0, 0)] = 0.0;
    h
}

impl Spacetime for MinkowskiCylinder {
    fn kind(&self) -> &'static str {
        "minkowski_cylinder"
    }

    fn spatial_dim(&self) -> usize {
        self.dim
    }

    fn length_scale(&self) -> f64 {
        self.radius
    }

    fn metric(&self, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
        self.check_point(p)?;
        Ok(minkowski(self.dim))
    }

    fn christoffel(&self, _p: &Point) -> Result<Christoffel, GeometryError> {
        Ok(Christoffel::zeros(self.dim + 1))
    }

    fn is_flat(&self) -> bool {
        true
    }

    fn is_static(&self) -> bool {
        true
    }

    fn boundary_fn(&self, p: &Point) -> f64 {
        round_defining_fn(self.radius, p)
    }

    fn boundary_gradient(&self, p: &Point) -> DVector<f64> {
        round_gradient(self.radius, p)
    }

    fn boundary_hessian(&self, _p: &Point) -> DMatrix<f64> {
        round_hessian(self.radius, self.dim)
    }

    fn boundary_radius(&self, _t: f64, _omega: &DVector<f64>) -> f64 {
        self.radius
    }
}
