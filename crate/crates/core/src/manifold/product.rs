use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cylinder::{round_defining_fn, round_gradient, round_hessian};
use super::{Christoffel, Point, Spacetime};
use crate::error::GeometryError;

/// Riemannian factor `(X, h)` of a static product `-dt^2 + h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "factor", rename_all = "snake_case")]
pub enum SpatialFactor {
    /// Euclidean ball of the given radius.
    FlatDisk { radius: f64 },
    /// Points within `radius` of the segment `|x_1| <= half_length` on the
    /// first axis; flat sides joined by round caps.
    Stadium { radius: f64, half_length: f64 },
    /// Ball with conformally flat metric `exp(strength |x|^2) dx^2`.
    ConformalDisk { radius: f64, strength: f64 },
}

impl SpatialFactor {
    fn radius(&self) -> f64 {
        match *self {
            SpatialFactor::FlatDisk { radius }
            | SpatialFactor::Stadium { radius, .. }
            | SpatialFactor::ConformalDisk { radius, .. } => radius,
        }
    }
}

/// `R_t x X` with metric `-dt^2 + h`.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticProduct {
    pub dim: usize,
    pub factor: SpatialFactor,
}

impl StaticProduct {
    pub fn new(dim: usize, factor: SpatialFactor) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::Config("static product needs n >= 1".into()));
        }
        let ok = match factor {
            SpatialFactor::FlatDisk { radius } => radius > 0.0,
            SpatialFactor::Stadium { radius, half_length } => radius > 0.0 && half_length >= 0.0,
            SpatialFactor::ConformalDisk { radius, strength } => radius > 0.0 && strength.is_finite(),
        };
        if !ok {
            return Err(GeometryError::Config(format!("invalid spatial factor {factor:?}")));
        }
        Ok(StaticProduct { dim, factor })
    }

    /// Closest point of the stadium core segment and the offset from it.
    fn stadium_offset(&self, p: &Point, half_length: f64) -> (DVector<f64>, bool) {
        let mut off = p.rows(1, self.dim).into_owned();
        let on_flat = off[0].abs() < half_length;
        off[0] -= off[0].clamp(-half_length, half_length);
        (off, on_flat)
    }
}

impl Spacetime for StaticProduct {
    fn kind(&self) -> &'static str {
        "static_product"
    }

    fn spatial_dim(&self) -> usize {
        self.dim
    }

    fn length_scale(&self) -> f64 {
        self.factor.radius()
    }

    fn metric(&self, p: &Point) -> Result<DMatrix<f64>, GeometryError> {
        self.check_point(p)?;
        let mut g = DMatrix::identity(self.dim + 1, self.dim + 1);
        if let SpatialFactor::ConformalDisk { strength, .. } = self.factor {
            let r2 = p.rows(1, self.dim).norm_squared();
            g *= (strength * r2).exp();
        }
        g[(0, 0)] = -1.0;
        Ok(g)
    }

    fn christoffel(&self, p: &Point) -> Result<Christoffel, GeometryError> {
        let dim = self.dim + 1;
        let mut out = Christoffel::zeros(dim);
        if let SpatialFactor::ConformalDisk { strength, .. } = self.factor {
            // h = e^{2 sigma} delta, sigma = strength |x|^2 / 2
            let ds = |i: usize| strength * p[i];
            for k in 1..dim {
                for i in 1..dim {
                    for j in 1..dim {
                        let mut v = 0.0;
                        if i == k {
                            v += ds(j);
                        }
                        if j == k {
                            v += ds(i);
                        }
                        if i == j {
                            v -= ds(k);
                        }
                        out.0[k][(i, j)] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    fn is_flat(&self) -> bool {
        !matches!(self.factor, SpatialFactor::ConformalDisk { strength, .. } if strength != 0.0)
    }

    fn is_static(&self) -> bool {
        true
    }

    fn boundary_fn(&self, p: &Point) -> f64 {
        match self.factor {
            SpatialFactor::FlatDisk { radius } | SpatialFactor::ConformalDisk { radius, .. } => {
                round_defining_fn(radius, p)
            }
            SpatialFactor::Stadium { radius, half_length } => {
                let (off, _) = self.stadium_offset(p, half_length);
                radius - off.norm()
            }
        }
    }

    fn boundary_gradient(&self, p: &Point) -> DVector<f64> {
        match self.factor {
            SpatialFactor::FlatDisk { radius } | SpatialFactor::ConformalDisk { radius, .. } => {
                round_gradient(radius, p)
            }
            SpatialFactor::Stadium { half_length, .. } => {
                let (off, _) = self.stadium_offset(p, half_length);
                let d = off.norm();
                let mut out = DVector::zeros(self.dim + 1);
                if d > 0.0 {
                    for i in 0..self.dim {
                        out[i + 1] = -off[i] / d;
                    }
                }
                out
            }
        }
    }

    fn boundary_hessian(&self, p: &Point) -> DMatrix<f64> {
        match self.factor {
            SpatialFactor::FlatDisk { radius } | SpatialFactor::ConformalDisk { radius, .. } => {
                round_hessian(radius, self.dim)
            }
            SpatialFactor::Stadium { half_length, .. } => {
                let (off, on_flat) = self.stadium_offset(p, half_length);
                let d = off.norm();
                let mut out = DMatrix::zeros(self.dim + 1, self.dim + 1);
                if d == 0.0 {
                    return out;
                }
                let unit = &off / d;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let mut delta = if i == j { 1.0 } else { 0.0 };
                        if on_flat && i == 0 && j == 0 {
                            delta = 0.0;
                        }
                        out[(i + 1, j + 1)] = -(delta - unit[i] * unit[j]) / d;
                    }
                }
                out
            }
        }
    }

    fn boundary_radius(&self, t: f64, omega: &DVector<f64>) -> f64 {
        match self.factor {
            SpatialFactor::FlatDisk { radius } | SpatialFactor::ConformalDisk { radius, .. } => radius,
            SpatialFactor::Stadium { .. } => super::radial_root(self, t, omega),
        }
    }
}
