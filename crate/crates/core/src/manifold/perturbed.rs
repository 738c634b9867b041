use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cylinder::minkowski;
use super::{Christoffel, Point, Spacetime};
use crate::error::GeometryError;

/// One term `amplitude * A(t) * B(omega)` of the boundary perturbation.
///
/// `A(t) = cos(frequency t + phase)` when a time factor is present, else 1.
/// `B(omega) = exp(-(1 - omega . center) / width^2)` when an angular bump is
/// present, else 1. `B` is extended to all of `R^n` by the same formula so
/// its gradient and Hessian in `omega` are plain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerm {
    pub amplitude: f64,
    #[serde(default)]
    pub time: Option<TimeFactor>,
    #[serde(default)]
    pub bump: Option<AngularBump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeFactor {
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularBump {
    pub center: Vec<f64>,
    pub width: f64,
}

/// Values and derivatives of `f` at `(t, omega)`, with `omega` treated as
/// independent ambient coordinates.
#[derive(Clone, Debug)]
struct Jet {
    f: f64,
    f_t: f64,
    f_tt: f64,
    f_w: DVector<f64>,
    f_ww: DMatrix<f64>,
    f_tw: DVector<f64>,
}

impl PerturbationTerm {
    pub fn cosine_in_time(amplitude: f64, frequency: f64) -> Self {
        PerturbationTerm { amplitude, time: Some(TimeFactor { frequency, phase: 0.0 }), bump: None }
    }

    pub fn bump(amplitude: f64, center: Vec<f64>, width: f64) -> Self {
        PerturbationTerm { amplitude, time: None, bump: Some(AngularBump { center, width }) }
    }

    fn jet(&self, t: f64, omega: &DVector<f64>) -> Jet {
        let n = omega.len();
        let (a, a1, a2) = match &self.time {
            Some(tf) => {
                let arg = tf.frequency * t + tf.phase;
                let k = tf.frequency;
                (arg.cos(), -k * arg.sin(), -k * k * arg.cos())
            }
            None => (1.0, 0.0, 0.0),
        };
        let (b, b1, b2) = match &self.bump {
            Some(bump) => {
                let c = DVector::from_column_slice(&bump.center);
                let w2 = bump.width * bump.width;
                let val = (-(1.0 - omega.dot(&c)) / w2).exp();
                let grad = &c * (val / w2);
                let hess = &c * c.transpose() * (val / (w2 * w2));
                (val, grad, hess)
            }
            None => (1.0, DVector::zeros(n), DMatrix::zeros(n, n)),
        };
        let amp = self.amplitude;
        Jet {
            f: amp * a * b,
            f_t: amp * a1 * b,
            f_tt: amp * a2 * b,
            f_w: &b1 * (amp * a),
            f_ww: &b2 * (amp * a),
            f_tw: &b1 * (amp * a1),
        }
    }
}

/// `M_f = {r < (1 + f(t, omega)) R}` in Minkowski space.
///
/// The metric is flat; only the boundary moves. Defining function
/// `x = R (1 + f(t, x/|x|)) - |x|`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedCylinder {
    pub radius: f64,
    pub dim: usize,
    pub terms: Vec<PerturbationTerm>,
}

impl PerturbedCylinder {
    pub fn new(radius: f64, dim: usize, terms: Vec<PerturbationTerm>) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || dim < 2 {
            return Err(GeometryError::Config(format!(
                "perturbed cylinder needs R > 0 and n >= 2 (R = {radius}, n = {dim})"
            )));
        }
        for term in &terms {
            if let Some(b) = &term.bump {
                if b.center.len() != dim || !(b.width > 0.0) {
                    return Err(GeometryError::Config("bump needs an n-vector center and positive width".into()));
                }
            }
        }
        let terms = terms
            .into_iter()
            .map(|mut term| {
                if let Some(b) = term.bump.as_mut() {
                    let norm: f64 = b.center.iter().map(|x| x * x).sum::<f64>().sqrt();
                    b.center.iter_mut().for_each(|x| *x /= norm);
                }
                term
            })
            .collect();
        Ok(PerturbedCylinder { radius, dim, terms })
    }

    fn jet(&self, t: f64, omega: &DVector<f64>) -> Jet {
        let n = omega.len();
        let mut acc = Jet {
            f: 0.0,
            f_t: 0.0,
            f_tt: 0.0,
            f_w: DVector::zeros(n),
            f_ww: DMatrix::zeros(n, n),
            f_tw: DVector::zeros(n),
        };
        for term in &self.terms {
            let j = term.jet(t, omega);
            acc.f += j.f;
            acc.f_t += j.f_t;
            acc.f_tt += j.f_tt;
            acc.f_w += j.f_w;
            acc.f_ww += j.f_ww;
            acc.f_tw += j.f_tw;
        }
        acc
    }

    pub fn perturbation(&self, t: f64, omega: &DVector<f64>) -> f64 {
        self.jet(t, omega).f
    }

    fn polar(&self, p: &Point) -> (f64, DVector<f64>) {
        let spatial = p.rows(1, self.dim).into_owned();
        let r = spatial.norm();
        if r == 0.0 {
            let mut e = DVector::zeros(self.dim);
            e[0] = 1.0;
            return (0.0, e);
        }
        (r, spatial / r)
    }
}

impl Spacetime for PerturbedCylinder {
    fn kind(&self) -> &'static str {
        "perturbed_cylinder"
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
        self.terms.iter().all(|t| t.time.is_none() || t.amplitude == 0.0)
    }

    fn boundary_fn(&self, p: &Point) -> f64 {
        let (r, omega) = self.polar(p);
        self.radius * (1.0 + self.perturbation(p[0], &omega)) - r
    }

    fn boundary_gradient(&self, p: &Point) -> DVector<f64> {
        let n = self.dim;
        let (r, omega) = self.polar(p);
        let jet = self.jet(p[0], &omega);
        let mut d = DVector::zeros(n + 1);
        d[0] = self.radius * jet.f_t;
        if r == 0.0 {
            return d;
        }
        let proj = DMatrix::identity(n, n) - &omega * omega.transpose();
        let df = &proj * &jet.f_w / r;
        for i in 0..n {
            d[i + 1] = self.radius * df[i] - omega[i];
        }
        d
    }

    fn boundary_hessian(&self, p: &Point) -> DMatrix<f64> {
        let n = self.dim;
        let (r, omega) = self.polar(p);
        let jet = self.jet(p[0], &omega);
        let rr = self.radius;
        let mut h = DMatrix::zeros(n + 1, n + 1);
        h[(0, 0)] = rr * jet.f_tt;
        if r == 0.0 {
            return h;
        }
        let proj = DMatrix::identity(n, n) - &omega * omega.transpose();
        let mixed = &proj * &jet.f_tw / r;
        for i in 0..n {
            h[(0, i + 1)] = rr * mixed[i];
            h[(i + 1, 0)] = rr * mixed[i];
        }
        let quad = &proj * &jet.f_ww * &proj / (r * r);
        for i in 0..n {
            for l in 0..n {
                // sum_k f_k d^2 omega_k / dX_i dX_l
                let mut second = 0.0;
                for k in 0..n {
                    second -= jet.f_w[k]
                        * (proj[(l, i)] * omega[k] + omega[i] * proj[(l, k)] + proj[(i, k)] * omega[l]);
                }
                second /= r * r;
                h[(i + 1, l + 1)] = rr * (quad[(i, l)] + second) - proj[(i, l)] / r;
            }
        }
        h
    }

    fn boundary_radius(&self, t: f64, omega: &DVector<f64>) -> f64 {
        self.radius * (1.0 + self.perturbation(t, omega))
    }
}
