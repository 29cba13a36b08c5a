//! Two-body and circular restricted three-body dynamics with analytic
//! derivatives up to third order.
//!
//! Only the acceleration depends nonlinearly on the state, and only through
//! position, so second and higher derivatives are stored as 3-row tensors over
//! position inputs.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor1m, Vector};

pub const EARTH_MU: f64 = 398600.4418;
pub const MOON_MU: f64 = 4902.8;
/// Earth-Moon distance used as the CR3BP length unit, km.
pub const EARTH_MOON_LU: f64 = 384400.0;

/// Radius below which the gravitational field is treated as singular
/// (canonical units).
const SINGULAR_RADIUS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DynamicsModel {
    /// Keplerian motion, `mu` in km³/s², states in km and km/s.
    TwoBody { mu: f64 },
    /// Keplerian motion with `mu = 1`.
    TwoBodyNondim,
    /// Rotating-frame CR3BP in canonical units.
    Cr3bp { mu_star: f64 },
}

impl DynamicsModel {
    pub fn name(&self) -> &'static str {
        match self {
            DynamicsModel::TwoBody { .. } => "two_body",
            DynamicsModel::TwoBodyNondim => "two_body_nondim",
            DynamicsModel::Cr3bp { .. } => "cr3bp",
        }
    }

    /// The model parameter (`mu` or `mu_star`), 1 for the nondimensional
    /// two-body model.
    pub fn parameter(&self) -> f64 {
        match *self {
            DynamicsModel::TwoBody { mu } => mu,
            DynamicsModel::TwoBodyNondim => 1.0,
            DynamicsModel::Cr3bp { mu_star } => mu_star,
        }
    }

    pub fn from_name(name: &str, parameter: f64) -> Result<Self> {
        match name {
            "two_body" => Ok(DynamicsModel::TwoBody { mu: parameter }),
            "two_body_nondim" => Ok(DynamicsModel::TwoBodyNondim),
            "cr3bp" => Ok(DynamicsModel::Cr3bp { mu_star: parameter }),
            other => Err(Error::Parse(format!("unknown dynamics model '{other}'"))),
        }
    }

    /// Earth-Moon CR3BP with mass ratio `1 / (81.30059 + 1)`.
    pub fn earth_moon() -> Self {
        DynamicsModel::Cr3bp { mu_star: 1.0 / (81.30059 + 1.0) }
    }

    /// Canonical units for integration. States at `x0` are scaled so the
    /// integrator works with O(1) numbers.
    pub(crate) fn scaling(&self, x0: &[f64; 6]) -> Scaling {
        match *self {
            DynamicsModel::TwoBody { mu } => {
                let du = (x0[0] * x0[0] + x0[1] * x0[1] + x0[2] * x0[2]).sqrt().max(1e-300);
                let vu = (mu / du).sqrt();
                Scaling { du, vu, tu: du / vu }
            }
            _ => Scaling::identity(),
        }
    }

    pub(crate) fn field(&self) -> Field {
        match *self {
            DynamicsModel::TwoBody { .. } | DynamicsModel::TwoBodyNondim => Field {
                centers: vec![(1.0, [0.0; 3])],
                rotating: false,
            },
            DynamicsModel::Cr3bp { mu_star } => Field {
                centers: vec![(1.0 - mu_star, [-mu_star, 0.0, 0.0]), (mu_star, [1.0 - mu_star, 0.0, 0.0])],
                rotating: true,
            },
        }
    }

    /// Vector field and its first three derivatives in model units.
    pub fn derivatives(&self, x: &Vector) -> Result<ModelDerivatives> {
        let x = as_state(x)?;
        let sc = self.scaling(&x);
        let xn = sc.to_canonical(&x);
        let d = self.field().eval(&xn, 3)?;
        let s = sc.diag();
        let s_inv = Matrix::from_diagonal(&s.map(|v| 1.0 / v));
        let s_mat = Matrix::from_diagonal(&s);
        let tu = sc.tu;
        let f = Vector::from_fn(6, |i, _| d.f[i] * s[i] / tu);
        let a1 = &s_mat * d.full_jacobian() * &s_inv / tu;
        let lift = |t: Tensor1m| -> Result<Tensor1m> {
            t.map_inputs(&s_inv)?.map_output(&(&s_mat / tu))
        };
        Ok(ModelDerivatives {
            f,
            a1,
            a2: lift(d.full_second()?)?,
            a3: lift(d.full_third()?)?,
        })
    }

    /// Jacobi constant `2U - v²` (CR3BP only).
    pub fn jacobi_constant(&self, x: &Vector) -> Option<f64> {
        let DynamicsModel::Cr3bp { mu_star } = *self else { return None };
        let r1 = ((x[0] + mu_star).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
        let r2 = ((x[0] - 1.0 + mu_star).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
        let u = (1.0 - mu_star) / r1 + mu_star / r2 + 0.5 * (x[0] * x[0] + x[1] * x[1]);
        Some(2.0 * u - (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]))
    }

    /// Specific orbital energy (two-body models only).
    pub fn energy(&self, x: &Vector) -> Option<f64> {
        let mu = match *self {
            DynamicsModel::TwoBody { mu } => mu,
            DynamicsModel::TwoBodyNondim => 1.0,
            DynamicsModel::Cr3bp { .. } => return None,
        };
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        Some(0.5 * (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]) - mu / r)
    }
}

pub(crate) fn as_state(x: &Vector) -> Result<[f64; 6]> {
    if x.len() != 6 {
        return Err(Error::Dimension { context: "state vector", expected: 6, found: x.len() });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("state vector"));
    }
    Ok([x[0], x[1], x[2], x[3], x[4], x[5]])
}

/// Derivatives of the vector field in model units.
#[derive(Clone, Debug)]
pub struct ModelDerivatives {
    pub f: Vector,
    pub a1: Matrix,
    pub a2: Tensor1m,
    pub a3: Tensor1m,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Scaling {
    pub du: f64,
    pub vu: f64,
    pub tu: f64,
}

impl Scaling {
    pub fn identity() -> Self {
        Self { du: 1.0, vu: 1.0, tu: 1.0 }
    }

    pub fn diag(&self) -> Vector {
        Vector::from_vec(vec![self.du, self.du, self.du, self.vu, self.vu, self.vu])
    }

    pub fn to_canonical(&self, x: &[f64; 6]) -> [f64; 6] {
        let mut out = *x;
        for (i, v) in out.iter_mut().enumerate() {
            *v /= if i < 3 { self.du } else { self.vu };
        }
        out
    }

    pub fn from_canonical(&self, x: &[f64]) -> Vector {
        Vector::from_fn(x.len(), |i, _| x[i] * if i % 6 < 3 { self.du } else { self.vu })
    }
}

pub(crate) type M3 = [[f64; 3]; 3];
pub(crate) type T3 = [[[f64; 3]; 3]; 3];
pub(crate) type Q3 = [[[[f64; 3]; 3]; 3]; 3];

/// Gravitational field in canonical units: point masses plus, for the
/// rotating frame, centrifugal and Coriolis terms.
#[derive(Clone, Debug)]
pub(crate) struct Field {
    pub centers: Vec<(f64, [f64; 3])>,
    pub rotating: bool,
}

/// Field derivatives: `ar = ∂a/∂r`, `av = ∂a/∂v`, `a2`, `a3` over position.
#[derive(Clone, Debug, Default)]
pub(crate) struct FieldDerivs {
    pub f: [f64; 6],
    pub ar: M3,
    pub av: M3,
    pub a2: T3,
    pub a3: Q3,
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

impl Field {
    /// Acceleration of `x` and derivatives up to `order` (0..=3).
    pub fn eval(&self, x: &[f64; 6], order: usize) -> Result<FieldDerivs> {
        let mut d = FieldDerivs::default();
        d.f[..3].copy_from_slice(&x[3..]);
        for &(gm, p) in &self.centers {
            let r = [x[0] - p[0], x[1] - p[1], x[2] - p[2]];
            let rho2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            let rho = rho2.sqrt();
            if !(rho > SINGULAR_RADIUS) {
                return Err(Error::Domain(format!("radius {rho:e} at or below the singular threshold")));
            }
            let i3 = gm / (rho2 * rho);
            let i5 = i3 / rho2;
            let i7 = i5 / rho2;
            let i9 = i7 / rho2;
            for i in 0..3 {
                d.f[3 + i] -= i3 * r[i];
            }
            if order < 1 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    d.ar[i][j] += -i3 * delta(i, j) + 3.0 * i5 * r[i] * r[j];
                }
            }
            if order < 2 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let s = delta(i, j) * r[k] + delta(i, k) * r[j] + delta(j, k) * r[i];
                        d.a2[i][j][k] += 3.0 * i5 * s - 15.0 * i7 * r[i] * r[j] * r[k];
                    }
                }
            }
            if order < 3 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            let dd = delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(j, k) * delta(i, l);
                            let dr = delta(i, j) * r[k] * r[l]
                                + delta(i, k) * r[j] * r[l]
                                + delta(j, k) * r[i] * r[l]
                                + delta(i, l) * r[j] * r[k]
                                + delta(j, l) * r[i] * r[k]
                                + delta(k, l) * r[i] * r[j];
                            d.a3[i][j][k][l] +=
                                3.0 * i5 * dd - 15.0 * i7 * dr + 105.0 * i9 * r[i] * r[j] * r[k] * r[l];
                        }
                    }
                }
            }
        }
        if self.rotating {
            d.f[3] += x[0] + 2.0 * x[4];
            d.f[4] += x[1] - 2.0 * x[3];
            d.ar[0][0] += 1.0;
            d.ar[1][1] += 1.0;
            d.av[0][1] = 2.0;
            d.av[1][0] = -2.0;
        }
        Ok(d)
    }

    /// `a(r+δ) - a(r) - (∂a/∂r) δ` evaluated without cancelling the linear part.
    /// Frame terms are linear and drop out.
    pub fn accel_remainder(&self, r0: &[f64], dr: &[f64]) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for &(gm, p) in &self.centers {
            let r = [r0[0] - p[0], r0[1] - p[1], r0[2] - p[2]];
            let s = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            let dd = dr[0] * dr[0] + dr[1] * dr[1] + dr[2] * dr[2];
            let rd = r[0] * dr[0] + r[1] * dr[1] + r[2] * dr[2];
            let u = (2.0 * rd + dd) / s;
            if !(s.sqrt() > SINGULAR_RADIUS) || !(1.0 + u > SINGULAR_RADIUS * SINGULAR_RADIUS / s) {
                return Err(Error::Domain("perturbed radius at or below the singular threshold".into()));
            }
            let s32 = s * s.sqrt();
            let g = binomial_remainder(u);
            let c_r = g / s32 - 1.5 * dd / (s32 * s);
            let c_d = (g - 1.5 * u) / s32;
            for i in 0..3 {
                out[i] -= gm * (r[i] * c_r + dr[i] * c_d);
            }
        }
        Ok(out)
    }
}

/// `(1+u)^(-3/2) - 1 + 3u/2`, accurate for small `u`.
fn binomial_remainder(u: f64) -> f64 {
    if u.abs() < 0.1 {
        let mut coef = 1.0;
        let mut pow = 1.0;
        let mut sum = 0.0;
        for k in 1..40 {
            coef *= (-1.5 - (k as f64 - 1.0)) / k as f64;
            pow *= u;
            if k >= 2 {
                sum += coef * pow;
                if (coef * pow).abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
        }
        sum
    } else {
        (1.0 + u).powf(-1.5) - 1.0 + 1.5 * u
    }
}

impl FieldDerivs {
    pub fn full_jacobian(&self) -> Matrix {
        let mut a = Matrix::zeros(6, 6);
        for i in 0..3 {
            a[(i, 3 + i)] = 1.0;
            for j in 0..3 {
                a[(3 + i, j)] = self.ar[i][j];
                a[(3 + i, 3 + j)] = self.av[i][j];
            }
        }
        a
    }

    pub fn full_second(&self) -> Result<Tensor1m> {
        Tensor1m::from_fn(6, 6, 2, |i, j| {
            if i < 3 || j.iter().any(|&k| k >= 3) {
                0.0
            } else {
                self.a2[i - 3][j[0]][j[1]]
            }
        })
    }

    pub fn full_third(&self) -> Result<Tensor1m> {
        Tensor1m::from_fn(6, 6, 3, |i, j| {
            if i < 3 || j.iter().any(|&k| k >= 3) {
                0.0
            } else {
                self.a3[i - 3][j[0]][j[1]][j[2]]
            }
        })
    }
}

/// Cartesian state from classical elements (angles in radians, mean anomaly).
pub fn elements_to_state(mu: f64, a: f64, e: f64, inc: f64, raan: f64, argp: f64, mean_anomaly: f64) -> Result<Vector> {
    if !(a > 0.0) || !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidArgument("elliptic orbit required (a > 0, 0 <= e < 1)".into()));
    }
    let mut ea = mean_anomaly;
    for _ in 0..100 {
        let step = (ea - e * ea.sin() - mean_anomaly) / (1.0 - e * ea.cos());
        ea -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    let (sin_e, cos_e) = ea.sin_cos();
    let b = a * (1.0 - e * e).sqrt();
    let n = (mu / (a * a * a)).sqrt();
    let denom = 1.0 - e * cos_e;
    let pq = [a * (cos_e - e), b * sin_e];
    let vq = [-a * n * sin_e / denom, b * n * cos_e / denom];
    let (so, co) = raan.sin_cos();
    let (sw, cw) = argp.sin_cos();
    let (si, ci) = inc.sin_cos();
    let p = [co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si];
    let q = [-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si];
    Ok(Vector::from_fn(6, |k, _| {
        if k < 3 {
            pq[0] * p[k] + pq[1] * q[k]
        } else {
            vq[0] * p[k - 3] + vq[1] * q[k - 3]
        }
    }))
}
