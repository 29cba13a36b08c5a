//! Direction measurements of a relative position and their second-order
//! update error.

use crate::eigen::PowerIterConfig;
use crate::error::{Error, Result};
use crate::norms::norm_2;
use crate::tensor::{Matrix, Tensor1m, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementModel {
    /// Azimuth `atan2(y, x)` and elevation `asin(z / |r|)`.
    Angles,
    /// `r / |r|`.
    UnitVector,
}

#[derive(Clone, Debug)]
pub struct Measurement {
    pub value: Vector,
    pub jacobian: Matrix,
    pub hessian: Tensor1m,
}

/// Below this `sqrt(x² + y²) / |r|` the azimuth is undefined.
const POLE_TOLERANCE: f64 = 1e-9;

pub fn evaluate(model: MeasurementModel, r: &Vector) -> Result<Measurement> {
    if r.len() != 3 {
        return Err(Error::Dimension { context: "relative position", expected: 3, found: r.len() });
    }
    let rho = r.norm();
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain("measurement at zero or non-finite range".into()));
    }
    match model {
        MeasurementModel::Angles => angles(r, rho),
        MeasurementModel::UnitVector => Ok(unit_vector(r, rho)),
    }
}

fn angles(r: &Vector, rho: f64) -> Result<Measurement> {
    let (x, y, z) = (r[0], r[1], r[2]);
    let s = x * x + y * y;
    let q = s.sqrt();
    if q <= POLE_TOLERANCE * rho {
        return Err(Error::Domain("azimuth undefined at the pole".into()));
    }
    let p = rho * rho;
    let value = Vector::from_vec(vec![y.atan2(x), (z / rho).clamp(-1.0, 1.0).asin()]);
    let jacobian = Matrix::from_row_slice(
        2,
        3,
        &[-y / s, x / s, 0.0, -x * z / (q * p), -y * z / (q * p), q / p],
    );
    let s2 = s * s;
    let q3p2 = q * q * q * p * p;
    let theta = [
        [2.0 * x * y / s2, (y * y - x * x) / s2, 0.0],
        [(y * y - x * x) / s2, -2.0 * x * y / s2, 0.0],
        [0.0, 0.0, 0.0],
    ];
    let pxz = -x * (p - 2.0 * z * z) / (q * p * p);
    let pyz = -y * (p - 2.0 * z * z) / (q * p * p);
    let pxy = x * y * z * (p + 2.0 * s) / q3p2;
    let phi = [
        [-z * (s * p - x * x * p - 2.0 * x * x * s) / q3p2, pxy, pxz],
        [pxy, -z * (s * p - y * y * p - 2.0 * y * y * s) / q3p2, pyz],
        [pxz, pyz, -2.0 * q * z / (p * p)],
    ];
    let hessian = Tensor1m::from_fn(2, 3, 2, |i, j| if i == 0 { theta[j[0]][j[1]] } else { phi[j[0]][j[1]] })?;
    Ok(Measurement { value, jacobian, hessian })
}

fn unit_vector(r: &Vector, rho: f64) -> Measurement {
    let u = r / rho;
    let jacobian = (Matrix::identity(3, 3) - &u * u.transpose()) / rho;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let hessian = Tensor1m::from_fn(3, 3, 2, |i, jk| {
        let (j, k) = (jk[0], jk[1]);
        (3.0 * u[i] * u[j] * u[k] - d(i, j) * u[k] - d(i, k) * u[j] - d(j, k) * u[i]) / (rho * rho)
    })
    .expect("fixed shape");
    Measurement { value: u, jacobian, hessian }
}

/// Singular values below this fraction of the largest are dropped from the
/// pseudoinverse.
const PINV_CUTOFF: f64 = 1e-12;

/// Moore-Penrose pseudoinverse of the Jacobian and its numerical rank.
pub fn jacobian_pinv(h: &Matrix) -> (Matrix, usize) {
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = PINV_CUTOFF * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let pinv = svd.pseudo_inverse(cut).expect("both factors computed");
    (pinv, rank)
}

/// `Π_H = H† H` and `Π⊥ = I - Π_H`.
pub fn projectors(h: &Matrix) -> (Matrix, Matrix) {
    let (pinv, _) = jacobian_pinv(h);
    let p = &pinv * h;
    let n = p.nrows();
    let perp = Matrix::identity(n, n) - &p;
    (p, perp)
}

/// Direction measurements observe two degrees of freedom.
const OBSERVABLE_RANK: usize = 2;

/// `H̄ = H† ∂²h`, the state-space image of the measurement curvature.
pub fn hbar_tensor(model: MeasurementModel, r: &Vector) -> Result<Tensor1m> {
    let m = evaluate(model, r)?;
    let (pinv, rank) = jacobian_pinv(&m.jacobian);
    if rank < OBSERVABLE_RANK {
        return Err(Error::Degenerate(format!("measurement Jacobian has rank {rank}")));
    }
    m.hessian.map_output(&pinv)
}

/// `|H̄|₂` at `r`.
pub fn hbar_norm(model: MeasurementModel, r: &Vector, cfg: &PowerIterConfig) -> Result<f64> {
    Ok(norm_2(&hbar_tensor(model, r)?, cfg)?.value)
}

/// `½ |H̄|₂ s²`, the worst-case update error for a prior offset of size `s`.
pub fn update_error_bound(hbar: &Tensor1m, s: f64, cfg: &PowerIterConfig) -> Result<f64> {
    Ok(0.5 * norm_2(hbar, cfg)?.value * s * s)
}

/// Position on the unit-range sphere at azimuth `theta`, elevation `phi`.
pub fn direction(theta: f64, phi: f64) -> Vector {
    Vector::from_vec(vec![phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin()])
}

/// `|H̄_u δr²|²` at `r = e1` for the unit-sphere offset at `(theta, phi)`.
pub fn unit_vector_error_squared(theta: f64, phi: f64) -> f64 {
    let (ct, cp) = (theta.cos(), phi.cos());
    4.0 * ct * ct * cp * cp * (theta.sin().powi(2) * cp * cp + phi.sin().powi(2))
}
