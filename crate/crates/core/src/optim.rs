//! Projected gradient ascent on a sphere.

use crate::error::Result;
use crate::tensor::{Matrix, Vector};

#[derive(Clone, Copy, Debug)]
pub struct SphereAscent {
    pub max_iters: usize,
    /// Stop once an accepted step moves less than `step_tol * radius`.
    pub step_tol: f64,
}

impl Default for SphereAscent {
    fn default() -> Self {
        Self { max_iters: 500, step_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct AscentResult {
    pub value: f64,
    pub x: Vector,
    pub iterations: usize,
    pub converged: bool,
}

fn retract(x: &Vector, radius: f64) -> Vector {
    x * (radius / x.norm())
}

/// Maximize `f` over the sphere `|x| = radius` from `x0`.
///
/// `grad` returns the Euclidean gradient; it is projected onto the tangent
/// space and followed with an Armijo backtracking search. Evaluation errors
/// during the search count as rejected trial points.
pub fn maximize_on_sphere<F, G>(f: F, grad: G, x0: &Vector, radius: f64, opts: SphereAscent) -> Result<AscentResult>
where
    F: Fn(&Vector) -> Result<f64>,
    G: Fn(&Vector) -> Result<Vector>,
{
    let mut x = retract(x0, radius);
    let mut fx = f(&x)?;
    let mut eta: Option<f64> = None;
    let mut prev: Option<(Vector, Vector)> = None;
    for it in 0..opts.max_iters {
        let g = grad(&x)?;
        let tangent = &g - &x * (g.dot(&x) / (radius * radius));
        let tnorm = tangent.norm();
        if !(tnorm > 0.0) || !tnorm.is_finite() {
            return Ok(AscentResult { value: fx, x, iterations: it, converged: true });
        }
        // Barzilai-Borwein trial step, falling back to the last accepted one.
        let bb = prev.as_ref().and_then(|(px, pt)| {
            let s = &x - px;
            let y = &tangent - pt;
            let sy = s.dot(&y);
            (sy < 0.0).then(|| s.norm_squared() / -sy)
        });
        let mut step = bb.or(eta).unwrap_or(0.1 * radius / tnorm);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = retract(&(&x + &tangent * step), radius);
            if let Ok(ft) = f(&trial) {
                if ft.is_finite() && ft >= fx + 1e-4 * step * tnorm * tnorm {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
            if step * tnorm < 1e-3 * opts.step_tol * radius {
                break;
            }
        }
        let Some((trial, ft)) = accepted else {
            // No ascent along the projected gradient at any resolvable step.
            return Ok(AscentResult { value: fx, x, iterations: it, converged: true });
        };
        let moved = (&trial - &x).norm();
        prev = Some((x, tangent));
        x = trial;
        fx = ft;
        eta = Some(step * 2.0);
        if moved < opts.step_tol * radius {
            return Ok(AscentResult { value: fx, x, iterations: it + 1, converged: true });
        }
    }
    Ok(AscentResult { value: fx, x, iterations: opts.max_iters, converged: false })
}

/// Damped Newton polish of a sphere maximizer, for landscapes too
/// ill-conditioned for gradient steps. The Hessian is a central difference
/// of `grad` and the damping adapts Levenberg-Marquardt style.
pub fn newton_on_sphere<F, G>(f: F, grad: G, x0: &Vector, radius: f64, opts: SphereAscent) -> Result<AscentResult>
where
    F: Fn(&Vector) -> Result<f64>,
    G: Fn(&Vector) -> Result<Vector>,
{
    let n = x0.len();
    let mut x = retract(x0, radius);
    let mut fx = f(&x)?;
    if n < 2 {
        return Ok(AscentResult { value: fx, x, iterations: 0, converged: true });
    }
    let mut mu = 0.0;
    for it in 0..opts.max_iters {
        let g = grad(&x)?;
        // Orthonormal tangent basis: the last n-1 columns of a QR of [x | I].
        let mut a = Matrix::identity(n, n + 1);
        a.set_column(0, &(&x / radius));
        for k in 0..n {
            a[(k, k + 1)] = 1.0;
        }
        let q = a.qr().q();
        let basis = q.columns(1, n - 1).into_owned();
        let h = 1e-8 * radius;
        let mut hess = Matrix::zeros(n, n);
        for k in 0..n {
            let mut e = Vector::zeros(n);
            e[k] = h;
            let col = (grad(&(&x + &e))? - grad(&(&x - &e))?) / (2.0 * h);
            hess.set_column(k, &col);
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let radial = g.dot(&x) / (radius * radius);
        let hr = basis.transpose() * (hess - Matrix::identity(n, n) * radial) * &basis;
        let gr = basis.transpose() * &g;
        let scale = hr.amax().max(gr.norm() / radius).max(f64::MIN_POSITIVE);
        let mut accepted = None;
        for _ in 0..60 {
            let m = -&hr + Matrix::identity(n - 1, n - 1) * mu;
            if let Some(chol) = m.cholesky() {
                let d = &basis * chol.solve(&gr);
                let trial = retract(&(&x + &d), radius);
                if let Ok(ft) = f(&trial) {
                    if ft.is_finite() && ft >= fx {
                        accepted = Some((trial, ft, d.norm()));
                        break;
                    }
                }
            }
            mu = if mu > 0.0 { 4.0 * mu } else { 1e-8 * scale };
            if mu > 1e16 * scale {
                break;
            }
        }
        let Some((trial, ft, step)) = accepted else {
            return Ok(AscentResult { value: fx, x, iterations: it, converged: true });
        };
        x = trial;
        fx = ft;
        mu *= 0.25;
        if step < opts.step_tol * radius {
            return Ok(AscentResult { value: fx, x, iterations: it + 1, converged: true });
        }
    }
    Ok(AscentResult { value: fx, x, iterations: opts.max_iters, converged: false })
}

/// Central finite-difference gradient with step `h`.
pub fn fd_gradient<F>(f: &F, x: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let mut g = Vector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_top_eigenvector_of_quadratic() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0, 2.0]));
        let f = |x: &Vector| Ok(x.dot(&(&a * x)));
        let g = |x: &Vector| Ok(&a * x * 2.0);
        let x0 = Vector::from_vec(vec![1.0, 0.2, 1.0]);
        let r = maximize_on_sphere(f, g, &x0, 2.0, SphereAscent::default()).unwrap();
        assert!((r.value - 12.0).abs() < 1e-9);
        assert!(r.converged);
    }

    #[test]
    fn newton_handles_ill_conditioned_quotient() {
        // |x|² weighted by 1e8 along one axis: the maximum sits on a narrow ridge
        let w = Vector::from_vec(vec![1.0, 1e-8, 1.0]);
        let f = |x: &Vector| Ok(x[0] * x[0] / (x.component_mul(&w).dot(x)));
        let g = |x: &Vector| {
            let den = x.component_mul(&w).dot(x);
            let mut d = x.component_mul(&w) * (-2.0 * x[0] * x[0] / (den * den));
            d[0] += 2.0 * x[0] / den;
            Ok(d)
        };
        let x0 = Vector::from_vec(vec![1.0, 1e-3, 1.0]);
        let r = newton_on_sphere(f, g, &x0, 1.0, SphereAscent { max_iters: 100, step_tol: 1e-12 }).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let f = |x: &Vector| Ok(x[0] * x[0] + 3.0 * x[1]);
        let g = fd_gradient(&f, &Vector::from_vec(vec![2.0, 1.0]), 1e-6).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }
}
