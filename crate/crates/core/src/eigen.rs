//! Power iterations for the largest Z- and D-eigenvalues of squared tensors
//! and of symmetric fully covariant tensors.

use nalgebra::{Cholesky, Dyn, LU};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::random_unit;
use crate::tensor::{Matrix, Tensor0m, Tensor1m, Vector};

#[derive(Clone, Debug)]
pub struct PowerIterConfig {
    /// Relative eigenvalue change accepted on two successive iterations.
    pub tol: f64,
    pub max_iters: usize,
    /// Total number of starting vectors, including `initial_guess`.
    pub restarts: usize,
    pub seed: u64,
    pub initial_guess: Option<Vector>,
}

impl Default for PowerIterConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 1000,
            restarts: 10,
            seed: 0,
            initial_guess: None,
        }
    }
}

impl PowerIterConfig {
    pub fn with_guess(&self, guess: Option<Vector>) -> Self {
        Self { initial_guess: guess, ..self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct EigResult {
    pub eigenvalue: f64,
    pub eigenvector: Vector,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Decreases of `λ` below this fraction of its scale are rounding noise.
const ROUNDING: f64 = 1e-13;

/// Residual threshold relative to the eigenvalue. The eigenvalue test alone
/// stops while the vector is only accurate to about `sqrt(tol)`.
fn residual_tol(tol: f64) -> f64 {
    (1e3 * tol).max(1e-14)
}

pub(crate) fn start_vectors(n: usize, cfg: &PowerIterConfig) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = Vec::with_capacity(cfg.restarts.max(1));
    if let Some(g) = &cfg.initial_guess {
        let norm = g.norm();
        if g.len() == n && norm > 0.0 && norm.is_finite() {
            starts.push(g / norm);
        }
    }
    while starts.len() < cfg.restarts.max(1) {
        starts.push(random_unit(&mut rng, n));
    }
    starts
}

/// `B̂ x^(2m-1) = (B x^(m-1))ᵀ (B x^m)` and `B̂ x^(2m) = |B x^m|²`.
pub fn square_gradient(b: &Tensor1m, x: &Vector) -> (f64, Vector) {
    let m = b.apply_partial(x);
    let v = &m * x;
    (v.norm_squared(), m.transpose() * v)
}

struct Run {
    value: f64,
    x: Vector,
    iters: usize,
    converged: bool,
}

/// Shifted higher-order power method. `eval(x)` returns `(λ(x), g(x))` with
/// `λ = xᵀ g` for unit `x`; the update is `x ← normalize(g + α x)`.
///
/// `α` starts at `shift` and is raised whenever a step would lower `λ` or
/// the iterates cycle with `λ` fixed, which an unshifted iteration can do.
fn hopm<F>(x0: Vector, cfg: &PowerIterConfig, shift: f64, eval: &F) -> Run
where
    F: Fn(&Vector) -> (f64, Vector),
{
    let rtol = residual_tol(cfg.tol);
    let mut alpha = shift;
    let mut x = x0;
    let (mut lambda, mut g) = eval(&x);
    let mut calm = 0;
    for it in 0..cfg.max_iters {
        let scale = lambda.abs().max(g.norm());
        let residual = (&g - &x * lambda).norm();
        if scale == 0.0 || (calm >= 2 && residual <= rtol * scale) {
            return Run { value: lambda, x, iters: it, converged: true };
        }
        if calm >= 2 && residual > cfg.tol.sqrt() * scale && alpha < scale {
            // λ is stationary but x is not: with a small shift the iterates
            // are cycling. A large shift only slows x down.
            alpha = if alpha > 0.0 { 2.0 * alpha } else { scale };
            calm = 0;
        }
        let next = &g + &x * alpha;
        let norm = next.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Run { value: lambda, x, iters: it, converged: false };
        }
        let next = next / norm;
        let (l_next, g_next) = eval(&next);
        if l_next < lambda - ROUNDING * scale {
            alpha = if alpha > 0.0 { 2.0 * alpha } else { scale };
            calm = 0;
            continue;
        }
        if (l_next - lambda).abs() <= cfg.tol * l_next.abs().max(f64::MIN_POSITIVE) {
            calm += 1;
        } else {
            calm = 0;
        }
        x = next;
        lambda = l_next;
        g = g_next;
    }
    Run { value: lambda, x, iters: cfg.max_iters, converged: false }
}

fn best_of<F>(starts: Vec<Vector>, cfg: &PowerIterConfig, shift: f64, eval: F) -> EigResult
where
    F: Fn(&Vector) -> (f64, Vector) + Sync,
{
    let used = starts.len();
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|x0| hopm(x0, cfg, shift, &eval))
        .collect();
    let total_iters = runs.iter().map(|r| r.iters).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start");
    EigResult {
        eigenvalue: best.value,
        eigenvector: best.x,
        iterations: total_iters,
        converged: best.converged,
        restarts_used: used,
    }
}

fn trivial(n: usize) -> EigResult {
    let mut e = Vector::zeros(n);
    if n > 0 {
        e[0] = 1.0;
    }
    EigResult {
        eigenvalue: 0.0,
        eigenvector: e,
        iterations: 0,
        converged: true,
        restarts_used: 0,
    }
}

const ZERO_TENSOR: f64 = 1e-300;

/// Largest Z-eigenvalue of `B̂ = BᵀB` with unit eigenvector.
///
/// A tensor without input symmetry is symmetrized first.
pub fn z_eig_max_square(b: &Tensor1m, cfg: &PowerIterConfig) -> Result<EigResult> {
    let b = b.symmetrized();
    let n = b.dim_in();
    if b.frobenius_norm() < ZERO_TENSOR {
        return Ok(trivial(n));
    }
    let starts = start_vectors(n, cfg);
    Ok(best_of(starts, cfg, 0.0, |x| square_gradient(&b, x)))
}

enum Factor {
    /// `D = L Lᵀ`, square root `S = Lᵀ`.
    Cholesky(Cholesky<f64, Dyn>),
    /// Explicit square root `S` with `D = SᵀS`.
    General { s: LU<f64, Dyn, Dyn>, st: LU<f64, Dyn, Dyn> },
}

impl Factor {
    /// `S⁻¹ y`
    fn solve_s(&self, y: &Vector) -> Vector {
        match self {
            Factor::Cholesky(c) => c
                .l()
                .transpose()
                .solve_upper_triangular(y)
                .expect("Cholesky factor is nonsingular"),
            Factor::General { s, .. } => s.solve(y).expect("factor checked nonsingular"),
        }
    }

    /// `S⁻ᵀ g`
    fn solve_st(&self, g: &Vector) -> Vector {
        match self {
            Factor::Cholesky(c) => c
                .l()
                .solve_lower_triangular(g)
                .expect("Cholesky factor is nonsingular"),
            Factor::General { st, .. } => st.solve(g).expect("factor checked nonsingular"),
        }
    }
}

fn d_eig_with(b: &Tensor1m, factor: Factor, s_guess: Option<Vector>, cfg: &PowerIterConfig) -> EigResult {
    let b = b.symmetrized();
    let n = b.dim_in();
    if b.frobenius_norm() < ZERO_TENSOR {
        let mut r = trivial(n);
        r.eigenvector = factor.solve_s(&r.eigenvector);
        return r;
    }
    let cfg_y = cfg.with_guess(s_guess);
    let starts = start_vectors(n, &cfg_y);
    let mut r = best_of(starts, cfg, 0.0, |y| {
        let x = factor.solve_s(y);
        let (lambda, g) = square_gradient(&b, &x);
        (lambda, factor.solve_st(&g))
    });
    let x = factor.solve_s(&r.eigenvector);
    r.eigenvalue = square_gradient(&b, &x).0;
    r.eigenvector = x;
    r
}

/// Largest D-eigenvalue of `B̂` for a symmetric positive definite `D`; the
/// eigenvector satisfies `xᵀ D x = 1`. `initial_guess` is given in `x` space.
pub fn d_eig_max_square(b: &Tensor1m, d: &Matrix, cfg: &PowerIterConfig) -> Result<EigResult> {
    let n = b.dim_in();
    if d.shape() != (n, n) {
        return Err(Error::Dimension { context: "D matrix", expected: n, found: d.nrows() });
    }
    let asym = (d - d.transpose()).amax();
    if asym > 1e-10 * d.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = Cholesky::new(d.clone()).ok_or(Error::NotPositiveDefinite)?;
    let guess = cfg.initial_guess.as_ref().map(|g| chol.l().transpose() * g);
    let factor = Factor::Cholesky(chol);
    Ok(d_eig_with(b, factor, guess, cfg))
}

/// D-eigenproblem with `D = SᵀS` for a given square, nonsingular `S`.
pub fn d_eig_max_square_factored(b: &Tensor1m, s: &Matrix, cfg: &PowerIterConfig) -> Result<EigResult> {
    let n = b.dim_in();
    if s.shape() != (n, n) {
        return Err(Error::Dimension { context: "square root factor", expected: n, found: s.nrows() });
    }
    let sv = s.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-14 * smax) {
        return Err(Error::Singular { what: "square root factor", condition: smax / smin });
    }
    let guess = cfg.initial_guess.as_ref().map(|g| s * g);
    let factor = Factor::General { s: s.clone().lu(), st: s.transpose().lu() };
    Ok(d_eig_with(b, factor, guess, cfg))
}

/// Largest Z-eigenvalue of a symmetric fully covariant tensor by the shifted
/// power method with shift `(m-1) Σ|C|`.
pub fn shifted_z_eig_max(c: &Tensor0m, cfg: &PowerIterConfig) -> Result<EigResult> {
    let c = if c.is_symmetric() { c.clone() } else { c.symmetrize()? };
    let n = c.dim();
    let m = c.order();
    if m == 0 {
        return Err(Error::UnsupportedOrder { order: 0, max: crate::tensor::MAX_ORDER_0M });
    }
    if c.frobenius_norm() < ZERO_TENSOR {
        return Ok(trivial(n));
    }
    let alpha = (m as f64 - 1.0) * c.data().iter().map(|v| v.abs()).sum::<f64>();
    let starts = start_vectors(n, cfg);
    Ok(best_of(starts, cfg, alpha, |y| {
        let g = c.apply_partial(y);
        (g.dot(y), g)
    }))
}
