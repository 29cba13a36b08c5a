#![allow(dead_code)]

use opnorm::dynamics::{propagate_state, propagate_stt, Orbit, SttStack, Tolerances};
use opnorm::sampling::random_unit;
use opnorm::tensor::{Matrix, Tensor1m, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use proptest::test_runner::{Config, RngSeed};
use rayon::prelude::*;

/// Proptest settings with a pinned seed and no regression files.
pub fn fixed(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(0x0b5e_55ed), failure_persistence: None, ..Config::default() }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, n_out: usize, n: usize, m: usize) -> Tensor1m {
    let len = n_out * n.pow(m as u32);
    let data = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor1m::new(n_out, n, m, data).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.transpose() * &a + Matrix::identity(n, n) * 0.5
}

pub fn sphere_points(n: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut r = rng(seed);
    (0..count).map(|_| random_unit(&mut r, n)).collect()
}

/// Largest `f` over the points, evaluated in parallel.
pub fn max_over<F: Fn(&Vector) -> f64 + Sync + Send>(points: &[Vector], f: F) -> f64 {
    points.par_iter().map(f).reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Largest `f` over `n` uniform points of the radius-`r` sphere.
pub fn sampled_sphere_max<F: Fn(&Vector) -> f64 + Sync + Send>(f: F, dim: usize, r: f64, n: usize, seed: u64) -> f64 {
    max_over(&sphere_points(dim, n, seed), |u| f(&(u * r)))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn tight() -> Tolerances {
    Tolerances { rtol: 1e-13, atol: 1e-13 }
}

/// Per-component step for differences: 1e-5 of the position and velocity
/// magnitudes.
pub fn fd_steps(x0: &Vector) -> Vector {
    let r = x0.rows(0, 3).norm();
    let v = x0.rows(3, 3).norm();
    Vector::from_fn(6, |i, _| 1e-5 * if i < 3 { r } else { v })
}

/// Central-difference STM of the flow.
pub fn fd_phi(orbit: &Orbit, tf: f64) -> Matrix {
    let h = fd_steps(&orbit.x0);
    let cols: Vec<Vector> = (0..6)
        .into_par_iter()
        .map(|k| {
            let mut e = Vector::zeros(6);
            e[k] = h[k];
            let p = propagate_state(orbit.model, &(&orbit.x0 + &e), 0.0, tf, tight()).unwrap();
            let m = propagate_state(orbit.model, &(&orbit.x0 - &e), 0.0, tf, tight()).unwrap();
            (p - m) / (2.0 * h[k])
        })
        .collect();
    Matrix::from_columns(&cols)
}

/// Central difference of the STM: entry `(i, j, k) = ∂Φ_ij / ∂x_k`.
pub fn fd_psi(orbit: &Orbit, tf: f64) -> Vec<f64> {
    let h = fd_steps(&orbit.x0);
    let slabs: Vec<Matrix> = (0..6)
        .into_par_iter()
        .map(|k| {
            let mut e = Vector::zeros(6);
            e[k] = h[k];
            let p = propagate_stt(orbit.model, &(&orbit.x0 + &e), 0.0, tf, 1, tight()).unwrap().phi;
            let m = propagate_stt(orbit.model, &(&orbit.x0 - &e), 0.0, tf, 1, tight()).unwrap().phi;
            (p - m) / (2.0 * h[k])
        })
        .collect();
    let mut out = vec![0.0; 216];
    for (k, s) in slabs.iter().enumerate() {
        for i in 0..6 {
            for j in 0..6 {
                out[i * 36 + j * 6 + k] = s[(i, j)];
            }
        }
    }
    out
}

/// Largest entry difference relative to the largest entry.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Residuals of the order-1 and order-2 Taylor models along a mixed
/// direction, for perturbation sizes `scales` (relative to the state).
pub fn taylor_residuals(stack: &SttStack, scales: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let x0 = &stack.x0;
    let unit = fd_steps(x0) * 1e5;
    let dir = Vector::from_fn(6, |i, _| unit[i] * [0.6, -0.3, 0.2, 0.5, 0.4, -0.3][i]);
    scales
        .par_iter()
        .map(|&s| {
            let dx = &dir * s;
            let xf = propagate_state(stack.model, &(x0 + &dx), stack.t0, stack.tf, tight()).unwrap();
            let d = xf - &stack.xf;
            let r1 = (&d - stack.predict(&dx, 1).unwrap()).norm();
            let r2 = (&d - stack.predict(&dx, 2).unwrap()).norm();
            (r1, r2)
        })
        .unzip()
}
