//! Nonlinearity indices of a flow about a reference trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{cauchy_green, propagate_stt, DynamicsModel, SttStack, Tolerances};
use crate::eigen::{d_eig_max_square_factored, shifted_z_eig_max, start_vectors, PowerIterConfig};
use crate::error::{Error, Result};
use crate::norms::{norm_2, norm_2_upper_flatten, norm_frob2, norm_frobinf_upper, norm_inf2};
use crate::optim::{maximize_on_sphere, newton_on_sphere, SphereAscent};
use crate::sampling::random_unit;
use crate::tensor::{matrix_frobenius, Matrix, Tensor0m, Tensor1m, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexKind {
    NuSampled,
    NuStar,
    Nu2,
    NuFrob2,
    NuInf2,
    NuBox,
    Nu2Upper,
    Temon,
    Demon,
    BethBound,
}

impl IndexKind {
    pub const QUOTIENTS: [IndexKind; 6] = [
        IndexKind::NuStar,
        IndexKind::Nu2,
        IndexKind::NuFrob2,
        IndexKind::NuInf2,
        IndexKind::NuBox,
        IndexKind::Nu2Upper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::NuSampled => "nu_sampled",
            IndexKind::NuStar => "nu_star",
            IndexKind::Nu2 => "nu_2",
            IndexKind::NuFrob2 => "nu_frob2",
            IndexKind::NuInf2 => "nu_inf2",
            IndexKind::NuBox => "nu_box",
            IndexKind::Nu2Upper => "nu_2_upper",
            IndexKind::Temon => "temon",
            IndexKind::Demon => "demon",
            IndexKind::BethBound => "beth_bound",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        [
            IndexKind::NuSampled,
            IndexKind::Temon,
            IndexKind::Demon,
            IndexKind::BethBound,
        ]
        .into_iter()
        .chain(Self::QUOTIENTS)
        .find(|k| k.name() == name)
        .ok_or_else(|| Error::Parse(format!("unknown index '{name}'")))
    }
}

#[derive(Clone, Debug)]
pub struct IndexResult {
    pub value: f64,
    pub direction: Option<Vector>,
    pub kind: IndexKind,
    pub order_m: Option<usize>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SampledIndex {
    pub result: IndexResult,
    pub failed_samples: usize,
}

/// `max_i |Φ(x0 + r uᵢ) - Φ(x0)|_F / |Φ(x0)|_F` over `n` random unit `uᵢ`.
#[allow(clippy::too_many_arguments)]
pub fn nu_sampled(
    model: DynamicsModel,
    x0: &Vector,
    t0: f64,
    tf: f64,
    r: f64,
    n: usize,
    seed: u64,
    tol: Tolerances,
) -> Result<SampledIndex> {
    if n == 0 || !(r > 0.0) {
        return Err(Error::InvalidArgument("nu_sampled needs n >= 1 and r > 0".into()));
    }
    let phi = propagate_stt(model, x0, t0, tf, 1, tol)?.phi;
    let denom = matrix_frobenius(&phi);
    if !(denom > 0.0) {
        return Err(Error::Degenerate("zero STM".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vector> = (0..n).map(|_| random_unit(&mut rng, x0.len())).collect();
    let values: Vec<Option<f64>> = dirs
        .par_iter()
        .map(|u| {
            propagate_stt(model, &(x0 + u * r), t0, tf, 1, tol)
                .ok()
                .map(|s| matrix_frobenius(&(s.phi - &phi)) / denom)
        })
        .collect();
    let failed = values.iter().filter(|v| v.is_none()).count();
    let best = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, c| match acc {
            Some(a) if a.1 >= c.1 => Some(a),
            _ => Some(c),
        });
    let Some((i, value)) = best else {
        return Err(Error::Propagation { time: tf, reason: "every sampled propagation failed".into() });
    };
    Ok(SampledIndex {
        result: IndexResult {
            value,
            direction: Some(dirs[i].clone()),
            kind: IndexKind::NuSampled,
            order_m: None,
            converged: true,
        },
        failed_samples: failed,
    })
}

/// Quotient `|Ψ|_a / |Φ|_a` for the scale-free indices.
pub fn nu_quotient(stack: &SttStack, kind: IndexKind, cfg: &PowerIterConfig) -> Result<IndexResult> {
    let psi = stack.psi2()?;
    let phi = &stack.phi;
    let phi_t = Tensor1m::from_matrix(phi);
    let two = || phi.singular_values().max();
    let (num, dir, converged, den) = match kind {
        IndexKind::NuStar => {
            let r = norm_frob2(psi)?;
            (r.value, r.maximizer, true, matrix_frobenius(phi))
        }
        IndexKind::Nu2 => {
            let r = norm_2(psi, cfg)?;
            (r.value, r.maximizer, r.converged, two())
        }
        IndexKind::NuFrob2 => {
            let r = norm_frob2(psi)?;
            (r.value, r.maximizer, true, two())
        }
        IndexKind::NuInf2 => {
            let r = norm_inf2(psi)?;
            (r.value, r.maximizer, true, norm_inf2(&phi_t)?.value)
        }
        IndexKind::NuBox => (norm_frobinf_upper(psi)?.value, None, true, matrix_frobenius(phi)),
        IndexKind::Nu2Upper => (norm_2_upper_flatten(psi).value, None, true, two()),
        other => return Err(Error::InvalidArgument(format!("{} is not a quotient index", other.name()))),
    };
    if !(den > 0.0) {
        return Err(Error::Degenerate("zero STM norm".into()));
    }
    Ok(IndexResult { value: num / den, direction: dir, kind, order_m: Some(2), converged })
}

/// Restriction of the problem to the row space of `Φ`.
///
/// When `Φ` is singular the quotients are finite only if every higher-order
/// tensor vanishes along `null(Φ)`; then they depend on the row-space
/// component alone and attain their maximum there.
struct RowSpace {
    /// Orthonormal basis, `n x r`.
    basis: Matrix,
    /// Square root of the reduced metric: `(Φ B)ᵀ(Φ B) = Sᵀ S`, `r x r`.
    s: Matrix,
    phi: Matrix,
}

const RANK_TOL: f64 = 1e-12;

impl RowSpace {
    fn new(phi: &Matrix, higher: &[&Tensor1m]) -> Result<Self> {
        let n = phi.ncols();
        let svd = phi.clone().svd(false, true);
        let vt = svd.v_t.expect("requested v_t");
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::Singular { what: "STM", condition: f64::INFINITY });
        }
        let keep: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] > RANK_TOL * smax).collect();
        if keep.len() == n {
            return Ok(Self { basis: Matrix::identity(n, n), s: phi.clone(), phi: phi.clone() });
        }
        let smin = svd.singular_values.min();
        for k in (0..n).filter(|k| !keep.contains(k)) {
            let v = vt.row(k).transpose();
            for t in higher {
                let scale = t.frobenius_norm();
                if t.contract(&v, 1)?.frobenius_norm() > RANK_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::Singular { what: "STM", condition: smax / smin });
                }
            }
        }
        let basis = Matrix::from_fn(n, keep.len(), |i, j| vt[(keep[j], i)]);
        let reduced = phi * &basis;
        let s = reduced.qr().r();
        Ok(Self { basis, s, phi: phi.clone() })
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn lift(&self, u: &Vector) -> Vector {
        let x = &self.basis * u;
        let norm = x.norm();
        x / norm
    }

    fn reduce_guess(&self, x: &Vector) -> Vector {
        self.basis.transpose() * x
    }
}

fn refine<F, G>(f: F, grad: G, starts: Vec<Vector>) -> Result<(f64, Vector, bool)>
where
    F: Fn(&Vector) -> Result<f64> + Sync,
    G: Fn(&Vector) -> Result<Vector> + Sync,
{
    let opts = SphereAscent { max_iters: 2000, step_tol: 1e-12 };
    let runs: Vec<_> = starts
        .into_par_iter()
        .filter(|s| s.norm() > 0.0)
        .map(|s| {
            let r = maximize_on_sphere(&f, &grad, &s, 1.0, opts)?;
            let polished = newton_on_sphere(&f, &grad, &r.x, 1.0, SphereAscent { max_iters: 100, ..opts })?;
            Ok(if polished.value >= r.value { polished } else { r })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .ok_or_else(|| Error::Degenerate("no usable starting direction".into()))?;
    Ok((best.value, best.x, best.converged))
}

fn stt_of_order(stack: &SttStack, m: usize) -> Result<&Tensor1m> {
    match m {
        2 => stack.psi2(),
        3 => stack.psi3(),
        _ => Err(Error::UnsupportedOrder { order: m, max: 3 }),
    }
}

/// `|Ψ^(m) x^m| / |Φ x|` at `x`.
pub fn demon_quotient(stack: &SttStack, m: usize, x: &Vector) -> Result<f64> {
    let psi = stt_of_order(stack, m)?;
    Ok(psi.apply(x).norm() / (&stack.phi * x).norm())
}

/// DEMoN-m: `max_{|x|=1} |Ψ^(m) x^m| / |Φ x|`.
///
/// The D-eigenvector of `Ψ̂` with `D = ΦᵀΦ` (square root `Φ`) seeds a
/// sphere-constrained ascent on the quotient itself, together with random
/// starts; the two maximizers coincide only in special cases.
pub fn demon(stack: &SttStack, m: usize, cfg: &PowerIterConfig) -> Result<IndexResult> {
    let psi = stt_of_order(stack, m)?;
    let rs = RowSpace::new(&stack.phi, &[psi])?;
    let psi_r = psi.map_inputs(&rs.basis)?;
    let phi_r = &rs.phi * &rs.basis;
    let guess = cfg.initial_guess.as_ref().map(|g| rs.reduce_guess(g));
    let eig = d_eig_max_square_factored(&psi_r, &rs.s, &cfg.with_guess(guess))?;
    if eig.eigenvalue <= 0.0 {
        return Ok(IndexResult {
            value: 0.0,
            direction: Some(rs.lift(&eig.eigenvector)),
            kind: IndexKind::Demon,
            order_m: Some(m),
            converged: eig.converged,
        });
    }
    let f = |u: &Vector| -> Result<f64> { Ok(psi_r.apply(u).norm() / (&phi_r * u).norm()) };
    let grad = |u: &Vector| -> Result<Vector> {
        let p = psi_r.apply_partial(u);
        let v = &p * u;
        let w = &phi_r * u;
        let (nv, nw) = (v.norm(), w.norm());
        if nv == 0.0 {
            return Ok(Vector::zeros(u.len()));
        }
        let dv = p.transpose() * &v * (m as f64 / nv);
        let dw = phi_r.transpose() * &w / nw;
        Ok((dv * nw - dw * nv) / (nw * nw))
    };
    let mut starts = vec![eig.eigenvector.normalize()];
    starts.extend(start_vectors(rs.dim(), &cfg.with_guess(None)));
    let (value, u, conv) = refine(f, grad, starts)?;
    Ok(IndexResult {
        value,
        direction: Some(rs.lift(&u)),
        kind: IndexKind::Demon,
        order_m: Some(m),
        converged: eig.converged && conv,
    })
}

/// `C^(m) x^m / C^(2) x²` at `x`.
pub fn temon_quotient(stack: &SttStack, m: usize, x: &Vector) -> Result<f64> {
    let c = cauchy_green(stack, m)?;
    let c2 = cauchy_green(stack, 2)?;
    Ok(c.apply(x) / c2.apply(x))
}

/// TEMoN: `τ_{m,R} = R^(m-2) max_{|x|=1} |C^(m) x^m / C^(2) x²|`.
///
/// Each sign follows the shifted power iteration on the pulled-back tensor
/// `±C^(m)(S⁻¹·, .., S⁻¹·)` and then an ascent on the quotient.
pub fn temon(stack: &SttStack, m: usize, radius: f64, cfg: &PowerIterConfig) -> Result<IndexResult> {
    if !(3..=4).contains(&m) {
        return Err(Error::UnsupportedOrder { order: m, max: 4 });
    }
    let c = cauchy_green(stack, m)?;
    let higher: Vec<&Tensor1m> = (2..m).map(|p| stt_of_order(stack, p)).collect::<Result<_>>()?;
    let rs = RowSpace::new(&stack.phi, &higher)?;
    let c_r = c.map_inputs(&rs.basis)?.symmetrize()?;
    let phi_r = &rs.phi * &rs.basis;
    let c2_r = phi_r.transpose() * &phi_r;
    let s_inv = rs
        .s
        .clone()
        .lu()
        .solve(&Matrix::identity(rs.dim(), rs.dim()))
        .ok_or(Error::Singular { what: "STM", condition: f64::INFINITY })?;
    let pulled = c_r.map_inputs(&s_inv)?.symmetrize()?;
    // The conservative shift slows the iteration by about α/λ.
    let eig_cfg = PowerIterConfig { max_iters: cfg.max_iters.saturating_mul(20), ..cfg.clone() };
    let mut best: Option<(f64, Vector, bool)> = None;
    for sign in [1.0, -1.0] {
        let signed: Tensor0m = pulled.scaled(sign);
        let eig = shifted_z_eig_max(&signed, &eig_cfg)?;
        let u0 = (&s_inv * &eig.eigenvector).normalize();
        let cs = c_r.scaled(sign);
        let f = |u: &Vector| -> Result<f64> { Ok(cs.apply(u) / u.dot(&(&c2_r * u))) };
        let grad = |u: &Vector| -> Result<Vector> {
            let a = cs.apply(u);
            let da = cs.apply_partial(u) * m as f64;
            let b = u.dot(&(&c2_r * u));
            let db = &c2_r * u * 2.0;
            Ok((da * b - db * a) / (b * b))
        };
        let mut starts = vec![u0];
        starts.extend(start_vectors(rs.dim(), &cfg.with_guess(None)));
        let (value, u, conv) = refine(f, grad, starts)?;
        let conv = conv && eig.converged;
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, u, conv));
        }
    }
    let (value, u, converged) = best.expect("two signs evaluated");
    Ok(IndexResult {
        value: value.max(0.0) * radius.powi(m as i32 - 2),
        direction: Some(rs.lift(&u)),
        kind: IndexKind::Temon,
        order_m: Some(m),
        converged,
    })
}

/// `ℶ_{m,R} ≤ Σ_{l=2}^m R^(l-1)/l! · μ^(l)`.
pub fn beth_bound(stack: &SttStack, m: usize, radius: f64, cfg: &PowerIterConfig) -> Result<IndexResult> {
    if !(2..=3).contains(&m) {
        return Err(Error::UnsupportedOrder { order: m, max: 3 });
    }
    let mut value = 0.0;
    let mut converged = true;
    let mut factorial = 1.0;
    for l in 2..=m {
        factorial *= l as f64;
        let d = demon(stack, l, cfg)?;
        converged &= d.converged;
        value += radius.powi(l as i32 - 1) / factorial * d.value;
    }
    Ok(IndexResult { value, direction: None, kind: IndexKind::BethBound, order_m: Some(m), converged })
}

/// `|Σ_{l=2}^m Ψ^(l) x^l / l!| / |Φ x|` at `x`.
pub fn beth_quotient(stack: &SttStack, m: usize, x: &Vector) -> Result<f64> {
    let mut num = stack.psi2()?.apply(x) * 0.5;
    if m >= 3 {
        num += stack.psi3()?.apply(x) / 6.0;
    }
    Ok(num.norm() / (&stack.phi * x).norm())
}

/// The two stylized 2-state maps: `Φ = diag(1, 0)` with `Ψ²₁₁ = 1`
/// (unprimed) or `Ψ¹₁₁ = 1` (primed), indices zero based here.
pub fn stylized_stack(primed: bool) -> Result<SttStack> {
    let phi = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let row = if primed { 0 } else { 1 };
    let psi2 = Tensor1m::from_fn(2, 2, 2, |i, j| if i == row && j == [0, 0] { 1.0 } else { 0.0 })?;
    let psi3 = Tensor1m::zeros(2, 2, 3)?;
    SttStack::synthetic(phi, Some(psi2), Some(psi3))
}
