//! State transition tensor propagation by integrating the variational
//! equations alongside the reference trajectory.

use std::cell::RefCell;

use ode_solvers::{Dop853, OutputType, System};

use super::model::{as_state, DynamicsModel, Field, FieldDerivs, Scaling};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor0m, Tensor1m, Vector};

/// Relative and absolute integration tolerances, applied in canonical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub accepted_steps: u32,
    pub rejected_steps: u32,
    pub evaluations: u32,
}

impl IntegratorStats {
    fn add(&mut self, s: ode_solvers::dop_shared::Stats) {
        self.accepted_steps += s.accepted_steps;
        self.rejected_steps += s.rejected_steps;
        self.evaluations += s.num_eval;
    }
}

/// STM and higher-order STTs from `t0` to `tf` about the trajectory from `x0`.
#[derive(Clone, Debug)]
pub struct SttStack {
    pub model: DynamicsModel,
    pub x0: Vector,
    pub t0: f64,
    pub tf: f64,
    pub order: usize,
    pub tol: Tolerances,
    pub xf: Vector,
    pub phi: Matrix,
    pub psi2: Option<Tensor1m>,
    pub psi3: Option<Tensor1m>,
    pub stats: IntegratorStats,
}

pub const MAX_STT_ORDER: usize = 3;

const N: usize = 6;
const N2: usize = 36;
const N3: usize = 216;
const N4: usize = 1296;

fn state_len(order: usize) -> usize {
    [N, N + N2, N + N2 + N3, N + N2 + N3 + N4][order]
}

/// Right-hand side of an augmented system in canonical units.
trait Rhs {
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

struct Adapter<'a, R: Rhs> {
    rhs: &'a R,
    failure: &'a RefCell<Option<(f64, Error)>>,
}

impl<R: Rhs> System<f64, Vector> for Adapter<'_, R> {
    fn system(&self, t: f64, y: &Vector, dy: &mut Vector) {
        if let Err(e) = self.rhs.rhs(y.as_slice(), dy.as_mut_slice()) {
            dy.fill(f64::NAN);
            let mut f = self.failure.borrow_mut();
            if f.is_none() {
                *f = Some((t, e));
            }
        }
    }
}

fn integrate<R: Rhs>(rhs: &R, t0: f64, tf: f64, y0: Vector, tol: Tolerances, stats: &mut IntegratorStats) -> Result<Vector> {
    if t0 == tf {
        return Ok(y0);
    }
    let failure = RefCell::new(None);
    let span = tf - t0;
    let mut solver = Dop853::from_param(
        Adapter { rhs, failure: &failure },
        t0,
        tf,
        span,
        y0,
        tol.rtol,
        tol.atol,
        0.9,
        0.0,
        0.333,
        6.0,
        span.abs(),
        0.0,
        1_000_000,
        u32::MAX,
        OutputType::Sparse,
    );
    let outcome = solver.integrate();
    let y = solver.y_out().last().cloned();
    drop(solver);
    let failed = failure.borrow_mut().take();
    if let Some((t, e)) = failed {
        return Err(Error::Propagation { time: t, reason: e.to_string() });
    }
    let s = outcome.map_err(|e| Error::Propagation { time: f64::NAN, reason: e.to_string() })?;
    stats.add(s);
    let y = y.expect("solver stores the final state");
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Propagation { time: tf, reason: "non-finite state".into() });
    }
    Ok(y)
}

/// Variational equations to the requested order.
struct Variational {
    field: Field,
    order: usize,
}

/// `out[i] = Σ_l A^i_l t[l]` for a stacked array with 6 leading rows of `block` entries.
fn apply_a(d: &FieldDerivs, t: &[f64], out: &mut [f64], block: usize) {
    for i in 0..3 {
        out[i * block..(i + 1) * block].copy_from_slice(&t[(3 + i) * block..(4 + i) * block]);
        let dst = &mut out[(3 + i) * block..(4 + i) * block];
        dst.fill(0.0);
        for j in 0..3 {
            for (c, row) in [(d.ar[i][j], j), (d.av[i][j], 3 + j)] {
                if c != 0.0 {
                    for (o, v) in dst.iter_mut().zip(&t[row * block..(row + 1) * block]) {
                        *o += c * v;
                    }
                }
            }
        }
    }
}

impl Rhs for Variational {
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let x: [f64; 6] = y[..N].try_into().expect("state slice");
        let d = self.field.eval(&x, self.order)?;
        dy[..N].copy_from_slice(&d.f);
        if self.order == 0 {
            return Ok(());
        }
        let phi = &y[N..N + N2];
        apply_a(&d, phi, &mut dy[N..N + N2], N);
        if self.order == 1 {
            return Ok(());
        }
        let psi = &y[N + N2..N + N2 + N3];
        let dpsi = &mut dy[N + N2..N + N2 + N3];
        apply_a(&d, psi, dpsi, N2);
        // u[i][k][a] = Σ_j a2[i][j][k] Φ[j][a]
        let mut u = [[[0f64; N]; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                for a in 0..N {
                    u[i][k][a] = (0..3).map(|j| d.a2[i][j][k] * phi[j * N + a]).sum();
                }
            }
        }
        for i in 0..3 {
            for a in 0..N {
                for b in 0..N {
                    let s: f64 = (0..3).map(|k| u[i][k][a] * phi[k * N + b]).sum();
                    dpsi[(3 + i) * N2 + a * N + b] += s;
                }
            }
        }
        if self.order == 2 {
            return Ok(());
        }
        let psi3 = &y[N + N2 + N3..];
        let dpsi3 = &mut dy[N + N2 + N3..];
        apply_a(&d, psi3, dpsi3, N3);
        // w[i][k][ab] = Σ_j a2[i][j][k] Ψ[j][ab]
        let mut w = [[[0f64; N2]; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                for ab in 0..N2 {
                    w[i][k][ab] = (0..3).map(|j| d.a2[i][j][k] * psi[j * N2 + ab]).sum();
                }
            }
        }
        // g[i][j][k][c] = Σ_l a3[i][j][k][l] Φ[l][c]; h[i][j][b][c] = Σ_k g Φ[k][b]
        let mut h = [[[0f64; N2]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut g = [[0f64; N]; 3];
                for k in 0..3 {
                    for c in 0..N {
                        g[k][c] = (0..3).map(|l| d.a3[i][j][k][l] * phi[l * N + c]).sum();
                    }
                }
                for b in 0..N {
                    for c in 0..N {
                        h[i][j][b * N + c] = (0..3).map(|k| g[k][c] * phi[k * N + b]).sum();
                    }
                }
            }
        }
        for i in 0..3 {
            let base = (3 + i) * N3;
            for a in 0..N {
                for b in 0..N {
                    for c in 0..N {
                        let mut s = 0.0;
                        for k in 0..3 {
                            s += w[i][k][a * N + b] * phi[k * N + c]
                                + w[i][k][a * N + c] * phi[k * N + b]
                                + w[i][k][b * N + c] * phi[k * N + a];
                        }
                        for j in 0..3 {
                            s += h[i][j][b * N + c] * phi[j * N + a];
                        }
                        dpsi3[base + (a * N + b) * N + c] += s;
                    }
                }
            }
        }
        Ok(())
    }
}

fn initial_augmented(x: &[f64; 6], order: usize) -> Vector {
    let mut y = Vector::zeros(state_len(order));
    y.as_mut_slice()[..N].copy_from_slice(x);
    if order >= 1 {
        for i in 0..N {
            y[N + i * N + i] = 1.0;
        }
    }
    y
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > MAX_STT_ORDER {
        return Err(Error::UnsupportedOrder { order, max: MAX_STT_ORDER });
    }
    Ok(())
}

/// Assemble a stack in model units from a canonical augmented state.
fn unpack(model: DynamicsModel, sc: &Scaling, x0: &Vector, t0: f64, tf: f64, order: usize, tol: Tolerances, y: &Vector, stats: IntegratorStats) -> SttStack {
    let s = sc.diag();
    let inv: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    let ys = y.as_slice();
    let xf = sc.from_canonical(&ys[..N]);
    let phi = Matrix::from_fn(N, N, |i, a| ys[N + i * N + a] * s[i] * inv[a]);
    let psi2 = (order >= 2).then(|| {
        let data = (0..N3)
            .map(|f| {
                let (i, a, b) = (f / N2, (f / N) % N, f % N);
                ys[N + N2 + f] * s[i] * inv[a] * inv[b]
            })
            .collect();
        Tensor1m::from_raw(N, N, 2, data).symmetrized()
    });
    let psi3 = (order >= 3).then(|| {
        let data = (0..N4)
            .map(|f| {
                let (i, a, b, c) = (f / N3, (f / N2) % N, (f / N) % N, f % N);
                ys[N + N2 + N3 + f] * s[i] * inv[a] * inv[b] * inv[c]
            })
            .collect();
        Tensor1m::from_raw(N, N, 3, data).symmetrized()
    });
    SttStack { model, x0: x0.clone(), t0, tf, order, tol, xf, phi, psi2, psi3, stats }
}

/// Propagate the STM (order 1) and STTs up to `order` (at most 3).
pub fn propagate_stt(model: DynamicsModel, x0: &Vector, t0: f64, tf: f64, order: usize, tol: Tolerances) -> Result<SttStack> {
    Ok(propagate_stt_grid(model, x0, t0, &[tf], order, tol)?.pop().expect("one time requested"))
}

/// Propagate through a sequence of times, continuing each segment from the
/// previous one. Every returned stack is referenced to `t0`.
pub fn propagate_stt_grid(model: DynamicsModel, x0: &Vector, t0: f64, times: &[f64], order: usize, tol: Tolerances) -> Result<Vec<SttStack>> {
    check_order(order)?;
    let x = as_state(x0)?;
    let sc = model.scaling(&x);
    let rhs = Variational { field: model.field(), order };
    let mut y = initial_augmented(&sc.to_canonical(&x), order);
    let mut t = t0;
    let mut stats = IntegratorStats::default();
    let mut out = Vec::with_capacity(times.len());
    for &tf in times {
        y = integrate(&rhs, t / sc.tu, tf / sc.tu, y, tol, &mut stats)
            .map_err(|e| rescale_time(e, sc.tu))?;
        t = tf;
        out.push(unpack(model, &sc, x0, t0, tf, order, tol, &y, stats));
    }
    Ok(out)
}

fn rescale_time(e: Error, tu: f64) -> Error {
    match e {
        Error::Propagation { time, reason } => Error::Propagation { time: time * tu, reason },
        other => other,
    }
}

/// Final state only.
pub fn propagate_state(model: DynamicsModel, x0: &Vector, t0: f64, tf: f64, tol: Tolerances) -> Result<Vector> {
    let x = as_state(x0)?;
    let sc = model.scaling(&x);
    let rhs = Variational { field: model.field(), order: 0 };
    let y = initial_augmented(&sc.to_canonical(&x), 0);
    let y = integrate(&rhs, t0 / sc.tu, tf / sc.tu, y, tol, &mut IntegratorStats::default())
        .map_err(|e| rescale_time(e, sc.tu))?;
    Ok(sc.from_canonical(y.as_slice()))
}

/// Deviation dynamics about a reference: the linear part `l = Φ δx0` and the
/// nonlinear remainder `e = δx - l` are integrated separately, each scaled by
/// the size of the initial deviation so tolerances act relative to it.
struct Deviation {
    field: Field,
    l_scale: f64,
    e_scale: f64,
    with_stm: bool,
}

impl Rhs for Deviation {
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let x: [f64; 6] = y[..N].try_into().expect("state slice");
        let d = self.field.eval(&x, 1)?;
        dy[..N].copy_from_slice(&d.f);
        apply_a(&d, &y[N..2 * N], &mut dy[N..2 * N], 1);
        apply_a(&d, &y[2 * N..3 * N], &mut dy[2 * N..3 * N], 1);
        let dr: Vec<f64> = (0..3).map(|i| y[N + i] * self.l_scale + y[2 * N + i] * self.e_scale).collect();
        let rem = self.field.accel_remainder(&x[..3], &dr)?;
        for i in 0..3 {
            dy[2 * N + 3 + i] += rem[i] / self.e_scale;
        }
        if self.with_stm {
            let mut xp = x;
            for i in 0..N {
                xp[i] += y[N + i] * self.l_scale + y[2 * N + i] * self.e_scale;
            }
            let dp = self.field.eval(&xp, 1)?;
            apply_a(&dp, &y[3 * N..3 * N + N2], &mut dy[3 * N..3 * N + N2], N);
        }
        Ok(())
    }
}

/// Result of a nonlinear deviation propagation, in model units.
#[derive(Clone, Debug)]
pub struct DeviationResult {
    /// `Φ δx0` at `tf`.
    pub linear: Vector,
    /// `δx(tf) - Φ δx0`.
    pub remainder: Vector,
    /// STM of the perturbed trajectory, when requested.
    pub phi_perturbed: Option<Matrix>,
}

impl DeviationResult {
    pub fn total(&self) -> Vector {
        &self.linear + &self.remainder
    }
}

/// Propagate the deviation `dx0` from the reference initial state `x_ref0`.
pub fn propagate_deviation(
    model: DynamicsModel,
    x_ref0: &Vector,
    dx0: &Vector,
    t0: f64,
    tf: f64,
    tol: Tolerances,
    with_stm: bool,
) -> Result<DeviationResult> {
    let x = as_state(x_ref0)?;
    let dx = as_state(dx0)?;
    let sc = model.scaling(&x);
    let xn = sc.to_canonical(&x);
    let dxn = sc.to_canonical(&dx);
    let size = dxn.iter().map(|v| v * v).sum::<f64>().sqrt();
    if size == 0.0 && !with_stm {
        return Ok(DeviationResult { linear: Vector::zeros(N), remainder: Vector::zeros(N), phi_perturbed: None });
    }
    // size² must stay representable for the remainder scaling
    let size = size.max(1e-150);
    let rhs = Deviation { field: model.field(), l_scale: size, e_scale: size * size, with_stm };
    let len = 3 * N + if with_stm { N2 } else { 0 };
    let mut y = Vector::zeros(len);
    for i in 0..N {
        y[i] = xn[i];
        y[N + i] = dxn[i] / size;
    }
    if with_stm {
        for i in 0..N {
            y[3 * N + i * N + i] = 1.0;
        }
    }
    let y = integrate(&rhs, t0 / sc.tu, tf / sc.tu, y, tol, &mut IntegratorStats::default())
        .map_err(|e| rescale_time(e, sc.tu))?;
    let ys = y.as_slice();
    let scaled = |slice: &[f64], k: f64| -> Vector {
        sc.from_canonical(&slice.iter().map(|v| v * k).collect::<Vec<_>>())
    };
    let phi_perturbed = with_stm.then(|| {
        let s = sc.diag();
        Matrix::from_fn(N, N, |i, a| ys[3 * N + i * N + a] * s[i] / s[a])
    });
    Ok(DeviationResult {
        linear: scaled(&ys[N..2 * N], size),
        remainder: scaled(&ys[2 * N..3 * N], size * size),
        phi_perturbed,
    })
}

impl SttStack {
    /// A stack built from given tensors rather than a trajectory, for index
    /// studies on prescribed maps. Trajectory fields are placeholders.
    pub fn synthetic(phi: Matrix, psi2: Option<Tensor1m>, psi3: Option<Tensor1m>) -> Result<Self> {
        let n = phi.ncols();
        if phi.nrows() != n {
            return Err(Error::Dimension { context: "STM rows", expected: n, found: phi.nrows() });
        }
        for t in psi2.iter().chain(psi3.iter()) {
            if t.dim_out() != n || t.dim_in() != n {
                return Err(Error::Dimension { context: "STT dimension", expected: n, found: t.dim_in() });
            }
        }
        if psi3.is_some() && psi2.is_none() {
            return Err(Error::MissingOrder { required: 2, available: 1 });
        }
        let order = 1 + psi2.is_some() as usize + psi3.is_some() as usize;
        Ok(Self {
            model: DynamicsModel::TwoBodyNondim,
            x0: Vector::zeros(n),
            t0: 0.0,
            tf: 0.0,
            order,
            tol: Tolerances::default(),
            xf: Vector::zeros(n),
            phi,
            psi2,
            psi3,
            stats: IntegratorStats::default(),
        })
    }

    pub fn psi2(&self) -> Result<&Tensor1m> {
        self.psi2.as_ref().ok_or(Error::MissingOrder { required: 2, available: self.order })
    }

    pub fn psi3(&self) -> Result<&Tensor1m> {
        self.psi3.as_ref().ok_or(Error::MissingOrder { required: 3, available: self.order })
    }

    /// Taylor prediction `Φ δx + ½ Ψ δx² + ⅙ Ψ₃ δx³` truncated at `order`.
    pub fn predict(&self, dx: &Vector, order: usize) -> Result<Vector> {
        let mut out = &self.phi * dx;
        if order >= 2 {
            out += self.psi2()?.apply(dx) * 0.5;
        }
        if order >= 3 {
            out += self.psi3()?.apply(dx) / 6.0;
        }
        Ok(out)
    }
}

/// Cauchy-Green tensor of order 2, 3 or 4:
/// `C^(m) = Σ_{p+q=m} Ψ^(p)ᵀ Ψ^(q) / (p! q!)`.
pub fn cauchy_green(stack: &SttStack, order: usize) -> Result<Tensor0m> {
    let phi = Tensor1m::from_matrix(&stack.phi);
    let pairs: Vec<(f64, &Tensor1m, &Tensor1m)> = match order {
        2 => vec![(1.0, &phi, &phi)],
        3 => {
            let p2 = stack.psi2()?;
            vec![(0.5, &phi, p2), (0.5, p2, &phi)]
        }
        4 => {
            let p2 = stack.psi2()?;
            let p3 = stack.psi3()?;
            vec![(1.0 / 6.0, &phi, p3), (0.25, p2, p2), (1.0 / 6.0, p3, &phi)]
        }
        _ => return Err(Error::UnsupportedOrder { order, max: 4 }),
    };
    let n = stack.phi.ncols();
    let mut data = vec![0f64; n.pow(order as u32)];
    for (coef, a, b) in pairs {
        let (ba, bb) = (n.pow(a.order() as u32), n.pow(b.order() as u32));
        for (sa, sb) in a.data().chunks(ba).zip(b.data().chunks(bb)) {
            for (p, &va) in sa.iter().enumerate() {
                if va == 0.0 {
                    continue;
                }
                let row = &mut data[p * bb..(p + 1) * bb];
                for (r, &vb) in row.iter_mut().zip(sb) {
                    *r += coef * va * vb;
                }
            }
        }
    }
    Tensor0m::new(n, order, data)
}
