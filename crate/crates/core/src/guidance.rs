//! Guidance error tensors built from STT blocks, and their norm bounds.
//!
//! Position rows are `0..3` and velocity columns `3..6` of the STM; `M` is the
//! inverse of the position-velocity block `Φ^r_v`.

use std::ops::Range;

use crate::dynamics::SttStack;
use crate::eigen::PowerIterConfig;
use crate::error::{Error, Result};
use crate::norms::{norm_2, NormResult};
use crate::tensor::{top_singular, Matrix, Tensor1m, Vector};

/// Condition number of `Φ^r_v` above which inversion is refused.
pub const MAX_PHIRV_CONDITION: f64 = 1e12;

const R: Range<usize> = 0..3;
const V: Range<usize> = 3..6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GuidanceKind {
    /// Second-order position response to a velocity impulse, `Ψ^r_vv`.
    PropagationVv,
    /// Miss distance after a first-order targeting impulse.
    MissE1,
    /// Miss distance after a second-order targeting impulse.
    MissE2,
    /// Velocity error of the first-order impulse.
    VelocityErr1,
    /// Velocity error of the second-order impulse.
    VelocityErr2,
    /// Final position error of a first-order rendezvous correction.
    RendezvousF1,
}

impl GuidanceKind {
    pub const ALL: [GuidanceKind; 6] = [
        GuidanceKind::PropagationVv,
        GuidanceKind::MissE1,
        GuidanceKind::MissE2,
        GuidanceKind::VelocityErr1,
        GuidanceKind::VelocityErr2,
        GuidanceKind::RendezvousF1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GuidanceKind::PropagationVv => "propagation_vv",
            GuidanceKind::MissE1 => "miss_e1",
            GuidanceKind::MissE2 => "miss_e2",
            GuidanceKind::VelocityErr1 => "velocity_err_1",
            GuidanceKind::VelocityErr2 => "velocity_err_2",
            GuidanceKind::RendezvousF1 => "rendezvous_f1",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Parse(format!("unknown guidance tensor '{name}'")))
    }

    /// STT order needed to build the tensor.
    pub fn required_stt_order(self) -> usize {
        match self {
            GuidanceKind::MissE2 | GuidanceKind::VelocityErr2 => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GuidanceErrorTensor {
    pub kind: GuidanceKind,
    pub tensor: Tensor1m,
    pub phirv_condition: f64,
}

impl GuidanceErrorTensor {
    /// `½` for the raw propagation tensor, 1 for tensors that already carry it.
    pub fn bound_coefficient(&self) -> f64 {
        if self.kind == GuidanceKind::PropagationVv {
            0.5
        } else {
            1.0
        }
    }

    pub fn order(&self) -> usize {
        self.tensor.order()
    }
}

fn phi_block(stack: &SttStack, rows: Range<usize>, cols: Range<usize>) -> Matrix {
    stack.phi.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

fn condition(m: &Matrix) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// `(Φ^r_v)⁻¹` by LU with partial pivoting, and the condition number of `Φ^r_v`.
fn phirv_inverse(stack: &SttStack) -> Result<(Matrix, f64)> {
    let phirv = phi_block(stack, R, V);
    let cond = condition(&phirv);
    if !(cond <= MAX_PHIRV_CONDITION) {
        return Err(Error::Singular { what: "position-velocity STM block", condition: cond });
    }
    let lu = phirv.lu();
    let inv = lu.solve(&Matrix::identity(3, 3)).ok_or(Error::Singular {
        what: "position-velocity STM block",
        condition: cond,
    })?;
    Ok((inv, cond))
}

fn psi_block(stack: &SttStack, ins: &[Range<usize>]) -> Result<Tensor1m> {
    let psi = if ins.len() == 2 { stack.psi2()? } else { stack.psi3()? };
    psi.slice_block(R, ins)
}

pub fn propagation_vv(stack: &SttStack) -> Result<GuidanceErrorTensor> {
    Ok(GuidanceErrorTensor {
        kind: GuidanceKind::PropagationVv,
        tensor: psi_block(stack, &[V, V])?,
        phirv_condition: condition(&phi_block(stack, R, V)),
    })
}

/// Miss-distance tensor of order `m + 1`, mapping the target offset `δr*` to
/// `δr_f - δr*` after the order-`m` targeting impulse.
///
/// `E1 = ½ Ψ^r_vv(M·, M·)` and
/// `E2 = [-½ Ψ^r_vv(·, M Ψ^r_vv(·,·)) + ⅙ Ψ^r_vvv](M·, M·, M·)`.
pub fn miss_distance_tensor(stack: &SttStack, m: usize) -> Result<GuidanceErrorTensor> {
    let (inv, cond) = phirv_inverse(stack)?;
    let psi_vv = psi_block(stack, &[V, V])?;
    let (kind, tensor) = match m {
        1 => (GuidanceKind::MissE1, psi_vv.scaled(0.5).map_inputs(&inv)?),
        2 => {
            let m_psi = psi_vv.map_output(&inv)?;
            let psi_vvv = psi_block(stack, &[V, V, V])?;
            let t = Tensor1m::from_fn(3, 3, 3, |i, j| {
                let cross: f64 = (0..3).map(|q| psi_vv.get(i, &[j[0], q]) * m_psi.get(q, &[j[1], j[2]])).sum();
                -0.5 * cross + psi_vvv.get(i, j) / 6.0
            })?;
            (GuidanceKind::MissE2, t.map_inputs(&inv)?)
        }
        _ => return Err(Error::UnsupportedOrder { order: m, max: 2 }),
    };
    Ok(GuidanceErrorTensor { kind, tensor, phirv_condition: cond })
}

/// `M E^(m)`: the exact-minus-approximate impulse as a function of `δr*`.
pub fn velocity_error_tensor(stack: &SttStack, m: usize) -> Result<GuidanceErrorTensor> {
    let miss = miss_distance_tensor(stack, m)?;
    let (inv, _) = phirv_inverse(stack)?;
    let kind = if m == 1 { GuidanceKind::VelocityErr1 } else { GuidanceKind::VelocityErr2 };
    Ok(GuidanceErrorTensor {
        kind,
        tensor: miss.tensor.map_output(&inv)?,
        phirv_condition: miss.phirv_condition,
    })
}

/// Final position error of the rendezvous correction `δv0 = -K̃ δr0`, with
/// `K̃ = M Φ^r_r`:
/// `F1 = ½ (Ψrr - Ψrv(·,K̃·) - Ψvr(K̃·,·) + Ψvv(K̃·,K̃·))`.
pub fn rendezvous_tensor(stack: &SttStack) -> Result<GuidanceErrorTensor> {
    let (inv, cond) = phirv_inverse(stack)?;
    let k = &inv * phi_block(stack, R, R);
    let rr = psi_block(stack, &[R, R])?;
    let rv = psi_block(stack, &[R, V])?;
    let vv = psi_block(stack, &[V, V])?;
    let kvv = vv.map_inputs(&k)?;
    let t = Tensor1m::from_fn(3, 3, 2, |i, j| {
        let rvk: f64 = (0..3).map(|l| rv.get(i, &[j[0], l]) * k[(l, j[1])]).sum();
        let vrk: f64 = (0..3).map(|l| rv.get(i, &[j[1], l]) * k[(l, j[0])]).sum();
        0.5 * (rr.get(i, j) - rvk - vrk + kvv.get(i, j))
    })?;
    Ok(GuidanceErrorTensor { kind: GuidanceKind::RendezvousF1, tensor: t, phirv_condition: cond })
}

pub fn guidance_tensor(stack: &SttStack, kind: GuidanceKind) -> Result<GuidanceErrorTensor> {
    match kind {
        GuidanceKind::PropagationVv => propagation_vv(stack),
        GuidanceKind::MissE1 => miss_distance_tensor(stack, 1),
        GuidanceKind::MissE2 => miss_distance_tensor(stack, 2),
        GuidanceKind::VelocityErr1 => velocity_error_tensor(stack, 1),
        GuidanceKind::VelocityErr2 => velocity_error_tensor(stack, 2),
        GuidanceKind::RendezvousF1 => rendezvous_tensor(stack),
    }
}

/// Dominant input direction of the linear map feeding the tensor, used as the
/// first power-iteration start.
pub fn initial_direction(stack: &SttStack, kind: GuidanceKind) -> Option<Vector> {
    let phirv = phi_block(stack, R, V);
    match kind {
        GuidanceKind::PropagationVv => Some(top_singular(&phirv).1),
        GuidanceKind::RendezvousF1 => {
            let inv = phirv.try_inverse()?;
            Some(top_singular(&(inv * phi_block(stack, R, R))).1)
        }
        _ => Some(top_singular(&phirv.try_inverse()?).1),
    }
}

/// 2-norm of a guidance tensor with the kind's preferred first start.
pub fn guidance_norm(stack: &SttStack, t: &GuidanceErrorTensor, cfg: &PowerIterConfig) -> Result<NormResult> {
    norm_2(&t.tensor, &cfg.with_guess(initial_direction(stack, t.kind)))
}

/// `coefficient · |T|₂ · R^order` at each scale, with the norm computed once.
pub fn bound_curve(t: &GuidanceErrorTensor, norm: &NormResult, scales: &[f64]) -> Vec<(f64, f64)> {
    let c = t.bound_coefficient() * norm.value;
    scales.iter().map(|&r| (r, c * r.powi(t.order() as i32))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate_stt, DynamicsModel, Tolerances};

    fn stack(order: usize) -> SttStack {
        let x0 = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.05]);
        propagate_stt(DynamicsModel::TwoBodyNondim, &x0, 0.0, 0.7, order, Tolerances::default()).unwrap()
    }

    #[test]
    fn miss_e1_is_half_propagation_through_inverse() {
        let s = stack(2);
        let e1 = miss_distance_tensor(&s, 1).unwrap();
        let p = propagation_vv(&s).unwrap();
        let (inv, _) = phirv_inverse(&s).unwrap();
        let r = Vector::from_vec(vec![0.3, -0.2, 0.5]);
        let lhs = e1.tensor.apply(&r);
        let rhs = p.tensor.apply(&(&inv * &r)) * 0.5;
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn second_order_tensor_requires_psi3() {
        let s = stack(2);
        assert!(matches!(miss_distance_tensor(&s, 2), Err(Error::MissingOrder { .. })));
        let s3 = stack(3);
        assert_eq!(miss_distance_tensor(&s3, 2).unwrap().order(), 3);
    }

    #[test]
    fn singular_block_reports_condition() {
        let x0 = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = propagate_stt(DynamicsModel::TwoBodyNondim, &x0, 0.0, std::f64::consts::TAU, 2, Tolerances::default())
            .unwrap();
        match miss_distance_tensor(&s, 1) {
            Err(Error::Singular { condition, .. }) => assert!(condition > 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn bound_curve_scaling() {
        let s = stack(2);
        let t = propagation_vv(&s).unwrap();
        let n = guidance_norm(&s, &t, &PowerIterConfig::default()).unwrap();
        let c = bound_curve(&t, &n, &[1.0, 2.0]);
        assert!((c[1].1 / c[0].1 - 4.0).abs() < 1e-12);
        assert!((c[0].1 - 0.5 * n.value).abs() < 1e-15);
    }
}
