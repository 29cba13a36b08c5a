//! Numerical checks of the tensor bounds against the full nonlinear flow:
//! sphere sampling, evaluation along the norm maximizer, and a local
//! sphere-constrained maximization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{propagate_deviation, DynamicsModel, SttStack, Tolerances};
use crate::error::{Error, Result};
use crate::guidance::{guidance_tensor, GuidanceErrorTensor, GuidanceKind, MAX_PHIRV_CONDITION};
use crate::optim::{fd_gradient, maximize_on_sphere, SphereAscent};
use crate::sampling::random_unit;
use crate::tensor::{Matrix, Vector};

#[derive(Clone, Debug)]
pub struct SampleMax {
    pub value: f64,
    pub argmax: Vector,
    pub failed: usize,
}

/// Largest objective over `n` uniform points of the sphere of radius `r`.
///
/// Directions are drawn up front from one seeded stream, so the result does
/// not depend on how evaluation is scheduled.
pub fn sample_sphere_max<F>(f: &F, dim: usize, r: f64, n: usize, seed: u64) -> Result<SampleMax>
where
    F: Fn(&Vector) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vector> = (0..n).map(|_| random_unit(&mut rng, dim) * r).collect();
    let values: Vec<Option<f64>> = points
        .par_iter()
        .map(|x| f(x).ok().filter(|v| v.is_finite()))
        .collect();
    let failed = values.iter().filter(|v| v.is_none()).count();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|b| v > b.1) {
                best = Some((i, v));
            }
        }
    }
    let (i, value) = best.ok_or_else(|| Error::Degenerate("every sample failed".into()))?;
    Ok(SampleMax { value, argmax: points[i].clone(), failed })
}

/// Larger objective value at `±r·direction`, with the point that attains it.
pub fn eigvec_eval<F>(f: &F, direction: &Vector, r: f64) -> Result<(f64, Vector)>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let x = direction.normalize() * r;
    let (a, b) = (f(&x)?, f(&-&x)?);
    Ok(if b > a { (b, -x) } else { (a, x) })
}

#[derive(Clone, Debug)]
pub struct OptMax {
    pub value: f64,
    pub argmax: Vector,
    pub iterations: usize,
    pub converged: bool,
}

/// Local maximum over the sphere of radius `r` from `start`, with central
/// differences of step `1e-7 r` for the gradient.
pub fn local_opt_max<F>(f: &F, r: f64, start: &Vector, opts: SphereAscent) -> Result<OptMax>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let h = 1e-7 * r;
    let grad = |x: &Vector| fd_gradient(f, x, h);
    let res = maximize_on_sphere(f, grad, start, r, opts)?;
    Ok(OptMax { value: res.value, argmax: res.x, iterations: res.iterations, converged: res.converged })
}

/// The nonlinear quantity each bound tensor approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// `|δr_f - Φ^r_v δv0|` for an initial velocity offset.
    Propagation,
    /// `|δr_f - δr*|` after the order-`m` targeting impulse for target `δr*`.
    Miss(usize),
    /// `|δv0* - δv0^(m)|` where `δv0*` hits `δr*` exactly.
    Velocity(usize),
    /// `|δr_f|` after the first-order rendezvous correction of `δr0`.
    Rendezvous,
}

impl Objective {
    pub fn name(self) -> String {
        match self {
            Objective::Propagation => "propagation".into(),
            Objective::Miss(m) => format!("miss_{m}"),
            Objective::Velocity(m) => format!("velocity_{m}"),
            Objective::Rendezvous => "rendezvous".into(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "propagation" => Objective::Propagation,
            "miss" | "miss_1" => Objective::Miss(1),
            "miss_2" => Objective::Miss(2),
            "velocity" | "velocity_1" => Objective::Velocity(1),
            "velocity_2" => Objective::Velocity(2),
            "rendezvous" => Objective::Rendezvous,
            other => return Err(Error::Parse(format!("unknown objective '{other}'"))),
        })
    }

    pub fn tensor_kind(self) -> GuidanceKind {
        match self {
            Objective::Propagation => GuidanceKind::PropagationVv,
            Objective::Miss(2) => GuidanceKind::MissE2,
            Objective::Miss(_) => GuidanceKind::MissE1,
            Objective::Velocity(2) => GuidanceKind::VelocityErr2,
            Objective::Velocity(_) => GuidanceKind::VelocityErr1,
            Objective::Rendezvous => GuidanceKind::RendezvousF1,
        }
    }
}

/// A reference trajectory segment with one guidance objective on it. All
/// quantities are in the model's units.
pub struct GuidanceProblem<'a> {
    pub model: DynamicsModel,
    pub stack: &'a SttStack,
    pub objective: Objective,
    pub tol: Tolerances,
    /// `(Φ^r_v)⁻¹`, when the objective needs it.
    m: Option<Matrix>,
    phi_rv: Matrix,
    phi_rr: Matrix,
}

const NEWTON_MAX_ITERS: usize = 30;
/// Shooting stops once the position residual is below this fraction of `|δr*|`.
const NEWTON_TOL: f64 = 1e-12;

impl<'a> GuidanceProblem<'a> {
    pub fn new(stack: &'a SttStack, objective: Objective, tol: Tolerances) -> Result<Self> {
        if let Objective::Miss(m) | Objective::Velocity(m) = objective {
            if !(1..=2).contains(&m) {
                return Err(Error::UnsupportedOrder { order: m, max: 2 });
            }
            if m == 2 {
                stack.psi2()?;
            }
        }
        let phi_rv = stack.phi.view((0, 3), (3, 3)).into_owned();
        let phi_rr = stack.phi.view((0, 0), (3, 3)).into_owned();
        let m = if objective == Objective::Propagation {
            None
        } else {
            let sv = phi_rv.singular_values();
            let cond = sv.max() / sv.min();
            if !(cond <= MAX_PHIRV_CONDITION) {
                return Err(Error::Singular { what: "position-velocity STM block", condition: cond });
            }
            Some(phi_rv.clone().lu().solve(&Matrix::identity(3, 3)).ok_or(Error::Singular {
                what: "position-velocity STM block",
                condition: cond,
            })?)
        };
        Ok(Self { model: stack.model, stack, objective, tol, m, phi_rv, phi_rr })
    }

    pub fn bound_tensor(&self) -> Result<GuidanceErrorTensor> {
        guidance_tensor(self.stack, self.objective.tensor_kind())
    }

    fn inv(&self) -> &Matrix {
        self.m.as_ref().expect("inverse built for guidance objectives")
    }

    fn velocity_state(dv: &Vector) -> Vector {
        Vector::from_fn(6, |i, _| if i < 3 { 0.0 } else { dv[i - 3] })
    }

    /// `δr_f - Φ^r_v δv0` for the impulse `dv`, and optionally the perturbed STM.
    fn remainder(&self, dx0: &Vector, with_stm: bool) -> Result<(Vector, Option<Matrix>)> {
        let s = self.stack;
        let d = propagate_deviation(self.model, &s.x0, dx0, s.t0, s.tf, self.tol, with_stm)?;
        Ok((d.remainder.rows(0, 3).into_owned(), d.phi_perturbed))
    }

    /// Order-`m` series solution for the impulse reaching `δr*`.
    pub fn approximate_impulse(&self, target: &Vector, order: usize) -> Result<Vector> {
        let m = self.inv();
        let dv1 = m * target;
        if order < 2 {
            return Ok(dv1);
        }
        let psi = self.stack.psi2()?.slice_block(0..3, &[3..6, 3..6])?;
        Ok(&dv1 - m * psi.apply(&dv1) * 0.5)
    }

    /// Impulse whose nonlinear trajectory reaches `δr*`, by Newton iteration
    /// with the perturbed trajectory's `Φ^r_v`.
    pub fn exact_impulse(&self, target: &Vector, start: Vector) -> Result<Vector> {
        let scale = target.norm().max(f64::MIN_POSITIVE);
        let mut dv = start;
        let mut last = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITERS {
            let (e, phi) = self.remainder(&Self::velocity_state(&dv), true)?;
            let residual = &self.phi_rv * &dv + e - target;
            let size = residual.norm();
            if size <= NEWTON_TOL * scale || size >= last {
                return Ok(dv);
            }
            last = size;
            let j = phi.expect("STM requested").view((0, 3), (3, 3)).into_owned();
            let step = j.lu().solve(&residual).ok_or(Error::Singular {
                what: "perturbed position-velocity STM block",
                condition: f64::INFINITY,
            })?;
            dv -= step;
        }
        Err(Error::Propagation { time: self.stack.tf, reason: "targeting iteration did not converge".into() })
    }

    /// The nonlinear objective at input `x` (velocity offset for propagation,
    /// target offset for miss and velocity, initial position for rendezvous).
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        match self.objective {
            Objective::Propagation => Ok(self.remainder(&Self::velocity_state(x), false)?.0.norm()),
            Objective::Miss(order) => {
                let dv = self.approximate_impulse(x, order)?;
                let (e, _) = self.remainder(&Self::velocity_state(&dv), false)?;
                Ok((&self.phi_rv * &dv - x + e).norm())
            }
            Objective::Velocity(order) => {
                let dv = self.approximate_impulse(x, order)?;
                let exact = self.exact_impulse(x, dv.clone())?;
                Ok((exact - dv).norm())
            }
            Objective::Rendezvous => {
                let k = self.inv() * &self.phi_rr;
                let dv = -(k * x);
                let dx0 = Vector::from_fn(6, |i, _| if i < 3 { x[i] } else { dv[i - 3] });
                let (e, _) = self.remainder(&dx0, false)?;
                Ok((&self.phi_rr * x + &self.phi_rv * dv + e).norm())
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleSettings {
    pub n_samples: usize,
    pub seed: u64,
    pub enable_opt: bool,
    pub ascent: SphereAscent,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { n_samples: 5000, seed: 0, enable_opt: true, ascent: SphereAscent::default() }
    }
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub scale: f64,
    pub bound: f64,
    pub eigvec_eval: f64,
    pub sampled_max: f64,
    pub optimized_max: f64,
    pub rel_err_bound: f64,
    pub rel_err_sampled: f64,
    pub rel_err_eigvec: f64,
    pub samples_used: usize,
    pub n_failed_samples: usize,
    pub opt_iterations: usize,
    /// Why this scale produced no values, if it failed.
    pub failure: Option<String>,
}

fn relative(a: f64, reference: f64) -> f64 {
    if a == reference {
        0.0
    } else {
        (a - reference) / reference.abs()
    }
}

impl OracleReport {
    fn failed(scale: f64, bound: f64, err: Error) -> Self {
        Self {
            scale,
            bound,
            eigvec_eval: f64::NAN,
            sampled_max: f64::NAN,
            optimized_max: f64::NAN,
            rel_err_bound: f64::NAN,
            rel_err_sampled: f64::NAN,
            rel_err_eigvec: f64::NAN,
            samples_used: 0,
            n_failed_samples: 0,
            opt_iterations: 0,
            failure: Some(err.to_string()),
        }
    }
}

/// Run the three checks at every scale.
///
/// `bound_coefficient` is `c |T|₂` so that the bound at `R` is
/// `c |T|₂ R^order`. The local search starts from the better of `±` the
/// maximizer and from the best sample; the larger result is reported.
pub fn run_protocol<F>(
    f: &F,
    dim: usize,
    direction: &Vector,
    bound_coefficient: f64,
    order: usize,
    scales: &[f64],
    settings: &OracleSettings,
) -> Vec<OracleReport>
where
    F: Fn(&Vector) -> Result<f64> + Sync,
{
    scales
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let bound = bound_coefficient * r.powi(order as i32);
            let seed = settings.seed.wrapping_add(k as u64);
            protocol_at(f, dim, direction, r, seed, settings)
                .map(|(eig, sampled, opt)| OracleReport {
                    scale: r,
                    bound,
                    eigvec_eval: eig,
                    sampled_max: sampled.value,
                    optimized_max: opt.value,
                    rel_err_bound: relative(bound, opt.value),
                    rel_err_sampled: relative(sampled.value, opt.value),
                    rel_err_eigvec: relative(eig, opt.value),
                    samples_used: settings.n_samples - sampled.failed,
                    n_failed_samples: sampled.failed,
                    opt_iterations: opt.iterations,
                    failure: None,
                })
                .unwrap_or_else(|e| OracleReport::failed(r, bound, e))
        })
        .collect()
}

fn protocol_at<F>(
    f: &F,
    dim: usize,
    direction: &Vector,
    r: f64,
    seed: u64,
    settings: &OracleSettings,
) -> Result<(f64, SampleMax, OptMax)>
where
    F: Fn(&Vector) -> Result<f64> + Sync,
{
    if r == 0.0 {
        let zero = Vector::zeros(dim);
        let v = f(&zero)?;
        let sampled = SampleMax { value: v, argmax: zero.clone(), failed: 0 };
        return Ok((v, sampled, OptMax { value: v, argmax: zero, iterations: 0, converged: true }));
    }
    let (eig, eig_x) = eigvec_eval(f, direction, r)?;
    let sampled = sample_sphere_max(f, dim, r, settings.n_samples.max(1), seed)?;
    let mut opt = OptMax { value: eig, argmax: eig_x.clone(), iterations: 0, converged: false };
    if settings.enable_opt {
        let runs: Vec<Result<OptMax>> = [eig_x, sampled.argmax.clone()]
            .par_iter()
            .map(|s| local_opt_max(f, r, s, settings.ascent))
            .collect();
        for run in runs {
            let run = run?;
            if run.value > opt.value {
                opt = run;
            }
        }
    }
    Ok((eig, sampled, opt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_objective(x: &Vector) -> Result<f64> {
        Ok(Vector::from_vec(vec![3.0 * x[0], x[1], x[2]]).norm())
    }

    #[test]
    fn sampling_finds_top_singular_value() {
        let s = sample_sphere_max(&diag_objective, 3, 1.0, 100_000, 1).unwrap();
        assert!(s.value <= 3.0 && s.value > 3.0 * 0.995);
    }

    #[test]
    fn local_search_converges_from_any_start() {
        let start = Vector::from_vec(vec![0.1, 1.0, -0.5]);
        let r = local_opt_max(&diag_objective, 2.0, &start, SphereAscent { max_iters: 200, step_tol: 1e-10 }).unwrap();
        assert!((r.value - 6.0).abs() < 1e-8);
    }

    #[test]
    fn start_at_optimum_is_stationary() {
        let start = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let r = local_opt_max(&diag_objective, 1.0, &start, SphereAscent::default()).unwrap();
        assert_eq!(r.value, 3.0);
    }

    #[test]
    fn zero_objective_reports_zeros() {
        let f = |_: &Vector| Ok(0.0);
        let dir = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let rep = run_protocol(&f, 3, &dir, 0.0, 2, &[0.0, 1.0], &OracleSettings { n_samples: 10, ..Default::default() });
        for r in &rep {
            assert_eq!((r.bound, r.eigvec_eval, r.sampled_max, r.optimized_max), (0.0, 0.0, 0.0, 0.0));
            assert_eq!(r.rel_err_bound, 0.0);
        }
    }
}
