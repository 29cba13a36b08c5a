//! Operator norms of `Tensor1m` and their cheap upper bounds.

use crate::eigen::{d_eig_max_square, z_eig_max_square, PowerIterConfig};
use crate::error::{Error, Result};
use crate::tensor::{matrix_frobenius, top_singular, Matrix, Tensor1m, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    /// Induced 2-norm `max_{|x|=1} |B x^m|`.
    Two,
    /// 2-norm over the ellipsoid `xᵀ D x = 1`.
    TwoD,
    /// `max_{|x|=1} |B x^m|_∞`.
    InfTwo,
    /// `max_{|x|=1} |B x|_F` for `m = 2`.
    FrobTwo,
    /// Largest singular value of the `n_o x n^m` unfolding.
    TwoUpperFlatten,
    /// Frobenius norm of the row-wise absolute sums.
    FrobInfUpper,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::Two => "norm_2",
            NormKind::TwoD => "norm_2d",
            NormKind::InfTwo => "norm_inf2",
            NormKind::FrobTwo => "norm_frob2",
            NormKind::TwoUpperFlatten => "norm_2_upper",
            NormKind::FrobInfUpper => "norm_frobinf_upper",
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormResult {
    pub value: f64,
    pub maximizer: Option<Vector>,
    pub kind: NormKind,
    pub converged: bool,
    pub restarts_used: usize,
}

impl NormResult {
    fn exact(kind: NormKind, value: f64, maximizer: Option<Vector>) -> Self {
        Self { value, maximizer, kind, converged: true, restarts_used: 0 }
    }
}

pub fn norm_2(b: &Tensor1m, cfg: &PowerIterConfig) -> Result<NormResult> {
    let r = z_eig_max_square(b, cfg)?;
    Ok(NormResult {
        value: r.eigenvalue.max(0.0).sqrt(),
        maximizer: Some(r.eigenvector),
        kind: NormKind::Two,
        converged: r.converged,
        restarts_used: r.restarts_used,
    })
}

/// The maximizer is scaled so that `xᵀ D x = 1`.
pub fn norm_2d(b: &Tensor1m, d: &Matrix, cfg: &PowerIterConfig) -> Result<NormResult> {
    let r = d_eig_max_square(b, d, cfg)?;
    Ok(NormResult {
        value: r.eigenvalue.max(0.0).sqrt(),
        maximizer: Some(r.eigenvector),
        kind: NormKind::TwoD,
        converged: r.converged,
        restarts_used: r.restarts_used,
    })
}

/// Defined for `m = 1` (largest row 2-norm) and `m = 2` (largest absolute
/// eigenvalue over the symmetric slices).
pub fn norm_inf2(b: &Tensor1m) -> Result<NormResult> {
    match b.order() {
        1 => {
            let m = b.to_matrix();
            let mut best = (0.0, Vector::zeros(b.dim_in()));
            for row in m.row_iter() {
                let norm = row.norm();
                if norm > best.0 || best.1.norm() == 0.0 {
                    let dir = if norm > 0.0 { row.transpose() / norm } else { unit(b.dim_in()) };
                    best = (norm, dir);
                }
            }
            Ok(NormResult::exact(NormKind::InfTwo, best.0, Some(best.1)))
        }
        2 => {
            let b = b.symmetrized();
            let n = b.dim_in();
            let block = n * n;
            let mut best = (-1.0, unit(n));
            for slice in b.data().chunks(block) {
                let s = Matrix::from_row_slice(n, n, slice);
                let eig = s.symmetric_eigen();
                let (k, val) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (k, v.abs()))
                    .fold((0, -1.0), |a, c| if c.1 > a.1 { c } else { a });
                if val > best.0 {
                    best = (val, eig.eigenvectors.column(k).into_owned());
                }
            }
            Ok(NormResult::exact(NormKind::InfTwo, best.0.max(0.0), Some(best.1)))
        }
        order => Err(Error::UnsupportedOrder { order, max: 2 }),
    }
}

/// `m = 2` only: the largest singular value of the row-flattened tensor.
pub fn norm_frob2(b: &Tensor1m) -> Result<NormResult> {
    let flat = b.flatten_last()?;
    let (s, v) = top_singular(&flat);
    Ok(NormResult::exact(NormKind::FrobTwo, s, Some(v)))
}

/// `B' = Σ_i Bⁱᵀ Bⁱ`; its largest eigenvalue is the square of [`norm_frob2`].
pub fn frob2_gram(b: &Tensor1m) -> Result<Matrix> {
    if b.order() != 2 {
        return Err(Error::UnsupportedOrder { order: b.order(), max: 2 });
    }
    let n = b.dim_in();
    let mut g = Matrix::zeros(n, n);
    for slice in b.data().chunks(n * n) {
        let s = Matrix::from_row_slice(n, n, slice);
        g += s.transpose() * &s;
    }
    Ok(g)
}

/// Upper bound on [`norm_2`] from the `n_o x n^m` unfolding.
pub fn norm_2_upper_flatten(b: &Tensor1m) -> NormResult {
    let (s, _) = top_singular(&b.flatten_first());
    NormResult::exact(NormKind::TwoUpperFlatten, s, None)
}

/// `m = 2` only: `|B^∞|_F` with `(B^∞)ⁱ_j = Σ_k |Bⁱ_jk|`.
pub fn norm_frobinf_upper(b: &Tensor1m) -> Result<NormResult> {
    if b.order() != 2 {
        return Err(Error::UnsupportedOrder { order: b.order(), max: 2 });
    }
    let n = b.dim_in();
    let rows: Vec<f64> = b
        .data()
        .chunks(n)
        .map(|c| c.iter().map(|v| v.abs()).sum())
        .collect();
    let m = Matrix::from_row_slice(b.dim_out(), n, &rows);
    Ok(NormResult::exact(NormKind::FrobInfUpper, matrix_frobenius(&m), None))
}

/// Evaluate the norm objective `|B x^m|_a` (or `|B x|_F`) at `x`.
pub fn objective(b: &Tensor1m, kind: NormKind, x: &Vector) -> f64 {
    match kind {
        NormKind::Two | NormKind::TwoD | NormKind::TwoUpperFlatten | NormKind::FrobInfUpper => {
            b.apply(x).norm()
        }
        NormKind::InfTwo => b.apply(x).amax(),
        NormKind::FrobTwo => matrix_frobenius(&b.apply_partial(x)),
    }
}

fn unit(n: usize) -> Vector {
    let mut e = Vector::zeros(n);
    if n > 0 {
        e[0] = 1.0;
    }
    e
}
