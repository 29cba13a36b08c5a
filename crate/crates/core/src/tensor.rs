//! Dense tensors with one contravariant and `m` covariant indices, plus
//! fully covariant tensors.
//!
//! Storage is row major: the contravariant index is slowest, covariant
//! indices follow in order with the last one fastest. All indices are
//! zero based.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Highest covariant order carried by a [`Tensor1m`].
pub const MAX_ORDER_1M: usize = 4;
/// Highest order accepted by [`Tensor0m`] symmetrization.
pub const MAX_ORDER_0M: usize = 8;

fn ipow(n: usize, m: usize) -> usize {
    n.pow(m as u32)
}

fn check_finite(data: &[f64], what: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// For every flat multi-index of `order` slots of size `n`, the flat index
/// of its sorted representative.
fn orbit_keys(n: usize, order: usize) -> (Vec<usize>, Vec<f64>) {
    let len = ipow(n, order);
    let mut keys = vec![0usize; len];
    let mut counts = vec![0f64; len];
    let mut digits = vec![0usize; order];
    for (flat, key) in keys.iter_mut().enumerate() {
        let mut rem = flat;
        for d in digits.iter_mut().rev() {
            *d = rem % n;
            rem /= n;
        }
        digits.sort_unstable();
        *key = digits.iter().fold(0, |acc, &d| acc * n + d);
        counts[*key] += 1.0;
    }
    (keys, counts)
}

/// Replace each block of `n^order` entries by its mean over index permutations.
fn symmetrize_blocks(data: &mut [f64], n: usize, order: usize) {
    let len = ipow(n, order);
    if order < 2 || len == 0 {
        return;
    }
    let (keys, counts) = orbit_keys(n, order);
    let mut sums = vec![0f64; len];
    for block in data.chunks_mut(len) {
        // Averaging equal entries can change the last bit; leave exact blocks alone.
        if block.iter().zip(&keys).all(|(v, &k)| *v == block[k]) {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (v, &k) in block.iter().zip(&keys) {
            sums[k] += *v;
        }
        for (v, &k) in block.iter_mut().zip(&keys) {
            *v = sums[k] / counts[k];
        }
    }
}

fn blocks_symmetric(data: &[f64], n: usize, order: usize) -> bool {
    let len = ipow(n, order);
    if order < 2 || len == 0 {
        return true;
    }
    let (keys, _) = orbit_keys(n, order);
    let scale = data.iter().fold(0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    data.chunks(len).all(|block| {
        block
            .iter()
            .zip(&keys)
            .all(|(v, &k)| (v - block[k]).abs() <= tol)
    })
}

/// Apply `m` (rows: old axis, cols: new axis) along one axis of a dense array.
fn transform_axis(data: &[f64], shape: &mut [usize], axis: usize, m: &Matrix) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let (old, new) = (m.nrows(), m.ncols());
    debug_assert_eq!(shape[axis], old);
    let mut out = vec![0f64; outer * new * inner];
    for o in 0..outer {
        for l in 0..old {
            let src = &data[(o * old + l) * inner..(o * old + l + 1) * inner];
            for q in 0..new {
                let c = m[(l, q)];
                if c == 0.0 {
                    continue;
                }
                let dst = &mut out[(o * new + q) * inner..(o * new + q + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
    shape[axis] = new;
    out
}

/// Contract the last axis (of size `x.len()`) with `x`.
fn contract_last(data: &[f64], x: &[f64]) -> Vec<f64> {
    data.chunks(x.len())
        .map(|c| c.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Tensor with one output index of size `dim_out` and `order` input indices of
/// size `dim_in`, symmetric in the input indices unless built by a
/// mixed-range [`Tensor1m::slice_block`].
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor1m {
    dim_out: usize,
    dim_in: usize,
    order: usize,
    data: Vec<f64>,
    symmetric: bool,
}

impl Tensor1m {
    /// Build from row-major entries, symmetrizing over the input indices.
    ///
    /// Order 0 is accepted and represents a plain vector.
    pub fn new(dim_out: usize, dim_in: usize, order: usize, mut data: Vec<f64>) -> Result<Self> {
        if order > MAX_ORDER_1M {
            return Err(Error::UnsupportedOrder { order, max: MAX_ORDER_1M });
        }
        let expected = dim_out * ipow(dim_in, order);
        if data.len() != expected {
            return Err(Error::Dimension {
                context: "tensor1m entries",
                expected,
                found: data.len(),
            });
        }
        check_finite(&data, "tensor1m entries")?;
        symmetrize_blocks(&mut data, dim_in, order);
        Ok(Self { dim_out, dim_in, order, data, symmetric: true })
    }

    /// Build without symmetrizing. The caller vouches for the layout; the
    /// symmetry flag is computed.
    pub(crate) fn from_raw(dim_out: usize, dim_in: usize, order: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim_out * ipow(dim_in, order));
        let symmetric = blocks_symmetric(&data, dim_in, order);
        Self { dim_out, dim_in, order, data, symmetric }
    }

    pub fn zeros(dim_out: usize, dim_in: usize, order: usize) -> Result<Self> {
        Self::new(dim_out, dim_in, order, vec![0.0; dim_out * ipow(dim_in, order)])
    }

    /// Build from a closure `f(i, &[j1, .., jm])`.
    pub fn from_fn<F>(dim_out: usize, dim_in: usize, order: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &[usize]) -> f64,
    {
        let block = ipow(dim_in, order);
        let mut data = Vec::with_capacity(dim_out * block);
        let mut idx = vec![0usize; order];
        for i in 0..dim_out {
            for flat in 0..block {
                let mut rem = flat;
                for d in idx.iter_mut().rev() {
                    *d = rem % dim_in;
                    rem /= dim_in;
                }
                data.push(f(i, &idx));
            }
        }
        Self::new(dim_out, dim_in, order, data)
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        let data: Vec<f64> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self::from_raw(m.nrows(), m.ncols(), 1, data)
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn offset(&self, i: usize, idx: &[usize]) -> usize {
        idx.iter().fold(i, |acc, &j| acc * self.dim_in + j)
    }

    /// Entry `B^i_{j1..jm}`.
    pub fn get(&self, i: usize, idx: &[usize]) -> f64 {
        assert!(i < self.dim_out && idx.len() == self.order);
        assert!(idx.iter().all(|&j| j < self.dim_in));
        self.data[self.offset(i, idx)]
    }

    /// Copy with the input indices symmetrized.
    pub fn symmetrized(&self) -> Self {
        let mut data = self.data.clone();
        symmetrize_blocks(&mut data, self.dim_in, self.order);
        Self { data, symmetric: true, ..*self }
    }

    /// Contract the last `k` input slots with `x`.
    pub fn contract(&self, x: &Vector, k: usize) -> Result<Self> {
        if x.len() != self.dim_in {
            return Err(Error::Dimension {
                context: "contraction vector",
                expected: self.dim_in,
                found: x.len(),
            });
        }
        if k > self.order {
            return Err(Error::InvalidArgument(format!(
                "cannot contract {k} slots of an order {} tensor",
                self.order
            )));
        }
        let mut data = self.data.clone();
        for _ in 0..k {
            data = contract_last(&data, x.as_slice());
        }
        Ok(Self::from_raw(self.dim_out, self.dim_in, self.order - k, data))
    }

    /// `B x^m`.
    pub fn apply(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.dim_in);
        let mut data = self.data.clone();
        for _ in 0..self.order {
            data = contract_last(&data, x.as_slice());
        }
        Vector::from_vec(data)
    }

    /// `B x^(m-1)` as a `dim_out x dim_in` matrix.
    pub fn apply_partial(&self, x: &Vector) -> Matrix {
        assert!(self.order >= 1);
        assert_eq!(x.len(), self.dim_in);
        let mut data = self.data.clone();
        for _ in 1..self.order {
            data = contract_last(&data, x.as_slice());
        }
        Matrix::from_row_slice(self.dim_out, self.dim_in, &data)
    }

    /// View an order 0 tensor as a vector.
    pub fn to_vector(&self) -> Vector {
        assert_eq!(self.order, 0);
        Vector::from_column_slice(&self.data)
    }

    /// View an order 1 tensor as a matrix.
    pub fn to_matrix(&self) -> Matrix {
        assert_eq!(self.order, 1);
        Matrix::from_row_slice(self.dim_out, self.dim_in, &self.data)
    }

    /// Substitute `x = M y` in every input slot: result has `dim_in = M.ncols()`.
    pub fn map_inputs(&self, m: &Matrix) -> Result<Self> {
        if m.nrows() != self.dim_in {
            return Err(Error::Dimension {
                context: "input map rows",
                expected: self.dim_in,
                found: m.nrows(),
            });
        }
        let mut shape = vec![self.dim_out];
        shape.extend(std::iter::repeat_n(self.dim_in, self.order));
        let mut data = self.data.clone();
        for axis in 1..=self.order {
            data = transform_axis(&data, &mut shape, axis, m);
        }
        let mut t = Self::from_raw(self.dim_out, m.ncols(), self.order, data);
        t.symmetric = self.symmetric || t.symmetric;
        Ok(t)
    }

    /// Left-multiply the output index by `a` (`a.ncols() == dim_out`).
    pub fn map_output(&self, a: &Matrix) -> Result<Self> {
        if a.ncols() != self.dim_out {
            return Err(Error::Dimension {
                context: "output map columns",
                expected: self.dim_out,
                found: a.ncols(),
            });
        }
        let mut shape = vec![self.dim_out, ipow(self.dim_in, self.order)];
        let at = a.transpose();
        let data = transform_axis(&self.data, &mut shape, 0, &at);
        let mut t = Self::from_raw(a.nrows(), self.dim_in, self.order, data);
        t.symmetric = self.symmetric || t.symmetric;
        Ok(t)
    }

    /// `self * alpha + other * beta` for tensors of identical shape.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if (self.dim_out, self.dim_in, self.order) != (other.dim_out, other.dim_in, other.order) {
            return Err(Error::Dimension {
                context: "tensor combination",
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let mut t = Self::from_raw(self.dim_out, self.dim_in, self.order, data);
        t.symmetric = t.symmetric || (self.symmetric && other.symmetric);
        Ok(t)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * alpha).collect(),
            ..self.clone()
        }
    }

    /// `B̃ = Bᵀ B`, the order `2m` fully covariant square.
    pub fn square(&self) -> Result<Tensor0m> {
        let order = 2 * self.order;
        if order > MAX_ORDER_0M {
            return Err(Error::UnsupportedOrder { order, max: MAX_ORDER_0M });
        }
        let block = ipow(self.dim_in, self.order);
        let mut data = vec![0f64; block * block];
        for slab in self.data.chunks(block) {
            for (a, &ba) in slab.iter().enumerate() {
                if ba == 0.0 {
                    continue;
                }
                let row = &mut data[a * block..(a + 1) * block];
                for (r, &bb) in row.iter_mut().zip(slab) {
                    *r += ba * bb;
                }
            }
        }
        Ok(Tensor0m::from_raw(self.dim_in, order, data))
    }

    /// Order 2 only: the `(n_o n) x n` matrix with row `n i + j`, column `k`.
    pub fn flatten_last(&self) -> Result<Matrix> {
        if self.order != 2 {
            return Err(Error::UnsupportedOrder { order: self.order, max: 2 });
        }
        Ok(Matrix::from_row_slice(self.dim_out * self.dim_in, self.dim_in, &self.data))
    }

    /// The `n_o x n^m` matrix of all input indices flattened together.
    pub fn flatten_first(&self) -> Matrix {
        Matrix::from_row_slice(self.dim_out, ipow(self.dim_in, self.order), &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sub-block with output rows `out` and input slot `k` restricted to
    /// `ins[k]`. All input ranges must have the same length; the result is
    /// flagged non-symmetric when they differ.
    pub fn slice_block(&self, out: Range<usize>, ins: &[Range<usize>]) -> Result<Self> {
        if ins.len() != self.order {
            return Err(Error::Dimension {
                context: "slice input ranges",
                expected: self.order,
                found: ins.len(),
            });
        }
        if out.end > self.dim_out || out.start > out.end {
            return Err(Error::OutOfRange(format!("output range {out:?}")));
        }
        let width = ins.first().map_or(0, |r| r.len());
        for r in ins {
            if r.end > self.dim_in || r.start > r.end {
                return Err(Error::OutOfRange(format!("input range {r:?}")));
            }
            if r.len() != width {
                return Err(Error::Dimension {
                    context: "slice input range length",
                    expected: width,
                    found: r.len(),
                });
            }
        }
        let block = ipow(width, self.order);
        let mut data = Vec::with_capacity(out.len() * block);
        let mut idx = vec![0usize; self.order];
        for i in out.clone() {
            for flat in 0..block {
                let mut rem = flat;
                for (k, d) in idx.iter_mut().enumerate().rev() {
                    *d = ins[k].start + rem % width;
                    rem /= width;
                }
                data.push(self.data[self.offset(i, &idx)]);
            }
        }
        let same = ins.windows(2).all(|w| w[0] == w[1]);
        let mut t = Self::from_raw(out.len(), width, self.order, data);
        t.symmetric = t.symmetric || (same && self.symmetric);
        Ok(t)
    }

    /// Text form: a `tensor1m n_o n m` header line followed by the entries.
    pub fn to_text(&self) -> String {
        let mut s = format!("tensor1m {} {} {}\n", self.dim_out, self.dim_in, self.order);
        write_entries(&mut s, &self.data, self.dim_in.max(1));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_tokens(&mut text.split_whitespace())
    }

    pub(crate) fn read_tokens<'a>(tokens: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let (dim_out, dim_in, order) = parse_header(tokens, "tensor1m", 3).map(|h| (h[0], h[1], h[2]))?;
        if order > MAX_ORDER_1M {
            return Err(Error::UnsupportedOrder { order, max: MAX_ORDER_1M });
        }
        let data = parse_entries(tokens.by_ref(), dim_out * ipow(dim_in, order))?;
        Self::new(dim_out, dim_in, order, data)
    }
}

/// Fully covariant tensor of arbitrary order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor0m {
    dim: usize,
    order: usize,
    data: Vec<f64>,
    symmetric: bool,
}

impl Tensor0m {
    /// Build from row-major entries; the symmetry flag is detected.
    pub fn new(dim: usize, order: usize, data: Vec<f64>) -> Result<Self> {
        let expected = ipow(dim, order);
        if data.len() != expected {
            return Err(Error::Dimension {
                context: "tensor0m entries",
                expected,
                found: data.len(),
            });
        }
        check_finite(&data, "tensor0m entries")?;
        Ok(Self::from_raw(dim, order, data))
    }

    pub(crate) fn from_raw(dim: usize, order: usize, data: Vec<f64>) -> Self {
        let symmetric = order <= MAX_ORDER_0M && blocks_symmetric(&data, dim, order);
        Self { dim, order, data, symmetric }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.order);
        self.data[idx.iter().fold(0, |acc, &j| acc * self.dim + j)]
    }

    /// Mean over all index permutations.
    pub fn symmetrize(&self) -> Result<Self> {
        if self.order > MAX_ORDER_0M {
            return Err(Error::UnsupportedOrder { order: self.order, max: MAX_ORDER_0M });
        }
        let mut data = self.data.clone();
        symmetrize_blocks(&mut data, self.dim, self.order);
        Ok(Self { data, symmetric: true, ..*self })
    }

    /// `T x^order`.
    pub fn apply(&self, x: &Vector) -> f64 {
        assert_eq!(x.len(), self.dim);
        let mut data = self.data.clone();
        for _ in 0..self.order {
            data = contract_last(&data, x.as_slice());
        }
        data[0]
    }

    /// `T x^(order-1)`, contracting all but the first slot.
    pub fn apply_partial(&self, x: &Vector) -> Vector {
        assert!(self.order >= 1);
        assert_eq!(x.len(), self.dim);
        let mut data = self.data.clone();
        for _ in 1..self.order {
            data = contract_last(&data, x.as_slice());
        }
        Vector::from_vec(data)
    }

    /// Substitute `x = M y` in every slot.
    pub fn map_inputs(&self, m: &Matrix) -> Result<Self> {
        if m.nrows() != self.dim {
            return Err(Error::Dimension {
                context: "input map rows",
                expected: self.dim,
                found: m.nrows(),
            });
        }
        let mut shape = vec![self.dim; self.order];
        let mut data = self.data.clone();
        for axis in 0..self.order {
            data = transform_axis(&data, &mut shape, axis, m);
        }
        Ok(Self::from_raw(m.ncols(), self.order, data))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * alpha).collect(),
            ..self.clone()
        }
    }

    /// Order 2 only.
    pub fn to_matrix(&self) -> Matrix {
        assert_eq!(self.order, 2);
        Matrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("tensor0m {} {}\n", self.dim, self.order);
        write_entries(&mut s, &self.data, self.dim.max(1));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let (dim, order) = parse_header(&mut tokens, "tensor0m", 2).map(|h| (h[0], h[1]))?;
        if order > 2 * MAX_ORDER_0M {
            return Err(Error::UnsupportedOrder { order, max: MAX_ORDER_0M });
        }
        let data = parse_entries(tokens, ipow(dim, order))?;
        Self::new(dim, order, data)
    }
}

/// Frobenius norm of a matrix.
pub fn matrix_frobenius(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value with its right singular vector.
pub fn top_singular(m: &Matrix) -> (f64, Vector) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (k, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best });
    (s.max(0.0), vt.row(k).transpose())
}

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_entries(s: &mut String, data: &[f64], per_line: usize) {
    for line in data.chunks(per_line) {
        let parts: Vec<String> = line.iter().map(|v| format_f64(*v)).collect();
        let _ = writeln!(s, "{}", parts.join(" "));
    }
}

pub(crate) fn parse_header<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    tag: &str,
    n: usize,
) -> Result<Vec<usize>> {
    match tokens.next() {
        Some(t) if t == tag => {}
        other => return Err(Error::Parse(format!("expected '{tag}', found {other:?}"))),
    }
    (0..n)
        .map(|_| {
            tokens
                .next()
                .ok_or_else(|| Error::Parse("truncated header".into()))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(e.to_string()))
        })
        .collect()
}

pub(crate) fn parse_entries<'a>(tokens: impl Iterator<Item = &'a str>, count: usize) -> Result<Vec<f64>> {
    let data = tokens
        .take(count)
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if data.len() != count {
        return Err(Error::Dimension {
            context: "tensor text entries",
            expected: count,
            found: data.len(),
        });
    }
    Ok(data)
}
