//! C interface to `opnorm`.
//!
//! Every function returns an `OPNORM_*` status code; on failure the message
//! is kept per thread and can be read with `opnorm_last_error`. Objects are
//! opaque handles released with their matching `_free` function. Arrays are
//! row-major `double` buffers whose length the caller passes explicitly.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use opnorm::dynamics::{propagate_stt, DynamicsModel, SttStack, Tolerances};
use opnorm::eigen::PowerIterConfig;
use opnorm::guidance::{guidance_tensor, GuidanceKind};
use opnorm::measurement::{hbar_norm, MeasurementModel};
use opnorm::nonlinearity::{beth_bound, demon, nu_quotient, temon, IndexKind};
use opnorm::norms::{norm_2, norm_2_upper_flatten, norm_2d, norm_frob2, norm_frobinf_upper, norm_inf2, NormResult};
use opnorm::tensor::{Matrix, Tensor1m, Vector};
use opnorm::Error;

pub const OPNORM_OK: i32 = 0;
pub const OPNORM_ERR_NULL_POINTER: i32 = 1;
pub const OPNORM_ERR_INVALID_ARGUMENT: i32 = 2;
pub const OPNORM_ERR_DIMENSION: i32 = 3;
pub const OPNORM_ERR_UNSUPPORTED_ORDER: i32 = 4;
pub const OPNORM_ERR_SINGULAR: i32 = 5;
pub const OPNORM_ERR_DOMAIN: i32 = 6;
pub const OPNORM_ERR_DEGENERATE: i32 = 7;
pub const OPNORM_ERR_PROPAGATION: i32 = 8;
pub const OPNORM_ERR_MISSING_ORDER: i32 = 9;
pub const OPNORM_ERR_NOT_POSITIVE_DEFINITE: i32 = 10;
pub const OPNORM_ERR_INTERNAL: i32 = 11;
pub const OPNORM_ERR_PANIC: i32 = 12;

pub const OPNORM_MODEL_TWO_BODY: u32 = 0;
pub const OPNORM_MODEL_TWO_BODY_NONDIM: u32 = 1;
pub const OPNORM_MODEL_CR3BP: u32 = 2;

pub const OPNORM_NORM_2: u32 = 0;
pub const OPNORM_NORM_INF2: u32 = 1;
pub const OPNORM_NORM_FROB2: u32 = 2;
pub const OPNORM_NORM_2_UPPER_FLATTEN: u32 = 3;
pub const OPNORM_NORM_FROBINF_UPPER: u32 = 4;

pub const OPNORM_GUIDANCE_PROPAGATION_VV: u32 = 0;
pub const OPNORM_GUIDANCE_MISS_E1: u32 = 1;
pub const OPNORM_GUIDANCE_MISS_E2: u32 = 2;
pub const OPNORM_GUIDANCE_VELOCITY_ERR_1: u32 = 3;
pub const OPNORM_GUIDANCE_VELOCITY_ERR_2: u32 = 4;
pub const OPNORM_GUIDANCE_RENDEZVOUS_F1: u32 = 5;

pub const OPNORM_INDEX_NU_STAR: u32 = 0;
pub const OPNORM_INDEX_NU_2: u32 = 1;
pub const OPNORM_INDEX_NU_FROB2: u32 = 2;
pub const OPNORM_INDEX_NU_INF2: u32 = 3;
pub const OPNORM_INDEX_NU_BOX: u32 = 4;
pub const OPNORM_INDEX_NU_2_UPPER: u32 = 5;
pub const OPNORM_INDEX_DEMON: u32 = 6;
pub const OPNORM_INDEX_TEMON: u32 = 7;
pub const OPNORM_INDEX_BETH: u32 = 8;

pub const OPNORM_MEASUREMENT_ANGLES: u32 = 0;
pub const OPNORM_MEASUREMENT_UNIT_VECTOR: u32 = 1;

/// A partially symmetric (1,m)-tensor.
pub struct OpnormTensor(Tensor1m);

/// Propagated STM and STTs along a reference trajectory.
pub struct OpnormStack(SttStack);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status(e: &Error) -> i32 {
    match e {
        Error::Dimension { .. } => OPNORM_ERR_DIMENSION,
        Error::UnsupportedOrder { .. } => OPNORM_ERR_UNSUPPORTED_ORDER,
        Error::Singular { .. } => OPNORM_ERR_SINGULAR,
        Error::Domain(_) => OPNORM_ERR_DOMAIN,
        Error::Degenerate(_) => OPNORM_ERR_DEGENERATE,
        Error::Propagation { .. } => OPNORM_ERR_PROPAGATION,
        Error::MissingOrder { .. } => OPNORM_ERR_MISSING_ORDER,
        Error::NotPositiveDefinite => OPNORM_ERR_NOT_POSITIVE_DEFINITE,
        Error::InvalidArgument(_) | Error::OutOfRange(_) | Error::NonFinite(_) | Error::Parse(_) | Error::Config(_) => {
            OPNORM_ERR_INVALID_ARGUMENT
        }
        Error::Io(_) => OPNORM_ERR_INTERNAL,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult = Result<(), Failure>;

fn guard<F: FnOnce() -> FfiResult>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OPNORM_OK,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            OPNORM_ERR_NULL_POINTER
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            OPNORM_ERR_PANIC
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Lib(Error::InvalidArgument(msg.into()))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> FfiResult {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn opnorm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated and
/// NUL-terminated). Returns the buffer size needed for the whole message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn opnorm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = (bytes.len() - 1).min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Build a tensor from `dim_out * dim_in^order` entries, output index
/// slowest. The input slots are symmetrized.
///
/// # Safety
/// `data` must be valid for `len` doubles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_tensor_new(
    dim_out: usize,
    dim_in: usize,
    order: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut OpnormTensor,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let data = slice(data, len, "data")?.to_vec();
        let t = Tensor1m::new(dim_out, dim_in, order, data)?;
        out.write(Box::into_raw(Box::new(OpnormTensor(t))));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn opnorm_tensor_free(t: *mut OpnormTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live handle; the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_tensor_shape(
    t: *const OpnormTensor,
    dim_out: *mut usize,
    dim_in: *mut usize,
    order: *mut usize,
) -> i32 {
    guard(|| {
        let t = &get(t, "tensor")?.0;
        write(dim_out, t.dim_out(), "dim_out")?;
        write(dim_in, t.dim_in(), "dim_in")?;
        write(order, t.order(), "order")
    })
}

/// Copy the entries into `buf`, which must hold exactly the tensor size.
///
/// # Safety
/// `t` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn opnorm_tensor_data(t: *const OpnormTensor, buf: *mut f64, len: usize) -> i32 {
    guard(|| {
        let t = &get(t, "tensor")?.0;
        if len != t.data().len() {
            return Err(Error::Dimension { context: "tensor buffer", expected: t.data().len(), found: len }.into());
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(t.data());
        Ok(())
    })
}

unsafe fn write_norm(r: &NormResult, value: *mut f64, maximizer: *mut f64, maximizer_len: usize) -> FfiResult {
    write(value, r.value, "value")?;
    if !maximizer.is_null() {
        let buf = slice_mut(maximizer, maximizer_len, "maximizer")?;
        match &r.maximizer {
            Some(x) if x.len() == maximizer_len => buf.copy_from_slice(x.as_slice()),
            Some(x) => {
                return Err(Error::Dimension { context: "maximizer buffer", expected: x.len(), found: maximizer_len }.into())
            }
            None => buf.fill(f64::NAN),
        }
    }
    Ok(())
}

/// Tensor norm of the given `OPNORM_NORM_*` kind. When `maximizer` is not
/// null it receives the unit maximizer (`dim_in` entries), or NaNs for kinds
/// without one.
///
/// # Safety
/// `t` must be a live handle, `value` writable, `maximizer` null or valid
/// for `maximizer_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn opnorm_tensor_norm(
    t: *const OpnormTensor,
    kind: u32,
    seed: u64,
    value: *mut f64,
    maximizer: *mut f64,
    maximizer_len: usize,
) -> i32 {
    guard(|| {
        let t = &get(t, "tensor")?.0;
        let cfg = PowerIterConfig { seed, ..Default::default() };
        let r = match kind {
            OPNORM_NORM_2 => norm_2(t, &cfg)?,
            OPNORM_NORM_INF2 => norm_inf2(t)?,
            OPNORM_NORM_FROB2 => norm_frob2(t)?,
            OPNORM_NORM_2_UPPER_FLATTEN => norm_2_upper_flatten(t),
            OPNORM_NORM_FROBINF_UPPER => norm_frobinf_upper(t)?,
            other => return Err(invalid(format!("unknown norm kind {other}"))),
        };
        write_norm(&r, value, maximizer, maximizer_len)
    })
}

/// `D`-weighted 2-norm with `D` given row-major as `dim_in x dim_in`.
///
/// # Safety
/// As `opnorm_tensor_norm`; `d` valid for `dim_in * dim_in` doubles.
#[no_mangle]
pub unsafe extern "C" fn opnorm_tensor_norm_2d(
    t: *const OpnormTensor,
    d: *const f64,
    seed: u64,
    value: *mut f64,
    maximizer: *mut f64,
    maximizer_len: usize,
) -> i32 {
    guard(|| {
        let t = &get(t, "tensor")?.0;
        let n = t.dim_in();
        let d = Matrix::from_row_slice(n, n, slice(d, n * n, "d")?);
        let r = norm_2d(t, &d, &PowerIterConfig { seed, ..Default::default() })?;
        write_norm(&r, value, maximizer, maximizer_len)
    })
}

fn model(kind: u32, parameter: f64) -> Result<DynamicsModel, Failure> {
    Ok(match kind {
        OPNORM_MODEL_TWO_BODY => DynamicsModel::TwoBody { mu: parameter },
        OPNORM_MODEL_TWO_BODY_NONDIM => DynamicsModel::TwoBodyNondim,
        OPNORM_MODEL_CR3BP => DynamicsModel::Cr3bp { mu_star: parameter },
        other => return Err(invalid(format!("unknown model {other}"))),
    })
}

/// Propagate the STM and STTs up to `order` (1..3) from `x0` (6 entries).
/// `parameter` is `mu` for the two-body model and the mass ratio for the
/// CR3BP; tolerances `<= 0` select the defaults.
///
/// # Safety
/// `x0` valid for 6 doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_stt_propagate(
    model_kind: u32,
    parameter: f64,
    x0: *const f64,
    t0: f64,
    tf: f64,
    order: u32,
    rtol: f64,
    atol: f64,
    out: *mut *mut OpnormStack,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let m = model(model_kind, parameter)?;
        let x0 = Vector::from_column_slice(slice(x0, 6, "x0")?);
        let d = Tolerances::default();
        let tol = Tolerances {
            rtol: if rtol > 0.0 { rtol } else { d.rtol },
            atol: if atol > 0.0 { atol } else { d.atol },
        };
        let s = propagate_stt(m, &x0, t0, tf, order as usize, tol)?;
        out.write(Box::into_raw(Box::new(OpnormStack(s))));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn opnorm_stt_free(s: *mut OpnormStack) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Final reference state (6 entries) and STM (36 entries, row-major).
/// Either buffer may be null.
///
/// # Safety
/// `s` must be a live handle; non-null buffers valid for their sizes.
#[no_mangle]
pub unsafe extern "C" fn opnorm_stt_final(s: *const OpnormStack, xf: *mut f64, phi: *mut f64) -> i32 {
    guard(|| {
        let s = &get(s, "stack")?.0;
        if !xf.is_null() {
            slice_mut(xf, 6, "xf")?.copy_from_slice(s.xf.as_slice());
        }
        if !phi.is_null() {
            let buf = slice_mut(phi, 36, "phi")?;
            for i in 0..6 {
                for j in 0..6 {
                    buf[i * 6 + j] = s.phi[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// A copy of the order-2 or order-3 STT as a new tensor handle.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_stt_tensor(s: *const OpnormStack, order: u32, out: *mut *mut OpnormTensor) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let s = &get(s, "stack")?.0;
        let t = match order {
            2 => s.psi2()?,
            3 => s.psi3()?,
            other => return Err(Error::UnsupportedOrder { order: other as usize, max: 3 }.into()),
        };
        out.write(Box::into_raw(Box::new(OpnormTensor(t.clone()))));
        Ok(())
    })
}

/// Guidance error tensor of an `OPNORM_GUIDANCE_*` kind, with the condition
/// number of the position-velocity STM block (`condition` may be null).
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_guidance_tensor(
    s: *const OpnormStack,
    kind: u32,
    out: *mut *mut OpnormTensor,
    condition: *mut f64,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let s = &get(s, "stack")?.0;
        let kind = *GuidanceKind::ALL
            .get(kind as usize)
            .ok_or_else(|| invalid(format!("unknown guidance kind {kind}")))?;
        let g = guidance_tensor(s, kind)?;
        if !condition.is_null() {
            condition.write(g.phirv_condition);
        }
        out.write(Box::into_raw(Box::new(OpnormTensor(g.tensor))));
        Ok(())
    })
}

/// Nonlinearity index of an `OPNORM_INDEX_*` kind. `order` selects the
/// DEMoN, TEMoN or beth order and `radius` the ball for TEMoN and beth; both
/// are ignored by the quotient indices.
///
/// # Safety
/// `s` must be a live handle; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_nonlinearity_index(
    s: *const OpnormStack,
    kind: u32,
    order: u32,
    radius: f64,
    seed: u64,
    value: *mut f64,
) -> i32 {
    guard(|| {
        let s = &get(s, "stack")?.0;
        let cfg = PowerIterConfig { seed, ..Default::default() };
        let m = order as usize;
        let r = match kind {
            OPNORM_INDEX_NU_STAR..=OPNORM_INDEX_NU_2_UPPER => nu_quotient(s, IndexKind::QUOTIENTS[kind as usize], &cfg)?,
            OPNORM_INDEX_DEMON => demon(s, m, &cfg)?,
            OPNORM_INDEX_TEMON => temon(s, m, radius, &cfg)?,
            OPNORM_INDEX_BETH => beth_bound(s, m, radius, &cfg)?,
            other => return Err(invalid(format!("unknown index kind {other}"))),
        };
        write(value, r.value, "value")
    })
}

/// 2-norm of the state-space measurement curvature tensor at relative
/// position `r` (3 entries).
///
/// # Safety
/// `r` valid for 3 doubles; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn opnorm_hbar_norm(model_kind: u32, r: *const f64, seed: u64, value: *mut f64) -> i32 {
    guard(|| {
        let m = match model_kind {
            OPNORM_MEASUREMENT_ANGLES => MeasurementModel::Angles,
            OPNORM_MEASUREMENT_UNIT_VECTOR => MeasurementModel::UnitVector,
            other => return Err(invalid(format!("unknown measurement model {other}"))),
        };
        let r = Vector::from_column_slice(slice(r, 3, "r")?);
        let v = hbar_norm(m, &r, &PowerIterConfig { seed, ..Default::default() })?;
        write(value, v, "value")
    })
}
