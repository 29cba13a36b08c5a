use std::ffi::CStr;
use std::ptr;

use opnorm_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        opnorm_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn diag_tensor() -> *mut OpnormTensor {
    // out_i = x_i^2 on two inputs, scaled so the 2-norm is 3.
    let mut data = vec![0.0; 2 * 2 * 2];
    data[0] = 3.0;
    data[7] = 1.0;
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { opnorm_tensor_new(2, 2, 2, data.as_ptr(), data.len(), &mut t) }, OPNORM_OK);
    t
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(opnorm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn tensor_round_trip_and_norms() {
    let t = diag_tensor();
    let (mut o, mut i, mut m) = (0, 0, 0);
    unsafe {
        assert_eq!(opnorm_tensor_shape(t, &mut o, &mut i, &mut m), OPNORM_OK);
        assert_eq!((o, i, m), (2, 2, 2));
        let mut buf = [0.0; 8];
        assert_eq!(opnorm_tensor_data(t, buf.as_mut_ptr(), 8), OPNORM_OK);
        assert_eq!(buf[0], 3.0);
        assert_eq!(buf[7], 1.0);

        let mut v = 0.0;
        let mut x = [0.0; 2];
        assert_eq!(opnorm_tensor_norm(t, OPNORM_NORM_2, 0, &mut v, x.as_mut_ptr(), 2), OPNORM_OK);
        assert!((v - 3.0).abs() < 1e-10, "{v}");
        assert!((x[0].abs() - 1.0).abs() < 1e-6);

        let mut upper = 0.0;
        assert_eq!(opnorm_tensor_norm(t, OPNORM_NORM_2_UPPER_FLATTEN, 0, &mut upper, ptr::null_mut(), 0), OPNORM_OK);
        assert!(upper >= v - 1e-12);

        let d = [1.0, 0.0, 0.0, 1.0];
        let mut vd = 0.0;
        assert_eq!(opnorm_tensor_norm_2d(t, d.as_ptr(), 0, &mut vd, ptr::null_mut(), 0), OPNORM_OK);
        assert!((vd - v).abs() < 1e-10);
        opnorm_tensor_free(t);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    let t = diag_tensor();
    unsafe {
        let mut v = 0.0;
        assert_eq!(opnorm_tensor_norm(t, 99, 0, &mut v, ptr::null_mut(), 0), OPNORM_ERR_INVALID_ARGUMENT);
        assert!(last_error().contains("99"));

        let mut buf = [0.0; 3];
        assert_eq!(opnorm_tensor_data(t, buf.as_mut_ptr(), 3), OPNORM_ERR_DIMENSION);

        assert_eq!(opnorm_tensor_norm(ptr::null(), OPNORM_NORM_2, 0, &mut v, ptr::null_mut(), 0), OPNORM_ERR_NULL_POINTER);
        assert!(last_error().contains("tensor"));

        let mut out = ptr::null_mut();
        assert_eq!(opnorm_tensor_new(2, 2, 2, [1.0].as_ptr(), 1, &mut out), OPNORM_ERR_DIMENSION);
        assert!(out.is_null());
        opnorm_tensor_free(t);
        opnorm_tensor_free(ptr::null_mut());
        opnorm_stt_free(ptr::null_mut());
    }
}

#[test]
fn last_error_reports_needed_size() {
    unsafe {
        let mut v = 0.0;
        opnorm_tensor_norm(ptr::null(), OPNORM_NORM_2, 0, &mut v, ptr::null_mut(), 0);
        let needed = opnorm_last_error(ptr::null_mut(), 0);
        assert_eq!(needed, last_error().len() + 1);
        let mut small = [0 as std::ffi::c_char; 4];
        opnorm_last_error(small.as_mut_ptr(), 4);
        assert_eq!(small[3], 0);
    }
}

#[test]
fn stt_pipeline() {
    let a: f64 = 1.0;
    let x0 = [a, 0.0, 0.0, 0.0, 1.0, 0.0];
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(
            opnorm_stt_propagate(OPNORM_MODEL_TWO_BODY_NONDIM, 0.0, x0.as_ptr(), 0.0, 1.0, 3, 0.0, 0.0, &mut s),
            OPNORM_OK
        );
        let mut xf = [0.0; 6];
        let mut phi = [0.0; 36];
        assert_eq!(opnorm_stt_final(s, xf.as_mut_ptr(), phi.as_mut_ptr()), OPNORM_OK);
        // circular orbit of unit radius and rate
        assert!((xf[0] - 1f64.cos()).abs() < 1e-9);
        assert!((xf[1] - 1f64.sin()).abs() < 1e-9);

        let mut psi = ptr::null_mut();
        assert_eq!(opnorm_stt_tensor(s, 2, &mut psi), OPNORM_OK);
        let (mut o, mut i, mut m) = (0, 0, 0);
        opnorm_tensor_shape(psi, &mut o, &mut i, &mut m);
        assert_eq!((o, i, m), (6, 6, 2));
        opnorm_tensor_free(psi);
        assert_eq!(opnorm_stt_tensor(s, 4, &mut psi), OPNORM_ERR_UNSUPPORTED_ORDER);

        let mut g = ptr::null_mut();
        let mut cond = 0.0;
        assert_eq!(opnorm_guidance_tensor(s, OPNORM_GUIDANCE_MISS_E2, &mut g, &mut cond), OPNORM_OK);
        assert!(cond >= 1.0);
        opnorm_tensor_free(g);

        let mut nu = 0.0;
        assert_eq!(opnorm_nonlinearity_index(s, OPNORM_INDEX_NU_2, 0, 0.0, 0, &mut nu), OPNORM_OK);
        let mut upper = 0.0;
        assert_eq!(opnorm_nonlinearity_index(s, OPNORM_INDEX_NU_2_UPPER, 0, 0.0, 0, &mut upper), OPNORM_OK);
        assert!(nu > 0.0 && upper >= nu * (1.0 - 1e-9));
        let mut d2 = 0.0;
        assert_eq!(opnorm_nonlinearity_index(s, OPNORM_INDEX_DEMON, 2, 0.0, 0, &mut d2), OPNORM_OK);
        assert!(d2 > 0.0);
        opnorm_stt_free(s);
    }
}

#[test]
fn unknown_model_is_rejected() {
    let x0 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let mut s = ptr::null_mut();
    let code = unsafe { opnorm_stt_propagate(7, 0.0, x0.as_ptr(), 0.0, 1.0, 1, 0.0, 0.0, &mut s) };
    assert_eq!(code, OPNORM_ERR_INVALID_ARGUMENT);
    assert!(s.is_null());
}

#[test]
fn hbar_norm_matches_core() {
    let r = [1.0, 0.5, 0.2];
    let mut v = 0.0;
    assert_eq!(unsafe { opnorm_hbar_norm(OPNORM_MEASUREMENT_UNIT_VECTOR, r.as_ptr(), 0, &mut v) }, OPNORM_OK);
    let expect = opnorm::measurement::hbar_norm(
        opnorm::measurement::MeasurementModel::UnitVector,
        &opnorm::tensor::Vector::from_column_slice(&r),
        &Default::default(),
    )
    .unwrap();
    assert_eq!(v, expect);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/opnorm.h")).unwrap();
    for name in [
        "opnorm_version",
        "opnorm_last_error",
        "opnorm_tensor_new",
        "opnorm_tensor_free",
        "opnorm_tensor_norm",
        "opnorm_tensor_norm_2d",
        "opnorm_stt_propagate",
        "opnorm_stt_tensor",
        "opnorm_guidance_tensor",
        "opnorm_nonlinearity_index",
        "opnorm_hbar_norm",
        "typedef struct OpnormTensor OpnormTensor",
        "OPNORM_ERR_SINGULAR",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
