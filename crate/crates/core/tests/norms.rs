mod common;

use common::*;
use opnorm::eigen::PowerIterConfig;
use opnorm::norms::*;
use opnorm::tensor::{Matrix, Tensor1m, Vector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn orthogonal(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.qr().q()
}

fn cfg() -> PowerIterConfig {
    PowerIterConfig::default()
}

#[test]
fn two_norm_brackets_sampled_max() {
    let mut r = rng(11);
    for _ in 0..20 {
        let n = r.random_range(2..=4);
        let b = random_tensor(&mut r, 3, n, 2);
        let v = norm_2(&b, &cfg()).unwrap().value;
        let s = sampled_sphere_max(|x| b.apply(x).norm(), n, 1.0, 20_000, 3);
        assert!(v >= s * (1.0 - 1e-12), "{v} < {s}");
        assert!(v <= s * 1.02, "{v} vs {s}");
    }
}

#[test]
fn cubic_two_norm_brackets_sampled_max() {
    let mut r = rng(12);
    for _ in 0..10 {
        let b = random_tensor(&mut r, 3, 3, 3);
        let v = norm_2(&b, &cfg()).unwrap().value;
        let s = sampled_sphere_max(|x| b.apply(x).norm(), 3, 1.0, 50_000, 4);
        assert!(v >= s * (1.0 - 1e-12) && v <= s * 1.02, "{v} vs {s}");
    }
}

#[test]
fn weighted_norm_brackets_sampled_ellipsoid_max() {
    let mut r = rng(13);
    for _ in 0..20 {
        let n = r.random_range(2..=4);
        let b = random_tensor(&mut r, 2, n, 2);
        let d = random_spd(&mut r, n);
        let res = norm_2d(&b, &d, &cfg()).unwrap();
        let x = res.maximizer.unwrap();
        assert!((x.dot(&(&d * &x)) - 1.0).abs() < 1e-10);
        assert!(rel(b.apply(&x).norm(), res.value) < 1e-8);
        let s = max_over(&sphere_points(n, 20_000, 5), |u| {
            let x = u / u.dot(&(&d * u)).sqrt();
            b.apply(&x).norm()
        });
        assert!(res.value >= s * (1.0 - 1e-12) && res.value <= s * 1.02, "{} vs {s}", res.value);
    }
}

#[test]
fn inf_and_frob_norms_bracket_sampled_max() {
    let mut r = rng(14);
    for _ in 0..20 {
        let n = r.random_range(2..=4);
        let b = random_tensor(&mut r, 3, n, 2);
        let pts = sphere_points(n, 20_000, 6);
        let inf = norm_inf2(&b).unwrap().value;
        let s_inf = max_over(&pts, |x| b.apply(x).amax());
        assert!(inf >= s_inf * (1.0 - 1e-12) && inf <= s_inf * 1.02);
        let frob = norm_frob2(&b).unwrap().value;
        let s_frob = max_over(&pts, |x| objective(&b, NormKind::FrobTwo, x));
        assert!(frob >= s_frob * (1.0 - 1e-12) && frob <= s_frob * 1.02);
    }
}

#[test]
fn linear_inf_norm_is_largest_row() {
    let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 2.0, 0.0, 4.0, 0.0]);
    let r = norm_inf2(&Tensor1m::from_matrix(&m)).unwrap();
    assert_eq!(r.value, 4.0);
}

#[test]
fn unsupported_orders_are_rejected() {
    let b = Tensor1m::zeros(2, 2, 3).unwrap();
    assert!(norm_inf2(&b).is_err());
    assert!(norm_frob2(&b).is_err());
    assert!(norm_frobinf_upper(&b).is_err());
}

fn tensor_case() -> impl Strategy<Value = (Tensor1m, u64)> {
    (any::<u64>(), 1usize..=4, 2usize..=5, 2usize..=3).prop_map(|(seed, no, n, m)| {
        let mut r = rng(seed);
        (random_tensor(&mut r, no, n, m), seed)
    })
}

proptest! {
    #![proptest_config(common::fixed(48))]

    #[test]
    fn norm_is_absolutely_homogeneous((b, _) in tensor_case(), alpha in -5.0f64..5.0) {
        let v = norm_2(&b, &cfg()).unwrap().value;
        let w = norm_2(&b.scaled(alpha), &cfg()).unwrap().value;
        prop_assert!((w - alpha.abs() * v).abs() <= 1e-9 * v.max(1.0));
    }

    #[test]
    fn norm_is_orthogonally_invariant((b, seed) in tensor_case()) {
        let mut r = rng(seed ^ 0x5eed);
        let q = orthogonal(&mut r, b.dim_in());
        let p = orthogonal(&mut r, b.dim_out());
        let c = b.map_inputs(&q).unwrap().map_output(&p).unwrap();
        // Random restarts may settle on different local maxima, so each side
        // also starts from the other's mapped maximizer.
        let rb = norm_2(&b, &cfg()).unwrap();
        let rc = norm_2(&c, &cfg().with_guess(Some(q.transpose() * rb.maximizer.unwrap()))).unwrap();
        let rb = norm_2(&b, &cfg().with_guess(Some(&q * rc.maximizer.unwrap()))).unwrap();
        let (v, w) = (rb.value, rc.value);
        prop_assert!((v - w).abs() <= 1e-8 * v, "{} vs {}", v, w);
    }

    #[test]
    fn bounds_are_ordered((b, _) in tensor_case()) {
        let two = norm_2(&b, &cfg()).unwrap();
        let x = two.maximizer.clone().unwrap();
        prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        prop_assert!((b.apply(&x).norm() - two.value).abs() <= 1e-9 * two.value);
        prop_assert!(norm_2_upper_flatten(&b).value >= two.value * (1.0 - 1e-12));
        if b.order() == 2 {
            prop_assert!(norm_inf2(&b).unwrap().value <= two.value * (1.0 + 1e-12));
            prop_assert!(norm_frob2(&b).unwrap().value >= two.value * (1.0 - 1e-12));
            prop_assert!(norm_frobinf_upper(&b).unwrap().value >= two.value * (1.0 - 1e-12));
        }
    }

    #[test]
    fn scaled_identity_weight_rescales((b, _) in tensor_case(), c in 0.2f64..5.0) {
        let n = b.dim_in();
        let v = norm_2(&b, &cfg()).unwrap().value;
        let d = Matrix::identity(n, n) * (c * c);
        let w = norm_2d(&b, &d, &cfg()).unwrap().value;
        let expect = v / c.powi(b.order() as i32);
        prop_assert!((w - expect).abs() <= 1e-8 * expect.max(1e-300));
    }

    #[test]
    fn sampled_values_never_exceed_norm((b, seed) in tensor_case()) {
        let v = norm_2(&b, &cfg()).unwrap().value;
        let pts = sphere_points(b.dim_in(), 500, seed);
        let s = pts.iter().map(|x: &Vector| b.apply(x).norm()).fold(0.0, f64::max);
        prop_assert!(s <= v * (1.0 + 1e-12));
    }
}
