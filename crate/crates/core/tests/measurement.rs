mod common;

use common::*;
use opnorm::eigen::PowerIterConfig;
use opnorm::measurement::*;
use opnorm::tensor::Vector;
use proptest::prelude::*;

fn cfg() -> PowerIterConfig {
    PowerIterConfig::default()
}

#[test]
fn unit_vector_norm_is_one_on_the_sphere() {
    for x in sphere_points(3, 50, 21) {
        let v = hbar_norm(MeasurementModel::UnitVector, &x, &cfg()).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }
}

#[test]
fn angle_norm_grows_towards_the_pole() {
    let a0 = hbar_norm(MeasurementModel::Angles, &direction(0.3, 0.0), &cfg()).unwrap();
    assert!((a0 - 1.0).abs() < 1e-6, "{a0}");
    let mut last = a0;
    for deg in [30.0, 60.0, 82.0, 88.0] {
        let r = direction(0.3, f64::to_radians(deg));
        let a = hbar_norm(MeasurementModel::Angles, &r, &cfg()).unwrap();
        assert!(a > last);
        last = a;
    }
    let r = direction(0.0, 82f64.to_radians());
    let ratio = hbar_norm(MeasurementModel::Angles, &r, &cfg()).unwrap()
        / hbar_norm(MeasurementModel::UnitVector, &r, &cfg()).unwrap();
    assert!(ratio >= 5.0, "{ratio}");
}

#[test]
fn flat_landscape_near_equator_is_flagged() {
    // Just off the equator the maximizers nearly form a circle and the
    // iteration creeps; it stops unconverged but below the true value.
    let h = hbar_tensor(MeasurementModel::Angles, &direction(1.0, -0.009)).unwrap();
    let r = opnorm::norms::norm_2(&h, &cfg()).unwrap();
    let reference = hbar_norm(MeasurementModel::Angles, &direction(1.0, -0.2), &cfg()).unwrap();
    assert!(!r.converged);
    assert!(r.value > 1.0 && r.value < reference);
    let pts = sphere_points(3, 200_000, 4);
    let sampled = max_over(&pts, |x| h.apply(x).norm());
    assert!(r.value >= sampled * (1.0 - 1e-12));
}

#[test]
fn pole_and_origin_are_rejected() {
    let pole = Vector::from_vec(vec![0.0, 0.0, 1.0]);
    assert!(matches!(hbar_tensor(MeasurementModel::Angles, &pole), Err(opnorm::Error::Domain(_))));
    assert!(hbar_tensor(MeasurementModel::UnitVector, &Vector::zeros(3)).is_err());
    assert!(hbar_tensor(MeasurementModel::UnitVector, &Vector::zeros(2)).is_err());
}

#[test]
fn unit_error_formula_matches_tensor() {
    let h = hbar_tensor(MeasurementModel::UnitVector, &Vector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
    let mut max = 0f64;
    for i in 0..36 {
        for j in 0..18 {
            let theta = (5.0 * i as f64).to_radians();
            let phi = (5.0 * j as f64).to_radians();
            let direct = h.apply(&direction(theta, phi)).norm_squared();
            let formula = unit_vector_error_squared(theta, phi);
            assert!((direct - formula).abs() < 1e-8, "{theta} {phi}");
            max = max.max(formula);
        }
    }
    assert!((max - 1.0).abs() < 1e-8, "{max}");
}

#[test]
fn update_error_bound_dominates_sampled_error() {
    let r = direction(0.4, 0.7);
    let h = hbar_tensor(MeasurementModel::Angles, &r).unwrap();
    let s = 1e-2;
    let bound = update_error_bound(&h, s, &cfg()).unwrap();
    let sampled = sampled_sphere_max(|x| 0.5 * h.apply(x).norm(), 3, s, 20_000, 2);
    assert!(sampled <= bound * (1.0 + 1e-12) && sampled > 0.98 * bound);
}

#[test]
fn projectors_split_the_state() {
    let m = evaluate(MeasurementModel::Angles, &direction(0.2, 0.5)).unwrap();
    let (p, perp) = projectors(&m.jacobian);
    assert!((&p * &p - &p).norm() < 1e-12);
    assert!((&p + &perp - opnorm::tensor::Matrix::identity(3, 3)).norm() < 1e-14);
    assert!((&m.jacobian * &perp).norm() < 1e-12);
}

proptest! {
    #![proptest_config(common::fixed(32))]

    #[test]
    fn unit_vector_norm_is_inverse_range(seed in any::<u64>(), rho in 0.1f64..10.0) {
        let u = &sphere_points(3, 1, seed)[0];
        let v = hbar_norm(MeasurementModel::UnitVector, &(u * rho), &cfg()).unwrap();
        prop_assert!((v * rho - 1.0).abs() < 1e-8);
    }

    #[test]
    fn angle_norm_is_azimuth_invariant(theta in 0.0f64..6.28, phi in 0.05f64..1.2, south in any::<bool>()) {
        let phi = if south { -phi } else { phi };
        let a = hbar_norm(MeasurementModel::Angles, &direction(theta, phi), &cfg()).unwrap();
        let b = hbar_norm(MeasurementModel::Angles, &direction(0.0, phi), &cfg()).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * b);
    }
}
