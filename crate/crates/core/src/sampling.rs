use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::Vector;

/// Uniform point on the unit sphere from normalized Gaussian draws.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
