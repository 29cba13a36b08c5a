//! Reference orbits used throughout the examples and tests.

use std::f64::consts::PI;

use super::model::{elements_to_state, DynamicsModel, EARTH_MOON_LU, EARTH_MU, MOON_MU};
use crate::error::Result;
use crate::tensor::Vector;

/// An initial state with its period and the physical size of one model unit.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub name: &'static str,
    pub model: DynamicsModel,
    pub x0: Vector,
    pub period: f64,
    /// Kilometres per model length unit.
    pub length_unit: f64,
    /// Seconds per model time unit.
    pub time_unit: f64,
}

impl Orbit {
    /// Kilometres per second per model velocity unit.
    pub fn velocity_unit(&self) -> f64 {
        self.length_unit / self.time_unit
    }

    /// Convert a distance in km to model units.
    pub fn km(&self, v: f64) -> f64 {
        v / self.length_unit
    }

    /// Convert a speed in m/s to model units.
    pub fn m_per_s(&self, v: f64) -> f64 {
        v * 1e-3 / self.velocity_unit()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "iss" => iss(),
            "nrho" => Ok(nrho()),
            "circular" => Ok(circular()),
            other => Err(crate::error::Error::Config(format!("unknown orbit preset '{other}'"))),
        }
    }
}

/// Near-circular low Earth orbit in km and km/s.
pub fn iss() -> Result<Orbit> {
    let a = 6738.0;
    let x0 = elements_to_state(EARTH_MU, a, 0.000514, 51.6434f64.to_radians(), 0.0, 0.0, 0.0)?;
    Ok(Orbit {
        name: "iss",
        model: DynamicsModel::TwoBody { mu: EARTH_MU },
        x0,
        period: 2.0 * PI * (a.powi(3) / EARTH_MU).sqrt(),
        length_unit: 1.0,
        time_unit: 1.0,
    })
}

/// Earth-Moon L2 southern near rectilinear halo orbit, starting at apolune.
pub fn nrho() -> Orbit {
    let tu = (EARTH_MOON_LU.powi(3) / (EARTH_MU + MOON_MU)).sqrt();
    Orbit {
        name: "nrho",
        model: DynamicsModel::earth_moon(),
        x0: Vector::from_vec(vec![1.022022, 0.0, -0.182097, 0.0, -0.103256, 0.0]),
        period: 1.511111,
        length_unit: EARTH_MOON_LU,
        time_unit: tu,
    }
}

/// Unit circular orbit with `mu = 1`.
pub fn circular() -> Orbit {
    Orbit {
        name: "circular",
        model: DynamicsModel::TwoBodyNondim,
        x0: Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        period: 2.0 * PI,
        length_unit: 1.0,
        time_unit: 1.0,
    }
}
