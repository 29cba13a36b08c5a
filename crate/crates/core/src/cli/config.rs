//! Scenario files.
//!
//! A scenario is a TOML file with flat sections. Every key is optional
//! except that `[scenario]` must name a preset or give a model and an
//! initial state.
//!
//! ```toml
//! [scenario]
//! preset = "iss"            # iss | nrho | circular
//! model = "two_body"        # two_body | two_body_nondim | cr3bp (overrides preset)
//! mu = 398600.4418          # model parameter (mu or mu_star)
//! x0 = [7000.0, 0.0, 0.0, 0.0, 7.5, 0.0]
//! elements = [6738.0, 0.000514, 51.6434, 0.0, 0.0, 0.0]  # a e i raan argp M, degrees
//! length_unit = 1.0         # km per model length unit
//! time_unit = 1.0           # s per model time unit
//! t0 = 0.0
//! tf = 555.0                # or tf_periods = 0.1 (needs a period)
//! period = 5500.0
//! stt_order = 2             # 1 | 2 | 3
//! rtol = 1e-12
//! atol = 1e-12
//!
//! [sweep]                   # time grid t0 + k (t_end - t0) / n_points, k = 1..n_points
//! t_end_periods = 1.0       # or t_end
//! n_points = 100
//!
//! [scales]
//! min = 0.0
//! max = 200.0
//! n = 50
//! spacing = "lin"           # lin | log
//! unit = "m/s"              # model | km | m | km/s | m/s
//!
//! [oracle]
//! n_samples = 5000
//! seed = 0
//! enable_opt = true
//! objective = "propagation" # propagation | miss | miss_2 | velocity | velocity_2 | rendezvous
//!
//! [nonlin]
//! kinds = ["nu_2", "nu_frob2", "nu_2_upper"]
//! radius = 1e-3             # model units, for temon, beth and nu_sampled
//! samples = 100             # nu_sampled draws per time point
//!
//! [validate]
//! max_rel_err_bound = 0.15
//! max_rel_err_sampled = 0.05
//! max_rel_err_eigvec = 1e-4
//!
//! [output]
//! dir = "out"
//! cache_dir = "out/cache"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::{elements_to_state, Orbit, Tolerances};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::tensor::Vector;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub scales: ScalesSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub nonlin: NonlinSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub preset: Option<String>,
    pub model: Option<String>,
    pub mu: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub elements: Option<[f64; 6]>,
    pub length_unit: Option<f64>,
    pub time_unit: Option<f64>,
    pub t0: Option<f64>,
    pub tf: Option<f64>,
    pub tf_periods: Option<f64>,
    pub period: Option<f64>,
    pub stt_order: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub t_end: Option<f64>,
    pub t_end_periods: Option<f64>,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalesSection {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    pub spacing: String,
    pub unit: String,
}

impl Default for ScalesSection {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0, n: 50, spacing: "lin".into(), unit: "model".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub n_samples: usize,
    pub seed: u64,
    pub enable_opt: bool,
    pub objective: String,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { n_samples: 5000, seed: 0, enable_opt: true, objective: "propagation".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinSection {
    pub kinds: Vec<String>,
    pub radius: f64,
    pub samples: usize,
}

impl Default for NonlinSection {
    fn default() -> Self {
        Self {
            kinds: vec!["nu_2".into(), "nu_frob2".into(), "nu_2_upper".into()],
            radius: 1e-3,
            samples: 100,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub max_rel_err_bound: f64,
    pub max_rel_err_sampled: f64,
    pub max_rel_err_eigvec: f64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { max_rel_err_bound: 0.15, max_rel_err_sampled: 0.05, max_rel_err_eigvec: 1e-4 }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A fully resolved scenario in model units.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub model: DynamicsModel,
    pub x0: Vector,
    pub t0: f64,
    /// Output times; a single entry unless a sweep was requested.
    pub times: Vec<f64>,
    pub period: Option<f64>,
    pub stt_order: usize,
    pub tol: Tolerances,
    pub length_unit: f64,
    pub time_unit: f64,
}

impl Scenario {
    pub fn tf(&self) -> f64 {
        *self.times.last().expect("at least one time")
    }

    /// Factor converting a value in `unit` to model units.
    pub fn unit_factor(&self, unit: &str) -> Result<f64> {
        let vu = self.length_unit / self.time_unit;
        Ok(match unit {
            "model" => 1.0,
            "km" => 1.0 / self.length_unit,
            "m" => 1e-3 / self.length_unit,
            "km/s" => 1.0 / vu,
            "m/s" => 1e-3 / vu,
            other => return Err(Error::Config(format!("unknown unit '{other}'"))),
        })
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

pub fn resolve(cfg: &ConfigFile, preset_override: Option<&str>) -> Result<Scenario> {
    let s = &cfg.scenario;
    let preset = preset_override.or(s.preset.as_deref()).map(Orbit::by_name).transpose()?;
    let model = match (&s.model, &preset) {
        (Some(name), _) => {
            let default_param = match name.as_str() {
                "cr3bp" => DynamicsModel::earth_moon().parameter(),
                "two_body" => crate::dynamics::EARTH_MU,
                _ => 1.0,
            };
            DynamicsModel::from_name(name, s.mu.unwrap_or(default_param)).map_err(|e| Error::Config(e.to_string()))?
        }
        (None, Some(p)) => p.model,
        (None, None) => return Err(Error::Config("scenario needs a preset or a model".into())),
    };
    if let DynamicsModel::Cr3bp { mu_star } = model {
        if !(mu_star > 0.0 && mu_star < 1.0) {
            return Err(Error::Config(format!("mu_star must lie in (0, 1), got {mu_star}")));
        }
    }
    positive("mu", model.parameter())?;
    let x0 = match (&s.x0, &s.elements, &preset) {
        (Some(x), _, _) => {
            if x.len() != 6 {
                return Err(Error::Config(format!("x0 needs 6 entries, got {}", x.len())));
            }
            Vector::from_vec(x.clone())
        }
        (None, Some(e), _) => {
            if matches!(model, DynamicsModel::Cr3bp { .. }) {
                return Err(Error::Config("orbital elements apply to two-body models only".into()));
            }
            let r = f64::to_radians;
            elements_to_state(model.parameter(), e[0], e[1], r(e[2]), r(e[3]), r(e[4]), r(e[5]))?
        }
        (None, None, Some(p)) => p.x0.clone(),
        (None, None, None) => return Err(Error::Config("scenario needs x0, elements or a preset".into())),
    };
    let period = s.period.or_else(|| preset.as_ref().map(|p| p.period));
    let of_period = |f: f64, what: &str| -> Result<f64> {
        period
            .map(|p| f * p)
            .ok_or_else(|| Error::Config(format!("{what} needs a period")))
    };
    let t0 = s.t0.unwrap_or(0.0);
    let times = match &cfg.sweep {
        Some(sw) => {
            if sw.n_points < 2 {
                return Err(Error::Config("a sweep needs n_points >= 2".into()));
            }
            let t_end = match (sw.t_end, sw.t_end_periods) {
                (Some(t), _) => t,
                (None, Some(f)) => t0 + of_period(f, "t_end_periods")?,
                (None, None) => t0 + of_period(1.0, "a sweep without t_end")?,
            };
            (1..=sw.n_points).map(|k| t0 + (t_end - t0) * k as f64 / sw.n_points as f64).collect()
        }
        None => {
            let tf = match (s.tf, s.tf_periods) {
                (Some(t), _) => t,
                (None, Some(f)) => t0 + of_period(f, "tf_periods")?,
                (None, None) => t0 + of_period(0.1, "a default final time")?,
            };
            vec![tf]
        }
    };
    let stt_order = s.stt_order.unwrap_or(2);
    if !(1..=3).contains(&stt_order) {
        return Err(Error::Config(format!("stt_order must be 1, 2 or 3, got {stt_order}")));
    }
    let defaults = Tolerances::default();
    let tol = Tolerances {
        rtol: positive("rtol", s.rtol.unwrap_or(defaults.rtol))?,
        atol: positive("atol", s.atol.unwrap_or(defaults.atol))?,
    };
    let length_unit = positive("length_unit", s.length_unit.or(preset.as_ref().map(|p| p.length_unit)).unwrap_or(1.0))?;
    let time_unit = positive("time_unit", s.time_unit.or(preset.as_ref().map(|p| p.time_unit)).unwrap_or(1.0))?;
    Ok(Scenario { model, x0, t0, times, period, stt_order, tol, length_unit, time_unit })
}

/// Scale grid in model units together with the values as written.
pub fn scale_grid(cfg: &ScalesSection, scenario: &Scenario) -> Result<Vec<(f64, f64)>> {
    if !(cfg.min >= 0.0) || !(cfg.max >= cfg.min) {
        return Err(Error::Config("scales need 0 <= min <= max".into()));
    }
    if cfg.n == 0 {
        return Err(Error::Config("scales need n >= 1".into()));
    }
    let k = scenario.unit_factor(&cfg.unit)?;
    let at = |t: f64| -> Result<f64> {
        match cfg.spacing.as_str() {
            "lin" => Ok(cfg.min + (cfg.max - cfg.min) * t),
            "log" => {
                if !(cfg.min > 0.0) {
                    return Err(Error::Config("log spacing needs min > 0".into()));
                }
                Ok(cfg.min * (cfg.max / cfg.min).powf(t))
            }
            other => Err(Error::Config(format!("unknown spacing '{other}'"))),
        }
    };
    (0..cfg.n)
        .map(|i| {
            let t = if cfg.n == 1 { 1.0 } else { i as f64 / (cfg.n - 1) as f64 };
            at(t).map(|v| (v, v * k))
        })
        .collect()
}
