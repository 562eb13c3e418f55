//! Flat `key = value` experiment configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inverse::{DEFAULT_LAMBDA, DEFAULT_PRIOR_EXPONENT};
use crate::mesh::DEFAULT_CONTACT_IMPEDANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Jac,
    Kf,
    Hmm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Jac, Method::Kf, Method::Hmm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jac => "jac",
            Method::Kf => "kf",
            Method::Hmm => "hmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jac" => Ok(Method::Jac),
            "kf" => Ok(Method::Kf),
            "hmm" => Ok(Method::Hmm),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// How the simulated target moves between frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Uniform over node-sharing neighbors.
    AlwaysMove,
    /// Uniform over neighbors and the current element.
    MayStay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub electrodes: usize,
    pub coverage: f64,
    pub contact_impedance: f64,
    pub forward_elements: usize,
    pub inverse_elements: usize,
    pub mesh_seed: u64,
    pub lambda: f64,
    pub prior_exponent: f64,
    pub sigma_baseline: f64,
    pub sigma_target: f64,
    pub frames: usize,
    pub snr_db: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub gmm_components: usize,
    pub step_rule: StepRule,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            electrodes: 16,
            coverage: 0.5,
            contact_impedance: DEFAULT_CONTACT_IMPEDANCE,
            forward_elements: 287,
            inverse_elements: 152,
            mesh_seed: 0,
            lambda: DEFAULT_LAMBDA,
            prior_exponent: DEFAULT_PRIOR_EXPONENT,
            sigma_baseline: 1.0,
            sigma_target: 1000.0,
            frames: 500,
            snr_db: vec![100.0, 80.0, 60.0, 40.0, 20.0],
            runs: 100,
            seed: 0,
            gmm_components: 1,
            step_rule: StepRule::AlwaysMove,
            methods: Method::ALL.to_vec(),
        }
    }
}

const KEYS: [&str; 17] = [
    "electrodes",
    "coverage",
    "contact_impedance",
    "forward_elements",
    "inverse_elements",
    "mesh_seed",
    "lambda",
    "prior_exponent",
    "sigma_baseline",
    "sigma_target",
    "frames",
    "snr_db",
    "runs",
    "seed",
    "gmm_components",
    "allow_stay",
    "methods",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("{key}: cannot parse '{}'", value.trim()))
}

pub fn parse_snr_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value::<f64>("snr_db", s).map_err(Error::InvalidArgument))
        .collect()
}

pub fn parse_method_list(value: &str) -> Result<Vec<Method>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults. Blank lines and `#` comments
    /// are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: match e {
                        Error::InvalidArgument(m) => m,
                        other => other.to_string(),
                    },
                })?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let wrap = |r: std::result::Result<(), String>| r.map_err(Error::InvalidArgument);
        match key {
            "electrodes" => wrap(parse_value(key, value).map(|v| self.electrodes = v)),
            "coverage" => wrap(parse_value(key, value).map(|v| self.coverage = v)),
            "contact_impedance" => {
                wrap(parse_value(key, value).map(|v| self.contact_impedance = v))
            }
            "forward_elements" => wrap(parse_value(key, value).map(|v| self.forward_elements = v)),
            "inverse_elements" => wrap(parse_value(key, value).map(|v| self.inverse_elements = v)),
            "mesh_seed" => wrap(parse_value(key, value).map(|v| self.mesh_seed = v)),
            "lambda" => wrap(parse_value(key, value).map(|v| self.lambda = v)),
            "prior_exponent" => wrap(parse_value(key, value).map(|v| self.prior_exponent = v)),
            "sigma_baseline" => wrap(parse_value(key, value).map(|v| self.sigma_baseline = v)),
            "sigma_target" => wrap(parse_value(key, value).map(|v| self.sigma_target = v)),
            "frames" => wrap(parse_value(key, value).map(|v| self.frames = v)),
            "snr_db" => {
                self.snr_db = parse_snr_list(value)?;
                Ok(())
            }
            "runs" => wrap(parse_value(key, value).map(|v| self.runs = v)),
            "seed" => wrap(parse_value(key, value).map(|v| self.seed = v)),
            "gmm_components" => wrap(parse_value(key, value).map(|v| self.gmm_components = v)),
            "allow_stay" => wrap(parse_value::<bool>(key, value).map(|v| {
                self.step_rule = if v {
                    StepRule::MayStay
                } else {
                    StepRule::AlwaysMove
                };
            })),
            "methods" => {
                self.methods = parse_method_list(value)?;
                Ok(())
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown key '{other}' (expected one of {})",
                KEYS.join(", ")
            ))),
        }
    }

    /// Serializes every key; `parse(to_text())` reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let values = [
            self.electrodes.to_string(),
            self.coverage.to_string(),
            self.contact_impedance.to_string(),
            self.forward_elements.to_string(),
            self.inverse_elements.to_string(),
            self.mesh_seed.to_string(),
            self.lambda.to_string(),
            self.prior_exponent.to_string(),
            self.sigma_baseline.to_string(),
            self.sigma_target.to_string(),
            self.frames.to_string(),
            join(&self.snr_db),
            self.runs.to_string(),
            self.seed.to_string(),
            self.gmm_components.to_string(),
            (self.step_rule == StepRule::MayStay).to_string(),
            join(&self.methods),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        check(
            self.electrodes >= 8 && self.electrodes.is_multiple_of(2),
            format!(
                "electrodes must be even and at least 8, got {}",
                self.electrodes
            ),
        );
        check(
            self.coverage > 0.0 && self.coverage < 1.0,
            format!("coverage must lie in (0, 1), got {}", self.coverage),
        );
        check(
            self.contact_impedance > 0.0 && self.contact_impedance.is_finite(),
            format!(
                "contact_impedance must be positive, got {}",
                self.contact_impedance
            ),
        );
        check(
            self.forward_elements >= 16,
            format!(
                "forward_elements must be at least 16, got {}",
                self.forward_elements
            ),
        );
        check(
            self.inverse_elements >= 16,
            format!(
                "inverse_elements must be at least 16, got {}",
                self.inverse_elements
            ),
        );
        check(
            self.lambda > 0.0 && self.lambda.is_finite(),
            format!("lambda must be positive, got {}", self.lambda),
        );
        check(
            (0.0..=1.0).contains(&self.prior_exponent),
            format!(
                "prior_exponent must lie in [0, 1], got {}",
                self.prior_exponent
            ),
        );
        check(
            self.sigma_baseline > 0.0 && self.sigma_baseline.is_finite(),
            format!(
                "sigma_baseline must be positive, got {}",
                self.sigma_baseline
            ),
        );
        check(
            self.sigma_target > 0.0 && self.sigma_target.is_finite(),
            format!("sigma_target must be positive, got {}", self.sigma_target),
        );
        check(self.frames >= 1, "frames must be at least 1".into());
        check(!self.snr_db.is_empty(), "snr_db must not be empty".into());
        for s in &self.snr_db {
            check(
                !s.is_nan() && *s != f64::NEG_INFINITY,
                format!("snr_db entry {s} is not a level or inf"),
            );
        }
        check(self.runs >= 1, "runs must be at least 1".into());
        check(
            self.gmm_components >= 1 && (self.frames == 0 || self.gmm_components <= self.frames),
            format!(
                "gmm_components must be at least 1 and at most frames ({}), got {}",
                self.frames, self.gmm_components
            ),
        );
        check(!self.methods.is_empty(), "methods must not be empty".into());
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        check(
            sorted.len() == self.methods.len(),
            "methods contains duplicates".into(),
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }
}
