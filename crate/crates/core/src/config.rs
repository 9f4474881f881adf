//! Model parameters, validation, and the canonical `key = value` config format.
//!
//! The config file carries the power ratio and the bias in dB; everything past
//! [`Config::system_params`] is linear.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and network constants of the two-tier deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Macro-BS density (nodes/m²).
    pub lambda1: f64,
    /// Pico-BS density (nodes/m²).
    pub lambda2: f64,
    /// User density (nodes/m²).
    pub lambda_u: f64,
    /// Macro transmit power (linear).
    pub p1: f64,
    /// Pico transmit power (linear).
    pub p2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Macro antennas.
    pub n1: usize,
    /// Pico antennas.
    pub n2: usize,
    /// Pico bias factor (linear, ≥ 1).
    pub bias: f64,
    /// Resource bandwidth in Hz.
    pub bandwidth: f64,
}

impl SystemParams {
    /// Equivalent parameter set with `p2 = 1` and `p1` equal to the original ratio.
    pub fn normalize_power_ratio(&self) -> SystemParams {
        SystemParams { p1: self.p1 / self.p2, p2: 1.0, ..*self }
    }

    /// `P1 / P2`.
    pub fn power_ratio(&self) -> f64 {
        self.p1 / self.p2
    }

    pub fn with_bias(&self, bias: f64) -> SystemParams {
        SystemParams { bias, ..*self }
    }

    pub fn with_bias_db(&self, bias_db: f64) -> SystemParams {
        self.with_bias(db_to_linear(bias_db))
    }

    pub fn with_lambda_u(&self, lambda_u: f64) -> SystemParams {
        SystemParams { lambda_u, ..*self }
    }

    /// Smallest BS density; sets the default simulation window.
    pub fn lambda_min(&self) -> f64 {
        self.lambda1.min(self.lambda2)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Inter-tier interference nulling with `in_dof` DoF.
    InterferenceNulling,
    /// Offloading without interference management (nulling with zero DoF).
    SimpleOffload,
    /// Almost blank subframes with resource split `abs_eta`.
    Abs,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::InterferenceNulling => "in",
            Scheme::SimpleOffload => "simple_offload",
            Scheme::Abs => "abs",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "in" | "interference_nulling" => Ok(Scheme::InterferenceNulling),
            "simple_offload" | "simple" | "u0" => Ok(Scheme::SimpleOffload),
            "abs" => Ok(Scheme::Abs),
            other => Err(format!("unknown scheme `{other}` (expected in, simple_offload, abs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub scheme: Scheme,
    /// Nulling DoF `U` (nulling scheme only).
    pub in_dof: usize,
    /// ABS resource fraction for offloaded users.
    pub abs_eta: f64,
    /// Rate threshold in bit/s.
    pub tau: f64,
}

impl SchemeParams {
    /// The DoF actually used for nulling; simple offloading is nulling with `U = 0`.
    pub fn effective_dof(&self) -> usize {
        match self.scheme {
            Scheme::InterferenceNulling => self.in_dof,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsParams {
    pub quad_rel_tol: f64,
    pub pmf_tail_eps: f64,
    pub load_sum_max: usize,
    pub mc_drops: u64,
    /// Simulation window radius in meters; `None` selects `6 / sqrt(pi * lambda_min)`.
    pub mc_window_radius: Option<f64>,
    pub rng_seed: u64,
}

impl Default for NumericsParams {
    fn default() -> Self {
        NumericsParams {
            quad_rel_tol: 1e-6,
            pmf_tail_eps: 1e-9,
            load_sum_max: 512,
            mc_drops: 100_000,
            mc_window_radius: None,
            rng_seed: 1,
        }
    }
}

impl NumericsParams {
    pub fn window_radius(&self, params: &SystemParams) -> f64 {
        self.mc_window_radius.unwrap_or_else(|| 6.0 / (std::f64::consts::PI * params.lambda_min()).sqrt())
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every type invariant and reports each violation individually.
pub fn validate(
    params: &SystemParams,
    scheme: &SchemeParams,
    numerics: &NumericsParams,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut bad = |field: &str, message: String| out.push(Violation { field: field.to_string(), message });
    for (field, v) in [("lambda1", params.lambda1), ("lambda2", params.lambda2), ("lambda_u", params.lambda_u)] {
        if !(v > 0.0 && v.is_finite()) {
            bad(field, format!("density must be > 0, got {v}"));
        }
    }
    for (field, v) in [("p1", params.p1), ("p2", params.p2)] {
        if !(v > 0.0 && v.is_finite()) {
            bad(field, format!("transmit power must be > 0, got {v}"));
        }
    }
    for (field, v) in [("alpha1", params.alpha1), ("alpha2", params.alpha2)] {
        if !(v > 2.0 && v.is_finite()) {
            bad(field, format!("path-loss exponent must satisfy alpha_j > 2, got {v}"));
        }
    }
    if params.n1 < 1 {
        bad("n1", "macro antenna count must be >= 1".into());
    }
    if params.n2 < 1 {
        bad("n2", "pico antenna count must be >= 1".into());
    }
    if !(params.bias >= 1.0 && params.bias.is_finite()) {
        bad("bias", format!("bias factor must be >= 1 (0 dB), got {}", params.bias));
    }
    if !(params.bandwidth > 0.0 && params.bandwidth.is_finite()) {
        bad("bandwidth_hz", format!("bandwidth must be > 0, got {}", params.bandwidth));
    }
    if scheme.in_dof >= params.n1.max(1) {
        bad("in_dof", format!("nulling DoF must satisfy U < n1 = {}, got {}", params.n1, scheme.in_dof));
    }
    if !(scheme.abs_eta > 0.0 && scheme.abs_eta < 1.0) {
        bad("abs_eta", format!("ABS fraction must lie in (0, 1), got {}", scheme.abs_eta));
    }
    if !(scheme.tau >= 0.0 && scheme.tau.is_finite()) {
        bad("tau_bps", format!("rate threshold must be >= 0, got {}", scheme.tau));
    }
    if !(numerics.quad_rel_tol > 0.0 && numerics.quad_rel_tol <= 1e-3) {
        bad("numerics.quad_rel_tol", format!("must lie in (0, 1e-3], got {}", numerics.quad_rel_tol));
    }
    if !(numerics.pmf_tail_eps > 0.0 && numerics.pmf_tail_eps <= 1e-4) {
        bad("numerics.pmf_tail_eps", format!("must lie in (0, 1e-4], got {}", numerics.pmf_tail_eps));
    }
    if numerics.load_sum_max < 1 {
        bad("numerics.load_sum_max", "must be >= 1".into());
    }
    if numerics.mc_drops < 1 {
        bad("numerics.mc_drops", "must be >= 1".into());
    }
    if let Some(r) = numerics.mc_window_radius {
        if !(r > 0.0 && r.is_finite()) {
            bad("numerics.mc_window_radius", format!("must be > 0, got {r}"));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// File-level configuration: the dB quantities are kept as written so that
/// serialization round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_u: f64,
    pub p1_db_over_p2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub n1: usize,
    pub n2: usize,
    pub bias_db: f64,
    pub bandwidth_hz: f64,
    pub scheme: Scheme,
    pub in_dof: usize,
    pub abs_eta: f64,
    pub tau_bps: f64,
    pub numerics: NumericsParams,
}

impl Default for Config {
    /// Two-tier setup with 4-antenna picos and 8-antenna macros at 10 dB power ratio.
    fn default() -> Self {
        Config {
            lambda1: 1e-4,
            lambda2: 5e-4,
            lambda_u: 0.01,
            p1_db_over_p2: 10.0,
            alpha1: 4.0,
            alpha2: 4.0,
            n1: 8,
            n2: 4,
            bias_db: 5.0,
            bandwidth_hz: 10e6,
            scheme: Scheme::InterferenceNulling,
            in_dof: 4,
            abs_eta: 0.5,
            tau_bps: 1e5,
            numerics: NumericsParams::default(),
        }
    }
}

/// Canonical key order of the config file.
pub const CONFIG_KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda_u",
    "p1_db_over_p2",
    "alpha1",
    "alpha2",
    "n1",
    "n2",
    "bias_db",
    "bandwidth_hz",
    "scheme",
    "in_dof",
    "abs_eta",
    "tau_bps",
    "numerics.quad_rel_tol",
    "numerics.pmf_tail_eps",
    "numerics.load_sum_max",
    "numerics.mc_drops",
    "numerics.mc_window_radius",
    "numerics.rng_seed",
];

fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("cannot parse `{value}` for key `{key}`"))
}

impl Config {
    /// Parses the `key = value` format. Keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                detail: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|detail| Error::Parse { line: idx + 1, detail })?;
        }
        Ok(cfg)
    }

    /// Sets one key from its textual value (also used for `--set key=value`).
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "lambda1" => self.lambda1 = num(key, value)?,
            "lambda2" => self.lambda2 = num(key, value)?,
            "lambda_u" => self.lambda_u = num(key, value)?,
            "p1_db_over_p2" => self.p1_db_over_p2 = num(key, value)?,
            "alpha1" => self.alpha1 = num(key, value)?,
            "alpha2" => self.alpha2 = num(key, value)?,
            "n1" => self.n1 = num(key, value)?,
            "n2" => self.n2 = num(key, value)?,
            "bias_db" => self.bias_db = num(key, value)?,
            "bandwidth_hz" => self.bandwidth_hz = num(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "in_dof" => self.in_dof = num(key, value)?,
            "abs_eta" => self.abs_eta = num(key, value)?,
            "tau_bps" => self.tau_bps = num(key, value)?,
            "numerics.quad_rel_tol" => self.numerics.quad_rel_tol = num(key, value)?,
            "numerics.pmf_tail_eps" => self.numerics.pmf_tail_eps = num(key, value)?,
            "numerics.load_sum_max" => self.numerics.load_sum_max = num(key, value)?,
            "numerics.mc_drops" => self.numerics.mc_drops = num(key, value)?,
            "numerics.mc_window_radius" => {
                self.numerics.mc_window_radius =
                    if value.eq_ignore_ascii_case("auto") { None } else { Some(num(key, value)?) }
            }
            "numerics.rng_seed" => self.numerics.rng_seed = num(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Canonical text form: every key in [`CONFIG_KEYS`] order, one per line.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "lambda1" => self.lambda1.to_string(),
            "lambda2" => self.lambda2.to_string(),
            "lambda_u" => self.lambda_u.to_string(),
            "p1_db_over_p2" => self.p1_db_over_p2.to_string(),
            "alpha1" => self.alpha1.to_string(),
            "alpha2" => self.alpha2.to_string(),
            "n1" => self.n1.to_string(),
            "n2" => self.n2.to_string(),
            "bias_db" => self.bias_db.to_string(),
            "bandwidth_hz" => self.bandwidth_hz.to_string(),
            "scheme" => self.scheme.to_string(),
            "in_dof" => self.in_dof.to_string(),
            "abs_eta" => self.abs_eta.to_string(),
            "tau_bps" => self.tau_bps.to_string(),
            "numerics.quad_rel_tol" => self.numerics.quad_rel_tol.to_string(),
            "numerics.pmf_tail_eps" => self.numerics.pmf_tail_eps.to_string(),
            "numerics.load_sum_max" => self.numerics.load_sum_max.to_string(),
            "numerics.mc_drops" => self.numerics.mc_drops.to_string(),
            "numerics.mc_window_radius" => match self.numerics.mc_window_radius {
                Some(r) => r.to_string(),
                None => "auto".to_string(),
            },
            "numerics.rng_seed" => self.numerics.rng_seed.to_string(),
            _ => unreachable!("key list and value_of out of sync"),
        }
    }

    pub fn system_params(&self) -> SystemParams {
        SystemParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda_u: self.lambda_u,
            p1: db_to_linear(self.p1_db_over_p2),
            p2: 1.0,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            n1: self.n1,
            n2: self.n2,
            bias: db_to_linear(self.bias_db),
            bandwidth: self.bandwidth_hz,
        }
    }

    pub fn scheme_params(&self) -> SchemeParams {
        SchemeParams { scheme: self.scheme, in_dof: self.in_dof, abs_eta: self.abs_eta, tau: self.tau_bps }
    }

    /// Converts to linear parameters and validates them.
    pub fn resolve(&self) -> Result<(SystemParams, SchemeParams, NumericsParams)> {
        let sys = self.system_params();
        let sch = self.scheme_params();
        validate(&sys, &sch, &self.numerics).map_err(Error::Invalid)?;
        Ok((sys, sch, self.numerics))
    }
}
