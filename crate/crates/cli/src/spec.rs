//! Experiment specifications: one TOML file per experiment.
//!
//! ```toml
//! name = "coverage_vs_rate"
//! command = "coverage-curve"
//! config = "configs/two_tier.conf"   # relative to this file
//! axis = "tau"
//! grid = [1e5, 3e5, 1e6]
//! methods = ["full", "mla", "mc"]
//! out = "out/coverage_vs_rate"
//!
//! [set]                               # config overrides
//! in_dof = 4
//!
//! [[series]]                          # one curve per value
//! key = "bias_db"
//! values = [5, 10]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use hetnet_core::coverage::Method;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Tau,
    U,
    Eta,
    B,
    Beta,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Tau => "tau",
            Axis::U => "u",
            Axis::Eta => "eta",
            Axis::B => "b",
            Axis::Beta => "beta",
        }
    }

    /// Column heading in the CSV output.
    pub fn column(&self) -> &'static str {
        match self {
            Axis::Tau => "tau_bps",
            Axis::U => "in_dof",
            Axis::Eta => "abs_eta",
            Axis::B => "bias_db",
            Axis::Beta => "sir_threshold",
        }
    }

    /// Config key the axis overrides, if any.
    pub fn config_key(&self) -> Option<&'static str> {
        match self {
            Axis::Tau => Some("tau_bps"),
            Axis::U => Some("in_dof"),
            Axis::Eta => Some("abs_eta"),
            Axis::B => Some("bias_db"),
            Axis::Beta => None,
        }
    }

    pub fn log_scale(&self) -> bool {
        matches!(self, Axis::Tau | Axis::Beta)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "tau" => Axis::Tau,
            "u" => Axis::U,
            "eta" => Axis::Eta,
            "b" | "bias" => Axis::B,
            "beta" => Axis::Beta,
            other => bail!("unknown sweep axis `{other}` (expected tau, u, eta, b, beta)"),
        })
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    Ok(match s.trim().to_ascii_lowercase().as_str() {
        "full" => Method::Full,
        "mla" => Method::Mla,
        "mc" | "montecarlo" => Method::MonteCarlo,
        other => bail!("unknown method `{other}` (expected full, mla, mc)"),
    })
}

/// A config key varied across curves of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    /// Subcommand the spec is written for.
    pub command: Option<String>,
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub series: Vec<Series>,
    pub out: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    name: String,
    command: Option<String>,
    config: Option<PathBuf>,
    axis: String,
    grid: Vec<f64>,
    methods: Vec<String>,
    out: Option<PathBuf>,
    #[serde(default)]
    set: BTreeMap<String, toml::Value>,
    #[serde(default)]
    series: Vec<SeriesFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesFile {
    key: String,
    values: Vec<toml::Value>,
}

fn scalar(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        other => bail!("expected a scalar value, got `{other}`"),
    })
}

impl ExperimentSpec {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).context("malformed experiment spec")?;
        let overrides = file
            .set
            .iter()
            .map(|(k, v)| Ok((k.clone(), scalar(v).with_context(|| format!("set.{k}"))?)))
            .collect::<Result<Vec<_>>>()?;
        let series = file
            .series
            .iter()
            .map(|s| {
                let values = s.values.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                Ok(Series { key: s.key.clone(), values })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ExperimentSpec {
            name: file.name,
            command: file.command,
            config: file.config.map(|p| if p.is_absolute() { p } else { base_dir.join(p) }),
            overrides,
            axis: file.axis.parse()?,
            grid: file.grid,
            methods: file.methods.iter().map(|m| parse_method(m)).collect::<Result<Vec<_>>>()?,
            series,
            out: file.out.unwrap_or_else(|| PathBuf::from("out")),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentSpec::parse(&text, dir).with_context(|| format!("in {}", path.display()))
    }

    /// Checks the spec invariants: a nonempty, strictly increasing, finite
    /// grid, at least one method, and nonempty series.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            bail!("experiment name must be a nonempty file stem, got `{}`", self.name);
        }
        if self.grid.is_empty() {
            bail!("sweep grid is empty");
        }
        if let Some(x) = self.grid.iter().find(|x| !x.is_finite()) {
            bail!("sweep grid holds a non-finite value {x}");
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            bail!("sweep grid must be sorted in increasing order without repeats");
        }
        if self.axis == Axis::U && self.grid.iter().any(|u| *u < 0.0 || u.fract() != 0.0) {
            bail!("the U axis takes nonnegative integers");
        }
        if self.methods.is_empty() {
            bail!("method list is empty");
        }
        for s in &self.series {
            if s.values.is_empty() {
                bail!("series over `{}` has no values", s.key);
            }
            if Some(s.key.as_str()) == self.axis.config_key() {
                bail!("series key `{}` is also the sweep axis", s.key);
            }
        }
        Ok(())
    }

    /// Every combination of series values, in file order.
    pub fn series_points(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for s in &self.series {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    s.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((s.key.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        out
    }
}
