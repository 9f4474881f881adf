//! Subcommand runners. Each returns fully rendered artifacts; nothing is
//! written until the whole experiment has succeeded.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use hetnet_core::association::{
    assoc_stats, in_probability, pmf_active_offloaded, pmf_active_offloaded_nearest, pmf_in_dof, PmfTable,
};
use hetnet_core::coverage::{
    laplace_derivative_scaled, laplace_interference, Analyzer, CoverageReport, LaplaceField, Method, UserClass,
};
use hetnet_core::montecarlo::{estimate_interference_functional, estimate_offload_pmfs, McCoverage, Simulator};
use hetnet_core::optimize::{default_bias_grid_db, optimal_bias, BiasPoint};
use hetnet_core::{Config, NumericsParams, Scheme, SchemeParams, SystemParams};

use crate::output::{fmt_f64, render_csv, render_gnuplot, Artifact, Curve, Metadata, Plot, Table};
use crate::report::{Check, ValidationReport};
use crate::spec::{parse_method, Axis, ExperimentSpec};

pub const GIT_REVISION: &str = env!("HETNET_GIT_REVISION");

pub const PMF_SUP_NORM: f64 = 0.06;
pub const IN_PROBABILITY_DEVIATION: f64 = 0.03;
pub const COVERAGE_FLOOR: f64 = 0.02;
pub const LAPLACE_SIGMAS: f64 = 3.0;
pub const LAPLACE_MAX_DROPS: u64 = 40_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CoverageCurve,
    OptimizeU,
    OptimizeEta,
    CompareSchemes,
    Pmf,
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CoverageCurve => "coverage-curve",
            Command::OptimizeU => "optimize-u",
            Command::OptimizeEta => "optimize-eta",
            Command::CompareSchemes => "compare-schemes",
            Command::Pmf => "pmf",
            Command::Validate => "validate",
        }
    }

    fn axes(&self) -> &'static [Axis] {
        match self {
            Command::CoverageCurve => &[Axis::Tau, Axis::Beta, Axis::U, Axis::Eta, Axis::B],
            Command::OptimizeU | Command::OptimizeEta => &[Axis::Tau, Axis::B],
            Command::CompareSchemes | Command::Pmf => &[Axis::B],
            Command::Validate => &[Axis::Tau],
        }
    }

    fn methods(&self) -> &'static [Method] {
        match self {
            Command::CoverageCurve => &[Method::Full, Method::Mla, Method::MonteCarlo],
            Command::OptimizeU => &[Method::Full, Method::Mla],
            Command::OptimizeEta | Command::CompareSchemes => &[Method::Mla],
            Command::Pmf | Command::Validate => &[Method::Full, Method::MonteCarlo],
        }
    }

    fn default_methods(&self) -> Vec<Method> {
        match self {
            Command::CoverageCurve => vec![Method::Full, Method::Mla],
            Command::OptimizeU | Command::OptimizeEta | Command::CompareSchemes => vec![Method::Mla],
            Command::Pmf => vec![Method::Full],
            Command::Validate => vec![Method::Full, Method::MonteCarlo],
        }
    }

    fn default_grid(&self, axis: Axis, cfg: &Config) -> Vec<f64> {
        match (self, axis) {
            (Command::Validate, _) => (0..10).map(|i| 1e5 * 30f64.powf(i as f64 / 9.0)).collect(),
            (Command::CompareSchemes, _) => default_bias_grid_db(),
            (_, Axis::Tau) => vec![cfg.tau_bps],
            (_, Axis::U) => vec![cfg.in_dof as f64],
            (_, Axis::Eta) => vec![cfg.abs_eta],
            (_, Axis::B) => vec![cfg.bias_db],
            (_, Axis::Beta) => vec![1.0],
        }
    }
}

/// Command-line settings; each overrides the matching spec entry.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub spec: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub drops: Option<u64>,
    pub out: Option<PathBuf>,
    pub methods: Option<Vec<String>>,
    pub axis: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub name: Option<String>,
    pub analytic_set: Vec<String>,
}

fn key_value(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn apply(cfg: &mut Config, key: &str, value: &str) -> Result<()> {
    cfg.set(key, value).map_err(|e| anyhow!("{e}"))
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub spec: ExperimentSpec,
    /// Base config after file, spec overrides, `--set`, `--seed` and `--drops`.
    pub config: Config,
    /// Keys overridden on the analytic side of `validate` only.
    pub analytic_overrides: Vec<(String, String)>,
}

impl Invocation {
    pub fn resolve(command: Command, opts: &Options) -> Result<Self> {
        let mut spec = match &opts.spec {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec {
                name: command.name().replace('-', "_"),
                command: None,
                config: None,
                overrides: Vec::new(),
                axis: command.axes()[0],
                grid: Vec::new(),
                methods: command.default_methods(),
                series: Vec::new(),
                out: PathBuf::from("out"),
            },
        };
        if let Some(c) = &spec.command {
            if c != command.name() {
                bail!("experiment `{}` is written for `{c}`, not `{}`", spec.name, command.name());
            }
        }
        let grid_from_spec = opts.spec.is_some();
        if let Some(p) = &opts.config {
            spec.config = Some(p.clone());
        }
        for s in &opts.set {
            spec.overrides.push(key_value(s)?);
        }
        if let Some(a) = &opts.axis {
            spec.axis = a.parse()?;
        }
        if let Some(m) = &opts.methods {
            spec.methods = m.iter().filter(|s| !s.trim().is_empty()).map(|s| parse_method(s)).collect::<Result<_>>()?;
        }
        if let Some(n) = &opts.name {
            spec.name = n.clone();
        }
        if let Some(o) = &opts.out {
            spec.out = o.clone();
        }

        let mut config = match &spec.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Config::parse(&text).with_context(|| format!("in config {}", p.display()))?
            }
            None => Config::default(),
        };
        for (k, v) in &spec.overrides {
            apply(&mut config, k, v)?;
        }
        if let Some(seed) = opts.seed {
            config.numerics.rng_seed = seed;
        }
        if let Some(drops) = opts.drops {
            config.numerics.mc_drops = drops;
        }

        match &opts.grid {
            Some(g) => spec.grid = g.clone(),
            None if !grid_from_spec => spec.grid = command.default_grid(spec.axis, &config),
            None => {}
        }
        spec.validate()?;
        if !command.axes().contains(&spec.axis) {
            bail!("`{}` does not sweep the {} axis", command.name(), spec.axis);
        }
        if let Some(m) = spec.methods.iter().find(|m| !command.methods().contains(m)) {
            bail!("`{}` does not support method {}", command.name(), m.as_str());
        }
        for p in spec.series_points() {
            let mut c = config.clone();
            for (k, v) in &p {
                apply(&mut c, k, v)?;
            }
            c.resolve()?;
        }

        let analytic_overrides = opts.analytic_set.iter().map(|s| key_value(s)).collect::<Result<Vec<_>>>()?;
        if !analytic_overrides.is_empty() && command != Command::Validate {
            bail!("--analytic-set only applies to validate");
        }
        Ok(Invocation { command, spec, config, analytic_overrides })
    }

    fn metadata(&self) -> Metadata {
        let s = &self.spec;
        let mut fields = vec![
            ("axis".to_string(), s.axis.to_string()),
            ("methods".to_string(), s.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")),
        ];
        for series in &s.series {
            fields.push((format!("series {}", series.key), series.values.join(",")));
        }
        for (k, v) in &self.analytic_overrides {
            fields.push((format!("analytic {k}"), v.clone()));
        }
        Metadata {
            command: self.command.name().to_string(),
            experiment: s.name.clone(),
            git_revision: GIT_REVISION.to_string(),
            seed: self.config.numerics.rng_seed,
            drops: self.config.numerics.mc_drops,
            fields,
            config: self.config.clone(),
        }
    }

    fn series_keys(&self) -> Vec<String> {
        self.spec.series.iter().map(|s| s.key.clone()).collect()
    }

    /// Config at one series point and, optionally, one axis value.
    fn point(&self, series: &[(String, String)], value: Option<f64>) -> Result<Config> {
        let mut c = self.config.clone();
        for (k, v) in series {
            apply(&mut c, k, v)?;
        }
        if let (Some(x), Some(key)) = (value, self.spec.axis.config_key()) {
            let text = if self.spec.axis == Axis::U { format!("{}", x as usize) } else { x.to_string() };
            apply(&mut c, key, &text)?;
        }
        Ok(c)
    }

    fn csv(&self, file_name: &str, table: &Table, plot: &Plot) -> Result<Vec<Artifact>> {
        let csv_name = format!("{file_name}.csv");
        Ok(vec![
            Artifact { file_name: csv_name.clone(), contents: render_csv(&self.metadata(), table)? },
            Artifact { file_name: format!("{file_name}.gp"), contents: render_gnuplot(&csv_name, plot) },
        ])
    }

    pub fn execute(&self) -> Result<Vec<Artifact>> {
        match self.command {
            Command::CoverageCurve => self.coverage_curve(),
            Command::OptimizeU => self.optimize_u(),
            Command::OptimizeEta => self.optimize_eta(),
            Command::CompareSchemes => self.compare_schemes(),
            Command::Pmf => self.pmf(),
            Command::Validate => Ok(vec![self.report_artifact(&self.validation_report()?)]),
        }
    }

    fn coverage_curve(&self) -> Result<Vec<Artifact>> {
        let axis = self.spec.axis;
        let keys = self.series_keys();
        let mut cols = vec![axis.column().to_string()];
        cols.extend(keys.iter().cloned());
        cols.extend(["method", "class", "weight", "coverage", "ci_low", "ci_high"].map(String::from));
        let mut table = Table::new(cols);
        let grid = &self.spec.grid;
        let mut curves = Vec::new();
        for sp in self.spec.series_points() {
            let base = self.point(&sp, None)?;
            for &method in &self.spec.methods {
                let rows: Vec<Rows> = if matches!(axis, Axis::Tau | Axis::Beta) {
                    let (params, scheme, numerics) = base.resolve()?;
                    if method == Method::MonteCarlo {
                        let sim = Simulator::new(&params, &numerics)?;
                        let drops = numerics.mc_drops;
                        let est = if axis == Axis::Tau {
                            sim.rate_coverage(&scheme, grid, drops)?
                        } else {
                            sim.sir_coverage(&scheme, grid, drops)?
                        };
                        est.iter().map(mc_rows).collect()
                    } else {
                        let a = Analyzer::new(&params, &numerics)?;
                        let reports = if axis == Axis::Tau {
                            a.rate_coverage_batch(&scheme, grid, method)?
                        } else {
                            grid.iter()
                                .map(|&b| a.sir_coverage_report(&scheme, b))
                                .collect::<hetnet_core::Result<_>>()?
                        };
                        reports.iter().map(analytic_rows).collect()
                    }
                } else {
                    grid.iter()
                        .map(|&x| {
                            let (params, scheme, numerics) = self.point(&sp, Some(x))?.resolve()?;
                            let tau = scheme.tau;
                            Ok(if method == Method::MonteCarlo {
                                let est = Simulator::new(&params, &numerics)?.rate_coverage(
                                    &scheme,
                                    &[tau],
                                    numerics.mc_drops,
                                )?;
                                mc_rows(&est[0])
                            } else {
                                analytic_rows(&Analyzer::new(&params, &numerics)?.rate_coverage(&scheme, tau, method)?)
                            })
                        })
                        .collect::<Result<_>>()?
                };
                for (x, rows) in grid.iter().zip(rows) {
                    for r in rows {
                        let mut row = vec![fmt_f64(*x)];
                        row.extend(sp.iter().map(|(_, v)| v.clone()));
                        row.push(method.as_str().to_string());
                        row.extend(r);
                        table.push(row);
                    }
                }
                curves.push((sp.clone(), method));
            }
        }
        let plot = Plot {
            xlabel: axis.column().to_string(),
            ylabel: if axis == Axis::Beta { "SIR coverage".into() } else { "rate coverage".into() },
            logx: axis.log_scale(),
            curves: curves
                .into_iter()
                .map(|(sp, method)| {
                    let mut filters: Vec<(usize, String)> = sp.iter().map(|(k, v)| (table.col(k), v.clone())).collect();
                    filters.push((table.col("method"), method.as_str().to_string()));
                    filters.push((table.col("class"), "overall".to_string()));
                    Curve {
                        x: 1,
                        y: table.col("coverage"),
                        filters,
                        flag: None,
                        title: series_title(&sp, method.as_str()),
                        style: if method == Method::MonteCarlo { "points" } else { "lines" },
                    }
                })
                .collect(),
        };
        self.csv(&self.spec.name, &table, &plot)
    }

    fn optimize_u(&self) -> Result<Vec<Artifact>> {
        let axis = self.spec.axis;
        let keys = self.series_keys();
        let points = self.spec.series_points();
        let max_n1 = points
            .iter()
            .map(|sp| self.point(sp, None).map(|c| c.n1))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(1);
        let mut cols = vec![axis.column().to_string()];
        cols.extend(keys.iter().cloned());
        cols.extend(["method", "u_star", "coverage", "boundary_warning"].map(String::from));
        cols.extend((0..max_n1).map(|u| format!("coverage_u{u}")));
        let mut table = Table::new(cols);
        let mut curves = Vec::new();
        for sp in &points {
            for &method in &self.spec.methods {
                for &x in &self.spec.grid {
                    let (params, scheme, numerics) = self.point(sp, Some(x))?.resolve()?;
                    let r = Analyzer::new(&params, &numerics)?.optimal_in_dof_with(scheme.tau, method)?;
                    let mut row = vec![fmt_f64(x)];
                    row.extend(sp.iter().map(|(_, v)| v.clone()));
                    row.push(method.as_str().to_string());
                    row.push(r.arg.to_string());
                    row.push(fmt_f64(r.value));
                    row.push(u8::from(r.boundary_warning).to_string());
                    let mut per_u = vec![String::new(); max_n1];
                    for (u, v) in &r.trace {
                        per_u[*u] = fmt_f64(*v);
                    }
                    row.extend(per_u);
                    table.push(row);
                }
                curves.push((sp.clone(), method));
            }
        }
        let plot = Plot {
            xlabel: axis.column().to_string(),
            ylabel: "optimal IN DoF".into(),
            logx: axis.log_scale(),
            curves: curves
                .into_iter()
                .map(|(sp, method)| {
                    let mut filters: Vec<(usize, String)> = sp.iter().map(|(k, v)| (table.col(k), v.clone())).collect();
                    filters.push((table.col("method"), method.as_str().to_string()));
                    Curve {
                        x: 1,
                        y: table.col("u_star"),
                        filters,
                        flag: None,
                        title: series_title(&sp, method.as_str()),
                        style: "steps",
                    }
                })
                .collect(),
        };
        self.csv(&self.spec.name, &table, &plot)
    }

    fn optimize_eta(&self) -> Result<Vec<Artifact>> {
        let axis = self.spec.axis;
        let mut cols = vec![axis.column().to_string()];
        cols.extend(self.series_keys());
        cols.extend(["method", "eta_star", "coverage", "boundary_warning"].map(String::from));
        let mut table = Table::new(cols);
        let mut curves = Vec::new();
        for sp in self.spec.series_points() {
            for &x in &self.spec.grid {
                let (params, scheme, numerics) = self.point(&sp, Some(x))?.resolve()?;
                let r = Analyzer::new(&params, &numerics)?.optimal_eta(scheme.tau, params.n1)?;
                let mut row = vec![fmt_f64(x)];
                row.extend(sp.iter().map(|(_, v)| v.clone()));
                row.extend([
                    Method::Mla.as_str().to_string(),
                    fmt_f64(r.arg),
                    fmt_f64(r.value),
                    u8::from(r.boundary_warning).to_string(),
                ]);
                table.push(row);
            }
            curves.push(sp);
        }
        let plot = Plot {
            xlabel: axis.column().to_string(),
            ylabel: "optimal ABS fraction".into(),
            logx: axis.log_scale(),
            curves: curves
                .into_iter()
                .map(|sp| {
                    let filters = sp.iter().map(|(k, v)| (table.col(k), v.clone())).collect();
                    Curve {
                        x: 1,
                        y: table.col("eta_star"),
                        filters,
                        flag: None,
                        title: series_title(&sp, "mla"),
                        style: "linespoints",
                    }
                })
                .collect(),
        };
        self.csv(&self.spec.name, &table, &plot)
    }

    fn compare_schemes(&self) -> Result<Vec<Artifact>> {
        let keys = self.series_keys();
        let schemes =
            [(Scheme::InterferenceNulling, "in"), (Scheme::SimpleOffload, "simple_offload"), (Scheme::Abs, "abs")];
        let mut cols = vec![Axis::B.column().to_string()];
        cols.extend(keys.iter().cloned());
        cols.extend(
            [
                "in_coverage",
                "in_u_star",
                "in_optimum",
                "simple_offload_coverage",
                "simple_offload_optimum",
                "abs_coverage",
                "abs_eta_star",
                "abs_optimum",
            ]
            .map(String::from),
        );
        let mut table = Table::new(cols);
        let mut bcols = keys.clone();
        bcols.extend(["scheme", "b_star_db", "inner_arg", "class", "weight", "coverage"].map(String::from));
        let mut breakdown = Table::new(bcols);
        let grid = &self.spec.grid;
        let points = self.spec.series_points();
        for sp in &points {
            let (params, _, numerics) = self.point(sp, None)?.resolve()?;
            let tau = self.point(sp, None)?.tau_bps;
            let mut results: Vec<(f64, Vec<BiasPoint>)> = Vec::new();
            for (scheme, name) in schemes {
                let (best, pts) = optimal_bias(scheme, tau, &params, &numerics, grid)?;
                let inner = pts.iter().find(|p| p.bias_db == best.arg).map(|p| p.inner_arg).unwrap_or(0.0);
                let sch = SchemeParams {
                    scheme,
                    in_dof: inner as usize,
                    abs_eta: if scheme == Scheme::Abs { inner } else { 0.5 },
                    tau,
                };
                let report =
                    Analyzer::new(&params.with_bias_db(best.arg), &numerics)?.rate_coverage(&sch, tau, Method::Mla)?;
                for (class, weight, coverage) in user_types(&report) {
                    let mut row: Vec<String> = sp.iter().map(|(_, v)| v.clone()).collect();
                    row.extend([
                        name.to_string(),
                        fmt_f64(best.arg),
                        fmt_f64(inner),
                        class,
                        fmt_f64(weight),
                        fmt_f64(coverage),
                    ]);
                    breakdown.push(row);
                }
                results.push((best.arg, pts));
            }
            for (i, &b) in grid.iter().enumerate() {
                let mut row = vec![fmt_f64(b)];
                row.extend(sp.iter().map(|(_, v)| v.clone()));
                let flag = |k: usize| u8::from(results[k].0 == b).to_string();
                let p = |k: usize| results[k].1[i];
                row.extend([fmt_f64(p(0).coverage), fmt_f64(p(0).inner_arg), flag(0), fmt_f64(p(1).coverage), flag(1)]);
                row.extend([fmt_f64(p(2).coverage), fmt_f64(p(2).inner_arg), flag(2)]);
                table.push(row);
            }
        }
        let mut curves = Vec::new();
        for sp in &points {
            let filters: Vec<(usize, String)> = sp.iter().map(|(k, v)| (table.col(k), v.clone())).collect();
            for (_, name) in schemes {
                let y = table.col(&format!("{name}_coverage"));
                let flag = table.col(&format!("{name}_optimum"));
                let title = series_title(sp, name);
                curves.push(Curve {
                    x: 1,
                    y,
                    filters: filters.clone(),
                    flag: None,
                    title: title.clone(),
                    style: "linespoints",
                });
                curves.push(Curve {
                    x: 1,
                    y,
                    filters: filters.clone(),
                    flag: Some(flag),
                    title: format!("{title} optimum"),
                    style: "points pt 6 ps 3",
                });
            }
        }
        let plot = Plot { xlabel: "bias_db".into(), ylabel: "rate coverage".into(), logx: false, curves };
        let mut bcurves = Vec::new();
        for sp in &points {
            for (_, name) in schemes {
                let mut filters: Vec<(usize, String)> = sp.iter().map(|(k, v)| (breakdown.col(k), v.clone())).collect();
                filters.push((breakdown.col("scheme"), name.to_string()));
                bcurves.push(Curve {
                    x: breakdown.col("weight"),
                    y: breakdown.col("coverage"),
                    filters,
                    flag: None,
                    title: series_title(sp, name),
                    style: "points",
                });
            }
        }
        let bplot = Plot {
            xlabel: "user-type weight".into(),
            ylabel: "rate coverage at the scheme's best bias".into(),
            logx: false,
            curves: bcurves,
        };
        let mut out = self.csv(&self.spec.name, &table, &plot)?;
        out.extend(self.csv(&format!("{}_breakdown", self.spec.name), &breakdown, &bplot)?);
        Ok(out)
    }

    fn pmf(&self) -> Result<Vec<Artifact>> {
        let keys = self.series_keys();
        let analytic = self.spec.methods.contains(&Method::Full);
        let mc = self.spec.methods.contains(&Method::MonteCarlo);
        let mut cols = vec![Axis::B.column().to_string()];
        cols.extend(keys.iter().cloned());
        cols.push("n".into());
        if analytic {
            cols.extend(
                ["approx_per_macro", "approx_nearest", "approx_in_dof", "approx_in_probability"].map(String::from),
            );
        }
        if mc {
            cols.extend(["mc_per_macro", "mc_nearest", "mc_in_probability"].map(String::from));
        }
        let mut table = Table::new(cols);
        let mut curves = Vec::new();
        for sp in self.spec.series_points() {
            for &b in &self.spec.grid {
                let cfg = self.point(&sp, Some(b))?;
                let (params, scheme, numerics) = cfg.resolve()?;
                let stats = assoc_stats(&params.normalize_power_ratio(), &numerics)?;
                let tables = if analytic {
                    Some((
                        pmf_active_offloaded(&stats, &numerics)?,
                        pmf_active_offloaded_nearest(&stats, &numerics)?,
                        pmf_in_dof(&stats, scheme.in_dof, &numerics)?,
                        (0..=params.n1)
                            .map(|u| in_probability(&stats, u, &numerics))
                            .collect::<hetnet_core::Result<Vec<_>>>()?,
                    ))
                } else {
                    None
                };
                let sim = if mc { Some(estimate_offload_pmfs(&params, &numerics, numerics.mc_drops)?) } else { None };
                let mut n_max = params.n1;
                if let Some((a, n, _, _)) = &tables {
                    n_max = n_max.max(support_end(a)).max(support_end(n));
                }
                if let Some(s) = &sim {
                    n_max = n_max.max(last_nonzero(&s.per_macro)).max(last_nonzero(&s.offloaded_side));
                }
                for n in 0..=n_max {
                    let mut row = vec![fmt_f64(b)];
                    row.extend(sp.iter().map(|(_, v)| v.clone()));
                    row.push(n.to_string());
                    if let Some((a, near, dof, pr)) = &tables {
                        row.extend([fmt_f64(a.prob(n)), fmt_f64(near.prob(n)), fmt_f64(dof.prob(n))]);
                        row.push(pr.get(n).map(|p| fmt_f64(*p)).unwrap_or_default());
                    }
                    if let Some(s) = &sim {
                        let at = |v: &[f64]| fmt_f64(v.get(n).copied().unwrap_or(0.0));
                        row.extend([at(&s.per_macro), at(&s.offloaded_side)]);
                        row.push(s.in_probability.get(n).map(|p| fmt_f64(*p)).unwrap_or_default());
                    }
                    table.push(row);
                }
                curves.push((sp.clone(), b));
            }
        }
        let mut plot_curves = Vec::new();
        for (sp, b) in curves {
            let mut filters: Vec<(usize, String)> = sp.iter().map(|(k, v)| (table.col(k), v.clone())).collect();
            filters.push((1, fmt_f64(b)));
            let n = table.col("n");
            let title = series_title(&sp, &format!("B={b} dB"));
            if analytic {
                let y = table.col("approx_per_macro");
                plot_curves.push(Curve {
                    x: n,
                    y,
                    filters: filters.clone(),
                    flag: None,
                    title: format!("{title} approx"),
                    style: "linespoints",
                });
            }
            if mc {
                let y = table.col("mc_per_macro");
                plot_curves.push(Curve { x: n, y, filters, flag: None, title: format!("{title} mc"), style: "points" });
            }
        }
        let plot = Plot {
            xlabel: "active offloaded users per macro-BS".into(),
            ylabel: "probability".into(),
            logx: false,
            curves: plot_curves,
        };
        self.csv(&self.spec.name, &table, &plot)
    }

    pub fn validation_report(&self) -> Result<ValidationReport> {
        let sim_cfg = self.config.clone();
        let mut ana_cfg = self.config.clone();
        for (k, v) in &self.analytic_overrides {
            apply(&mut ana_cfg, k, v)?;
        }
        let (sim_params, sim_scheme, numerics) = sim_cfg.resolve()?;
        let (ana_params, ana_scheme, ana_numerics) = ana_cfg.resolve()?;
        let drops = numerics.mc_drops;
        let grid = &self.spec.grid;
        let mut checks = Vec::new();

        let mc = Simulator::new(&sim_params, &numerics)?.rate_coverage(&sim_scheme, grid, drops)?;
        let full = Analyzer::new(&ana_params, &ana_numerics)
            .and_then(|a| a.rate_coverage_batch(&ana_scheme, grid, Method::Full));
        let threshold = mc.iter().map(|m| m.overall.ci95()).fold(COVERAGE_FLOOR, f64::max);
        checks.push(match full {
            Ok(full) => {
                let (at, dev) = grid
                    .iter()
                    .zip(full.iter().zip(&mc))
                    .map(|(t, (f, m))| (*t, (f.overall - m.overall.value).abs()))
                    .fold((grid[0], 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                Check::at_most(
                    "coverage_sup_deviation",
                    Some(dev),
                    threshold,
                    format!("full vs simulation over {} thresholds, worst at tau = {at}", grid.len()),
                )
            }
            Err(e) => Check::at_most("coverage_sup_deviation", None, threshold, format!("analytic side failed: {e}")),
        });

        let sim_pmfs = estimate_offload_pmfs(&sim_params, &numerics, drops);
        let stats = assoc_stats(&ana_params.normalize_power_ratio(), &ana_numerics);
        let pmf_check = |name: &str, table: hetnet_core::Result<PmfTable>, hist: Option<&Vec<f64>>| match (table, hist)
        {
            (Ok(t), Some(h)) => Check::at_most(
                name,
                Some(sup_norm(&t, h)),
                PMF_SUP_NORM,
                "sup-norm against the simulated histogram".into(),
            ),
            (Err(e), _) => Check::at_most(name, None, PMF_SUP_NORM, format!("analytic side failed: {e}")),
            (_, None) => Check::at_most(name, None, PMF_SUP_NORM, "simulation produced no samples".into()),
        };
        let sims = sim_pmfs.as_ref().ok();
        match &stats {
            Ok(s) => {
                checks.push(pmf_check(
                    "pmf_per_macro_sup_norm",
                    pmf_active_offloaded(s, &ana_numerics),
                    sims.map(|p| &p.per_macro),
                ));
                checks.push(pmf_check(
                    "pmf_nearest_sup_norm",
                    pmf_active_offloaded_nearest(s, &ana_numerics),
                    sims.map(|p| &p.offloaded_side),
                ));
                let u = ana_scheme.in_dof.max(1);
                let measured = match (in_probability(s, u, &ana_numerics), sims.and_then(|p| p.in_probability.get(u))) {
                    (Ok(a), Some(m)) => Some((a - m).abs()),
                    _ => None,
                };
                checks.push(Check::at_most(
                    "in_probability_deviation",
                    measured,
                    IN_PROBABILITY_DEVIATION,
                    format!("protection probability at U = {u}"),
                ));
            }
            Err(e) => {
                for name in ["pmf_per_macro_sup_norm", "pmf_nearest_sup_norm"] {
                    checks.push(Check::at_most(name, None, PMF_SUP_NORM, format!("analytic side failed: {e}")));
                }
                checks.push(Check::at_most(
                    "in_probability_deviation",
                    None,
                    IN_PROBABILITY_DEVIATION,
                    format!("analytic side failed: {e}"),
                ));
            }
        }

        checks.extend(laplace_checks(&ana_params, &sim_params, &numerics, drops.min(LAPLACE_MAX_DROPS))?);
        Ok(ValidationReport::new(
            &self.spec.name,
            GIT_REVISION,
            numerics.rng_seed,
            drops,
            self.analytic_overrides.clone(),
            checks,
        ))
    }

    pub fn report_artifact(&self, report: &ValidationReport) -> Artifact {
        Artifact { file_name: format!("{}.json", self.spec.name), contents: report.to_json() }
    }
}

/// Macro tier seen from half the mean nearest-macro distance, at unit mean
/// interference-to-threshold scale.
fn laplace_checks(ana: &SystemParams, sim: &SystemParams, numerics: &NumericsParams, drops: u64) -> Result<Vec<Check>> {
    let radius = 0.25 / sim.lambda1.sqrt();
    let s = radius.powf(sim.alpha1);
    let sim_field = LaplaceField { density: sim.lambda1, alpha: sim.alpha1, radius, s };
    let ana_field = LaplaceField { density: ana.lambda1, alpha: ana.alpha1, ..sim_field };
    let est = estimate_interference_functional(&sim_field, numerics, 3, drops)?;
    let mut out = Vec::new();
    for m in 0..=3 {
        let e = if m == 0 { est.laplace } else { est.scaled[m - 1] };
        let exact = if m == 0 { laplace_interference(&ana_field) } else { laplace_derivative_scaled(m, &ana_field) };
        let name = format!("laplace_order{m}_sigmas");
        out.push(match exact {
            Ok(x) if e.std_error > 0.0 => Check::at_most(
                &name,
                Some((x - e.value).abs() / e.std_error),
                LAPLACE_SIGMAS,
                format!("analytic {x:.6} vs simulated {:.6} ± {:.2e}", e.value, e.std_error),
            ),
            Ok(x) => Check::at_most(
                &name,
                None,
                LAPLACE_SIGMAS,
                format!("analytic {x:.6}; simulated estimate has zero spread"),
            ),
            Err(err) => Check::at_most(&name, None, LAPLACE_SIGMAS, format!("analytic side failed: {err}")),
        });
    }
    Ok(out)
}

fn sup_norm(table: &PmfTable, hist: &[f64]) -> f64 {
    let n = hist.len().max(table.max_value() + 1);
    (0..n).map(|k| (table.prob(k) - hist.get(k).copied().unwrap_or(0.0)).abs()).fold(0.0, f64::max)
}

fn support_end(t: &PmfTable) -> usize {
    (0..=t.max_value()).find(|&n| t.survival(n + 1) < 1e-6).unwrap_or(t.max_value())
}

fn last_nonzero(v: &[f64]) -> usize {
    v.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn series_title(sp: &[(String, String)], tail: &str) -> String {
    let mut parts: Vec<String> = sp.iter().map(|(k, v)| format!("{k}={v}")).collect();
    parts.push(tail.to_string());
    parts.join(" ")
}

type Rows = Vec<Vec<String>>;

fn analytic_rows(r: &CoverageReport) -> Rows {
    let mut rows = vec![vec!["overall".into(), "1".into(), fmt_f64(r.overall), String::new(), String::new()]];
    for c in &r.per_class {
        rows.push(vec![c.class.as_str().into(), fmt_f64(c.weight), fmt_f64(c.coverage), String::new(), String::new()]);
    }
    rows
}

fn mc_rows(m: &McCoverage) -> Rows {
    let ci = |e: &hetnet_core::montecarlo::Estimate| (fmt_f64(e.value - e.ci95()), fmt_f64(e.value + e.ci95()));
    let (lo, hi) = ci(&m.overall);
    let mut rows = vec![vec!["overall".into(), "1".into(), fmt_f64(m.overall.value), lo, hi]];
    for c in &m.per_class {
        let (cov, lo, hi) = match &c.coverage {
            Some(e) => {
                let (lo, hi) = ci(e);
                (fmt_f64(e.value), lo, hi)
            }
            None => (String::new(), String::new(), String::new()),
        };
        rows.push(vec![c.class.as_str().into(), fmt_f64(c.fraction.value), cov, lo, hi]);
    }
    rows
}

/// Overall coverage, the per-class entries of the report, and an aggregate
/// offloaded row when the report splits offloaded users by protection.
fn user_types(r: &CoverageReport) -> Vec<(String, f64, f64)> {
    let mut out = vec![("overall".to_string(), 1.0, r.overall)];
    out.extend(r.per_class.iter().map(|c| (c.class.as_str().to_string(), c.weight, c.coverage)));
    let split: Vec<_> = r
        .per_class
        .iter()
        .filter(|c| matches!(c.class, UserClass::OffloadedProtected | UserClass::OffloadedUnprotected))
        .collect();
    if !split.is_empty() {
        let w: f64 = split.iter().map(|c| c.weight).sum();
        let cov = if w > 0.0 { split.iter().map(|c| c.weight * c.coverage).sum::<f64>() / w } else { f64::NAN };
        out.push((UserClass::Offloaded.as_str().to_string(), w, cov));
    }
    out
}
