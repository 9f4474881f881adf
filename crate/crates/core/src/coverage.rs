//! Analytic coverage engine: interference Laplace transforms and their scaled
//! derivatives, conditional and unconditional SIR coverage per user class,
//! and rate coverage (full load distribution or mean-load approximation) for
//! the IN, simple-offloading and ABS schemes.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use serde::Serialize;
use statrs::function::beta::checked_beta_reg;

use crate::association::{
    assoc_stats, exp_diff, in_probability, in_probability_increment, load_pmf_capped, mean_load, pmf_in_dof,
    AssociationStats, LoadKind, PmfTable,
};
use crate::config::{NumericsParams, Scheme, SchemeParams, SystemParams};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, QuadOpts};
use crate::specfun::{ln_beta, ln_factorial, partitions, ENUM_CAP};

/// Highest derivative order the tail series may reach.
const SERIES_CAP: usize = 160;

/// Coverage above which the offloaded gap is formed from the complements.
const SERIES_SWITCH: f64 = 0.999;

/// Below this log-Laplace value every coverage term underflows.
const DEAD_LN_LAPLACE: f64 = -2000.0;

/// Step of the ln β grid behind the full-load evaluation.
const TABLE_STEP: f64 = 0.125;

/// Load-sum terms below this bound are dropped and reported in the error bar.
const LOAD_SUM_CUTOFF: f64 = 1e-10;

/// User classes of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum UserClass {
    /// Served by a macro-BS (`1`).
    Macro,
    /// Pico user that would pick the pico tier without bias (`2Ō`).
    PicoNonOffloaded,
    /// Offloaded user protected by IN at its nearest macro-BS (`2OC`).
    OffloadedProtected,
    /// Offloaded user without IN protection (`2OC̄`).
    OffloadedUnprotected,
    /// Offloaded user under ABS (`2O`), served in protected subframes.
    Offloaded,
}

impl UserClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            UserClass::Macro => "macro",
            UserClass::PicoNonOffloaded => "pico_nonoffloaded",
            UserClass::OffloadedProtected => "offloaded_protected",
            UserClass::OffloadedUnprotected => "offloaded_unprotected",
            UserClass::Offloaded => "offloaded",
        }
    }
}

/// Interference field of one tier seen from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceField {
    pub density: f64,
    pub alpha: f64,
    /// Interferers lie outside this radius.
    pub radius: f64,
    /// Evaluation point.
    pub s: f64,
}

/// Per-tier constants reused at every quadrature node.
#[derive(Debug, Clone)]
struct TierConst {
    delta: f64,
    ln_b0: f64,
    ln_b: Vec<f64>,
}

impl TierConst {
    fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 2.0) {
            return Err(domain("laplace", format!("path-loss exponent {alpha} must exceed 2")));
        }
        let delta = 2.0 / alpha;
        let ln_b0 = ln_beta(delta, 1.0 - delta)?;
        let mut ln_b = vec![f64::NAN];
        for a in 1..=SERIES_CAP {
            ln_b.push(ln_beta(1.0 + delta, a as f64 - delta)?);
        }
        Ok(TierConst { delta, ln_b0, ln_b })
    }
}

fn reg_upper(a: f64, b: f64, w: f64) -> Result<f64> {
    if w >= 1.0 {
        return Ok(1.0);
    }
    checked_beta_reg(a, b, w).map_err(|e| domain("comp_inc_beta", e.to_string()))
}

/// Laplace transform and scaled derivatives of one tier's interference,
/// extended on demand.
struct TierSeries<'a> {
    c: &'a TierConst,
    scale: f64,
    w: f64,
    ln_l: f64,
    b: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> TierSeries<'a> {
    fn new(c: &'a TierConst, density: f64, radius: f64, s: f64) -> Result<Self> {
        if s == 0.0 || density == 0.0 {
            return Ok(TierSeries { c, scale: 0.0, w: 0.0, ln_l: 0.0, b: vec![0.0], y: vec![1.0] });
        }
        let alpha = 2.0 / c.delta;
        let t = (s.ln() - alpha * radius.ln()).exp();
        let w = if t.is_finite() { t / (1.0 + t) } else { 1.0 };
        // (2π/α)·λ·s^{2/α}
        let scale = PI * density * c.delta * s.powf(c.delta);
        let ln_l = if w == 0.0 { 0.0 } else { -scale * c.ln_b0.exp() * reg_upper(1.0 - c.delta, c.delta, w)? };
        Ok(TierSeries { c, scale, w, ln_l, b: vec![0.0], y: vec![1.0] })
    }

    fn absent(c: &'a TierConst) -> Self {
        TierSeries { c, scale: 0.0, w: 0.0, ln_l: 0.0, b: vec![0.0], y: vec![1.0] }
    }

    fn ensure(&mut self, k: usize) -> Result<()> {
        if k > SERIES_CAP {
            return Err(Error::CapExceeded { order: k, cap: SERIES_CAP });
        }
        while self.b.len() <= k {
            let a = self.b.len();
            let ba = if self.scale == 0.0 || self.w == 0.0 {
                0.0
            } else {
                let d = self.c.delta;
                self.scale * self.c.ln_b[a].exp() * reg_upper(a as f64 - d, 1.0 + d, self.w)?
            };
            self.b.push(ba);
            // y_m = (1/m) Σ_{i=1}^{m} i·b_i·y_{m-i}
            let m = a;
            let mut acc = 0.0;
            for i in 1..=m {
                acc += i as f64 * self.b[i] * self.y[m - i];
            }
            self.y.push(acc / m as f64);
        }
        Ok(())
    }

    /// `𝓛̃^{(m)} / m!`.
    fn d(&self, m: usize) -> f64 {
        let y = self.y[m];
        if y == 0.0 {
            0.0
        } else {
            (self.ln_l + y.ln()).exp()
        }
    }
}

/// Interference Laplace transform `E[exp(−s·I)]` of a PPP tier with unit-mean
/// exponential marks outside `radius`.
pub fn laplace_interference(field: &LaplaceField) -> Result<f64> {
    check_field(field)?;
    let c = TierConst::new(field.alpha)?;
    Ok(TierSeries::new(&c, field.density, field.radius, field.s)?.ln_l.exp())
}

fn check_field(field: &LaplaceField) -> Result<()> {
    if !(field.s >= 0.0) || !(field.radius > 0.0) || !(field.density >= 0.0) {
        return Err(domain(
            "laplace",
            format!("need s >= 0, r > 0, λ >= 0 (got s={}, r={}, λ={})", field.s, field.radius, field.density),
        ));
    }
    Ok(())
}

/// Scaled derivative `𝓛̃^{(m)}(s) = s^m·E[I^m·exp(−s·I)]`, evaluated as a sum
/// over integer partitions of `m` with each term formed in log domain.
pub fn laplace_derivative_scaled(m: usize, field: &LaplaceField) -> Result<f64> {
    check_field(field)?;
    if m > ENUM_CAP {
        return Err(Error::CapExceeded { order: m, cap: ENUM_CAP });
    }
    let c = TierConst::new(field.alpha)?;
    let mut tier = TierSeries::new(&c, field.density, field.radius, field.s)?;
    tier.ensure(m)?;
    if m == 0 {
        return Ok(tier.ln_l.exp());
    }
    let ln_b: Vec<f64> = tier.b.iter().map(|b| b.ln()).collect();
    let mut logs = Vec::new();
    for p in partitions(m)? {
        let mut lt = ln_factorial(m);
        for (i, &pa) in p.mult.iter().enumerate() {
            if pa > 0 {
                lt += pa as f64 * ln_b[i + 1] - ln_factorial(pa as usize);
            }
        }
        logs.push(lt);
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    Ok((tier.ln_l + top + sum.ln()).exp())
}

/// Table-I parameters of a user class at given distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassGeometry {
    pub class: UserClass,
    /// 1 for macro, 2 for pico.
    pub serving_tier: u8,
    /// Distance to the serving BS.
    pub serving_distance: f64,
    /// Macro-tier exclusion radius (unused when the macro tier is silent).
    pub r1: f64,
    /// Pico-tier exclusion radius.
    pub r2: f64,
    /// Shape of the effective signal gain.
    pub signal_shape: usize,
}

impl ClassGeometry {
    /// `y1`/`y2` are the distances to the nearest macro-BS and the nearest
    /// pico-BS; only the ones the class needs are read. `in_dof_used` is the
    /// IN DoF spent by the serving macro-BS (macro class only).
    pub fn new(class: UserClass, params: &SystemParams, y1: f64, y2: f64, in_dof_used: usize) -> Result<Self> {
        let p = params;
        let ratio = p.p1 / p.p2;
        let g = match class {
            UserClass::Macro => {
                if in_dof_used >= p.n1 {
                    return Err(domain("class_geometry", format!("IN DoF {in_dof_used} leaves no signal DoF")));
                }
                ClassGeometry {
                    class,
                    serving_tier: 1,
                    serving_distance: y1,
                    r1: y1,
                    r2: (p.bias / ratio).powf(1.0 / p.alpha2) * y1.powf(p.alpha1 / p.alpha2),
                    signal_shape: p.n1 - in_dof_used,
                }
            }
            UserClass::PicoNonOffloaded => ClassGeometry {
                class,
                serving_tier: 2,
                serving_distance: y2,
                r1: ratio.powf(1.0 / p.alpha1) * y2.powf(p.alpha2 / p.alpha1),
                r2: y2,
                signal_shape: p.n2,
            },
            UserClass::OffloadedProtected | UserClass::OffloadedUnprotected | UserClass::Offloaded => {
                ClassGeometry { class, serving_tier: 2, serving_distance: y2, r1: y1, r2: y2, signal_shape: p.n2 }
            }
        };
        if !(g.serving_distance > 0.0) {
            return Err(domain("class_geometry", "serving distance must be positive"));
        }
        Ok(g)
    }
}

/// Per-node coverage terms: `terms[n] = 𝒯(n)` for `n < M` and the
/// complementary mass `Σ_{n≥M} 𝒯(n)` (zero unless requested).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTerms {
    pub terms: Vec<f64>,
    pub miss: f64,
}

impl ConditionalTerms {
    pub fn coverage(&self) -> f64 {
        self.terms.iter().sum()
    }
}

fn convolve(t1: &TierSeries, t2: &TierSeries, n: usize) -> f64 {
    (0..=n).map(|k| t1.d(k) * t2.d(n - k)).sum()
}

/// Terms for two tiers plus an optional dominant interferer with scaled
/// strength `dom`. The complement is peeled off `1 − 𝒯(0)` unless that
/// cancels, in which case it is summed as a positive series.
fn node_terms(
    t1: &mut TierSeries,
    t2: &mut TierSeries,
    dom: Option<f64>,
    m: usize,
    want_miss: bool,
    out: &mut Vec<f64>,
) -> Result<f64> {
    if m == 0 {
        return Err(domain("conditional_coverage", "signal shape must be at least 1"));
    }
    // −ln𝓛 is concave in s, so each term is below 2ⁿ·𝓛(s)^{1/2}
    if !(t1.ln_l + t2.ln_l > DEAD_LN_LAPLACE) {
        out.clear();
        out.resize(m, 0.0);
        return Ok(if want_miss { 1.0 } else { 0.0 });
    }
    let mut dom_terms: Vec<f64> = Vec::new();
    let ln_c = dom.filter(|&c| c > 0.0).map(|c| (c.ln(), c.ln_1p()));
    t1.ensure(m)?;
    t2.ensure(m)?;
    let mut base = Vec::with_capacity(m + 1);
    let mut term = |n: usize, base: &mut Vec<f64>, t1: &TierSeries, t2: &TierSeries| -> f64 {
        base.push(convolve(t1, t2, n));
        if dom.is_none() {
            return base[n];
        }
        // weight of q extra units from the dominant interferer
        let q = dom_terms.len();
        dom_terms.push(match ln_c {
            None => f64::from(u8::from(q == 0)),
            Some((lc, l1p)) => (q as f64 * lc - (q as f64 + 1.0) * l1p).exp(),
        });
        (0..=n).map(|q3| dom_terms[q3] * base[n - q3]).sum()
    };
    out.clear();
    for n in 0..m {
        let v = term(n, &mut base, t1, t2);
        out.push(v);
    }
    if !want_miss {
        return Ok(0.0);
    }
    // 1 − 𝒯(0) without cancellation, then peel off the remaining head terms
    let ln_t0 = t1.ln_l + t2.ln_l - ln_c.map_or(0.0, |(_, l1p)| l1p);
    let rest: f64 = out[1..].iter().sum();
    let direct = -ln_t0.exp_m1() - rest;
    if direct > 1e-4 * (rest + direct.max(0.0)) {
        return Ok(direct);
    }
    let mut acc = 0.0;
    let mut prev = f64::INFINITY;
    let mut n = m;
    loop {
        if n >= SERIES_CAP {
            return Ok(direct.max(0.0));
        }
        t1.ensure(n)?;
        t2.ensure(n)?;
        let v = term(n, &mut base, t1, t2);
        acc += v;
        if v == 0.0 || (v <= 1e-17 * acc && v <= prev) {
            return Ok(acc);
        }
        prev = v;
        n += 1;
    }
}

/// Conditional SIR coverage terms of a class at SIR threshold `beta`.
pub fn conditional_terms(
    geom: &ClassGeometry,
    beta: f64,
    params: &SystemParams,
    want_miss: bool,
) -> Result<ConditionalTerms> {
    let c1 = TierConst::new(params.alpha1)?;
    let c2 = TierConst::new(params.alpha2)?;
    let mut out = Vec::new();
    let miss = node_eval(&c1, &c2, geom, beta, params, want_miss, &mut out)?;
    Ok(ConditionalTerms { terms: out, miss })
}

/// Conditional SIR coverage `Σ_{n<M} 𝒯(n)` at fixed distances.
pub fn conditional_coverage(geom: &ClassGeometry, beta: f64, params: &SystemParams) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(domain("conditional_coverage", format!("beta = {beta} must be nonnegative")));
    }
    Ok(conditional_terms(geom, beta, params, false)?.coverage())
}

fn node_eval(
    c1: &TierConst,
    c2: &TierConst,
    geom: &ClassGeometry,
    beta: f64,
    params: &SystemParams,
    want_miss: bool,
    out: &mut Vec<f64>,
) -> Result<f64> {
    let p = params;
    let (alpha_j, p_j) = if geom.serving_tier == 1 { (p.alpha1, p.p1) } else { (p.alpha2, p.p2) };
    let base = beta * geom.serving_distance.powf(alpha_j) / p_j;
    let s1 = base * p.p1;
    let s2 = base * p.p2;
    let mut t1 = if geom.class == UserClass::Offloaded {
        TierSeries::absent(c1)
    } else {
        TierSeries::new(c1, p.lambda1, geom.r1, s1)?
    };
    let mut t2 = TierSeries::new(c2, p.lambda2, geom.r2, s2)?;
    let dom = if geom.class == UserClass::OffloadedUnprotected { Some(s1 * geom.r1.powf(-p.alpha1)) } else { None };
    node_terms(&mut t1, &mut t2, dom, geom.signal_shape, want_miss, out)
}

/// SIR coverage of the two offloaded classes evaluated on shared nodes.
/// The complements and the gap are zero unless requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffloadedCoverage {
    pub protected: f64,
    pub protected_miss: f64,
    pub unprotected: f64,
    pub unprotected_miss: f64,
    /// `𝒮_2OC − 𝒮_2OC̄`, integrated pointwise.
    pub gap: f64,
}

/// Macro-user terms `∫ 𝒯₁(n) f_{Y₁}` for `n < N₁` and the mass beyond.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroTerms {
    pub terms: Vec<f64>,
    pub miss: f64,
}

impl MacroTerms {
    /// Coverage with `M` signal DoF.
    pub fn coverage(&self, m: usize) -> f64 {
        self.terms[..m.min(self.terms.len())].iter().sum()
    }

    /// `1 − coverage(M)` from positive terms only.
    pub fn miss(&self, m: usize) -> f64 {
        self.miss + self.terms[m.min(self.terms.len())..].iter().sum::<f64>()
    }
}

/// One rate-coverage entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassValue {
    pub class: UserClass,
    /// Probability that the typical user is in this class.
    pub weight: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Full,
    Mla,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Mla => "mla",
            Method::MonteCarlo => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub method: Method,
    pub per_class: Vec<ClassValue>,
    pub overall: f64,
    /// 95% half-width for Monte Carlo estimates.
    pub ci: Option<f64>,
    /// Bound on mass dropped by truncating load sums.
    pub error_bound: f64,
}

impl CoverageReport {
    fn assemble(method: Method, per_class: Vec<ClassValue>, error_bound: f64) -> Self {
        let overall = per_class.iter().map(|c| c.weight * c.coverage).sum();
        CoverageReport { method, per_class, overall, ci: None, error_bound }
    }

    pub fn class(&self, class: UserClass) -> Option<&ClassValue> {
        self.per_class.iter().find(|c| c.class == class)
    }
}

/// `2^x − 1`.
pub fn rate_to_sir(x: f64) -> f64 {
    (x * LN_2).exp_m1()
}

/// Analytic engine bound to one parameter point.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub params: SystemParams,
    pub numerics: NumericsParams,
    pub stats: AssociationStats,
    c1: TierConst,
    c2: TierConst,
}

impl Analyzer {
    pub fn new(params: &SystemParams, numerics: &NumericsParams) -> Result<Self> {
        let params = params.normalize_power_ratio();
        let stats = assoc_stats(&params, numerics)?;
        Ok(Analyzer {
            params,
            numerics: *numerics,
            stats,
            c1: TierConst::new(params.alpha1)?,
            c2: TierConst::new(params.alpha2)?,
        })
    }

    fn quad(&self, abs_tol: f64) -> QuadOpts {
        QuadOpts::new(self.numerics.quad_rel_tol).abs_tol(abs_tol).splits(4).max_segments(600)
    }

    /// Integrates `w(y)·g(y)` against a serving-distance weight in the
    /// exponential normal form and divides by `∫ w`.
    fn single_integral<G>(&self, name: &str, class: UserClass, dim: usize, abs_tol: f64, mut g: G) -> Result<Vec<f64>>
    where
        G: FnMut(f64, &mut Vec<f64>) -> Result<()>,
    {
        let p = &self.params;
        let ratio = p.p1 / p.p2;
        let norm = match class {
            UserClass::Macro => self.stats.a1,
            UserClass::PicoNonOffloaded => self.stats.a2obar,
            _ => self.stats.a2o,
        };
        let (lam, weight): (f64, Box<dyn Fn(f64, f64) -> f64>) = match class {
            UserClass::Macro => {
                let c = PI * p.lambda2 * (p.bias / ratio).powf(2.0 / p.alpha2);
                let e = 2.0 * p.alpha1 / p.alpha2;
                (p.lambda1, Box::new(move |u: f64, y: f64| (-u - c * y.powf(e)).exp()))
            }
            UserClass::PicoNonOffloaded => {
                let c = PI * p.lambda1 * ratio.powf(2.0 / p.alpha1);
                let e = 2.0 * p.alpha2 / p.alpha1;
                (p.lambda2, Box::new(move |u: f64, y: f64| (-u - c * y.powf(e)).exp()))
            }
            UserClass::Offloaded => {
                let near = PI * p.lambda1 * (ratio / p.bias).powf(2.0 / p.alpha1);
                let far = PI * p.lambda1 * ratio.powf(2.0 / p.alpha1);
                let e = 2.0 * p.alpha2 / p.alpha1;
                (
                    p.lambda2,
                    Box::new(move |u: f64, y: f64| {
                        let z = y.powf(e);
                        (-u).exp() * exp_diff(near * z, far * z)
                    }),
                )
            }
            _ => return Err(domain("single_integral", "class needs the joint distance density")),
        };
        let mut err: Option<Error> = None;
        let mut buf = Vec::with_capacity(dim);
        let v = integrate_log_scale(
            name,
            |u, out: &mut [f64]| {
                out.iter_mut().for_each(|x| *x = 0.0);
                if err.is_some() {
                    return;
                }
                let y = (u / (PI * lam)).sqrt();
                let w = weight(u, y);
                if w == 0.0 {
                    return;
                }
                buf.clear();
                if let Err(e) = g(y, &mut buf) {
                    err = Some(e);
                    return;
                }
                out[0] = w;
                for (o, b) in out[1..].iter_mut().zip(&buf) {
                    *o = w * b;
                }
            },
            dim + 1,
            self.quad(abs_tol * norm),
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(normalize(v))
    }

    /// Integrates over the offloading wedge: outer macro distance, inner log
    /// bias ratio `t ∈ [0, ln B]` with `y = (e^t·P2/P1)^{1/α2}·x^{α1/α2}`.
    fn wedge_integral<G>(&self, name: &str, dim: usize, abs_tol: f64, mut g: G) -> Result<Vec<f64>>
    where
        G: FnMut(f64, f64, &mut Vec<f64>) -> Result<()>,
    {
        let p = &self.params;
        let ln_b = p.bias.ln();
        if !(ln_b > 0.0) {
            return Err(domain("wedge_integral", format!("{name}: offloading wedge is empty at unit bias")));
        }
        let ratio = p.p1 / p.p2;
        let (l1, l2) = (p.lambda1, p.lambda2);
        let norm = self.stats.a2o * p.alpha2 / (2.0 * PI * l2);
        let inner_opts = QuadOpts::new(self.numerics.quad_rel_tol * 0.1)
            .abs_tol(abs_tol * norm * 0.1)
            .max_segments(40)
            .best_effort();
        let mut err: Option<Error> = None;
        let mut buf = Vec::with_capacity(dim);
        let v = integrate_log_scale(
            name,
            |u, out: &mut [f64]| {
                out.iter_mut().for_each(|x| *x = 0.0);
                if err.is_some() {
                    return;
                }
                let x = (u / (PI * l1)).sqrt();
                let eu = (-u).exp();
                if eu == 0.0 {
                    return;
                }
                let base = x.powf(p.alpha1 / p.alpha2) * (1.0 / ratio).powf(1.0 / p.alpha2);
                let inner = integrate(
                    name,
                    |t, o: &mut [f64]| {
                        o.iter_mut().for_each(|x| *x = 0.0);
                        if err.is_some() {
                            return;
                        }
                        let y = base * (t / p.alpha2).exp();
                        let w = y * y * (-PI * l2 * y * y).exp();
                        if w == 0.0 {
                            return;
                        }
                        buf.clear();
                        if let Err(e) = g(x, y, &mut buf) {
                            err = Some(e);
                            return;
                        }
                        o[0] = w;
                        for (oo, b) in o[1..].iter_mut().zip(&buf) {
                            *oo = w * b;
                        }
                    },
                    0.0,
                    ln_b,
                    dim + 1,
                    inner_opts,
                );
                match inner {
                    Ok(vals) => {
                        for (o, v) in out.iter_mut().zip(vals) {
                            *o = eu * v;
                        }
                    }
                    Err(e) => err = Some(e),
                }
            },
            dim + 1,
            self.quad(abs_tol * norm),
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(normalize(v))
    }

    /// `∫ 𝒯₁(n) f_{Y₁}` for `n < N₁`, plus the complement beyond `N₁`.
    pub fn macro_terms(&self, beta: f64, want_miss: bool) -> Result<MacroTerms> {
        self.macro_terms_tol(beta, want_miss, 0.0)
    }

    fn macro_terms_tol(&self, beta: f64, want_miss: bool, abs_tol: f64) -> Result<MacroTerms> {
        let n1 = self.params.n1;
        if self.stats.a1 <= 0.0 {
            let mut terms = vec![0.0; n1];
            terms[0] = 1.0;
            return Ok(MacroTerms { terms, miss: 0.0 });
        }
        let params = self.params;
        let (c1, c2) = (&self.c1, &self.c2);
        let mut scratch = Vec::new();
        let v = self.single_integral("macro_coverage", UserClass::Macro, n1 + 1, abs_tol, |y, out| {
            let geom = ClassGeometry::new(UserClass::Macro, &params, y, f64::NAN, 0)?;
            let miss = node_eval(c1, c2, &geom, beta, &params, want_miss, &mut scratch)?;
            out.extend_from_slice(&scratch);
            out.push(miss);
            Ok(())
        })?;
        Ok(MacroTerms { terms: v[..n1].to_vec(), miss: v[n1] })
    }

    /// Coverage and complement of non-offloaded pico users.
    pub fn pico_coverage(&self, beta: f64, want_miss: bool) -> Result<(f64, f64)> {
        self.pico_coverage_tol(beta, want_miss, 0.0)
    }

    fn pico_coverage_tol(&self, beta: f64, want_miss: bool, abs_tol: f64) -> Result<(f64, f64)> {
        if self.stats.a2obar <= 0.0 {
            return Ok((1.0, 0.0));
        }
        let params = self.params;
        let (c1, c2) = (&self.c1, &self.c2);
        let mut scratch = Vec::new();
        let v = self.single_integral("pico_coverage", UserClass::PicoNonOffloaded, 2, abs_tol, |y, out| {
            let geom = ClassGeometry::new(UserClass::PicoNonOffloaded, &params, f64::NAN, y, 0)?;
            let miss = node_eval(c1, c2, &geom, beta, &params, want_miss, &mut scratch)?;
            out.push(scratch.iter().sum());
            out.push(miss);
            Ok(())
        })?;
        Ok((v[0], v[1]))
    }

    /// Coverage of offloaded users with and without IN protection.
    pub fn offloaded_coverage(&self, beta: f64, want_miss: bool) -> Result<OffloadedCoverage> {
        self.offloaded_coverage_tol(beta, want_miss, 0.0)
    }

    fn offloaded_coverage_tol(&self, beta: f64, want_miss: bool, abs_tol: f64) -> Result<OffloadedCoverage> {
        if self.stats.a2o <= 0.0 || self.params.bias <= 1.0 {
            return Ok(OffloadedCoverage {
                protected: 1.0,
                protected_miss: 0.0,
                unprotected: 1.0,
                unprotected_miss: 0.0,
                gap: 0.0,
            });
        }
        let params = self.params;
        let (c1, c2) = (&self.c1, &self.c2);
        let mut scratch = Vec::new();
        let v = self.wedge_integral("offloaded_coverage", 5, abs_tol, |x, y, out| {
            let gc = ClassGeometry::new(UserClass::OffloadedProtected, &params, x, y, 0)?;
            let mc = node_eval(c1, c2, &gc, beta, &params, want_miss, &mut scratch)?;
            let sc: f64 = scratch.iter().sum();
            let gb = ClassGeometry::new(UserClass::OffloadedUnprotected, &params, x, y, 0)?;
            let mb = node_eval(c1, c2, &gb, beta, &params, want_miss, &mut scratch)?;
            let sb: f64 = scratch.iter().sum();
            let gap = if !want_miss {
                0.0
            } else if sc > SERIES_SWITCH {
                mb - mc
            } else {
                sc - sb
            };
            let z = std::env::var("ZC").map(|v| v.parse::<usize>().unwrap()).unwrap_or(9);
            let mut arr = [sc, mc, sb, mb, gap.max(0.0)];
            if z < 5 {
                arr[z] = 0.0;
            }
            out.extend_from_slice(&arr);
            Ok(())
        })?;
        Ok(OffloadedCoverage {
            protected: v[0],
            protected_miss: v[1],
            unprotected: v[2],
            unprotected_miss: v[3],
            gap: v[4],
        })
    }

    /// Coverage of offloaded users served in protected subframes (ABS).
    pub fn abs_offloaded_coverage(&self, beta: f64) -> Result<f64> {
        self.abs_offloaded_coverage_tol(beta, 0.0)
    }

    fn abs_offloaded_coverage_tol(&self, beta: f64, abs_tol: f64) -> Result<f64> {
        if self.stats.a2o <= 0.0 || self.params.bias <= 1.0 {
            return Ok(1.0);
        }
        let params = self.params;
        let (c1, c2) = (&self.c1, &self.c2);
        let mut scratch = Vec::new();
        let v = self.single_integral("abs_offloaded_coverage", UserClass::Offloaded, 1, abs_tol, |y, out| {
            let geom = ClassGeometry::new(UserClass::Offloaded, &params, f64::NAN, y, 0)?;
            node_eval(c1, c2, &geom, beta, &params, false, &mut scratch)?;
            out.push(scratch.iter().sum());
            Ok(())
        })?;
        Ok(v[0])
    }

    /// Unconditional SIR coverage of a class. For the macro class the IN DoF
    /// distribution under `in_dof` is marginalized.
    pub fn sir_coverage(&self, class: UserClass, beta: f64, in_dof: usize) -> Result<f64> {
        if !(beta >= 0.0) {
            return Err(domain("sir_coverage", format!("beta = {beta} must be nonnegative")));
        }
        match class {
            UserClass::Macro => {
                let terms = self.macro_terms(beta, false)?;
                self.macro_mix(&terms, in_dof)
            }
            UserClass::PicoNonOffloaded => Ok(self.pico_coverage(beta, false)?.0),
            UserClass::OffloadedProtected => Ok(self.offloaded_coverage(beta, false)?.protected),
            UserClass::OffloadedUnprotected => Ok(self.offloaded_coverage(beta, false)?.unprotected),
            UserClass::Offloaded => self.abs_offloaded_coverage(beta),
        }
    }

    /// Macro coverage under `in_dof`, mixing over the IN DoF p.m.f.
    pub fn macro_mix(&self, terms: &MacroTerms, in_dof: usize) -> Result<f64> {
        let dof = pmf_in_dof(&self.stats, in_dof, &self.numerics)?;
        Ok(dof.iter().map(|(u, p)| p * terms.coverage(self.params.n1 - u)).sum())
    }

    pub fn in_probability(&self, in_dof: usize) -> Result<f64> {
        in_probability(&self.stats, in_dof, &self.numerics)
    }

    /// `Pr(ℰ(U)) − Pr(ℰ(U−1))` computed without differencing.
    pub fn in_probability_increment(&self, in_dof: usize) -> Result<f64> {
        if in_dof == 0 {
            return Ok(0.0);
        }
        in_probability_increment(&self.stats, in_dof, &self.numerics)
    }

    pub fn mean_load(&self, kind: LoadKind) -> f64 {
        mean_load(kind, &self.stats, &self.params)
    }

    fn check_scheme(&self, scheme: &SchemeParams) -> Result<()> {
        match scheme.scheme {
            Scheme::InterferenceNulling if scheme.in_dof >= self.params.n1 => {
                Err(domain("rate_coverage", format!("in_dof {} must be below n1 = {}", scheme.in_dof, self.params.n1)))
            }
            Scheme::Abs if !(scheme.abs_eta > 0.0 && scheme.abs_eta < 1.0) => {
                Err(domain("rate_coverage", format!("abs_eta {} outside (0, 1)", scheme.abs_eta)))
            }
            _ => Ok(()),
        }
    }

    /// Rate coverage at one rate threshold.
    pub fn rate_coverage(&self, scheme: &SchemeParams, tau: f64, method: Method) -> Result<CoverageReport> {
        Ok(self.rate_coverage_batch(scheme, &[tau], method)?.remove(0))
    }

    /// Rate coverage on a list of thresholds. The full-load method shares one
    /// tabulated SIR-coverage curve per class across all thresholds.
    pub fn rate_coverage_batch(
        &self,
        scheme: &SchemeParams,
        taus: &[f64],
        method: Method,
    ) -> Result<Vec<CoverageReport>> {
        self.check_scheme(scheme)?;
        if taus.iter().any(|t| !(*t >= 0.0)) {
            return Err(domain("rate_coverage", "tau must be nonnegative"));
        }
        match method {
            Method::Mla => taus.iter().map(|&t| self.rate_mla(scheme, t)).collect(),
            Method::Full => self.rate_full(scheme, taus),
            Method::MonteCarlo => Err(domain("rate_coverage", "Monte Carlo estimates come from the simulator")),
        }
    }

    /// SIR coverage at threshold `beta`, split by class like the rate reports.
    pub fn sir_coverage_report(&self, scheme: &SchemeParams, beta: f64) -> Result<CoverageReport> {
        self.check_scheme(scheme)?;
        let s = &self.stats;
        let u = scheme.effective_dof();
        let pico = ClassValue {
            class: UserClass::PicoNonOffloaded,
            weight: s.a2obar,
            coverage: self.sir_coverage(UserClass::PicoNonOffloaded, beta, u)?,
        };
        let per_class = if scheme.scheme == Scheme::Abs {
            vec![
                ClassValue {
                    class: UserClass::Macro,
                    weight: s.a1,
                    coverage: self.sir_coverage(UserClass::Macro, beta, 0)?,
                },
                pico,
                ClassValue { class: UserClass::Offloaded, weight: s.a2o, coverage: self.abs_offloaded_coverage(beta)? },
            ]
        } else {
            let pr = self.in_probability(u)?;
            let off = self.offloaded_coverage(beta, false)?;
            vec![
                ClassValue {
                    class: UserClass::Macro,
                    weight: s.a1,
                    coverage: self.sir_coverage(UserClass::Macro, beta, u)?,
                },
                pico,
                ClassValue { class: UserClass::OffloadedProtected, weight: s.a2o * pr, coverage: off.protected },
                ClassValue {
                    class: UserClass::OffloadedUnprotected,
                    weight: s.a2o * (1.0 - pr),
                    coverage: off.unprotected,
                },
            ]
        };
        Ok(CoverageReport::assemble(Method::Full, per_class, 0.0))
    }

    fn resource_fractions(&self, scheme: &SchemeParams) -> (f64, f64) {
        if scheme.scheme == Scheme::Abs {
            (1.0 - scheme.abs_eta, scheme.abs_eta)
        } else {
            (1.0, 1.0)
        }
    }

    fn rate_mla(&self, scheme: &SchemeParams, tau: f64) -> Result<CoverageReport> {
        let w = self.params.bandwidth;
        let s = &self.stats;
        match scheme.scheme {
            Scheme::InterferenceNulling | Scheme::SimpleOffload => {
                let u = scheme.effective_dof();
                let b1 = rate_to_sir(self.mean_load(LoadKind::Macro) * tau / w);
                let b2 = rate_to_sir(self.mean_load(LoadKind::Pico) * tau / w);
                let macro_cov = self.macro_mix(&self.macro_terms(b1, false)?, u)?;
                let pico = self.pico_coverage(b2, false)?.0;
                let off = self.offloaded_coverage(b2, false)?;
                let pr = self.in_probability(u)?;
                Ok(CoverageReport::assemble(
                    Method::Mla,
                    vec![
                        ClassValue { class: UserClass::Macro, weight: s.a1, coverage: macro_cov },
                        ClassValue { class: UserClass::PicoNonOffloaded, weight: s.a2obar, coverage: pico },
                        ClassValue {
                            class: UserClass::OffloadedProtected,
                            weight: s.a2o * pr,
                            coverage: off.protected,
                        },
                        ClassValue {
                            class: UserClass::OffloadedUnprotected,
                            weight: s.a2o * (1.0 - pr),
                            coverage: off.unprotected,
                        },
                    ],
                    0.0,
                ))
            }
            Scheme::Abs => {
                let (shared, protected) = self.resource_fractions(scheme);
                let b1 = rate_to_sir(self.mean_load(LoadKind::Macro) * tau / (w * shared));
                let b2 = rate_to_sir(self.mean_load(LoadKind::PicoNonOffloaded) * tau / (w * shared));
                let b3 = rate_to_sir(self.mean_load(LoadKind::PicoOffloaded) * tau / (w * protected));
                let macro_cov = self.macro_terms(b1, false)?.coverage(self.params.n1);
                let pico = self.pico_coverage(b2, false)?.0;
                let off = self.abs_offloaded_coverage(b3)?;
                Ok(CoverageReport::assemble(
                    Method::Mla,
                    vec![
                        ClassValue { class: UserClass::Macro, weight: s.a1, coverage: macro_cov },
                        ClassValue { class: UserClass::PicoNonOffloaded, weight: s.a2obar, coverage: pico },
                        ClassValue { class: UserClass::Offloaded, weight: s.a2o, coverage: off },
                    ],
                    0.0,
                ))
            }
        }
    }

    fn rate_full(&self, scheme: &SchemeParams, taus: &[f64]) -> Result<Vec<CoverageReport>> {
        let s = self.stats;
        let w = self.params.bandwidth;
        let n = &self.numerics;
        let abs_tol = 1e-13;
        let load = |kind| load_pmf_capped(kind, &s, &self.params, n);
        match scheme.scheme {
            Scheme::InterferenceNulling | Scheme::SimpleOffload => {
                let u = scheme.effective_dof();
                let pr = self.in_probability(u)?;
                let l1 = load(LoadKind::Macro)?;
                let l2 = load(LoadKind::Pico)?;
                let mut macro_curve = LazyCurve::new(|b| self.macro_mix(&self.macro_terms_tol(b, false, abs_tol)?, u));
                let mut pico_curve = LazyCurve::new(|b| Ok(self.pico_coverage_tol(b, false, abs_tol)?.0));
                let mut off_curve = LazyPairCurve::new(|b| {
                    let o = self.offloaded_coverage_tol(b, false, abs_tol)?;
                    Ok((o.protected, o.unprotected))
                });
                let mut out = Vec::with_capacity(taus.len());
                for &tau in taus {
                    let (m, em) = load_sum(&l1, tau, w, 1.0, |b| macro_curve.eval(b))?;
                    let (p, ep) = load_sum(&l2, tau, w, 1.0, |b| pico_curve.eval(b))?;
                    let (c, ec) = load_sum(&l2, tau, w, 1.0, |b| Ok(off_curve.eval(b)?.0))?;
                    let (cb, ecb) = load_sum(&l2, tau, w, 1.0, |b| Ok(off_curve.eval(b)?.1))?;
                    let err = s.a1 * em + s.a2obar * ep + s.a2o * (pr * ec + (1.0 - pr) * ecb);
                    out.push(CoverageReport::assemble(
                        Method::Full,
                        vec![
                            ClassValue { class: UserClass::Macro, weight: s.a1, coverage: m },
                            ClassValue { class: UserClass::PicoNonOffloaded, weight: s.a2obar, coverage: p },
                            ClassValue { class: UserClass::OffloadedProtected, weight: s.a2o * pr, coverage: c },
                            ClassValue {
                                class: UserClass::OffloadedUnprotected,
                                weight: s.a2o * (1.0 - pr),
                                coverage: cb,
                            },
                        ],
                        err,
                    ));
                }
                Ok(out)
            }
            Scheme::Abs => {
                let (shared, protected) = self.resource_fractions(scheme);
                let l1 = load(LoadKind::Macro)?;
                let l2 = load(LoadKind::PicoNonOffloaded)?;
                let l3 = load(LoadKind::PicoOffloaded)?;
                let n1 = self.params.n1;
                let mut macro_curve = LazyCurve::new(|b| Ok(self.macro_terms_tol(b, false, abs_tol)?.coverage(n1)));
                let mut pico_curve = LazyCurve::new(|b| Ok(self.pico_coverage_tol(b, false, abs_tol)?.0));
                let mut off_curve = LazyCurve::new(|b| self.abs_offloaded_coverage_tol(b, abs_tol));
                let mut out = Vec::with_capacity(taus.len());
                for &tau in taus {
                    let (m, em) = load_sum(&l1, tau, w, shared, |b| macro_curve.eval(b))?;
                    let (p, ep) = load_sum(&l2, tau, w, shared, |b| pico_curve.eval(b))?;
                    let (o, eo) = load_sum(&l3, tau, w, protected, |b| off_curve.eval(b))?;
                    out.push(CoverageReport::assemble(
                        Method::Full,
                        vec![
                            ClassValue { class: UserClass::Macro, weight: s.a1, coverage: m },
                            ClassValue { class: UserClass::PicoNonOffloaded, weight: s.a2obar, coverage: p },
                            ClassValue { class: UserClass::Offloaded, weight: s.a2o, coverage: o },
                        ],
                        s.a1 * em + s.a2obar * ep + s.a2o * eo,
                    ));
                }
                Ok(out)
            }
        }
    }
}

/// `∫_0^∞ f(u) du` over `v = ln u`, which keeps mass concentrated at any
/// scale of `u` resolvable. Mass below `e^{-70}` is dropped.
fn integrate_log_scale<F>(name: &str, mut f: F, dim: usize, opts: QuadOpts) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    integrate(
        name,
        |v, out: &mut [f64]| {
            let u = v.exp();
            f(u, out);
            for x in out.iter_mut() {
                *x *= u;
            }
        },
        -70.0,
        7.0,
        dim,
        opts,
    )
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let w = v[0];
    v[1..].iter().map(|x| if w > 0.0 { x / w } else { 0.0 }).collect()
}

/// `Σ_n Pr(L=n)·S(2^{nτ/(W·frac)} − 1)`, stopping once the remaining mass
/// times the current coverage drops below the cutoff. Returns the sum and a
/// bound on what was dropped.
fn load_sum<F>(load: &PmfTable, tau: f64, w: f64, frac: f64, mut s: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if tau == 0.0 {
        return Ok((1.0, 0.0));
    }
    let mut acc = 0.0;
    let mut remaining = 1.0 - load.tail;
    for (n, p) in load.iter() {
        let beta = rate_to_sir(n as f64 * tau / (w * frac));
        let v = s(beta)?;
        acc += p * v;
        remaining -= p;
        if v * (remaining.max(0.0) + load.tail) < LOAD_SUM_CUTOFF {
            return Ok((acc, v * (remaining.max(0.0) + load.tail)));
        }
    }
    Ok((acc, load.tail))
}

/// SIR coverage tabulated on demand on a fixed ln β grid and interpolated
/// with a cubic in `ln S`.
struct LazyCurve<F> {
    f: F,
    rows: BTreeMap<i64, f64>,
}

impl<F> LazyCurve<F>
where
    F: FnMut(f64) -> Result<f64>,
{
    fn new(f: F) -> Self {
        LazyCurve { f, rows: BTreeMap::new() }
    }

    fn row(&mut self, i: i64) -> Result<f64> {
        if let Some(v) = self.rows.get(&i) {
            return Ok(*v);
        }
        let beta = (i as f64 * TABLE_STEP).exp();
        let v = (self.f)(beta)?.max(1e-300).min(1.0).ln();
        self.rows.insert(i, v);
        Ok(v)
    }

    fn eval(&mut self, beta: f64) -> Result<f64> {
        if beta == 0.0 {
            return Ok(1.0);
        }
        let x = beta.ln() / TABLE_STEP;
        let i = x.floor() as i64;
        let frac = x - i as f64;
        let ys = [self.row(i - 1)?, self.row(i)?, self.row(i + 1)?, self.row(i + 2)?];
        Ok(catmull_rom(ys, frac).min(0.0).exp())
    }
}

struct LazyPairCurve<F> {
    f: F,
    rows: BTreeMap<i64, (f64, f64)>,
}

impl<F> LazyPairCurve<F>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    fn new(f: F) -> Self {
        LazyPairCurve { f, rows: BTreeMap::new() }
    }

    fn row(&mut self, i: i64) -> Result<(f64, f64)> {
        if let Some(v) = self.rows.get(&i) {
            return Ok(*v);
        }
        let beta = (i as f64 * TABLE_STEP).exp();
        let (a, b) = (self.f)(beta)?;
        let v = (a.clamp(1e-300, 1.0).ln(), b.clamp(1e-300, 1.0).ln());
        self.rows.insert(i, v);
        Ok(v)
    }

    fn eval(&mut self, beta: f64) -> Result<(f64, f64)> {
        if beta == 0.0 {
            return Ok((1.0, 1.0));
        }
        let x = beta.ln() / TABLE_STEP;
        let i = x.floor() as i64;
        let frac = x - i as f64;
        let r = [self.row(i - 1)?, self.row(i)?, self.row(i + 1)?, self.row(i + 2)?];
        let a = catmull_rom([r[0].0, r[1].0, r[2].0, r[3].0], frac).min(0.0).exp();
        let b = catmull_rom([r[0].1, r[1].1, r[2].1, r[3].1], frac).min(0.0).exp();
        Ok((a, b))
    }
}

fn catmull_rom(y: [f64; 4], t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * y[1]
        + (-y[0] + y[2]) * t
        + (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) * t2
        + (-y[0] + 3.0 * y[1] - 3.0 * y[2] + y[3]) * t3)
}

/// Convenience wrapper: unconditional SIR coverage at one parameter point.
pub fn sir_coverage(
    class: UserClass,
    beta: f64,
    in_dof: usize,
    params: &SystemParams,
    numerics: &NumericsParams,
) -> Result<f64> {
    Analyzer::new(params, numerics)?.sir_coverage(class, beta, in_dof)
}

/// Convenience wrapper: rate coverage at one parameter point.
pub fn rate_coverage(
    scheme: &SchemeParams,
    tau: f64,
    params: &SystemParams,
    numerics: &NumericsParams,
    method: Method,
) -> Result<CoverageReport> {
    Analyzer::new(params, numerics)?.rate_coverage(scheme, tau, method)
}
