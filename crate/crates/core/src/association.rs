//! Association-layer statistics: tier probabilities, offloaded-user counts,
//! IN degrees of freedom, IN probability, loads and serving-distance densities.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::config::{NumericsParams, SystemParams};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate_semi_infinite, QuadOpts};
use crate::specfun::{ln_factorial, ln_gamma};

/// Shape of the cell-area gamma approximation used throughout.
pub const AREA_SHAPE: f64 = 3.5;

/// Slope of the closed-form mean load `1 + 1.28·λu·𝒜/λ`.
pub const MEAN_LOAD_SLOPE: f64 = 1.28;

/// Largest renormalization defect tolerated silently.
pub const RENORMALIZE_ABOVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssociationStats {
    /// Macro users.
    pub a1: f64,
    /// All pico users.
    pub a2: f64,
    /// Pico users that would pick the pico tier without bias.
    pub a2obar: f64,
    /// Offloaded users.
    pub a2o: f64,
    /// Mean number of active offloaded users per macro-BS, `λ2·𝒜2O / (𝒜2·λ1)`.
    pub rho: f64,
}

/// Truncated discrete distribution with explicit tail mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfTable {
    /// Value of the first entry of `probs`.
    pub offset: usize,
    pub probs: Vec<f64>,
    /// Mass beyond the last tabulated value.
    pub tail: f64,
    /// `|Σ probs + tail − 1|` before any renormalization.
    pub defect: f64,
    /// Whether the table was rescaled because the defect exceeded 1e−6.
    pub renormalized: bool,
}

impl PmfTable {
    pub fn point_mass(at: usize) -> Self {
        PmfTable { offset: at, probs: vec![1.0], tail: 0.0, defect: 0.0, renormalized: false }
    }

    pub fn prob(&self, n: usize) -> f64 {
        if n < self.offset {
            return 0.0;
        }
        self.probs.get(n - self.offset).copied().unwrap_or(0.0)
    }

    /// Largest tabulated value.
    pub fn max_value(&self) -> usize {
        self.offset + self.probs.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (i + self.offset, p))
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mean of the tabulated part (tail excluded).
    pub fn mean(&self) -> f64 {
        self.iter().map(|(n, p)| n as f64 * p).sum()
    }

    /// `Pr(N >= n)`, with the tail counted above the table.
    pub fn survival(&self, n: usize) -> f64 {
        let above: f64 = self.iter().filter(|&(k, _)| k >= n).map(|(_, p)| p).sum();
        above + self.tail
    }
}

/// Which load the typical user sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LoadKind {
    /// Serving macro-BS, `L0,1`.
    Macro,
    /// Serving pico-BS, all pico users, `L0,2`.
    Pico,
    /// Pico-BS load counted over non-offloaded users only, `L0,2Ō` (ABS).
    PicoNonOffloaded,
    /// Pico-BS load counted over offloaded users only, `L0,2O` (ABS).
    PicoOffloaded,
}

impl AssociationStats {
    fn load_ratio(&self, kind: LoadKind, params: &SystemParams) -> f64 {
        let (a, lambda) = match kind {
            LoadKind::Macro => (self.a1, params.lambda1),
            LoadKind::Pico => (self.a2, params.lambda2),
            LoadKind::PicoNonOffloaded => (self.a2obar, params.lambda2),
            LoadKind::PicoOffloaded => (self.a2o, params.lambda2),
        };
        params.lambda_u * a / lambda
    }
}

fn quad(numerics: &NumericsParams) -> QuadOpts {
    QuadOpts::new(numerics.quad_rel_tol).abs_tol(1e-15).splits(4)
}

/// `e^{-a} - e^{-b}` for `b >= a >= 0` without cancellation.
pub(crate) fn exp_diff(a: f64, b: f64) -> f64 {
    (-a).exp() * -(-(b - a)).exp_m1()
}

/// Tier probabilities and offload ratio. Each probability is a semi-infinite
/// integral in the exponential normal form `∫ e^{-u} h(u) du`.
pub fn assoc_stats(params: &SystemParams, numerics: &NumericsParams) -> Result<AssociationStats> {
    let p = params;
    let ratio = p.p1 / p.p2;
    let (l1, l2) = (p.lambda1, p.lambda2);
    // macro users: u = πλ1 z²
    let c1 = PI * l2 * (p.bias / ratio).powf(2.0 / p.alpha2);
    let e1 = p.alpha1 / p.alpha2;
    // pico users: u = πλ2 z²
    let c_obar = PI * l1 * ratio.powf(2.0 / p.alpha1);
    let c_all = PI * l1 * (ratio / p.bias).powf(2.0 / p.alpha1);
    let e2 = p.alpha2 / p.alpha1;

    let v = integrate_semi_infinite(
        "association",
        |u, out: &mut [f64]| {
            let eu = (-u).exp();
            let z1 = (u / (PI * l1)).powf(e1);
            let z2 = (u / (PI * l2)).powf(e2);
            out[0] = eu * (-c1 * z1).exp();
            out[1] = eu * (-c_obar * z2).exp();
            out[2] = eu * exp_diff(c_all * z2, c_obar * z2);
        },
        0.0,
        3,
        quad(numerics),
    )?;
    let (a1, a2obar, a2o) = (v[0], v[1], v[2]);
    let a2 = a2obar + a2o;
    let rho = if a2 > 0.0 { l2 * a2o / (a2 * l1) } else { 0.0 };
    Ok(AssociationStats { a1, a2, a2obar, a2o, rho })
}

/// Builds a table from per-entry log-probabilities and an independent
/// survival function, stopping once the survival drops below `eps`.
fn build_table(
    offset: usize,
    ln_term: impl Fn(usize) -> f64,
    survival: impl Fn(usize) -> f64,
    eps: f64,
    cap: usize,
    strict: bool,
) -> Result<PmfTable> {
    let mut probs = Vec::new();
    let mut n = offset;
    let tail = loop {
        probs.push(ln_term(n).exp());
        let t = survival(n + 1);
        if t <= eps {
            break t;
        }
        if probs.len() >= cap {
            if strict {
                return Err(Error::Truncation { cap, tail: t, eps });
            }
            break t;
        }
        n += 1;
    };
    let total: f64 = probs.iter().sum::<f64>() + tail;
    let defect = (total - 1.0).abs();
    let renormalized = defect > RENORMALIZE_ABOVE;
    if renormalized {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(PmfTable { offset, probs, tail: if renormalized { tail / total } else { tail }, defect, renormalized })
}

fn x_ln(n: usize, x: f64) -> f64 {
    if n == 0 {
        0.0
    } else if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        n as f64 * x.ln()
    }
}

/// Active offloaded users served around the typical macro-BS, support `n >= 0`.
pub fn pmf_active_offloaded(stats: &AssociationStats, numerics: &NumericsParams) -> Result<PmfTable> {
    let rho = stats.rho;
    let k = AREA_SHAPE;
    let lg = ln_gamma(k)?;
    let lead = k * k.ln();
    let odds = rho / (k + rho);
    build_table(
        0,
        |n| {
            let nf = n as f64;
            lead + ln_gamma(nf + k).unwrap_or(f64::NAN) - lg - ln_factorial(n) + x_ln(n, rho)
                - (nf + k) * (k + rho).ln()
        },
        |n| if n == 0 { 1.0 } else { beta_reg(n as f64, k, odds) },
        numerics.pmf_tail_eps,
        numerics.load_sum_max,
        true,
    )
}

/// Size-biased count seen by an offloaded typical user, support `n >= 1`.
fn size_biased_table(x: f64, numerics: &NumericsParams, strict: bool) -> Result<PmfTable> {
    let k = AREA_SHAPE;
    let lg = ln_gamma(k)?;
    let lead = k * k.ln();
    let odds = x / (k + x);
    build_table(
        1,
        |n| {
            let nf = n as f64;
            lead + ln_gamma(nf + k).unwrap_or(f64::NAN) - ln_factorial(n - 1) - lg + x_ln(n - 1, x)
                - (nf + k) * (k + x).ln()
        },
        |n| if n <= 1 { 1.0 } else { beta_reg((n - 1) as f64, k + 1.0, odds) },
        numerics.pmf_tail_eps,
        numerics.load_sum_max,
        strict,
    )
}

/// Active offloaded users around the nearest macro-BS of an offloaded typical
/// user (itself included), support `n >= 1`.
pub fn pmf_active_offloaded_nearest(stats: &AssociationStats, numerics: &NumericsParams) -> Result<PmfTable> {
    size_biased_table(stats.rho, numerics, true)
}

/// IN degrees of freedom spent by the typical macro-BS, `min(U, ·)` of
/// [`pmf_active_offloaded`]. The mass at `U` absorbs the whole upper tail.
pub fn pmf_in_dof(stats: &AssociationStats, in_dof: usize, numerics: &NumericsParams) -> Result<PmfTable> {
    if in_dof == 0 {
        return Ok(PmfTable::point_mass(0));
    }
    let base = pmf_active_offloaded(stats, numerics)?;
    let mut probs: Vec<f64> = (0..in_dof).map(|n| base.prob(n)).collect();
    let k = AREA_SHAPE;
    let odds = stats.rho / (k + stats.rho);
    probs.push(beta_reg(in_dof as f64, k, odds));
    let total: f64 = probs.iter().sum();
    Ok(PmfTable { offset: 0, probs, tail: 0.0, defect: (total - 1.0).abs(), renormalized: false })
}

/// `Σ_{n≥1} Pr(Û=n)/n` in closed form.
pub fn harmonic_mass(rho: f64) -> f64 {
    if rho < 1e-12 {
        return 1.0 - rho / AREA_SHAPE;
    }
    let k = AREA_SHAPE;
    -(-k * (rho / k).ln_1p()).exp_m1() / rho
}

/// `Σ_{n≥from} Pr(Û=n)/n`, the probability increment `Pr(U) − Pr(U−1)` at `U = from`.
pub fn in_probability_increment(stats: &AssociationStats, from: usize, numerics: &NumericsParams) -> Result<f64> {
    if from <= 1 {
        return Ok(harmonic_mass(stats.rho));
    }
    let table = pmf_active_offloaded_nearest(stats, numerics)?;
    let h = harmonic_mass(stats.rho);
    let head: f64 = table.iter().filter(|&(n, _)| n < from).map(|(n, p)| p / n as f64).sum();
    let diff = h - head;
    if diff > 1e-10 * h {
        return Ok(diff);
    }
    // cancellation regime: sum the remaining terms directly
    let direct: f64 = table.iter().filter(|&(n, _)| n >= from).map(|(n, p)| p / n as f64).sum();
    Ok(direct + table.tail / table.max_value().max(from) as f64)
}

/// Probability that an offloaded typical user is protected by IN with `U` DoF.
pub fn in_probability(stats: &AssociationStats, in_dof: usize, numerics: &NumericsParams) -> Result<f64> {
    if in_dof == 0 {
        return Ok(0.0);
    }
    let table = pmf_active_offloaded_nearest(stats, numerics)?;
    let u = in_dof as f64;
    let head_mass: f64 = table.iter().filter(|&(n, _)| n <= in_dof).map(|(_, p)| p).sum();
    let rest = in_probability_increment(stats, in_dof + 1, numerics)?;
    Ok(head_mass + u * rest)
}

/// Direct truncated evaluation of `Σ_n min(1, U/n)·Pr(Û=n)`; a cross-check
/// of [`in_probability`].
pub fn in_probability_truncated(stats: &AssociationStats, in_dof: usize, numerics: &NumericsParams) -> Result<f64> {
    let table = pmf_active_offloaded_nearest(stats, numerics)?;
    let u = in_dof as f64;
    Ok(table.iter().map(|(n, p)| p * (u / n as f64).min(1.0)).sum())
}

/// Load p.m.f. of the typical user's serving BS, support `n >= 1`.
pub fn load_pmf(
    kind: LoadKind,
    stats: &AssociationStats,
    params: &SystemParams,
    numerics: &NumericsParams,
) -> Result<PmfTable> {
    size_biased_table(stats.load_ratio(kind, params), numerics, true)
}

/// As [`load_pmf`], but stops at `load_sum_max` even when the tail is still
/// above `pmf_tail_eps`; the caller bounds the residual through `tail`.
pub fn load_pmf_capped(
    kind: LoadKind,
    stats: &AssociationStats,
    params: &SystemParams,
    numerics: &NumericsParams,
) -> Result<PmfTable> {
    size_biased_table(stats.load_ratio(kind, params), numerics, false)
}

/// Closed-form mean load `1 + 1.28·λu·𝒜/λ`.
pub fn mean_load(kind: LoadKind, stats: &AssociationStats, params: &SystemParams) -> f64 {
    1.0 + MEAN_LOAD_SLOPE * stats.load_ratio(kind, params)
}

/// Serving-distance density families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DistanceClass {
    /// Macro user, distance to the serving macro-BS.
    Macro,
    /// Non-offloaded pico user, distance to the serving pico-BS.
    PicoNonOffloaded,
    /// Offloaded user, joint (macro, pico) distances on the offloading wedge.
    OffloadedJoint,
    /// Offloaded user, pico distance only.
    OffloadedPico,
}

/// A normalized serving-distance density.
#[derive(Debug, Clone, Copy)]
pub struct DistancePdf {
    pub class: DistanceClass,
    /// Normalization constant (the matching tier probability).
    pub norm: f64,
    params: SystemParams,
}

impl DistancePdf {
    /// Lower/upper pico-distance limits of the offloading wedge at macro distance `x`.
    pub fn wedge(&self, x: f64) -> (f64, f64) {
        wedge_bounds(&self.params, x)
    }

    /// Single-distance density; domain error for the joint class or `y < 0`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(domain("distance_pdf", format!("negative distance {y}")));
        }
        let p = &self.params;
        let ratio = p.p1 / p.p2;
        let (l1, l2) = (p.lambda1, p.lambda2);
        let v = match self.class {
            DistanceClass::Macro => {
                2.0 * PI * l1 / self.norm
                    * y
                    * (-PI
                        * (l1 * y * y + l2 * (p.bias / ratio).powf(2.0 / p.alpha2) * y.powf(2.0 * p.alpha1 / p.alpha2)))
                    .exp()
            }
            DistanceClass::PicoNonOffloaded => {
                2.0 * PI * l2 / self.norm
                    * y
                    * (-PI * l2 * y * y).exp()
                    * (-PI * l1 * ratio.powf(2.0 / p.alpha1) * y.powf(2.0 * p.alpha2 / p.alpha1)).exp()
            }
            DistanceClass::OffloadedPico => {
                let z = y.powf(2.0 * p.alpha2 / p.alpha1);
                let near = PI * l1 * (ratio / p.bias).powf(2.0 / p.alpha1) * z;
                let far = PI * l1 * ratio.powf(2.0 / p.alpha1) * z;
                2.0 * PI * l2 / self.norm * exp_diff(near, far) * y * (-PI * l2 * y * y).exp()
            }
            DistanceClass::OffloadedJoint => {
                return Err(domain("distance_pdf", "joint density needs two distances"));
            }
        };
        Ok(v)
    }

    /// Joint density of (macro distance `x`, pico distance `y`) for offloaded
    /// users; domain error outside the wedge.
    pub fn eval_joint(&self, x: f64, y: f64) -> Result<f64> {
        if self.class != DistanceClass::OffloadedJoint {
            return Err(domain("distance_pdf", "single-distance density evaluated jointly"));
        }
        let (lo, hi) = self.wedge(x);
        if !(x >= 0.0 && y >= lo && y <= hi) {
            return Err(domain("distance_pdf", format!("({x}, {y}) outside the offloading wedge")));
        }
        let (l1, l2) = (self.params.lambda1, self.params.lambda2);
        Ok(4.0 * PI * PI * l1 * l2 / self.norm * x * y * (-PI * (l1 * x * x + l2 * y * y)).exp())
    }
}

/// Pico distances for which a user at macro distance `x` is offloaded.
pub fn wedge_bounds(params: &SystemParams, x: f64) -> (f64, f64) {
    let ratio = params.p1 / params.p2;
    let e = params.alpha1 / params.alpha2;
    let base = x.powf(e);
    let lo = (1.0 / ratio).powf(1.0 / params.alpha2) * base;
    let hi = (params.bias / ratio).powf(1.0 / params.alpha2) * base;
    (lo, hi)
}

pub fn distance_pdf(class: DistanceClass, stats: &AssociationStats, params: &SystemParams) -> Result<DistancePdf> {
    let norm = match class {
        DistanceClass::Macro => stats.a1,
        DistanceClass::PicoNonOffloaded => stats.a2obar,
        DistanceClass::OffloadedJoint | DistanceClass::OffloadedPico => stats.a2o,
    };
    if !(norm > 0.0) {
        return Err(domain("distance_pdf", format!("{class:?} has zero probability")));
    }
    Ok(DistancePdf { class, norm, params: *params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::db_to_linear;
    use crate::quadrature::{integrate, integrate_semi_infinite_scalar};
    use proptest::prelude::*;

    fn fig6() -> SystemParams {
        SystemParams {
            lambda1: 8e-5,
            lambda2: 1e-3,
            lambda_u: 0.03,
            p1: db_to_linear(13.0),
            p2: 1.0,
            alpha1: 4.5,
            alpha2: 4.7,
            n1: 8,
            n2: 4,
            bias: db_to_linear(4.0),
            bandwidth: 1e7,
        }
    }

    fn fig2(bias_db: f64) -> SystemParams {
        SystemParams {
            lambda1: 1e-4,
            lambda2: 5e-4,
            lambda_u: 0.01,
            p1: 10.0,
            p2: 1.0,
            alpha1: 4.0,
            alpha2: 4.0,
            n1: 8,
            n2: 4,
            bias: db_to_linear(bias_db),
            bandwidth: 1e7,
        }
    }

    fn num() -> NumericsParams {
        NumericsParams::default()
    }

    #[test]
    fn equal_exponents_closed_form() {
        let p = fig2(5.0);
        let s = assoc_stats(&p, &num()).unwrap();
        let k = |r: f64| p.lambda2 / p.lambda1 * r.powf(2.0 / 4.0);
        let a2 = k(p.bias / p.p1) / (1.0 + k(p.bias / p.p1));
        let a2obar = k(1.0 / p.p1) / (1.0 + k(1.0 / p.p1));
        assert!((s.a2 - a2).abs() < 1e-9);
        assert!((s.a2obar - a2obar).abs() < 1e-9);
        assert!((s.a1 + s.a2 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fig6_fractions() {
        let s = assoc_stats(&fig6(), &num()).unwrap();
        assert!((s.a1 - 0.21).abs() < 0.01, "{s:?}");
        assert!((s.a2obar - 0.72).abs() < 0.01, "{s:?}");
        assert!((s.a2o - 0.07).abs() < 0.01, "{s:?}");
    }

    #[test]
    fn unit_bias_has_no_offloading() {
        let s = assoc_stats(&fig6().with_bias(1.0), &num()).unwrap();
        assert_eq!(s.a2o, 0.0);
        assert_eq!(s.rho, 0.0);
        let t = pmf_active_offloaded(&s, &num()).unwrap();
        assert_eq!(t.probs, vec![1.0]);
        let t = pmf_active_offloaded_nearest(&s, &num()).unwrap();
        assert_eq!((t.offset, t.probs.len()), (1, 1));
        assert!((t.probs[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mean_loads_fig6() {
        let p = fig6();
        let s = assoc_stats(&p, &num()).unwrap();
        assert!((mean_load(LoadKind::PicoNonOffloaded, &s, &p) - 28.57).abs() < 0.5);
        assert!((mean_load(LoadKind::PicoOffloaded, &s, &p) - 3.86).abs() < 0.5);
        assert!((mean_load(LoadKind::Pico, &s, &p) - 31.43).abs() < 0.5);
        let q = p.with_lambda_u(1e-12);
        for kind in [LoadKind::Macro, LoadKind::Pico, LoadKind::PicoNonOffloaded, LoadKind::PicoOffloaded] {
            assert!((mean_load(kind, &s, &q) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn load_pmf_mean_close_to_closed_form() {
        let p = fig6();
        let s = assoc_stats(&p, &num()).unwrap();
        let n = NumericsParams { pmf_tail_eps: 1e-8, load_sum_max: 4096, ..num() };
        let s_strict = load_pmf(LoadKind::Macro, &s, &p, &num());
        assert!(matches!(s_strict, Err(Error::Truncation { .. })));
        let capped = load_pmf_capped(LoadKind::Macro, &s, &p, &num()).unwrap();
        assert_eq!(capped.probs.len(), 512);
        assert!(capped.defect < 1e-9);
        for kind in [LoadKind::Macro, LoadKind::Pico, LoadKind::PicoNonOffloaded, LoadKind::PicoOffloaded] {
            let t = load_pmf(kind, &s, &p, &n).unwrap();
            let closed = mean_load(kind, &s, &p);
            assert!((t.mean() - closed).abs() <= 0.02 * closed, "{kind:?}: {} vs {closed}", t.mean());
        }
    }

    #[test]
    fn in_dof_table() {
        let s = assoc_stats(&fig2(10.0), &num()).unwrap();
        let base = pmf_active_offloaded(&s, &num()).unwrap();
        assert_eq!(pmf_in_dof(&s, 0, &num()).unwrap().probs, vec![1.0]);
        let t = pmf_in_dof(&s, 4, &num()).unwrap();
        for n in 0..4 {
            assert_eq!(t.prob(n), base.prob(n));
        }
        assert!((t.prob(4) - base.survival(4)).abs() < 1e-9);
        assert!(t.defect < 1e-12);
    }

    #[test]
    fn in_probability_paths_agree() {
        let s = assoc_stats(&fig2(10.0), &num()).unwrap();
        for u in 0..8 {
            let a = in_probability(&s, u, &num()).unwrap();
            let b = in_probability_truncated(&s, u, &num()).unwrap();
            assert!((a - b).abs() < 1e-8, "U={u}: {a} vs {b}");
        }
        assert_eq!(in_probability(&s, 0, &num()).unwrap(), 0.0);
        assert!((in_probability(&s, 200, &num()).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn harmonic_mass_matches_sum() {
        for rho in [0.0, 1e-6, 0.3, 2.0, 9.0] {
            let s = AssociationStats { a1: 0.5, a2: 0.5, a2obar: 0.4, a2o: 0.1, rho };
            let t = pmf_active_offloaded_nearest(&s, &NumericsParams { pmf_tail_eps: 1e-14, ..num() }).unwrap();
            let direct: f64 = t.iter().map(|(n, p)| p / n as f64).sum();
            assert!((harmonic_mass(rho) - direct).abs() < 1e-10, "rho={rho}");
        }
    }

    #[test]
    fn distance_pdfs_normalize() {
        for bias_db in [5.0, 10.0] {
            let p = fig2(bias_db);
            let s = assoc_stats(&p, &num()).unwrap();
            let q = QuadOpts::new(1e-9).splits(8);
            for class in [DistanceClass::Macro, DistanceClass::PicoNonOffloaded, DistanceClass::OffloadedPico] {
                let f = distance_pdf(class, &s, &p).unwrap();
                let v = integrate_semi_infinite_scalar("pdf", |y| f.eval(y).unwrap(), 0.0, q).unwrap();
                assert!((v - 1.0).abs() < 1e-6, "{class:?}: {v}");
            }
            let f = distance_pdf(DistanceClass::OffloadedJoint, &s, &p).unwrap();
            let v = integrate_semi_infinite_scalar(
                "joint",
                |x| {
                    let (lo, hi) = f.wedge(x);
                    integrate(
                        "inner",
                        |y, out: &mut [f64]| out[0] = f.eval_joint(x, y).unwrap(),
                        lo,
                        hi,
                        1,
                        QuadOpts::new(1e-10),
                    )
                    .unwrap()[0]
                },
                0.0,
                q,
            )
            .unwrap();
            assert!((v - 1.0).abs() < 1e-6, "joint: {v}");
            assert!(f.eval_joint(1.0, f.wedge(1.0).1 * 1.01).is_err());
            assert!(f.eval(1.0).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn tables_normalize(bias_db in 0.0f64..15.0, l2 in 1e-4f64..3e-3, lu in 1e-4f64..0.05) {
            let p = SystemParams { lambda2: l2, lambda_u: lu, ..fig2(bias_db) };
            let s = assoc_stats(&p, &num()).unwrap();
            prop_assert!((s.a1 + s.a2 - 1.0).abs() < 1e-5);
            let wide = NumericsParams { load_sum_max: 8192, ..num() };
            for t in [
                pmf_active_offloaded(&s, &num()).unwrap(),
                pmf_active_offloaded_nearest(&s, &num()).unwrap(),
                pmf_in_dof(&s, 3, &num()).unwrap(),
                load_pmf(LoadKind::Macro, &s, &p, &wide).unwrap(),
                load_pmf(LoadKind::Pico, &s, &p, &wide).unwrap(),
            ] {
                prop_assert!(t.defect <= 1e-9, "defect {}", t.defect);
                prop_assert!(t.tail <= num().pmf_tail_eps);
                prop_assert!(t.probs.iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn in_probability_monotone(bias_db in 0.5f64..15.0) {
            let s = assoc_stats(&fig2(bias_db), &num()).unwrap();
            let mut prev = 0.0;
            for u in 0..12 {
                let v = in_probability(&s, u, &num()).unwrap();
                prop_assert!(v >= prev && v <= 1.0);
                prev = v;
            }
        }

        #[test]
        fn bias_moves_mass_to_offloaded(b1 in 0.0f64..14.0, db in 0.1f64..3.0) {
            let s1 = assoc_stats(&fig6().with_bias_db(b1), &num()).unwrap();
            let s2 = assoc_stats(&fig6().with_bias_db(b1 + db), &num()).unwrap();
            prop_assert!(s2.a2o >= s1.a2o);
            prop_assert!(s2.a1 <= s1.a1);
        }

        #[test]
        fn in_dof_dominated(u in 0usize..8, bias_db in 1.0f64..14.0) {
            let s = assoc_stats(&fig2(bias_db), &num()).unwrap();
            let base = pmf_active_offloaded(&s, &num()).unwrap();
            let dof = pmf_in_dof(&s, u, &num()).unwrap();
            for n in 0..12 {
                prop_assert!(dof.survival(n) <= base.survival(n) + 1e-12);
            }
        }
    }
}
