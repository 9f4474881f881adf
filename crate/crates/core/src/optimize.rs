//! Design-parameter optimization: the gain/penalty split of a unit IN DoF
//! increment, the optimal number of IN DoF, the ABS resource split, bias
//! sweeps and small-rate order diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::association::{pmf_in_dof, LoadKind};
use crate::config::{db_to_linear, NumericsParams, Scheme, SchemeParams, SystemParams};
use crate::coverage::{rate_to_sir, Analyzer, MacroTerms, Method, OffloadedCoverage};
use crate::error::{domain, Result};

/// Margin kept from the ends of the ABS split interval.
pub const ETA_MARGIN: f64 = 1e-3;

/// Coverage differences below this count as ties in the ABS bisection.
pub const ETA_TIE: f64 = 1e-12;

/// Rate-coverage change from `U−1` to `U` IN DoF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaReport {
    pub in_dof: usize,
    /// Improvement for offloaded users that become protected.
    pub gain: f64,
    /// Loss for macro users whose BS spends one more DoF.
    pub penalty: f64,
    pub net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumResult<T> {
    pub arg: T,
    pub value: f64,
    pub trace: Vec<(T, f64)>,
    /// Set when an interval endpoint beats the located interior optimum.
    pub boundary_warning: bool,
}

/// Coverage pieces shared by every `U` at one rate threshold (mean-load form).
#[derive(Debug, Clone)]
pub struct DeltaInputs {
    pub macro_terms: MacroTerms,
    pub pico: f64,
    pub offloaded: OffloadedCoverage,
}

impl Analyzer {
    pub fn delta_inputs(&self, tau: f64) -> Result<DeltaInputs> {
        let w = self.params.bandwidth;
        let b1 = rate_to_sir(self.mean_load(LoadKind::Macro) * tau / w);
        let b2 = rate_to_sir(self.mean_load(LoadKind::Pico) * tau / w);
        Ok(DeltaInputs {
            macro_terms: self.macro_terms(b1, false)?,
            pico: self.pico_coverage(b2, false)?.0,
            offloaded: self.offloaded_coverage(b2, true)?,
        })
    }

    fn delta_from(&self, inputs: &DeltaInputs, in_dof: usize) -> Result<DeltaReport> {
        let n1 = self.params.n1;
        if in_dof == 0 || in_dof >= n1 {
            return Err(domain("delta_rate", format!("U = {in_dof} outside 1..{}", n1 - 1)));
        }
        // Pr(offloaded users at the macro-BS ≥ U) is the top bin of the DoF p.m.f.
        let reach = pmf_in_dof(&self.stats, in_dof, &self.numerics)?.prob(in_dof);
        let penalty = self.stats.a1 * reach * inputs.macro_terms.terms[n1 - in_dof];
        let gain = self.stats.a2o * self.in_probability_increment(in_dof)? * inputs.offloaded.gap;
        Ok(DeltaReport { in_dof, gain, penalty, net: gain - penalty })
    }

    /// `R̄(U) − R̄(U−1)` split into gain and penalty, mean-load form.
    pub fn delta_rate(&self, in_dof: usize, tau: f64) -> Result<DeltaReport> {
        let inputs = self.delta_inputs(tau)?;
        self.delta_from(&inputs, in_dof)
    }

    /// `R̄(U)` for every feasible `U`, accumulated from the `U = 0` value.
    pub fn in_dof_sweep(&self, tau: f64) -> Result<Vec<(usize, f64)>> {
        let inputs = self.delta_inputs(tau)?;
        let s = &self.stats;
        let mut value = s.a1 * inputs.macro_terms.coverage(self.params.n1)
            + s.a2obar * inputs.pico
            + s.a2o * inputs.offloaded.unprotected;
        let mut trace = vec![(0, value)];
        for u in 1..self.params.n1 {
            value += self.delta_from(&inputs, u)?.net;
            trace.push((u, value));
        }
        Ok(trace)
    }

    /// Optimal number of IN DoF by exhaustive search (mean-load coverage).
    pub fn optimal_in_dof(&self, tau: f64) -> Result<OptimumResult<usize>> {
        self.optimal_in_dof_with(tau, Method::Mla)
    }

    /// As [`Analyzer::optimal_in_dof`]; `Method::Full` evaluates each `U`
    /// directly with the full load distribution.
    pub fn optimal_in_dof_with(&self, tau: f64, method: Method) -> Result<OptimumResult<usize>> {
        if !(tau > 0.0) {
            return Err(domain("optimal_U", format!("tau = {tau} must be positive")));
        }
        let trace = match method {
            Method::Mla => self.in_dof_sweep(tau)?,
            Method::Full => (0..self.params.n1)
                .map(|u| {
                    let sch = SchemeParams { scheme: Scheme::InterferenceNulling, in_dof: u, abs_eta: 0.5, tau };
                    Ok((u, self.rate_coverage(&sch, tau, Method::Full)?.overall))
                })
                .collect::<Result<Vec<_>>>()?,
            Method::MonteCarlo => return Err(domain("optimal_U", "Monte Carlo is not an optimization objective")),
        };
        Ok(argmax(trace))
    }

    fn abs_value(&self, eta: f64, tau: f64) -> Result<f64> {
        let sch = SchemeParams { scheme: Scheme::Abs, in_dof: 0, abs_eta: eta, tau };
        Ok(self.rate_coverage(&sch, tau, Method::Mla)?.overall)
    }

    /// ABS split maximizing mean-load coverage, by bisection on the sign of
    /// the local slope with exactly `iterations` refinement steps.
    pub fn optimal_eta(&self, tau: f64, iterations: usize) -> Result<OptimumResult<f64>> {
        if !(tau > 0.0) {
            return Err(domain("optimal_eta", format!("tau = {tau} must be positive")));
        }
        let (mut lo, mut hi) = (ETA_MARGIN, 1.0 - ETA_MARGIN);
        let mut trace = Vec::new();
        for _ in 0..iterations {
            let mid = 0.5 * (lo + hi);
            let h = 1e-3 * (hi - lo);
            let left = self.abs_value(mid - h, tau)?;
            let right = self.abs_value(mid + h, tau)?;
            trace.push((mid - h, left));
            trace.push((mid + h, right));
            if right > left + ETA_TIE {
                lo = mid;
            } else if left > right + ETA_TIE {
                hi = mid;
            } else {
                let q = 0.25 * (hi - lo);
                lo += q;
                hi -= q;
            }
        }
        let eta = 0.5 * (lo + hi);
        let value = self.abs_value(eta, tau)?;
        trace.push((eta, value));
        let ends = self.abs_value(ETA_MARGIN, tau)?.max(self.abs_value(1.0 - ETA_MARGIN, tau)?);
        let mut best = OptimumResult { arg: eta, value, trace, boundary_warning: ends > value };
        for &(e, v) in &best.trace {
            if v > best.value + ETA_TIE {
                best.arg = e;
                best.value = v;
            }
        }
        Ok(best)
    }
}

/// Largest value; ties go to the smallest argument.
fn argmax<T: Copy + PartialOrd>(trace: Vec<(T, f64)>) -> OptimumResult<T> {
    let mut best = 0;
    for (i, &(a, v)) in trace.iter().enumerate() {
        let (ba, bv) = trace[best];
        if v > bv || (v == bv && a < ba) {
            best = i;
        }
    }
    OptimumResult { arg: trace[best].0, value: trace[best].1, trace, boundary_warning: false }
}

pub fn delta_rate(in_dof: usize, tau: f64, params: &SystemParams, numerics: &NumericsParams) -> Result<DeltaReport> {
    Analyzer::new(params, numerics)?.delta_rate(in_dof, tau)
}

pub fn optimal_in_dof(tau: f64, params: &SystemParams, numerics: &NumericsParams) -> Result<OptimumResult<usize>> {
    Analyzer::new(params, numerics)?.optimal_in_dof(tau)
}

pub fn optimal_eta(
    tau: f64,
    params: &SystemParams,
    numerics: &NumericsParams,
    iterations: usize,
) -> Result<OptimumResult<f64>> {
    Analyzer::new(params, numerics)?.optimal_eta(tau, iterations)
}

/// Default bias grid: 0 to 14 dB in 0.5 dB steps.
pub fn default_bias_grid_db() -> Vec<f64> {
    (0..=28).map(|i| 0.5 * i as f64).collect()
}

/// Per-bias inner optimum of a bias sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasPoint {
    pub bias_db: f64,
    pub coverage: f64,
    /// `U*` for IN, `η*` for ABS, unused otherwise.
    pub inner_arg: f64,
}

/// Best bias on a grid (in dB) after optimizing the scheme's own parameter at
/// each point. The trace holds `(bias_db, coverage)`.
pub fn optimal_bias(
    scheme: Scheme,
    tau: f64,
    params: &SystemParams,
    numerics: &NumericsParams,
    grid_db: &[f64],
) -> Result<(OptimumResult<f64>, Vec<BiasPoint>)> {
    if grid_db.is_empty() {
        return Err(domain("optimal_bias", "empty bias grid"));
    }
    if grid_db.iter().any(|b| !(*b >= 0.0)) {
        return Err(domain("optimal_bias", "bias grid values must be at least 0 dB"));
    }
    let points: Vec<BiasPoint> = grid_db
        .par_iter()
        .map(|&b| {
            let a = Analyzer::new(&params.with_bias(db_to_linear(b)), numerics)?;
            let (coverage, inner_arg) = match scheme {
                Scheme::InterferenceNulling => {
                    let r = a.optimal_in_dof(tau)?;
                    (r.value, r.arg as f64)
                }
                Scheme::Abs => {
                    let r = a.optimal_eta(tau, params.n1)?;
                    (r.value, r.arg)
                }
                Scheme::SimpleOffload => {
                    let sch = SchemeParams { scheme, in_dof: 0, abs_eta: 0.5, tau };
                    (a.rate_coverage(&sch, tau, Method::Mla)?.overall, 0.0)
                }
            };
            Ok(BiasPoint { bias_db: b, coverage, inner_arg })
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = points.iter().map(|p| (p.bias_db, p.coverage)).collect();
    Ok((argmax(trace), points))
}

/// Small-rate quantities whose order in `τ` is diagnosed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlopeQuantity {
    Penalty(usize),
    Gain(usize),
    /// `∫ 𝒯₁(n) f_{Y₁}` at the macro threshold.
    MacroTerm(usize),
}

/// Least-squares slope of `ln q(τ)` against `ln τ`.
pub fn asymptotic_slope(
    quantity: SlopeQuantity,
    params: &SystemParams,
    numerics: &NumericsParams,
    taus: &[f64],
) -> Result<f64> {
    if taus.len() < 2 {
        return Err(domain("asymptotic_slope", "need at least two rate thresholds"));
    }
    let a = Analyzer::new(params, numerics)?;
    let mut pts = Vec::with_capacity(taus.len());
    for &tau in taus {
        let q = match quantity {
            SlopeQuantity::Penalty(u) => a.delta_rate(u, tau)?.penalty,
            SlopeQuantity::Gain(u) => a.delta_rate(u, tau)?.gain,
            SlopeQuantity::MacroTerm(n) => {
                if n >= a.params.n1 {
                    return Err(domain("asymptotic_slope", format!("term {n} beyond n1")));
                }
                let b1 = rate_to_sir(a.mean_load(LoadKind::Macro) * tau / a.params.bandwidth);
                a.macro_terms(b1, false)?.terms[n]
            }
        };
        if !(q > 1e-300) {
            return Err(domain("asymptotic_slope", format!("quantity underflows at tau = {tau}")));
        }
        pts.push((tau.ln(), q.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4(bias_db: f64) -> SystemParams {
        SystemParams {
            lambda1: 1e-4,
            lambda2: 0.0015,
            lambda_u: 0.01,
            p1: 10.0,
            p2: 1.0,
            alpha1: 3.0,
            alpha2: 3.0,
            n1: 5,
            n2: 2,
            bias: db_to_linear(bias_db),
            bandwidth: 1e7,
        }
    }

    #[test]
    fn delta_matches_direct_difference() {
        let a = Analyzer::new(&fig4(4.6), &NumericsParams::default()).unwrap();
        let tau = 2e5;
        let direct: Vec<f64> = (0..5)
            .map(|u| {
                let sch = SchemeParams { scheme: Scheme::InterferenceNulling, in_dof: u, abs_eta: 0.5, tau };
                a.rate_coverage(&sch, tau, Method::Mla).unwrap().overall
            })
            .collect();
        for u in 1..5 {
            let d = a.delta_rate(u, tau).unwrap();
            assert!(d.gain >= 0.0 && d.penalty >= 0.0);
            let diff = direct[u] - direct[u - 1];
            assert!((d.net - diff).abs() < 1e-8, "U={u}: {} vs {diff}", d.net);
        }
        let sweep = a.in_dof_sweep(tau).unwrap();
        for (u, v) in sweep {
            assert!((v - direct[u]).abs() < 1e-8);
        }
    }

    #[test]
    fn delta_rejects_infeasible_dof() {
        let a = Analyzer::new(&fig4(4.6), &NumericsParams::default()).unwrap();
        assert!(a.delta_rate(0, 1e4).is_err());
        assert!(a.delta_rate(5, 1e4).is_err());
    }

    #[test]
    fn single_antenna_macro_forces_zero_dof() {
        let mut p = fig4(4.6);
        p.n1 = 1;
        p.n2 = 1;
        let r = optimal_in_dof(1e4, &p, &NumericsParams::default()).unwrap();
        assert_eq!(r.arg, 0);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn argmax_breaks_ties_toward_smaller_argument() {
        let r = argmax(vec![(0usize, 0.5), (1, 0.7), (2, 0.7)]);
        assert_eq!(r.arg, 1);
        let r = argmax(vec![(2usize, 0.7), (1, 0.7)]);
        assert_eq!(r.arg, 1);
    }

    #[test]
    fn optimum_is_the_trace_maximum() {
        let a = Analyzer::new(&fig4(2.5), &NumericsParams::default()).unwrap();
        let r = a.optimal_in_dof(1e5).unwrap();
        assert!(r.trace.iter().all(|&(_, v)| v <= r.value));
        let again = a.optimal_in_dof(1e5).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn eta_bisection_respects_interval_and_iterations() {
        let a = Analyzer::new(&fig4(6.0), &NumericsParams::default()).unwrap();
        let r = a.optimal_eta(1e5, 6).unwrap();
        assert!(r.arg > ETA_MARGIN && r.arg < 1.0 - ETA_MARGIN);
        assert_eq!(r.trace.len(), 2 * 6 + 1);
        assert!(r.trace.iter().all(|&(_, v)| v <= r.value + ETA_TIE));
    }

    #[test]
    fn flat_objective_keeps_midpoint() {
        let mut p = fig4(6.0);
        p.lambda_u = 1e-12;
        let a = Analyzer::new(&p, &NumericsParams::default()).unwrap();
        let r = a.optimal_eta(1.0, 5).unwrap();
        assert!((r.arg - 0.5).abs() < 1e-12, "{}", r.arg);
    }

    #[test]
    fn single_point_bias_grid() {
        let (r, pts) =
            optimal_bias(Scheme::SimpleOffload, 1e5, &fig4(0.0), &NumericsParams::default(), &[3.0]).unwrap();
        assert_eq!(r.arg, 3.0);
        assert_eq!(pts.len(), 1);
    }

    #[test]
    fn macro_term_orders() {
        let taus = [1e2, 1e3, 1e4];
        for n in 0..3 {
            let s =
                asymptotic_slope(SlopeQuantity::MacroTerm(n), &fig4(4.6), &NumericsParams::default(), &taus).unwrap();
            assert!((s - n as f64).abs() < 0.05, "n={n}: {s}");
        }
    }
}
