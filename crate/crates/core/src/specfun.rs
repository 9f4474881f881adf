//! Special functions and combinatorial enumerators.

use std::sync::OnceLock;

use statrs::function::beta;
use statrs::function::gamma;

use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate_scalar, QuadOpts};

/// Largest order accepted by the enumerators.
pub const ENUM_CAP: usize = 64;

/// Integer partition of `m` in multiplicity form: `mult[a-1]` copies of part `a`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    pub mult: Vec<u32>,
}

impl Partition {
    /// The integer being partitioned, `Σ a·p_a`.
    pub fn order(&self) -> usize {
        self.mult.iter().enumerate().map(|(i, &p)| (i + 1) * p as usize).sum()
    }
}

/// Ordered triple summing to a fixed `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Composition3 {
    pub q1: usize,
    pub q2: usize,
    pub q3: usize,
}

pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("ln_gamma", format!("x = {x} must be positive and finite")));
    }
    if x.fract() == 0.0 && x <= 171.0 {
        return Ok(ln_factorial(x as usize - 1));
    }
    Ok(gamma::ln_gamma(x))
}

pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    beta::checked_ln_beta(a, b).map_err(|e| domain("ln_beta", e.to_string()))
}

/// `ln n!` for small nonnegative integers.
pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = vec![0.0; 171];
        for i in 1..v.len() {
            v[i] = v[i - 1] + (i as f64).ln();
        }
        v
    });
    if n < t.len() {
        t[n]
    } else {
        gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// Complementary incomplete beta `∫_z^1 u^{a-1}(1-u)^{b-1} du`.
pub fn comp_inc_beta(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(domain("comp_inc_beta", format!("z = {z} outside (0, 1)")));
    }
    comp_inc_beta_upper(a, b, 1.0 - z)
}

/// Same integral parametrized by `w = 1 - z`, which keeps full precision when
/// `z` is close to one.
pub fn comp_inc_beta_upper(a: f64, b: f64, w: f64) -> Result<f64> {
    if !(w > 0.0 && w < 1.0) {
        return Err(domain("comp_inc_beta", format!("1 - z = {w} outside (0, 1)")));
    }
    if !(a > 0.0) {
        return Err(domain("comp_inc_beta", format!("a = {a} must be positive")));
    }
    if !(b > 0.0) {
        return Err(domain("comp_inc_beta", format!("b = {b} makes the integral diverge at u = 1")));
    }
    // ∫_z^1 u^{a-1}(1-u)^{b-1} du = B(a,b) · I_w(b, a)
    let reg = beta::checked_beta_reg(b, a, w).map_err(|e| domain("comp_inc_beta", e.to_string()))?;
    Ok(ln_beta(a, b)?.exp() * reg)
}

/// Adaptive-quadrature evaluation of the defining integral; used as a reference.
pub fn comp_inc_beta_quadrature(a: f64, b: f64, z: f64, rel_tol: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(domain("comp_inc_beta_quadrature", format!("z = {z} outside (0, 1)")));
    }
    // v = (1-u)^b removes the endpoint singularity at u = 1
    let w = 1.0 - z;
    integrate_scalar(
        "comp_inc_beta",
        |v| {
            let one_minus_u = v.powf(1.0 / b);
            let u = 1.0 - one_minus_u;
            u.powf(a - 1.0) / b
        },
        0.0,
        w.powf(b),
        QuadOpts::new(rel_tol).max_segments(2000),
    )
}

fn partitions_uncached(m: usize) -> Vec<Partition> {
    if m == 0 {
        return vec![Partition { mult: Vec::new() }];
    }
    // descending-parts enumeration, then converted to multiplicities
    let mut out = Vec::new();
    let mut parts = vec![m];
    loop {
        let mut mult = vec![0u32; m];
        for &p in &parts {
            mult[p - 1] += 1;
        }
        out.push(Partition { mult });

        // collect trailing ones, then decrement the last part greater than one
        let mut ones = 0;
        while let Some(&1) = parts.last() {
            parts.pop();
            ones += 1;
        }
        let Some(last) = parts.pop() else { break };
        let k = last - 1;
        let mut rem = ones + 1;
        parts.push(k);
        while rem >= k {
            parts.push(k);
            rem -= k;
        }
        if rem > 0 {
            parts.push(rem);
        }
    }
    out.sort();
    out
}

/// All partitions of `m` in lexicographic multiplicity order (cached).
pub fn partitions(m: usize) -> Result<&'static [Partition]> {
    if m > ENUM_CAP {
        return Err(Error::CapExceeded { order: m, cap: ENUM_CAP });
    }
    static CACHE: OnceLock<Vec<OnceLock<Vec<Partition>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=ENUM_CAP).map(|_| OnceLock::new()).collect());
    Ok(cache[m].get_or_init(|| partitions_uncached(m)).as_slice())
}

/// All ordered triples summing to `n`, lexicographic.
pub fn compositions3(n: usize) -> Result<Vec<Composition3>> {
    if n > ENUM_CAP {
        return Err(Error::CapExceeded { order: n, cap: ENUM_CAP });
    }
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for q1 in 0..=n {
        for q2 in 0..=(n - q1) {
            out.push(Composition3 { q1, q2, q3: n - q1 - q2 });
        }
    }
    Ok(out)
}

/// `ln( n! / Π k_i! )`.
pub fn ln_multinomial(n: usize, parts: &[usize]) -> f64 {
    ln_factorial(n) - parts.iter().map(|&k| ln_factorial(k)).sum::<f64>()
}

/// Exact multinomial coefficient when it fits in `u64`.
pub fn multinomial(n: usize, parts: &[usize]) -> Result<u64> {
    let total: usize = parts.iter().sum();
    if total != n {
        return Err(domain("multinomial", format!("parts sum to {total}, expected {n}")));
    }
    // product of binomials C(k_1+..+k_i, k_i), exact in u128
    let mut acc: u128 = 1;
    let mut running = 0u128;
    for &k in parts {
        for j in 1..=k as u128 {
            running += 1;
            acc = acc * running / j;
            if acc > u64::MAX as u128 {
                return Err(domain("multinomial", "result overflows u64"));
            }
        }
    }
    Ok(acc as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn comp_inc_beta_flat_integrand() {
        assert!((comp_inc_beta(1.0, 1.0, 0.25).unwrap() - 0.75).abs() < 1e-14);
    }

    #[test]
    fn comp_inc_beta_complete_limit() {
        let v = comp_inc_beta(0.5, 0.5, 1e-15).unwrap();
        assert!((v - std::f64::consts::PI).abs() < 1e-6, "{v}");
    }

    #[test]
    fn comp_inc_beta_matches_quadrature() {
        let q = comp_inc_beta_quadrature(1.5, 0.5, 0.5, 1e-12).unwrap();
        let v = comp_inc_beta(1.5, 0.5, 0.5).unwrap();
        assert!((v - q).abs() < 1e-10 * q, "{v} vs {q}");
        // closed form: ∫_{1/2}^1 u^{1/2}(1-u)^{-1/2} du = π/4 + 1/2
        assert!((v - (std::f64::consts::FRAC_PI_4 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn comp_inc_beta_rejects_bad_z() {
        assert!(comp_inc_beta(1.0, 1.0, 0.0).is_err());
        assert!(comp_inc_beta(1.0, 1.0, 1.0).is_err());
        assert!(comp_inc_beta(1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn ln_gamma_values() {
        assert_eq!(ln_gamma(1.0).unwrap(), 0.0);
        // Γ(4.5) = 105·√π / 16
        let exact = (105.0 * std::f64::consts::PI.sqrt() / 16.0).ln();
        assert!((ln_gamma(4.5).unwrap() - exact).abs() < 1e-13);
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.0).is_err());
    }

    #[test]
    fn multinomial_small() {
        assert_eq!(multinomial(4, &[2, 1, 1]).unwrap(), 12);
        assert_eq!(multinomial(0, &[]).unwrap(), 1);
        assert_eq!(multinomial(20, &[10, 10]).unwrap(), 184_756);
        assert!((ln_multinomial(4, &[2, 1, 1]) - 12f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn partition_counts() {
        let expected = [1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42];
        for (m, &c) in expected.iter().enumerate() {
            let ps = partitions(m).unwrap();
            assert_eq!(ps.len(), c, "m = {m}");
            for p in ps {
                assert_eq!(p.order(), m);
            }
        }
        assert_eq!(partitions(1).unwrap()[0].mult, vec![1]);
        assert_eq!(partitions(20).unwrap().len(), 627);
    }

    #[test]
    fn partitions_are_sorted_and_unique() {
        let ps = partitions(9).unwrap();
        for w in ps.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn enumeration_cap() {
        assert!(matches!(partitions(65), Err(Error::CapExceeded { .. })));
        assert!(matches!(compositions3(65), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn composition_counts() {
        assert_eq!(compositions3(0).unwrap(), vec![Composition3 { q1: 0, q2: 0, q3: 0 }]);
        assert_eq!(compositions3(2).unwrap().len(), 6);
        assert_eq!(compositions3(5).unwrap().len(), 21);
    }

    proptest! {
        #[test]
        fn comp_inc_beta_decreasing(a in 0.2f64..4.0, b in 0.2f64..4.0, z1 in 0.01f64..0.98, dz in 0.001f64..0.5) {
            let z2 = (z1 + dz).min(0.999);
            prop_assert!(comp_inc_beta(a, b, z1).unwrap() >= comp_inc_beta(a, b, z2).unwrap());
        }

        #[test]
        fn comp_inc_beta_complements_lower(a in 0.2f64..4.0, b in 0.2f64..4.0, z in 0.01f64..0.99) {
            let upper = comp_inc_beta(a, b, z).unwrap();
            let lower = ln_beta(a, b).unwrap().exp() * beta::beta_reg(a, b, z);
            let complete = ln_beta(a, b).unwrap().exp();
            prop_assert!((upper + lower - complete).abs() <= 1e-10 * complete);
        }

        #[test]
        fn compositions_sum(n in 0usize..30) {
            for c in compositions3(n).unwrap() {
                prop_assert_eq!(c.q1 + c.q2 + c.q3, n);
            }
        }
    }
}
