#![allow(dead_code)]

use hetnet_core::config::db_to_linear;
use hetnet_core::{Scheme, SchemeParams, SystemParams};

pub fn in_scheme(in_dof: usize, tau: f64) -> SchemeParams {
    SchemeParams { scheme: Scheme::InterferenceNulling, in_dof, abs_eta: 0.5, tau }
}

pub fn abs_scheme(eta: f64, tau: f64) -> SchemeParams {
    SchemeParams { scheme: Scheme::Abs, in_dof: 0, abs_eta: eta, tau }
}

/// Unequal path-loss exponents with a 13 dB power ratio.
pub fn mixed_exponents() -> SystemParams {
    SystemParams {
        lambda1: 8e-5,
        lambda2: 1e-3,
        lambda_u: 0.03,
        p1: db_to_linear(13.0),
        p2: 1.0,
        alpha1: 4.5,
        alpha2: 4.7,
        n1: 10,
        n2: 8,
        bias: db_to_linear(4.0),
        bandwidth: 10e6,
    }
}

/// Equal exponents, 8/4 antennas.
pub fn two_tier(bias_db: f64) -> SystemParams {
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
        bandwidth: 10e6,
    }
}

/// Dense picos, 5/2 antennas, cubic path loss.
pub fn dense_picos(bias_db: f64) -> SystemParams {
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
        bandwidth: 10e6,
    }
}

pub fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}
