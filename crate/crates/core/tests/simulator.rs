use hetnet_core::association::{assoc_stats, in_probability, pmf_active_offloaded, pmf_active_offloaded_nearest};
use hetnet_core::coverage::UserClass;
use hetnet_core::montecarlo::{estimate_offload_pmfs, estimate_rate_coverage, ChannelPath, Simulator};
use hetnet_core::{Config, NumericsParams, Scheme, SchemeParams, SystemParams};

fn in_scheme(u: usize) -> SchemeParams {
    SchemeParams { scheme: Scheme::InterferenceNulling, in_dof: u, abs_eta: 0.5, tau: 0.0 }
}

fn pmf_setup(bias_db: f64) -> (SystemParams, NumericsParams) {
    let mut cfg = Config::default();
    cfg.p1_db_over_p2 = 20.0;
    cfg.bias_db = bias_db;
    (cfg.system_params(), cfg.numerics)
}

fn sup_norm(table: impl Fn(usize) -> f64, hist: &[f64]) -> f64 {
    (0..hist.len().max(40)).map(|n| (table(n) - hist.get(n).copied().unwrap_or(0.0)).abs()).fold(0.0, f64::max)
}

#[test]
fn class_fractions_match_association_probabilities() {
    let cfg = Config::default();
    // users other than the typical one do not affect association
    let params = cfg.system_params().with_lambda_u(1e-7);
    let stats = assoc_stats(&params.normalize_power_ratio(), &cfg.numerics).unwrap();
    let sim = Simulator::new(&params, &cfg.numerics).unwrap();
    let r = sim.sir_coverage(&in_scheme(0), &[1.0], 100_000).unwrap();
    let est = |c| r[0].class(c).unwrap().fraction;
    for (class, expect) in [
        (UserClass::Macro, stats.a1),
        (UserClass::PicoNonOffloaded, stats.a2obar),
        (UserClass::OffloadedUnprotected, stats.a2o),
    ] {
        let e = est(class);
        assert!(
            (e.value - expect).abs() <= 3.0 * e.std_error,
            "{class:?}: {} vs {expect} (σ {})",
            e.value,
            e.std_error
        );
    }
}

#[test]
fn offload_count_pmfs_track_the_approximations() {
    for bias_db in [6.0, 10.0, 14.0] {
        let (params, numerics) = pmf_setup(bias_db);
        let stats = assoc_stats(&params.normalize_power_ratio(), &numerics).unwrap();
        let drops = if bias_db == 10.0 { 20_000 } else { 1_500 };
        let mc = estimate_offload_pmfs(&params, &numerics, drops).unwrap();
        let direct = pmf_active_offloaded(&stats, &numerics).unwrap();
        let sup = sup_norm(|n| direct.prob(n), &mc.per_macro);
        let mean: f64 = mc.per_macro.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        println!("B = {bias_db} dB: per-macro sup-norm {sup:.4}, mean {mean:.3} vs {:.3}", stats.rho);
        assert!(sup <= 0.06, "per-macro sup-norm {sup}");
        assert!((mean - stats.rho).abs() <= 0.08 * stats.rho, "mean {mean} vs {}", stats.rho);
        if bias_db == 10.0 {
            let nearest = pmf_active_offloaded_nearest(&stats, &numerics).unwrap();
            let sup = sup_norm(|n| nearest.prob(n), &mc.offloaded_side);
            println!("B = {bias_db} dB: nearest-macro sup-norm {sup:.4}");
            assert!(sup <= 0.05, "nearest-macro sup-norm {sup}");
            let pr = in_probability(&stats, 2, &numerics).unwrap();
            println!("B = {bias_db} dB: IN probability {pr:.4} vs {:.4}", mc.in_probability[2]);
            assert!((pr - mc.in_probability[2]).abs() <= 0.03);
        }
        assert_eq!(mc.in_probability[0], 0.0);
        assert!(mc.in_probability.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn doubling_the_window_stays_inside_the_interval() {
    let cfg = Config::default();
    let params = cfg.system_params();
    let taus = [1e5, 3e5, 1e6, 2e6];
    let base = estimate_rate_coverage(&params, &cfg.numerics, &in_scheme(4), &taus, 2_000).unwrap();
    let wide = NumericsParams { mc_window_radius: Some(2.0 * cfg.numerics.window_radius(&params)), ..cfg.numerics };
    let doubled = estimate_rate_coverage(&params, &wide, &in_scheme(4), &taus, 2_000).unwrap();
    for (a, b) in base.iter().zip(&doubled) {
        let d = (a.overall.value - b.overall.value).abs();
        assert!(d <= a.overall.ci95().max(1e-12), "τ = {}: {} vs {}", a.threshold, a.overall.value, b.overall.value);
    }
}

#[test]
fn explicit_precoders_reproduce_the_fast_path() {
    let cfg = Config::default();
    let params = SystemParams { n1: 4, n2: 2, ..cfg.system_params() };
    let fast = Simulator::new(&params, &cfg.numerics).unwrap();
    let slow = fast.clone().with_path(ChannelPath::Explicit);
    let betas = [0.1, 1.0, 10.0];
    let a = fast.sir_coverage(&in_scheme(2), &betas, 3_000).unwrap();
    let b = slow.sir_coverage(&in_scheme(2), &betas, 3_000).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let ci = x.overall.ci95().hypot(y.overall.ci95());
        assert!((x.overall.value - y.overall.value).abs() <= ci, "β = {}", x.threshold);
    }

    let light = Simulator::new(&params.with_lambda_u(2e-3), &cfg.numerics).unwrap().with_path(ChannelPath::Explicit);
    let (mut gain, mut shape, mut n) = (0.0, 0.0, 0);
    for d in 0..30_000 {
        let o = light.outcome(&in_scheme(2), d).unwrap();
        if o.class == UserClass::Macro {
            gain += o.signal_gain;
            shape += (params.n1 as u32 - o.in_dof_used) as f64;
            n += 1;
        }
    }
    let rel = (gain / shape - 1.0).abs();
    assert!(rel <= 0.02, "signal gain mean off by {rel} over {n} macro drops");
}
