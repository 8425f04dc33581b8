use solopo_core::efficiency::{crossover_threshold, flops, speedup, CostModel, Variant};
use solopo_core::gpo::check::{alignment_kl_identity, degeneration_identity, gradient_fidelity};
use solopo_core::gpo::{po_loss, solopo_loss, LogProbBundle, Method, MethodConfig, RaMode};

#[test]
fn analytic_gradients_match_central_differences() {
    for m in Method::ALL {
        for mode in RaMode::ALL {
            let r = gradient_fidelity(m, mode, 1000, 11).unwrap();
            assert_eq!(r.points, 1000);
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }
}

#[test]
fn equal_contexts_reduce_to_plain_preference_loss() {
    assert!(degeneration_identity(100_000, 5).unwrap() <= 1e-12);
}

#[test]
fn chosen_only_alignment_is_scaled_kl_approx() {
    let (dpo, simpo) = alignment_kl_identity(100_000, 5).unwrap();
    assert!(dpo <= 1e-12, "{dpo}");
    assert!(simpo <= 1e-12, "{simpo}");
}

#[test]
fn dpo_at_reference_is_log_two() {
    let cfg = MethodConfig::new(Method::Dpo);
    let lp = LogProbBundle::short_only(-3.0, -5.0, Some((-3.0, -5.0)), 4, 4);
    assert!((po_loss(&cfg, &lp).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn alpha_zero_ignores_long_context() {
    let cfg = MethodConfig::new(Method::Simpo).with_alpha(0.0);
    let mut lp = LogProbBundle::short_only(-3.0, -5.0, None, 4, 6);
    let a = solopo_loss(&cfg, &lp).unwrap().total;
    lp.lp_w_long = -40.0;
    lp.lp_l_long = -1.0;
    assert_eq!(a, solopo_loss(&cfg, &lp).unwrap().total);
}

#[test]
fn speedup_reference_values() {
    assert_eq!(speedup(1.0).unwrap(), 2.0 / 3.0);
    assert!((speedup(std::f64::consts::FRAC_1_SQRT_2).unwrap() - 1.0).abs() < 1e-12);
    assert!((speedup(0.125).unwrap() - 1.9394).abs() < 1e-4);
    assert!((crossover_threshold() - 0.70711).abs() < 1e-5);
    let m = CostModel::new(1000.0, 0.125, RaMode::ChosenOnly).unwrap();
    assert_eq!(flops(&m, Variant::Vanilla), 2_000_000.0);
    assert!((flops(&m, Variant::SoLo) - 1_031_250.0).abs() < 1e-6);
}
