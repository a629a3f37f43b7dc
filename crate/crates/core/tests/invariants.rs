//! Invariants of the public API on mechanisms with Brownian and jump parts,
//! plus agreement between the kernel and the closed-form oracles.

use std::sync::Arc;

use cbext::extinction::ExtinctionKernel;
use cbext::inversion::DEFAULT_PRECISION;
use cbext::laws::{size_bias_check, LawKind, LimitLaw, Transform};
use cbext::mechanism::{BranchingMechanism, ClosedForm, LevyMeasure};
use cbext::montecarlo::{sample_transition_exact, SimConfig};
use cbext::reference::{oracle_eval, OracleFamily, Quantity};
use cbext::scale::ScaleFunction;
use proptest::prelude::*;

fn mechanism() -> impl Strategy<Value = BranchingMechanism> {
    (0.0f64..1.0, 0.2f64..2.0, 0.0f64..1.0, 1.1f64..1.9).prop_map(|(alpha, sigma2, c, a)| {
        let levy = if c < 0.1 { LevyMeasure::None } else { LevyMeasure::PowerLaw { c, a } };
        BranchingMechanism::new(alpha, sigma2, levy).unwrap()
    })
}

fn kernel(m: BranchingMechanism) -> Arc<ExtinctionKernel> {
    Arc::new(ExtinctionKernel::new(Arc::new(m)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psi_is_positive_increasing_convex(m in mechanism(), l in 1e-3f64..50.0) {
        let h = 1e-3 * l;
        prop_assert!(m.psi_at(l) > 0.0);
        prop_assert!(m.psi_prime_at(l) > 0.0);
        prop_assert!(m.psi_prime_at(l + h) >= m.psi_prime_at(l));
    }

    #[test]
    fn varphi_inverts_phi(m in mechanism(), l in 1e-2f64..1e2) {
        let k = kernel(m);
        let p = k.phi(l).unwrap();
        prop_assert!(p > 0.0);
        prop_assert!((k.varphi(p).unwrap() / l - 1.0).abs() < 1e-8);
    }

    #[test]
    fn u_t_is_monotone(m in mechanism(), t in 0.05f64..10.0, l in 0.05f64..20.0) {
        let k = kernel(m);
        let u = k.u_t(t, l).unwrap();
        prop_assert!(u > 0.0 && u < l);
        prop_assert!(k.u_t(2.0 * t, l).unwrap() < u);
        prop_assert!(k.u_t(t, 2.0 * l).unwrap() > u);
        // u_t(λ) never exceeds the entrance value varphi(t).
        prop_assert!(u <= k.varphi(t).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn extinction_cdf_is_a_cdf(m in mechanism(), x in 0.1f64..10.0, t in 0.05f64..20.0) {
        let k = kernel(m);
        let a = k.extinction_cdf(x, t).unwrap();
        let b = k.extinction_cdf(x, 2.0 * t).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
        prop_assert!(k.extinction_pdf(x, t).unwrap() >= 0.0);
    }

    #[test]
    fn w_is_nonnegative_increasing(m in mechanism(), x in 0.05f64..5.0) {
        let sf = ScaleFunction::new(Arc::new(m)).unwrap();
        let w = sf.w(x).unwrap();
        prop_assert!(w > 0.0);
        prop_assert!(sf.w(1.5 * x).unwrap() > w);
        prop_assert!(sf.w_prime(x).unwrap() > 0.0);
    }

    #[test]
    fn limit_law_transforms_decrease_in_lambda(m in mechanism(), q in 0.2f64..2.0) {
        let k = kernel(m);
        for kind in [LawKind::Ws { s: q }, LawKind::Vq { q }] {
            let law = LimitLaw::new(kind, k.clone()).unwrap();
            let a = law.lt(0.5).unwrap();
            let b = law.lt(2.0).unwrap();
            prop_assert!(a > b && b > 0.0 && a <= 1.0, "{kind:?}: {a} {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn size_bias_links_vq_and_wq(m in mechanism(), q in 0.3f64..1.5) {
        let k = kernel(m);
        let vq = LimitLaw::new(LawKind::Vq { q }, k.clone()).unwrap();
        let wq = LimitLaw::new(LawKind::Ws { s: q }, k).unwrap();
        prop_assert!(size_bias_check(&vq, &wq).unwrap() < 1e-4);
    }

    #[test]
    fn inverted_w_round_trips(m in mechanism(), l in 0.5f64..10.0) {
        let m = Arc::new(m);
        let sf = ScaleFunction::inversion(m.clone(), DEFAULT_PRECISION).unwrap();
        prop_assert!((sf.laplace_w(l).unwrap() * m.psi_at(l) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn kernel_agrees_with_oracles() {
    for (cf, fam) in [
        (ClosedForm::Quadratic, OracleFamily::Stable(2.0)),
        (ClosedForm::Stable(1.3), OracleFamily::Stable(1.3)),
        (ClosedForm::LinearPlusQuadratic, OracleFamily::LinearPlusQuadratic),
    ] {
        // Route the kernel through the generic quadrature path by rebuilding
        // the mechanism from its triplet.
        let (alpha, sigma2, levy) = cf.triplet();
        let k = kernel(BranchingMechanism::new(alpha, sigma2, levy).unwrap());
        for l in [0.1, 1.0, 7.0] {
            let want = oracle_eval(fam, Quantity::Phi, &[l]).unwrap();
            assert!((k.phi(l).unwrap() / want - 1.0).abs() < 1e-8, "{cf}: phi({l})");
            let want = oracle_eval(fam, Quantity::Ut, &[0.7, l]).unwrap();
            assert!((k.u_t(0.7, l).unwrap() / want - 1.0).abs() < 1e-8, "{cf}: u(0.7, {l})");
        }
        let sf = ScaleFunction::inversion(k.mechanism_arc(), DEFAULT_PRECISION).unwrap();
        for x in [0.3, 2.0] {
            let want = oracle_eval(fam, Quantity::W, &[x]).unwrap();
            assert!((sf.w(x).unwrap() / want - 1.0).abs() < 1e-6, "{cf}: W({x})");
        }
    }
}

#[test]
fn sampler_output_ignores_worker_count() {
    let k = kernel(BranchingMechanism::linear_plus_quadratic());
    let cfg = SimConfig::default().with_seed(42).with_paths(3 * 4096 + 17);
    let a = sample_transition_exact(&k, 2.0, 0.5, &cfg.with_workers(1)).unwrap();
    let b = sample_transition_exact(&k, 2.0, 0.5, &cfg.with_workers(3)).unwrap();
    assert_eq!(a, b);
    let c = sample_transition_exact(&k, 2.0, 0.5, &cfg.with_seed(43).with_workers(3)).unwrap();
    assert_ne!(a, c);
}
