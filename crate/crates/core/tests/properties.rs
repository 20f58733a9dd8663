mod common;

use common::pattern_named;
use proptest::prelude::*;
use semigood::cert_lower::{max_certified_s, rescale_certificate, validate_certificate};
use semigood::cert_upper::{brute_force_level, brute_force_semigood};
use semigood::ensembles::{generate, EnsembleKind, EnsembleSpec};
use semigood::CertParams;

fn instance() -> impl Strategy<Value = (EnsembleSpec, &'static str)> {
    (3usize..=5, 6usize..=8, any::<u64>(), any::<bool>(), 0usize..3).prop_map(|(m, n, seed, gauss, p)| {
        let kind = if gauss {
            EnsembleKind::Gaussian
        } else {
            EnsembleKind::Rademacher
        };
        (EnsembleSpec::new(kind, m, n, seed), common::PATTERNS[p])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lower_bound_is_sound_and_dominates((spec, name) in instance()) {
        let a = generate(&spec).unwrap();
        let p = pattern_named(name, a.cols());
        let rep = max_certified_s(&a, &p, CertParams::DEFAULT_XI, CertParams::DEFAULT_THETA, None).unwrap();
        let exact = brute_force_level(&a, &p).unwrap();
        prop_assert!(rep.s_signed <= exact);
        prop_assert!(rep.s_signed >= rep.s_mu);
        prop_assert!(rep.s_signed >= rep.s_unsigned);
        if let Some(cert) = rep.best_certificate() {
            validate_certificate(&a, &p, cert).unwrap();
        }
    }

    #[test]
    fn exhaustive_levels_are_monotone((spec, name) in instance()) {
        let a = generate(&spec).unwrap();
        let p = pattern_named(name, a.cols());
        let exact = brute_force_level(&a, &p).unwrap();
        for s in 1..=a.cols().min(exact + 1) {
            prop_assert_eq!(brute_force_semigood(&a, &p, s).unwrap(), s <= exact);
        }
    }

    #[test]
    fn rescaled_certificates_stay_valid(
        (spec, name) in instance(),
        dxi in 0.0f64..1.0,
        dtheta in 0.0f64..20.0,
    ) {
        let a = generate(&spec).unwrap();
        let p = pattern_named(name, a.cols());
        let xi = 0.9;
        let rep = max_certified_s(&a, &p, xi, 2.0, None).unwrap();
        if let Some(cert) = rep.best_certificate() {
            let xi_new = xi + dxi * (1.0 - xi) * 0.999;
            let moved = rescale_certificate(&a, &p, cert, xi_new, 2.0 + dtheta).unwrap();
            prop_assert!(validate_certificate(&a, &p, &moved).is_ok());
        }
    }

    #[test]
    fn ensembles_are_reproducible(seed in any::<u64>(), m in 1usize..8) {
        for kind in [EnsembleKind::Gaussian, EnsembleKind::Rademacher, EnsembleKind::HadamardSub, EnsembleKind::FourierSub] {
            let spec = EnsembleSpec::new(kind, m, 16, seed);
            prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }
}
