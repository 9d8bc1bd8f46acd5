use ifpacket_core::harness::fit_slope;
use ifpacket_core::maxwell2d::invert_constitutive;
use ifpacket_core::nls::{self, EnvelopeField};
use ifpacket_core::Complex64;
use proptest::prelude::*;

fn packet(amp: f64, width: f64, shift: f64) -> EnvelopeField {
    EnvelopeField::from_fn(256, -20.0, 40.0, |x| Complex64::new(0.0, shift * x).exp() * (amp * (-(x * x) / (2.0 * width * width)).exp()))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn strang_conserves_mass(amp in 0.2f64..1.5, width in 0.7f64..2.0, shift in -1.0f64..1.0,
                             nu2 in -1.0f64..-0.05, kappa in -1.0f64..1.0) {
        let a = packet(amp, width, shift);
        let (m0, _) = nls::invariants(&a, nu2, kappa).unwrap();
        let b = nls::evolve(&a, nu2, kappa, 1e-3, 200).unwrap();
        let (m1, _) = nls::invariants(&b, nu2, kappa).unwrap();
        prop_assert!(((m1 - m0) / m0).abs() < 1e-10);
    }

    #[test]
    fn linear_flow_is_reversible(amp in 0.2f64..1.5, width in 0.7f64..2.0, nu2 in -1.0f64..1.0) {
        let a = packet(amp, width, 0.3);
        let b = nls::evolve(&nls::evolve(&a, nu2, 0.0, 1e-2, 50).unwrap(), nu2, 0.0, -1e-2, 50).unwrap();
        let err = a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn constitutive_inversion_round_trips(e1 in -2.0f64..2.0, e2 in -2.0f64..2.0,
                                          eps1 in 1.0f64..4.0, eps3 in 0.0f64..1.0) {
        let s = e1 * e1 + e2 * e2;
        let d = [(eps1 + eps3 * s) * e1, (eps1 + eps3 * s) * e2];
        let e = invert_constitutive(d, eps1, eps3).unwrap();
        prop_assert!((e[0] - e1).abs() < 1e-12 * (1.0 + e1.abs()));
        prop_assert!((e[1] - e2).abs() < 1e-12 * (1.0 + e2.abs()));
    }

    #[test]
    fn slope_of_any_power_law(p in 0.5f64..5.0, c in 0.01f64..100.0) {
        let pairs: Vec<_> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e: &f64| (e, c * e.powf(p))).collect();
        let (s, r) = fit_slope(&pairs).unwrap();
        prop_assert!((s - p).abs() < 1e-10 && r < 1e-10);
    }
}
