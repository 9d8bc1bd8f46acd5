use ifpacket_core::ansatz::{AnsatzConfig, AnsatzKind};
use ifpacket_core::correctors::compute_correctors;
use ifpacket_core::eigensolver::{ContinuousMode, ModeSolver, Scheme};
use ifpacket_core::harness::{linear_carrier_study, packet_grid, residual_scaling, PacketSpec};
use ifpacket_core::maxwell2d::{divergence_and_jump, FluxState, MaterialState, Maxwell2D};
use ifpacket_core::{Grid1D, PiecewiseProfile};

fn small_set() -> ifpacket_core::correctors::CorrectorSet {
    compute_correctors(&Grid1D::new(60.0, 0.1).unwrap(), &PiecewiseProfile::exp_step(1.0), 0.5, 0.49).unwrap()
}

#[test]
fn correctors_on_a_coarse_grid() {
    let set = small_set();
    let r = &set.report;
    for v in [r.residual_dkw, r.residual_dk2w, r.residual_p, r.residual_h] {
        assert!(v <= 1e-8, "residual {v}");
    }
    assert!(r.defect_p <= 1e-6);
    let (nu0, nu1, nu2) = set.nu;
    assert!((nu0 - 0.4935).abs() < 5e-3, "{nu0}");
    assert!(nu1 > 0.0 && nu1 < 1.0);
    assert!(nu2 < 0.0);
    assert!(set.kappa.is_finite());
}

#[test]
fn staggered_frequency_converges_at_second_order() {
    let p = PiecewiseProfile::exp_step(0.0);
    let w = |h: f64| ModeSolver::new(Scheme::Staggered, &Grid1D::new(60.0, h).unwrap(), &p).unwrap().nearest(0.5, 0.49).unwrap().omega;
    let (a, b, c) = (w(0.2), w(0.1), w(0.05));
    let ratio = (a - b) / (b - c);
    assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    let cm = ContinuousMode::shoot(&p, &Grid1D::new(60.0, 0.05).unwrap(), 0.5, c, 8).unwrap();
    assert!((cm.omega - c).abs() < 1e-3, "{} vs {c}", cm.omega);
}

#[test]
fn extended_ansatz_beats_leading_order() {
    let set = small_set();
    let spec = PacketSpec::default();
    let rs = residual_scaling(&set, &[0.2, 0.1, 0.05], &spec).unwrap();
    assert!(rs.uext.slope > rs.uans.slope + 1.0, "{} vs {}", rs.uext.slope, rs.uans.slope);
}

#[test]
fn maxwell_preserves_divergence_and_interface_jump() {
    let set = small_set();
    let (g2, env) = packet_grid(&set.medium.grid, set.k0(), 0.2, &PacketSpec::default(), set.nu.2, set.kappa).unwrap();
    let u0 = AnsatzConfig::new(&set, AnsatzKind::Extended, 0.2, &g2, &env, 0.0).unwrap();
    let mut state = FluxState::from_field(&set.medium, u0.field());
    let mx = Maxwell2D::new(MaterialState::with_default_margin(set.medium.clone()).unwrap(), &g2).unwrap();
    let before = divergence_and_jump(&set.medium, &state.flux).unwrap();
    let dt = mx.dt_max();
    for _ in 0..40 {
        mx.step(&mut state, dt).unwrap();
    }
    let after = divergence_and_jump(&set.medium, &state.flux).unwrap();
    let drift = before.div.iter().zip(&after.div).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(drift < 1e-10, "{drift}");
    assert!((before.jump_max - after.jump_max).abs() < 1e-10);
    assert!(mx.material.omega_margin(&state.e) > 0.0);
}

#[test]
fn linear_carrier_is_second_order() {
    let p = PiecewiseProfile::exp_step(0.0);
    let study = linear_carrier_study(&p, 0.5, 0.49, 60.0, &[0.2, 0.1], 4, 6.0).unwrap();
    assert!(study.orders[0] > 1.8, "{:?}", study.orders);
    for l in &study.levels {
        assert!(l.jump_drift <= 1e-10 && l.div_drift <= 1e-10);
    }
}
