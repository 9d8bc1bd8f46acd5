//! Correctors of the wave-packet expansion and the NLS coefficients.
//!
//! All systems are posed on the staggered layout of [`crate::stagger`] with
//! the operator `T(k, w) = L(k) + w Lambda`. The singular ones (at `k0, nu0`)
//! are solved orthogonally to the mode `m` in the weighted inner product.
//! The cubic terms use the same partner averaging as the discrete Kerr law
//! in [`crate::maxwell2d`], so the solvability conditions hold exactly.
use crate::eigensolver::{Derivatives, Mode, ModeSolver, Scheme};
use crate::grid::Grid1D;
use crate::prelude::*;
use crate::profile::PiecewiseProfile;
use crate::stagger::{solve_regular, Medium, SingularSolver, Stag};
use crate::{Complex64, Error, Result};

/// Default tolerance for the solvability defect of singular systems.
pub const SOLVABILITY_TOL: f64 = 1e-8;
/// Localization threshold for the mode feeding the correctors. The time-domain
/// grids are much narrower than the eigenvalue-study grids, so the mode is not
/// decayed to 1e-6 at the ends; it is still an exact null vector of the grid operator.
pub const PIPELINE_MARGIN_THRESHOLD: f64 = 0.05;

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `(L1 + nu1 Lambda) v`.
pub fn apply_l1_shift(medium: &Medium, nu1: f64, v: &Stag<Complex64>) -> Stag<Complex64> {
    let mut out = medium.apply_l1(v);
    out.axpy(c(nu1), &medium.apply_lambda(v));
    out
}

/// Cubic self-interaction at the carrier frequency, per unit `|A|^2 A`:
/// `(3 m1^3 - m1 m2^2, -3 m2^3 + m1^2 m2, 0)` with partner components averaged
/// onto the own location.
pub fn cubic_first_harmonic(medium: &Medium, m: &Stag<Complex64>) -> Stag<Complex64> {
    let iface = medium.iface();
    let mut n = Stag::zeros(&medium.grid);
    for (j, v) in n.c1m.iter_mut().enumerate() {
        let m2 = medium.hat2_at_node(&m.c2, j);
        let m1 = m.c1m[j];
        *v = 3.0 * m1 * m1 * m1 - m1 * m2 * m2;
    }
    for (j, v) in n.c1p.iter_mut().enumerate() {
        let m2 = medium.hat2_at_node(&m.c2, j + iface);
        let m1 = m.c1p[j];
        *v = 3.0 * m1 * m1 * m1 - m1 * m2 * m2;
    }
    for (i, v) in n.c2.iter_mut().enumerate() {
        let m1 = medium.hat1_at_half(m, i);
        let m2 = m.c2[i];
        *v = -3.0 * m2 * m2 * m2 + m1 * m1 * m2;
    }
    n
}

/// Third-harmonic cubic term per unit `A^3`: `(m1^3 + m1 m2^2, m2^3 + m2 m1^2, 0)`.
pub fn cubic_third_harmonic(medium: &Medium, m: &Stag<Complex64>) -> Stag<Complex64> {
    let iface = medium.iface();
    let mut q = Stag::zeros(&medium.grid);
    for (j, v) in q.c1m.iter_mut().enumerate() {
        let m2 = medium.hat2_at_node(&m.c2, j);
        let m1 = m.c1m[j];
        *v = m1 * m1 * m1 + m1 * m2 * m2;
    }
    for (j, v) in q.c1p.iter_mut().enumerate() {
        let m2 = medium.hat2_at_node(&m.c2, j + iface);
        let m1 = m.c1p[j];
        *v = m1 * m1 * m1 + m1 * m2 * m2;
    }
    for (i, v) in q.c2.iter_mut().enumerate() {
        let m1 = medium.hat1_at_half(m, i);
        let m2 = m.c2[i];
        *v = m2 * m2 * m2 + m2 * m1 * m1;
    }
    q
}

/// Trilinear form behind the discrete Kerr term: row 1 `(x1 y1 + x2^ y2^) z1`
/// at nodes, row 2 `(x1^ y1^ + x2 y2) z2` at half nodes (hats are the partner
/// averages), row 3 zero. `(E.E)E` for a real field `E` is `cubic_form(E, E, E)`.
pub fn cubic_form(medium: &Medium, x: &Stag<Complex64>, y: &Stag<Complex64>, z: &Stag<Complex64>) -> Stag<Complex64> {
    let iface = medium.iface();
    let mut out = Stag::zeros(&medium.grid);
    for (j, v) in out.c1m.iter_mut().enumerate() {
        let dot = x.c1m[j] * y.c1m[j] + medium.hat2_at_node(&x.c2, j) * medium.hat2_at_node(&y.c2, j);
        *v = dot * z.c1m[j];
    }
    for (j, v) in out.c1p.iter_mut().enumerate() {
        let i = j + iface;
        let dot = x.c1p[j] * y.c1p[j] + medium.hat2_at_node(&x.c2, i) * medium.hat2_at_node(&y.c2, i);
        *v = dot * z.c1p[j];
    }
    for (i, v) in out.c2.iter_mut().enumerate() {
        let dot = medium.hat1_at_half(x, i) * medium.hat1_at_half(y, i) + x.c2[i] * y.c2[i];
        *v = dot * z.c2[i];
    }
    out
}

/// Pointwise product with `eps3` on the staggered layout.
pub fn times_eps3(medium: &Medium, v: &Stag<Complex64>) -> Stag<Complex64> {
    let mul = |a: &[f64], b: &[Complex64]| a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    Stag {
        c1m: mul(&medium.eps3.c1m, &v.c1m),
        c1p: mul(&medium.eps3.c1p, &v.c1p),
        c2: mul(&medium.eps3.c2, &v.c2),
        c3: vec![c(0.0); v.c3.len()],
    }
}

/// Relative residual `|T v - f| / |f|` (zero right-hand side counts as absolute).
pub fn relative_residual(medium: &Medium, k: f64, omega: f64, v: &Stag<Complex64>, f: &Stag<Complex64>) -> f64 {
    let mut rhs = f.clone();
    medium.clear_boundary(&mut rhs);
    let tv = medium.apply_t(k, omega, v);
    let r = medium.norm(&rhs.zip_with(&tv, |a, b| a - b));
    let nf = medium.norm(&rhs);
    if nf > 0.0 {
        r / nf
    } else {
        r
    }
}

/// `T(k, w) v = f`; with a kernel, `f` must be orthogonal to it (checked with `tol`)
/// and the result is orthogonal to it.
pub fn solve_inhomogeneous(
    medium: &Medium,
    k: f64,
    omega: f64,
    f: &Stag<Complex64>,
    kernel: Option<&Mode>,
    tol: f64,
) -> Result<Stag<Complex64>> {
    match kernel {
        Some(m) => {
            let s = SingularSolver::new(medium, k, omega, &m.to_complex())?;
            Ok(s.solve(medium, f, tol)?.0)
        }
        None => Ok(solve_regular(medium, k, omega, f)?.0),
    }
}

/// Normalized solvability defect `|<f, m>| / (|f| |m|)`.
pub fn solvability_defect(medium: &Medium, f: &Stag<Complex64>, m: &Mode) -> f64 {
    let mut g = f.clone();
    medium.clear_boundary(&mut g);
    let mc = m.to_complex();
    let nf = medium.norm(&g);
    if nf == 0.0 {
        return 0.0;
    }
    medium.inner(&g, &mc).norm() / (nf * medium.norm(&mc))
}

/// Group velocity from the eigenvalue identity `<(L1 + nu1 Lambda) m, m> = 0`.
pub fn group_velocity(medium: &Medium, m: &Mode) -> f64 {
    let mc = m.to_complex();
    -medium.inner(&medium.apply_l1(&mc), &mc).re / medium.inner(&medium.apply_lambda(&mc), &mc).re
}

/// `dk w` and `dk^2 w` at `(k0, nu0)`, plus `nu2` from the projection of the second system.
#[derive(Debug, Clone)]
pub struct KDerivatives {
    pub dkw: Stag<Complex64>,
    pub dk2w: Stag<Complex64>,
    pub nu2: f64,
    pub rhs_dkw: Stag<Complex64>,
    pub rhs_dk2w: Stag<Complex64>,
}

pub fn compute_dkw_dk2w(medium: &Medium, m: &Mode, nu1: f64, tol: f64) -> Result<KDerivatives> {
    let mc = m.to_complex();
    let solver = SingularSolver::new(medium, m.k, m.omega, &mc)?;
    let rhs_dkw = apply_l1_shift(medium, nu1, &mc).scale(c(-1.0));
    let (dkw, _) = solver.solve(medium, &rhs_dkw, tol)?;
    let q = medium.inner(&medium.apply_lambda(&mc), &mc).re;
    let nu2 = -2.0 * medium.inner(&apply_l1_shift(medium, nu1, &dkw), &mc).re / q;
    let mut rhs_dk2w = apply_l1_shift(medium, nu1, &dkw).scale(c(-2.0));
    rhs_dk2w.axpy(c(-nu2), &medium.apply_lambda(&mc));
    let (dk2w, _) = solver.solve(medium, &rhs_dk2w, tol)?;
    Ok(KDerivatives { dkw, dk2w, nu2, rhs_dkw, rhs_dk2w })
}

/// `kappa = -nu0 <eps3 n, m>` in the weighted product (the value that makes the
/// `p` system solvable on the grid).
pub fn compute_kappa(medium: &Medium, m: &Mode) -> f64 {
    let mc = m.to_complex();
    let n = times_eps3(medium, &cubic_first_harmonic(medium, &mc));
    let q = medium.inner(&medium.apply_lambda(&mc), &mc).re;
    -m.omega * medium.inner(&n, &mc).re / q
}

/// `-nu0 * integral eps3 (3 m1^4 - 2 m1^2 m2^2 + 3 m2^4)` by the trapezoidal rule on
/// both half-lines with `m2` averaged onto the nodes.
pub fn kappa_quadrature(medium: &Medium, m: &Mode) -> f64 {
    let g = &medium.grid;
    let iface = g.interface_index;
    let density = |m1: f64, e3: f64, b: f64| {
        let m2sq = -b * b;
        e3 * (3.0 * m1.powi(4) - 2.0 * m1 * m1 * m2sq + 3.0 * m2sq * m2sq)
    };
    let mut s = 0.0;
    for (j, (&m1, &e3)) in m.w.c1m.iter().zip(&medium.eps3.c1m).enumerate() {
        let w = if j == 0 || j == iface { 0.5 * g.h } else { g.h };
        s += w * density(m1, e3, m.w2_im_at_node(j));
    }
    let n = m.w.c1p.len();
    for (j, (&m1, &e3)) in m.w.c1p.iter().zip(&medium.eps3.c1p).enumerate() {
        let w = if j == 0 || j + 1 == n { 0.5 * g.h } else { g.h };
        s += w * density(m1, e3, m.w2_im_at_node(j + iface));
    }
    -m.omega * s
}

/// Right-hand side of the `p` system: `-kappa Lambda m - nu0 eps3 n`.
pub fn rhs_p(medium: &Medium, m: &Mode, kappa: f64) -> Stag<Complex64> {
    let mc = m.to_complex();
    let mut f = medium.apply_lambda(&mc).scale(c(-kappa));
    f.axpy(c(-m.omega), &times_eps3(medium, &cubic_first_harmonic(medium, &mc)));
    f
}

pub fn compute_p(medium: &Medium, m: &Mode, kappa: f64, tol: f64) -> Result<Stag<Complex64>> {
    solve_inhomogeneous(medium, m.k, m.omega, &rhs_p(medium, m, kappa), Some(m), tol)
}

/// Right-hand side of the third-harmonic system: `-3 nu0 eps3 q`.
pub fn rhs_h(medium: &Medium, m: &Mode) -> Stag<Complex64> {
    times_eps3(medium, &cubic_third_harmonic(medium, &m.to_complex())).scale(c(-3.0 * m.omega))
}

pub fn compute_h(medium: &Medium, m: &Mode) -> Result<Stag<Complex64>> {
    solve_inhomogeneous(medium, 3.0 * m.k, 3.0 * m.omega, &rhs_h(medium, m), None, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorReport {
    pub residual_dkw: f64,
    pub residual_dk2w: f64,
    pub residual_p: f64,
    pub residual_h: f64,
    pub defect_dkw: f64,
    pub defect_dk2w: f64,
    pub defect_p: f64,
    /// `|<v, m>|` for `dkw, dk2w, p`.
    pub orth_dkw: f64,
    pub orth_dk2w: f64,
    pub orth_p: f64,
    /// `jump(eps1 p1) + jump(eps3 n1)` and `jump(eps1 h1) + jump(eps3 q1)`.
    pub jump_identity_p: f64,
    pub jump_identity_h: f64,
    pub jump_eps1_dkw1: f64,
    pub kappa_quadrature: f64,
}

#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub medium: Medium,
    pub m: Mode,
    pub dkw: Stag<Complex64>,
    pub dk2w: Stag<Complex64>,
    pub h: Stag<Complex64>,
    pub p: Stag<Complex64>,
    pub kappa: f64,
    /// `(nu0, nu1, nu2)` consistent with the grid operators.
    pub nu: (f64, f64, f64),
    pub report: CorrectorReport,
}

impl CorrectorSet {
    pub fn k0(&self) -> f64 {
        self.m.k
    }

    /// Set with every corrector except `m` replaced by zero.
    pub fn mode_only(&self) -> Self {
        let z = Stag::zeros(&self.medium.grid);
        Self { dkw: z.clone(), dk2w: z.clone(), h: z.clone(), p: z, ..self.clone() }
    }
}

/// Jump `right - left` of `eps1 v1` plus `eps3 g1` at the interface node.
fn jump_identity(medium: &Medium, v: &Stag<Complex64>, g: &Stag<Complex64>) -> f64 {
    let iface = medium.iface();
    let e1 = &medium.eps1;
    let e3 = &medium.eps3;
    let jv = e1.c1p[0] * v.c1p[0] - e1.c1m[iface] * v.c1m[iface];
    let jg = e3.c1p[0] * g.c1p[0] - e3.c1m[iface] * g.c1m[iface];
    (jv + jg).norm()
}

/// Builds the complete corrector set from a mode of the staggered scheme.
pub fn compute_correctors_for_mode(medium: &Medium, m: Mode, tol: f64) -> Result<CorrectorSet> {
    let mc = m.to_complex();
    let nu0 = m.omega;
    let nu1 = group_velocity(medium, &m);
    let kd = compute_dkw_dk2w(medium, &m, nu1, tol)?;
    let kappa = compute_kappa(medium, &m);
    let fp = rhs_p(medium, &m, kappa);
    let p = compute_p(medium, &m, kappa, tol)?;
    let fh = rhs_h(medium, &m);
    let h = compute_h(medium, &m)?;
    let orth = |v: &Stag<Complex64>| medium.inner(v, &mc).norm();
    let n = cubic_first_harmonic(medium, &mc);
    let q = cubic_third_harmonic(medium, &mc);
    let report = CorrectorReport {
        residual_dkw: relative_residual(medium, m.k, nu0, &kd.dkw, &kd.rhs_dkw),
        residual_dk2w: relative_residual(medium, m.k, nu0, &kd.dk2w, &kd.rhs_dk2w),
        residual_p: relative_residual(medium, m.k, nu0, &p, &fp),
        residual_h: relative_residual(medium, 3.0 * m.k, 3.0 * nu0, &h, &fh),
        defect_dkw: solvability_defect(medium, &kd.rhs_dkw, &m),
        defect_dk2w: solvability_defect(medium, &kd.rhs_dk2w, &m),
        defect_p: solvability_defect(medium, &fp, &m),
        orth_dkw: orth(&kd.dkw),
        orth_dk2w: orth(&kd.dk2w),
        orth_p: orth(&p),
        jump_identity_p: jump_identity(medium, &p, &n),
        jump_identity_h: jump_identity(medium, &h, &q),
        jump_eps1_dkw1: jump_identity(medium, &kd.dkw, &Stag::zeros(&medium.grid)),
        kappa_quadrature: kappa_quadrature(medium, &m),
    };
    Ok(CorrectorSet { medium: medium.clone(), m, dkw: kd.dkw, dk2w: kd.dk2w, h, p, kappa, nu: (nu0, nu1, kd.nu2), report })
}

/// Mode at `k0` near `seed` on `grid`, then all correctors.
pub fn compute_correctors(grid: &Grid1D, profile: &PiecewiseProfile, k0: f64, seed: f64) -> Result<CorrectorSet> {
    let mut solver = ModeSolver::new(Scheme::Staggered, grid, profile)?;
    solver.threshold = PIPELINE_MARGIN_THRESHOLD;
    let m = solver.mode(k0, seed)?;
    let edge = k0 * k0 / (profile.mu0 * profile.eps1_inf_minus.max(profile.eps1_inf_plus));
    if m.omega * m.omega >= edge {
        return Err(Error::Structural(format!("mode at omega = {} is not below the continuum edge", m.omega)));
    }
    compute_correctors_for_mode(&solver.medium, m, SOLVABILITY_TOL)
}

/// Three-way consistency: finite-difference `nu1, nu2` against the values used by the correctors.
pub fn consistency_with_fd(set: &CorrectorSet, fd: &Derivatives) -> Result<(f64, f64)> {
    if !fd.nu1.is_finite() || !fd.nu2.is_finite() {
        return Err(Error::NotFinite("finite-difference derivatives".into()));
    }
    Ok(((set.nu.1 - fd.nu1).abs(), (set.nu.2 - fd.nu2).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_form_reproduces_harmonics() {
        let (_, set) = setup(1.0);
        let md = &set.medium;
        let m = set.m.to_complex();
        let mb = m.conj();
        let mut n = cubic_form(md, &m, &mb, &m).scale(c(2.0));
        n.axpy(c(1.0), &cubic_form(md, &m, &m, &mb));
        let n0 = cubic_first_harmonic(md, &m);
        let q = cubic_form(md, &m, &m, &m);
        let q0 = cubic_third_harmonic(md, &m);
        let d1 = n.zip_with(&n0, |a, b| a - b).max_modulus();
        let d3 = q.zip_with(&q0, |a, b| a - b).max_modulus();
        assert!(d1 < 1e-14 && d3 < 1e-14, "{d1} {d3}");
    }
    use crate::eigensolver::dispersion_derivatives;

    fn setup(eps3: f64) -> (ModeSolver, CorrectorSet) {
        let g = Grid1D::new(40.0, 0.05).unwrap();
        let p = PiecewiseProfile::exp_step(eps3);
        let mut s = ModeSolver::new(Scheme::Staggered, &g, &p).unwrap();
        s.threshold = PIPELINE_MARGIN_THRESHOLD;
        let set = compute_correctors(&g, &p, 0.5, 0.49).unwrap();
        (s, set)
    }

    #[test]
    fn corrector_contracts() {
        let (solver, set) = setup(1.0);
        let r = set.report;
        for v in [r.residual_dkw, r.residual_dk2w, r.residual_p, r.residual_h] {
            assert!(v <= 1e-8, "{r:?}");
        }
        for v in [r.defect_dkw, r.defect_dk2w, r.defect_p] {
            assert!(v <= 1e-10, "{r:?}");
        }
        for v in [r.orth_dkw, r.orth_dk2w, r.orth_p] {
            assert!(v <= 1e-10, "{r:?}");
        }
        assert!(r.jump_identity_p < 1e-10 && r.jump_identity_h < 1e-10 && r.jump_eps1_dkw1 < 1e-10, "{r:?}");
        // the quadrature of the continuous formula agrees with the solvability value to discretization order
        assert!((r.kappa_quadrature - set.kappa).abs() < 1e-2 * set.kappa.abs());
        assert!(set.kappa < 0.0);
        let fd = dispersion_derivatives(&solver, 0.5, 0.49, 0.02).unwrap();
        let (e1, e2) = consistency_with_fd(&set, &fd).unwrap();
        assert!(e1 < 1e-7 && e2 < 1e-5, "{e1} {e2} {fd:?} {:?}", set.nu);
    }

    #[test]
    fn kappa_is_linear_in_eps3() {
        let (_, a) = setup(1.0);
        let (_, b) = setup(2.5);
        assert!((b.kappa - 2.5 * a.kappa).abs() < 1e-12 * a.kappa.abs());
        let (_, z) = setup(0.0);
        assert_eq!(z.kappa, 0.0);
        assert!(z.p.max_modulus() < 1e-14 && z.h.max_modulus() == 0.0);
    }

    #[test]
    fn gauge_sign_flip() {
        let (_, set) = setup(1.0);
        let mut m = set.m.clone();
        m.w = m.w.scale(-1.0);
        let flipped = compute_correctors_for_mode(&set.medium, m, SOLVABILITY_TOL).unwrap();
        assert!((flipped.kappa - set.kappa).abs() < 1e-14);
        let d = flipped.p.zip_with(&set.p, |a, b| a + b);
        assert!(d.max_modulus() < 1e-10);
        let d = flipped.dkw.zip_with(&set.dkw, |a, b| a + b);
        assert!(d.max_modulus() < 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let (_, set) = setup(1.0);
        let z = Stag::zeros(&set.medium.grid);
        let v = solve_inhomogeneous(&set.medium, 0.5, set.nu.0, &z, Some(&set.m), 1e-8).unwrap();
        assert_eq!(v.max_modulus(), 0.0);
        let bad = set.m.to_complex();
        let e = solve_inhomogeneous(&set.medium, 0.5, set.nu.0, &bad, Some(&set.m), 1e-8);
        assert!(matches!(e, Err(Error::Solvability { .. })));
    }
}
