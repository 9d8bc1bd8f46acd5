//! Wave-packet ansatz on the 2D staggered grid and its Maxwell residual.
//!
//! Every field is a sum of terms `2 Re[eps^p f(x1) G(X, T) F^q]` with
//! `F = exp(i(k0 x2 - nu0 t))`, `X = eps (x2 - nu1 t)`, `T = eps^2 t`:
//!
//! | term | p | q | f | G |
//! |------|---|---|---|---|
//! | mode | 1 | 1 | `m` | `A` |
//! | dk w | 2 | 1 | `-i dkw` | `A_X` |
//! | dk2 w | 3 | 1 | `-dk2w / 2` | `A_XX` |
//! | p | 3 | 1 | `p` | `|A|^2 A` |
//! | h | 3 | 3 | `h` | `A^3` |
//!
//! Derivatives in `x2` and `t` are taken analytically through this chain
//! rule; `x1` derivatives are the staggered differences of the time stepper,
//! so the residual is the residual of the semi-discrete system.
//!
//! The envelope must be sampled on the `X` grid matching the `x2` grid
//! (`n_x2` samples, period `eps L2`); the moving frame is applied by an exact
//! Fourier translation.
use crate::correctors::{apply_l1_shift, cubic_first_harmonic, cubic_form, cubic_third_harmonic, times_eps3, CorrectorSet};
use crate::field::{jump_at_interface_2d, BrokenL2, Field2D};
use crate::grid::Grid2D;
use crate::maxwell2d::{displacement_column, divergence_and_jump, DivJump};
use crate::nls::{EnvelopeField, EnvelopeJet};
use crate::prelude::*;
use crate::stagger::{collocate, Stag, StagField2D};
use crate::{Complex64, Error, Result};
use core::f64::consts::PI;

/// Largest tolerated relative envelope amplitude near the period seam.
pub const SEAM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnsatzKind {
    /// `eps A m F + c.c.`
    Leading,
    /// All five terms.
    Extended,
}

#[derive(Debug, Clone)]
struct Term {
    p: i32,
    q: i32,
    f: Stag<Complex64>,
    g: Vec<Complex64>,
    gx: Vec<Complex64>,
    gt: Vec<Complex64>,
}

/// Vectors multiplying the envelope combinations of the `eps^4` residual.
#[derive(Debug, Clone)]
struct OracleVectors {
    axt: Stag<Complex64>,
    axxx: Stag<Complex64>,
    cubic_x: Stag<Complex64>,
    conj_x: Stag<Complex64>,
    abs_x: Stag<Complex64>,
    third: Stag<Complex64>,
}

/// Ansatz at physical time `t`.
#[derive(Debug, Clone)]
pub struct AnsatzConfig<'a> {
    pub epsilon: f64,
    pub correctors: &'a CorrectorSet,
    pub grid2: Grid2D,
    pub t: f64,
    pub kind: AnsatzKind,
    /// Envelope derivatives at the x2 columns (already in the moving frame).
    pub jet: EnvelopeJet,
    terms: Vec<Term>,
}

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn add_re(out: &mut Stag<f64>, f: &Stag<Complex64>, s: Complex64) {
    let acc = |o: &mut [f64], v: &[Complex64]| {
        for (a, b) in o.iter_mut().zip(v) {
            *a += 2.0 * (b.re * s.re - b.im * s.im);
        }
    };
    acc(&mut out.c1m, &f.c1m);
    acc(&mut out.c1p, &f.c1p);
    acc(&mut out.c2, &f.c2);
    acc(&mut out.c3, &f.c3);
}

/// Real field, its `x2` derivative and its `t` derivative on one column.
#[derive(Debug, Clone)]
pub struct ColumnState {
    pub e: Stag<f64>,
    pub ex: Stag<f64>,
    pub et: Stag<f64>,
}

impl<'a> AnsatzConfig<'a> {
    /// `envelope` holds `A(., T)` at `T = eps^2 t` in the frame moving with `nu1`.
    pub fn new(
        correctors: &'a CorrectorSet,
        kind: AnsatzKind,
        epsilon: f64,
        grid2: &Grid2D,
        envelope: &EnvelopeField,
        t: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon = {epsilon} outside (0, 1)")));
        }
        if grid2.grid_x1 != correctors.medium.grid {
            return Err(Error::Structural("x1 grid differs from the corrector grid".into()));
        }
        let n = grid2.n_x2;
        let l2 = grid2.length_x2();
        let scale = epsilon * l2;
        if envelope.n() != n
            || (envelope.length - scale).abs() > 1e-9 * scale
            || (envelope.x_min - epsilon * grid2.x2_min).abs() > 1e-9 * scale
        {
            return Err(Error::InvalidGrid("envelope grid is not the image of the x2 grid under X = eps x2".into()));
        }
        let k0 = correctors.k0();
        let turns = k0 * l2 / (2.0 * PI);
        if (turns - turns.round()).abs() > 1e-9 * turns.max(1.0) {
            return Err(Error::InvalidGrid(format!("k0 L2 / 2pi = {turns} is not an integer")));
        }
        let slow = epsilon * epsilon * t;
        if (envelope.t - slow).abs() > 1e-9 * slow.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!("envelope time {} differs from eps^2 t = {slow}", envelope.t)));
        }
        envelope.check_seam(SEAM_TOL)?;
        let (_, nu1, nu2) = correctors.nu;
        let moved = envelope.shifted(epsilon * nu1 * t)?;
        let jet = EnvelopeJet::new(&moved, nu2, correctors.kappa)?;
        let terms = build_terms(correctors, kind, &jet);
        Ok(Self { epsilon, correctors, grid2: *grid2, t, kind, jet, terms })
    }

    fn medium(&self) -> &crate::stagger::Medium {
        &self.correctors.medium
    }

    fn phase(&self, j: usize) -> Complex64 {
        let (nu0, _, _) = self.correctors.nu;
        let theta = self.correctors.k0() * self.grid2.x2(j) - nu0 * self.t;
        Complex64::new(0.0, theta).exp()
    }

    /// Field and its analytic `x2` and `t` derivatives on column `j`.
    pub fn column_state(&self, j: usize) -> ColumnState {
        let eps = self.epsilon;
        let (nu0, nu1, _) = self.correctors.nu;
        let k0 = self.correctors.k0();
        let f1 = self.phase(j);
        let g = &self.grid2.grid_x1;
        let mut e = Stag::zeros(g);
        let mut ex = Stag::zeros(g);
        let mut et = Stag::zeros(g);
        let i = Complex64::new(0.0, 1.0);
        for term in &self.terms {
            let q = term.q as f64;
            let fq = f1.powi(term.q);
            let ep = eps.powi(term.p);
            let (gv, gx, gt) = (term.g[j], term.gx[j], term.gt[j]);
            add_re(&mut e, &term.f, gv * fq * ep);
            add_re(&mut ex, &term.f, (gx * eps + i * q * k0 * gv) * fq * ep);
            add_re(&mut et, &term.f, (gt * (eps * eps) - gx * (eps * nu1) - i * q * nu0 * gv) * fq * ep);
        }
        ColumnState { e, ex, et }
    }

    /// Staggered field `(E1, E2, H3)`.
    pub fn field(&self) -> StagField2D {
        let mut out = StagField2D::zeros(&self.grid2, self.t);
        for j in 0..self.grid2.n_x2 {
            out.set_column(j, &self.column_state(j).e);
        }
        out
    }

    /// Collocated two-block field.
    pub fn collocated(&self) -> Field2D {
        self.field().to_field2d()
    }

    /// Staggered `(D1, D2, H3)`.
    pub fn flux(&self) -> StagField2D {
        let mut out = StagField2D::zeros(&self.grid2, self.t);
        for j in 0..self.grid2.n_x2 {
            out.set_column(j, &displacement_column(self.medium(), &self.column_state(j).e));
        }
        out
    }

    /// Residual of the semi-discrete Maxwell system on column `j`.
    pub fn residual_column(&self, j: usize) -> Stag<f64> {
        residual_of_column(self.medium(), &self.column_state(j))
    }

    pub fn residual_field(&self) -> StagField2D {
        let mut out = StagField2D::zeros(&self.grid2, self.t);
        for j in 0..self.grid2.n_x2 {
            out.set_column(j, &self.residual_column(j));
        }
        out
    }

    /// Order-0 broken norm of the residual, streamed column by column.
    pub fn residual_l2(&self) -> f64 {
        let mut acc = BrokenL2::new(&self.grid2);
        let iface = self.grid2.grid_x1.interface_index;
        for j in 0..self.grid2.n_x2 {
            let cl = collocate(&self.residual_column(j), iface);
            acc.add_column(&cl.u1m, &cl.u1p, &cl.u2, &cl.u3);
        }
        acc.value()
    }

    /// Residual norm, norm of the `eps^4` closed form and norm of their difference.
    pub fn residual_against_oracle(&self) -> Result<OracleComparison> {
        let ov = self.oracle_vectors()?;
        let iface = self.grid2.grid_x1.interface_index;
        let mut res = BrokenL2::new(&self.grid2);
        let mut ora = BrokenL2::new(&self.grid2);
        let mut gap = BrokenL2::new(&self.grid2);
        for j in 0..self.grid2.n_x2 {
            let r = self.residual_column(j);
            let o = self.oracle_column_with(&ov, j);
            let d = r.zip_with(&o, |a, b| a - b);
            for (acc, v) in [(&mut res, &r), (&mut ora, &o), (&mut gap, &d)] {
                let cl = collocate(v, iface);
                acc.add_column(&cl.u1m, &cl.u1p, &cl.u2, &cl.u3);
            }
        }
        Ok(OracleComparison { residual: res.value(), oracle: ora.value(), gap: gap.value() })
    }

    /// Closed-form `eps^4` part of the residual of the extended ansatz.
    pub fn residual_order4_oracle(&self) -> Result<StagField2D> {
        let ov = self.oracle_vectors()?;
        let mut out = StagField2D::zeros(&self.grid2, self.t);
        for j in 0..self.grid2.n_x2 {
            out.set_column(j, &self.oracle_column_with(&ov, j));
        }
        Ok(out)
    }

    fn oracle_vectors(&self) -> Result<OracleVectors> {
        if self.kind != AnsatzKind::Extended {
            return Err(Error::Structural("the eps^4 closed form belongs to the extended ansatz".into()));
        }
        Ok(oracle_vectors(self.correctors))
    }

    fn oracle_column_with(&self, ov: &OracleVectors, j: usize) -> Stag<f64> {
        let jet = &self.jet;
        let (a, ax) = (jet.a[j], jet.ax[j]);
        let abs2 = a.norm_sqr();
        let a2 = a * a;
        let f1 = self.phase(j);
        let f3 = f1 * f1 * f1;
        let e4 = self.epsilon.powi(4);
        let mut out = Stag::zeros(&self.grid2.grid_x1);
        add_re(&mut out, &ov.axt, jet.axt[j] * f1 * e4);
        add_re(&mut out, &ov.axxx, jet.axxx[j] * f1 * e4);
        add_re(&mut out, &ov.cubic_x, (ax * abs2 * 2.0 + a2 * ax.conj()) * f1 * e4);
        add_re(&mut out, &ov.conj_x, a2 * ax.conj() * f1 * e4);
        add_re(&mut out, &ov.abs_x, ax * abs2 * f1 * e4);
        add_re(&mut out, &ov.third, a2 * ax * f3 * e4);
        out
    }

    /// Divergence of `D` and its normal jump (spectral in x2).
    pub fn divergence_and_jump(&self) -> Result<DivJump> {
        divergence_and_jump(self.medium(), &self.flux())
    }

    /// Interface jumps of the tangential components `E2`, `H3` of the collocated field.
    pub fn tangential_jumps(&self) -> Result<(f64, f64)> {
        let f = self.collocated();
        let j2 = jump_at_interface_2d(&f.u2, &self.grid2)?;
        let j3 = jump_at_interface_2d(&f.u3, &self.grid2)?;
        let mx = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok((mx(&j2), mx(&j3)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub residual: f64,
    pub oracle: f64,
    pub gap: f64,
}

fn build_terms(set: &CorrectorSet, kind: AnsatzKind, jet: &EnvelopeJet) -> Vec<Term> {
    let i = Complex64::new(0.0, 1.0);
    let mut terms = vec![Term { p: 1, q: 1, f: set.m.to_complex(), g: jet.a.clone(), gx: jet.ax.clone(), gt: jet.at.clone() }];
    if kind == AnsatzKind::Leading {
        return terms;
    }
    terms.push(Term { p: 2, q: 1, f: set.dkw.scale(-i), g: jet.ax.clone(), gx: jet.axx.clone(), gt: jet.axt.clone() });
    terms.push(Term { p: 3, q: 1, f: set.dk2w.scale(c(-0.5)), g: jet.axx.clone(), gx: jet.axxx.clone(), gt: jet.axxt.clone() });
    let n = jet.a.len();
    let mut cub = Vec::with_capacity(n);
    let mut cub_x = Vec::with_capacity(n);
    let mut cub_t = Vec::with_capacity(n);
    let mut thr = Vec::with_capacity(n);
    let mut thr_x = Vec::with_capacity(n);
    let mut thr_t = Vec::with_capacity(n);
    for j in 0..n {
        let (a, ax, at) = (jet.a[j], jet.ax[j], jet.at[j]);
        let abs2 = a.norm_sqr();
        let a2 = a * a;
        cub.push(a * abs2);
        cub_x.push(ax * abs2 * 2.0 + a2 * ax.conj());
        cub_t.push(at * abs2 * 2.0 + a2 * at.conj());
        thr.push(a2 * a);
        thr_x.push(a2 * ax * 3.0);
        thr_t.push(a2 * at * 3.0);
    }
    terms.push(Term { p: 3, q: 1, f: set.p.clone(), g: cub, gx: cub_x, gt: cub_t });
    terms.push(Term { p: 3, q: 3, f: set.h.clone(), g: thr, gx: thr_x, gt: thr_t });
    terms
}

fn oracle_vectors(set: &CorrectorSet) -> OracleVectors {
    let md = &set.medium;
    let (nu0, nu1, _) = set.nu;
    let i = Complex64::new(0.0, 1.0);
    let m = set.m.to_complex();
    let mb = m.conj();
    let d = &set.dkw;
    let db = d.conj();
    let shift = |v: &Stag<Complex64>| apply_l1_shift(md, nu1, v);
    let axt = md.apply_lambda(d).scale(-i);
    let axxx = shift(&set.dk2w).scale(c(0.5));
    let mut cubic_x = shift(&set.p).scale(c(-1.0));
    cubic_x.axpy(c(-nu1), &times_eps3(md, &cubic_first_harmonic(md, &m)));
    let mut conj_x = cubic_form(md, &m, &db, &m).scale(c(2.0));
    conj_x.axpy(c(1.0), &cubic_form(md, &m, &m, &db));
    let conj_x = times_eps3(md, &conj_x).scale(c(nu0));
    let mut abs_x = cubic_form(md, &mb, d, &m);
    abs_x.axpy(c(1.0), &cubic_form(md, &m, d, &mb));
    abs_x.axpy(c(1.0), &cubic_form(md, &m, &mb, d));
    let abs_x = times_eps3(md, &abs_x).scale(c(-2.0 * nu0));
    let mut third = shift(&set.h).scale(c(-3.0));
    third.axpy(c(-3.0 * nu1), &times_eps3(md, &cubic_third_harmonic(md, &m)));
    let mut b3 = cubic_form(md, &m, d, &m).scale(c(2.0));
    b3.axpy(c(1.0), &cubic_form(md, &m, &m, d));
    third.axpy(c(-3.0 * nu0), &times_eps3(md, &b3));
    let mut ov = OracleVectors { axt, axxx, cubic_x, conj_x, abs_x, third };
    for v in [&mut ov.axt, &mut ov.axxx, &mut ov.cubic_x, &mut ov.conj_x, &mut ov.abs_x, &mut ov.third] {
        md.clear_boundary(v);
    }
    ov
}

/// Residual `(dt D1 - dx2 H3, dt D2 + dx1 H3, -dx2 E1 + dx1 E2 + mu0 dt H3)` of
/// the semi-discrete system for a column with known `x2` and `t` derivatives.
/// Rows that are not unknowns of the stepper (boundary nodes) are zero.
pub fn residual_of_column(md: &crate::stagger::Medium, s: &ColumnState) -> Stag<f64> {
    let iface = md.iface();
    let len = md.len();
    let h = md.grid.h;
    let (e, ex, et) = (&s.e, &s.ex, &s.et);
    let mut r = Stag::zeros(&md.grid);
    let row1 = |e1: f64, e1t: f64, i: usize, eps1: f64, eps3: f64| {
        let e2 = md.hat2_at_node(&e.c2, i);
        let e2t = md.hat2_at_node(&et.c2, i);
        eps1 * e1t + eps3 * ((3.0 * e1 * e1 + e2 * e2) * e1t + 2.0 * e2 * e2t * e1) - ex.c3[i]
    };
    for i in 1..=iface {
        r.c1m[i] = row1(e.c1m[i], et.c1m[i], i, md.eps1.c1m[i], md.eps3.c1m[i]);
    }
    for i in iface..len - 1 {
        let k = i - iface;
        r.c1p[k] = row1(e.c1p[k], et.c1p[k], i, md.eps1.c1p[k], md.eps3.c1p[k]);
    }
    for i in 0..len - 1 {
        let e1 = md.hat1_at_half(e, i);
        let e1t = md.hat1_at_half(et, i);
        let (e2, e2t) = (e.c2[i], et.c2[i]);
        r.c2[i] =
            md.eps1.c2[i] * e2t + md.eps3.c2[i] * ((e1 * e1 + 3.0 * e2 * e2) * e2t + 2.0 * e1 * e1t * e2) + (e.c3[i + 1] - e.c3[i]) / h;
    }
    for i in 1..len - 1 {
        r.c3[i] = -ex.c1_bar(iface, i) + (e.c2[i] - e.c2[i - 1]) / h + md.mu0 * et.c3[i];
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correctors::compute_correctors;
    use crate::field::broken_norm;
    use crate::grid::Grid1D;
    use crate::profile::PiecewiseProfile;

    fn setup() -> CorrectorSet {
        let g = Grid1D::new(60.0, 0.1).unwrap();
        compute_correctors(&g, &PiecewiseProfile::exp_step(1.0), 0.5, 0.49).unwrap()
    }

    fn grid_and_envelope(set: &CorrectorSet, eps: f64, n: usize, t: f64) -> (Grid2D, EnvelopeField) {
        let k0 = set.k0();
        let turns = (20.0 / eps * k0 / (2.0 * PI)).round();
        let l2 = turns * 2.0 * PI / k0;
        let g2 = Grid2D::centered(set.medium.grid, l2, n).unwrap();
        let mut env =
            EnvelopeField::from_fn(n, eps * g2.x2_min, eps * l2, |x| Complex64::new((-x * x / 2.0).exp(), 0.3 * x * (-x * x / 2.0).exp()))
                .unwrap();
        env.t = eps * eps * t;
        (g2, env)
    }

    #[test]
    fn zero_envelope_gives_zero_field() {
        let set = setup();
        let (g2, mut env) = grid_and_envelope(&set, 0.1, 256, 0.0);
        env.values.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let a = AnsatzConfig::new(&set, AnsatzKind::Extended, 0.1, &g2, &env, 0.0).unwrap();
        assert_eq!(a.field().max_abs(), 0.0);
        assert_eq!(a.residual_l2(), 0.0);
    }

    #[test]
    fn mode_only_extended_equals_leading() {
        let set = setup();
        let only = set.mode_only();
        let (g2, env) = grid_and_envelope(&set, 0.1, 256, 3.0);
        let a = AnsatzConfig::new(&set, AnsatzKind::Leading, 0.1, &g2, &env, 3.0).unwrap().field();
        let b = AnsatzConfig::new(&only, AnsatzKind::Extended, 0.1, &g2, &env, 3.0).unwrap().field();
        let mut d = a.clone();
        d.axpy(-1.0, &b);
        assert!(d.max_abs() <= 1e-15 * a.max_abs());
    }

    #[test]
    fn tangential_components_are_continuous() {
        let set = setup();
        let (g2, env) = grid_and_envelope(&set, 0.1, 256, 0.0);
        let a = AnsatzConfig::new(&set, AnsatzKind::Extended, 0.1, &g2, &env, 0.0).unwrap();
        assert_eq!(a.tangential_jumps().unwrap(), (0.0, 0.0));
    }

    #[test]
    fn streamed_norm_matches_broken_norm() {
        let set = setup();
        let (g2, env) = grid_and_envelope(&set, 0.1, 256, 1.0);
        let a = AnsatzConfig::new(&set, AnsatzKind::Extended, 0.1, &g2, &env, 1.0).unwrap();
        let r = a.residual_field().to_field2d();
        let full = broken_norm(&r, 0).unwrap();
        let streamed = a.residual_l2();
        assert!((full - streamed).abs() <= 1e-12 * full);
    }

    #[test]
    fn leading_norm_scales_like_sqrt_eps() {
        let set = setup();
        let norm = |eps: f64| {
            let (g2, env) = grid_and_envelope(&set, eps, 512, 0.0);
            let a = AnsatzConfig::new(&set, AnsatzKind::Leading, eps, &g2, &env, 0.0).unwrap();
            broken_norm(&a.collocated(), 0).unwrap()
        };
        let ratio = norm(0.05) / norm(0.1);
        let expect = 0.5f64.powf(0.5);
        assert!((ratio / expect - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn gauge_flip_leaves_norms_unchanged() {
        let set = setup();
        let mut flipped = set.clone();
        flipped.m.w = set.m.w.scale(-1.0);
        for v in [&mut flipped.dkw, &mut flipped.dk2w, &mut flipped.p, &mut flipped.h] {
            *v = v.scale(c(-1.0));
        }
        let (g2, env) = grid_and_envelope(&set, 0.1, 256, 2.0);
        let a = AnsatzConfig::new(&set, AnsatzKind::Extended, 0.1, &g2, &env, 2.0).unwrap();
        let mut env_f = env.clone();
        env_f.values.iter_mut().for_each(|v| *v = -*v);
        let b = AnsatzConfig::new(&flipped, AnsatzKind::Extended, 0.1, &g2, &env_f, 2.0).unwrap();
        let (ra, rb) = (a.residual_l2(), b.residual_l2());
        assert!((ra - rb).abs() <= 1e-12 * ra);
        let mut d = a.field();
        d.axpy(-1.0, &b.field());
        assert!(d.max_abs() <= 1e-14);
    }

    #[test]
    fn residual_of_leading_ansatz_is_order_eps2() {
        // Pointwise the leading residual is -eps^2 (L1 + nu1 Lambda) m A_X F + c.c.
        let set = setup();
        let (g2, env) = grid_and_envelope(&set, 0.02, 256, 0.0);
        let a = AnsatzConfig::new(&set, AnsatzKind::Leading, 0.02, &g2, &env, 0.0).unwrap();
        let md = &set.medium;
        let lm = apply_l1_shift(md, set.nu.1, &set.m.to_complex());
        let mut worst: f64 = 0.0;
        for j in (0..256).step_by(17) {
            let r = a.residual_column(j);
            let mut ex = Stag::zeros(&md.grid);
            add_re(&mut ex, &lm, -a.jet.ax[j] * a.phase(j) * 0.02f64.powi(2));
            let d = r.zip_with(&ex, |x, y| x - y).max_modulus();
            worst = worst.max(d);
        }
        assert!(worst < 3e-6, "{worst}");
    }

    #[test]
    fn oracle_needs_extended_ansatz() {
        let set = setup();
        let (g2, env) = grid_and_envelope(&set, 0.1, 256, 0.0);
        let a = AnsatzConfig::new(&set, AnsatzKind::Leading, 0.1, &g2, &env, 0.0).unwrap();
        assert!(matches!(a.residual_order4_oracle(), Err(Error::Structural(_))));
    }

    #[test]
    fn oracle_is_linear_in_p() {
        let set = setup();
        let mut doubled = set.clone();
        doubled.p = set.p.scale(c(2.0));
        let ov1 = oracle_vectors(&set);
        let ov2 = oracle_vectors(&doubled);
        let md = &set.medium;
        let sp = apply_l1_shift(md, set.nu.1, &set.p).scale(c(-1.0));
        let diff = ov2.cubic_x.zip_with(&ov1.cubic_x, |a, b| a - b);
        let mut sp = sp;
        md.clear_boundary(&mut sp);
        assert!(diff.zip_with(&sp, |a, b| a - b).max_modulus() < 1e-14);
    }

    #[test]
    fn oracle_matches_residual_at_small_eps() {
        let set = setup();
        let gap = |eps: f64| {
            let (g2, env) = grid_and_envelope(&set, eps, 512, 0.0);
            let a = AnsatzConfig::new(&set, AnsatzKind::Extended, eps, &g2, &env, 0.0).unwrap();
            a.residual_against_oracle().unwrap()
        };
        let c1 = gap(0.1);
        let c2 = gap(0.05);
        // The closed form captures the leading part of the residual ...
        assert!(c2.gap < 0.3 * c2.residual, "{c2:?}");
        // ... and the remainder decays faster than eps^4 (L2 costs eps^-1/2).
        let slope = (c1.gap / c2.gap).ln() / 2f64.ln();
        assert!(slope > 4.2, "{slope} {c1:?} {c2:?}");
    }
}
