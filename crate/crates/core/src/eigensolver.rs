//! Guided modes of the linear TM interface problem and the dispersion curve.
//!
//! Both discretizations end in a generalized eigenproblem `A w = lambda B w`
//! for `w3` on the interior nodes, with `lambda = omega^2`, `A` tridiagonal
//! plus a rank-one term and `B` diagonal plus a rank-one term:
//!
//! * [`Scheme::Lifted`]: the second-order form with the lifting of the
//!   derivative jump (`w3 = w3r + c l`, `c = d/dx1 w3r(0)`), central
//!   differences and averaged one-sided coefficients at the interface node.
//! * [`Scheme::Staggered`]: the exact reduction of the staggered first-order
//!   system of [`crate::stagger`]; symmetric, no rank-one terms. Modes from
//!   this scheme are exact null vectors of the discrete `T(k, omega)`.
use crate::banded::{Banded, BandedLu};
use crate::grid::Grid1D;
use crate::linalg::{arnoldi, dot, norm2, Dense};
use crate::prelude::*;
use crate::profile::{PiecewiseProfile, Side};
use crate::stagger::{mode_from_w3, reduced_tridiagonal, Medium, Stag};
use crate::{Complex64, Error, Result};

/// Residual tolerance for returned eigenpairs.
pub const EIGEN_TOL: f64 = 1e-10;
/// Outer margin (in nodes) checked by the localization filter.
pub const MARGIN_NODES: usize = 100;
/// Margin mass below which a mode counts as localized.
pub const MARGIN_THRESHOLD: f64 = 1e-6;
/// Minimum separation for the simple-eigenvalue check.
pub const GAP_MARGIN: f64 = 1e-4;
/// Minimum distance between `3 nu0` and `omega(3 k0)`.
pub const RESONANCE_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Lifted,
    Staggered,
}

/// Pencil `A' = A + u g^T`, `B' = diag(b) + v g^T` acting on interior nodes `1..len-1`.
#[derive(Debug, Clone)]
pub struct PencilOperator {
    pub k: f64,
    pub grid: Grid1D,
    pub scheme: Scheme,
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub g: Vec<f64>,
    /// Lift profile on all nodes (empty without a lift).
    pub ell: Vec<f64>,
}

impl PencilOperator {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    fn has_lift(&self) -> bool {
        !self.g.is_empty()
    }

    pub fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.sup[i] * x[i + 1];
            }
            y[i] = s;
        }
        if self.has_lift() {
            let c = dot(&self.g, x);
            for (yi, ui) in y.iter_mut().zip(&self.u) {
                *yi += c * ui;
            }
        }
    }

    pub fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, bi), xi) in y.iter_mut().zip(&self.b).zip(x) {
            *yi = bi * xi;
        }
        if self.has_lift() {
            let c = dot(&self.g, x);
            for (yi, vi) in y.iter_mut().zip(&self.v) {
                *yi += c * vi;
            }
        }
    }

    /// Dense `(A', B')`, for tests and small problems.
    pub fn to_dense(&self) -> (Dense, Dense) {
        let n = self.n();
        let (mut a, mut b) = (Dense::zeros(n), Dense::zeros(n));
        let mut e = vec![0.0; n];
        let (mut ya, mut yb) = (vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            e[j] = 1.0;
            self.apply_a(&e, &mut ya);
            self.apply_b(&e, &mut yb);
            for i in 0..n {
                a.set(i, j, ya[i]);
                b.set(i, j, yb[i]);
            }
            e[j] = 0.0;
        }
        (a, b)
    }

    /// `w3` on all nodes from interior unknowns (adds the lift, zero ends).
    pub fn full_w3(&self, x: &[f64]) -> Vec<f64> {
        let len = self.grid.len();
        let mut w = vec![0.0; len];
        w[1..len - 1].copy_from_slice(x);
        if self.has_lift() {
            let c = dot(&self.g, x);
            for (wi, li) in w.iter_mut().zip(&self.ell).take(len - 1).skip(1) {
                *wi += c * li;
            }
        }
        w
    }

    fn shift_invert(&self, sigma: f64) -> Result<ShiftInvert> {
        let n = self.n();
        let mut m = Banded::<f64>::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, self.diag[i] - sigma * self.b[i]);
            if i + 1 < n {
                m.set(i, i + 1, self.sup[i]);
                m.set(i + 1, i, self.sub[i]);
            }
        }
        let lu = m.factor()?;
        let rank_one = if self.has_lift() {
            let r: Vec<f64> = self.u.iter().zip(&self.v).map(|(u, v)| u - sigma * v).collect();
            let z = lu.solve(&r);
            let denom = 1.0 + dot(&self.g, &z);
            if denom.abs() < 1e-13 {
                return Err(Error::Singular { pivot: n });
            }
            Some((z, denom))
        } else {
            None
        };
        Ok(ShiftInvert { lu, rank_one, g: self.g.clone() })
    }
}

/// Factored `A' - sigma B'` via banded LU and Sherman-Morrison.
struct ShiftInvert {
    lu: BandedLu<f64>,
    rank_one: Option<(Vec<f64>, f64)>,
    g: Vec<f64>,
}

impl ShiftInvert {
    fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        out.copy_from_slice(rhs);
        self.lu.solve_in_place(out);
        if let Some((z, denom)) = &self.rank_one {
            let c = dot(&self.g, out) / denom;
            for (o, zi) in out.iter_mut().zip(z) {
                *o -= c * zi;
            }
        }
    }
}

/// Lifted second-order discretization on the interior nodes of `grid`.
pub fn assemble_reduced_operator(k: f64, grid: &Grid1D, profile: &PiecewiseProfile) -> Result<PencilOperator> {
    if !(grid.h > 0.0) {
        return Err(Error::InvalidGrid("non-positive spacing".into()));
    }
    let e_minus0 = profile.eps1(Side::Minus, 0.0);
    if e_minus0 == 0.0 {
        return Err(Error::DivisionByZero("eps1 vanishes at the left interface trace".into()));
    }
    profile.validate(grid)?;
    let len = grid.len();
    let iface = grid.interface_index;
    let h = grid.h;
    let mu0 = profile.mu0;
    let eps_t = (profile.eps1(Side::Plus, 0.0) - e_minus0) / e_minus0;
    let s = if eps_t > 0.0 {
        1.0
    } else if eps_t < 0.0 {
        -1.0
    } else {
        0.0
    };
    let rate = eps_t.abs();
    let ell: Vec<f64> = (0..len)
        .map(|i| {
            let x = grid.x(i);
            if i <= iface {
                -s
            } else {
                -s * (-rate * x).exp()
            }
        })
        .collect();
    // P l = (-d2 + beta d + k^2) l, evaluated analytically per side
    let p_ell = |side: Side, x: f64, beta: f64| -> f64 {
        match side {
            Side::Minus => -s * k * k,
            Side::Plus => s * (-rate * x).exp() * (rate * rate + beta * rate - k * k),
        }
    };
    let n = len - 2;
    let (mut sub, mut diag, mut sup) = (vec![0.0; n - 1], vec![0.0; n], vec![0.0; n - 1]);
    let mut b = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut g = vec![0.0; n];
    let h2 = h * h;
    let mut beta_at = vec![0.0; len];
    for r in 0..n {
        let i = r + 1;
        let x = grid.x(i);
        let (eps, beta, pl) = if i == iface {
            let (em, ep) = (profile.eps1(Side::Minus, 0.0), profile.eps1(Side::Plus, 0.0));
            let (bm, bp) = (profile.deps1(Side::Minus, 0.0) / em, profile.deps1(Side::Plus, 0.0) / ep);
            (0.5 * (em + ep), 0.5 * (bm + bp), 0.5 * (p_ell(Side::Minus, 0.0, bm) + p_ell(Side::Plus, 0.0, bp)))
        } else {
            let side = PiecewiseProfile::side_of(x);
            let e = profile.eps1(side, x);
            let beta = profile.deps1(side, x) / e;
            (e, beta, p_ell(side, x, beta))
        };
        beta_at[i] = beta;
        diag[r] = 2.0 / h2 + k * k;
        if r > 0 {
            sub[r - 1] = -1.0 / h2 - beta / (2.0 * h);
        }
        if r + 1 < n {
            sup[r] = -1.0 / h2 + beta / (2.0 * h);
        }
        b[r] = mu0 * eps;
        if s != 0.0 {
            u[r] = pl;
            v[r] = mu0 * eps * ell[i];
        }
    }
    if s != 0.0 {
        // w3 = 0 at both ends: w3r(end) = -c l(end) enters the first and last rows
        u[0] += -ell[0] * (-1.0 / h2 - beta_at[1] / (2.0 * h));
        u[n - 1] += -ell[len - 1] * (-1.0 / h2 + beta_at[len - 2] / (2.0 * h));
        // c = (-3 w(0) + 4 w(h) - w(2h)) / 2h from the right block
        let r0 = iface - 1;
        g[r0] = -3.0 / (2.0 * h);
        g[r0 + 1] = 4.0 / (2.0 * h);
        g[r0 + 2] = -1.0 / (2.0 * h);
        Ok(PencilOperator { k, grid: *grid, scheme: Scheme::Lifted, sub, diag, sup, b, u, v, g, ell })
    } else {
        Ok(PencilOperator { k, grid: *grid, scheme: Scheme::Lifted, sub, diag, sup, b, u: vec![], v: vec![], g: vec![], ell: vec![] })
    }
}

/// Reduction of the staggered system: `S(k) w3 = omega^2 mu0 w3`.
pub fn assemble_staggered_operator(k: f64, medium: &Medium) -> PencilOperator {
    let (diag, off) = reduced_tridiagonal(medium, k);
    let n = diag.len();
    PencilOperator {
        k,
        grid: medium.grid,
        scheme: Scheme::Staggered,
        sub: off.clone(),
        sup: off,
        diag,
        b: vec![medium.mu0; n],
        u: vec![],
        v: vec![],
        g: vec![],
        ell: vec![],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub omega: f64,
    pub lambda: f64,
    /// `w3` on all nodes, unit Euclidean norm of the interior unknowns, peak positive.
    pub w3: Vec<f64>,
    pub residual: f64,
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            1.0 + ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect()
}

/// Eigenpairs of the pencil nearest to `target^2`, by shift-invert Arnoldi and
/// inverse-iteration polishing. Each returned pair has `|A'w - lambda B'w| <= tol |w|`.
pub fn solve_near(op: &PencilOperator, target: f64, n_eigs: usize, tol: f64) -> Result<Vec<EigenPair>> {
    let n = op.n();
    let mut sigma = target * target;
    let si = match op.shift_invert(sigma) {
        Ok(s) => s,
        Err(_) => {
            sigma = sigma * (1.0 + 1e-7) + 1e-9;
            op.shift_invert(sigma)?
        }
    };
    let m = (2 * n_eigs + 10).max(30).min(n);
    let mut bx = vec![0.0; n];
    let ar = arnoldi(
        |x, y| {
            op.apply_b(x, &mut bx);
            si.solve(&bx, y);
        },
        &start_vector(n),
        m,
    );
    let theta = ar.h.hessenberg_eigenvalues()?;
    let mut ritz: Vec<f64> =
        theta.iter().filter(|t| t.norm() > 0.0 && t.im.abs() <= 1e-8 * t.norm()).map(|t| sigma + 1.0 / t.re).filter(|l| *l > 0.0).collect();
    ritz.sort_by(|a, b| (a - sigma).abs().partial_cmp(&(b - sigma).abs()).unwrap());
    let sign = if target < 0.0 { -1.0 } else { 1.0 };
    let mut out: Vec<EigenPair> = Vec::new();
    let mut best_failed = f64::INFINITY;
    let (mut aw, mut bw, mut next) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for &mu in ritz.iter().take(n_eigs + 4) {
        if out.len() >= n_eigs {
            break;
        }
        if out.iter().any(|p| (p.lambda - mu).abs() <= 1e-9 * mu.abs().max(1e-12)) {
            continue;
        }
        let shift = match op.shift_invert(mu) {
            Ok(s) => s,
            Err(_) => op.shift_invert(mu * (1.0 + 1e-11))?,
        };
        let mut w = start_vector(n);
        let nw = norm2(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        let mut lambda = mu;
        let mut res = f64::INFINITY;
        for _ in 0..30 {
            op.apply_b(&w, &mut bw);
            shift.solve(&bw, &mut next);
            let nn = norm2(&next);
            if !(nn.is_finite()) || nn == 0.0 {
                break;
            }
            for (wi, ni) in w.iter_mut().zip(&next) {
                *wi = ni / nn;
            }
            op.apply_a(&w, &mut aw);
            op.apply_b(&w, &mut bw);
            lambda = dot(&bw, &aw) / dot(&bw, &bw);
            res = aw.iter().zip(&bw).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            if res <= tol {
                break;
            }
        }
        if res > tol || lambda <= 0.0 {
            best_failed = best_failed.min(res);
            continue;
        }
        if out.iter().any(|p| (p.lambda - lambda).abs() <= 1e-9 * lambda) {
            continue;
        }
        let mut w3 = op.full_w3(&w);
        let peak = w3.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if peak < 0.0 {
            w3.iter_mut().for_each(|x| *x = -*x);
        }
        out.push(EigenPair { omega: sign * lambda.sqrt(), lambda, w3, residual: res });
    }
    if out.is_empty() {
        return Err(Error::NoConvergence { iterations: 30, residual: best_failed });
    }
    out.sort_by(|a, b| (a.lambda - sigma).abs().partial_cmp(&(b.lambda - sigma).abs()).unwrap());
    Ok(out)
}

/// Margin mass of `w3` after normalization to unit discrete `L^2`.
pub fn margin_mass(w3: &[f64], h: f64, margin_nodes: usize) -> f64 {
    let total: f64 = w3.iter().map(|v| v * v).sum::<f64>() * h;
    if total == 0.0 {
        return 0.0;
    }
    let len = w3.len();
    let m = margin_nodes.min(len / 2);
    let edge: f64 = w3[..=m].iter().chain(&w3[len - 1 - m..]).map(|v| v * v).sum::<f64>() * h;
    (edge / total).sqrt()
}

/// Keeps pairs whose normalized `w3` has margin mass below `threshold`.
pub fn filter_localized(pairs: Vec<EigenPair>, grid: &Grid1D, margin_nodes: usize, threshold: f64) -> Vec<EigenPair> {
    pairs.into_iter().filter(|p| margin_mass(&p.w3, grid.h, margin_nodes) < threshold).collect()
}

/// Normalized eigenfunction on the staggered layout; `w.c2` holds `Im w2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub k: f64,
    pub omega: f64,
    pub grid: Grid1D,
    pub w: Stag<f64>,
}

impl Mode {
    /// Complex field `(w1, i Im w2, w3)`.
    pub fn to_complex(&self) -> Stag<Complex64> {
        Stag {
            c1m: self.w.c1m.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            c1p: self.w.c1p.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            c2: self.w.c2.iter().map(|&v| Complex64::new(0.0, v)).collect(),
            c3: self.w.c3.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn w1(&self, i: usize, side: Side) -> f64 {
        self.w.c1(self.grid.interface_index, i, side)
    }

    pub fn w3(&self) -> &[f64] {
        &self.w.c3
    }

    /// `Im w2` at node `i` (mean of the neighbouring half nodes, one-sided at the ends).
    pub fn w2_im_at_node(&self, i: usize) -> f64 {
        let c2 = &self.w.c2;
        if i == 0 {
            c2[0]
        } else if i == c2.len() {
            c2[i - 1]
        } else {
            0.5 * (c2[i - 1] + c2[i])
        }
    }

    /// `sum eps1 (w1^2 - w2^2) + mu0 w3^2` with the staggered weights (`w2^2 <= 0`).
    pub fn normalization_integral(&self, medium: &Medium) -> f64 {
        let w = self.to_complex();
        medium.inner(&medium.apply_lambda(&w), &w).re
    }
}

/// Builds the staggered mode from `w3` node samples and normalizes it.
pub fn reconstruct_mode(w3: &[f64], omega: f64, k: f64, medium: &Medium) -> Result<Mode> {
    if omega == 0.0 {
        return Err(Error::DivisionByZero("mode reconstruction at omega = 0".into()));
    }
    if w3.len() != medium.len() {
        return Err(Error::Structural("w3 length does not match grid".into()));
    }
    let mut mode = Mode { k, omega, grid: medium.grid, w: mode_from_w3(medium, k, omega, w3) };
    let q = mode.normalization_integral(medium);
    if !(q > 0.0) {
        return Err(Error::Degenerate(q));
    }
    let peak = mode.w.c3.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    let s = if peak < 0.0 { -1.0 } else { 1.0 } / q.sqrt();
    mode.w = mode.w.scale(s);
    Ok(mode)
}

/// Eigen solves for one discretization on a fixed grid and profile.
#[derive(Debug, Clone)]
pub struct ModeSolver {
    pub scheme: Scheme,
    pub profile: PiecewiseProfile,
    pub medium: Medium,
    pub tol: f64,
    pub margin_nodes: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solve {
    /// Localized pair nearest to the target.
    pub pair: EigenPair,
    /// Distance in `omega` to the nearest other computed eigenvalue (any localization).
    pub gap: f64,
    /// All computed eigenvalues, nearest first.
    pub omegas: Vec<f64>,
}

impl ModeSolver {
    pub fn new(scheme: Scheme, grid: &Grid1D, profile: &PiecewiseProfile) -> Result<Self> {
        Ok(Self {
            scheme,
            profile: profile.clone(),
            medium: Medium::new(grid, profile)?,
            tol: EIGEN_TOL,
            margin_nodes: MARGIN_NODES,
            threshold: MARGIN_THRESHOLD,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.medium.grid
    }

    pub fn operator(&self, k: f64) -> Result<PencilOperator> {
        match self.scheme {
            Scheme::Lifted => assemble_reduced_operator(k, &self.medium.grid, &self.profile),
            Scheme::Staggered => Ok(assemble_staggered_operator(k, &self.medium)),
        }
    }

    /// Raw eigenpairs near `target` without the localization filter.
    pub fn pairs(&self, k: f64, target: f64, n_eigs: usize) -> Result<Vec<EigenPair>> {
        solve_near(&self.operator(k)?, target, n_eigs, self.tol)
    }

    /// Nearest localized eigenpair; `None` when the filter rejects everything.
    ///
    /// Near the continuum edge the box modes of the truncated domain can be
    /// closer to `target` than the guided mode, so the number of computed
    /// pairs is raised until a localized one shows up.
    pub fn solve(&self, k: f64, target: f64) -> Result<Option<Solve>> {
        let mut n_eigs = 4;
        let (pairs, omegas) = loop {
            let pairs = self.pairs(k, target, n_eigs)?;
            let omegas: Vec<f64> = pairs.iter().map(|p| p.omega).collect();
            let kept = filter_localized(pairs, self.grid(), self.margin_nodes, self.threshold);
            if !kept.is_empty() || n_eigs >= 128 || omegas.len() < n_eigs {
                break (kept, omegas);
            }
            n_eigs *= 4;
        };
        Ok(pairs.into_iter().next().map(|pair| {
            let gap = omegas
                .iter()
                .filter(|&&o| (o - pair.omega).abs() > 1e-12 * pair.omega.abs())
                .map(|o| (o - pair.omega).abs())
                .fold(f64::INFINITY, f64::min);
            Solve { pair, gap, omegas: omegas.clone() }
        }))
    }

    /// Eigenvalue nearest to `target` regardless of localization.
    pub fn nearest(&self, k: f64, target: f64) -> Result<EigenPair> {
        Ok(self.pairs(k, target, 1)?.remove(0))
    }

    pub fn mode(&self, k: f64, target: f64) -> Result<Mode> {
        let s = self.solve(k, target)?.ok_or_else(|| Error::Structural(format!("no localized mode near {target} at k = {k}")))?;
        reconstruct_mode(&s.pair.w3, s.pair.omega, k, &self.medium)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub k: f64,
    pub omega: f64,
    pub residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    /// First `k` at which the continuation lost the mode.
    pub lost_at: Option<f64>,
}

/// Continuation in `k`: each solve is seeded with the previous eigenvalue.
pub fn dispersion_scan(solver: &ModeSolver, k_values: &[f64], seed_omega: f64) -> Result<Curve> {
    let mut points = Vec::with_capacity(k_values.len());
    let mut seed = seed_omega;
    for &k in k_values {
        match solver.solve(k, seed)? {
            Some(s) => {
                seed = s.pair.omega;
                points.push(CurvePoint { k, omega: s.pair.omega, residual: s.pair.residual, gap: s.gap });
            }
            None => return Ok(Curve { points, lost_at: Some(k) }),
        }
    }
    Ok(Curve { points, lost_at: None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub nu0: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub err_nu1: f64,
    pub err_nu2: f64,
}

/// First and second central differences at steps `dk` and `dk/2`, Richardson-combined.
pub fn richardson_derivatives<F: FnMut(f64) -> Result<f64>>(mut omega: F, k0: f64, dk: f64) -> Result<Derivatives> {
    let w0 = omega(k0)?;
    let mut d = |s: f64| -> Result<(f64, f64)> {
        let (p, m) = (omega(k0 + s)?, omega(k0 - s)?);
        Ok(((p - m) / (2.0 * s), (p - 2.0 * w0 + m) / (s * s)))
    };
    let (d1a, d2a) = d(dk)?;
    let (d1b, d2b) = d(0.5 * dk)?;
    let nu1 = (4.0 * d1b - d1a) / 3.0;
    let nu2 = (4.0 * d2b - d2a) / 3.0;
    Ok(Derivatives { nu0: w0, nu1, nu2, err_nu1: (nu1 - d1b).abs(), err_nu2: (nu2 - d2b).abs() })
}

/// `nu0, nu1, nu2` from finite differences of the continued eigenvalue.
pub fn dispersion_derivatives(solver: &ModeSolver, k0: f64, seed: f64, dk: f64) -> Result<Derivatives> {
    let base = solver.solve(k0, seed)?.ok_or_else(|| Error::Structural(format!("no localized mode at k = {k0}")))?;
    let w0 = base.pair.omega;
    let gap = base.gap;
    let d = richardson_derivatives(
        |k| {
            if k == k0 {
                return Ok(w0);
            }
            let s = solver.solve(k, w0)?.ok_or(Error::Crossing { k })?;
            if s.gap < GAP_MARGIN.min(0.5 * gap) {
                return Err(Error::Crossing { k });
            }
            Ok(s.pair.omega)
        },
        k0,
        dk,
    )?;
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub simple: bool,
    pub gap: f64,
    pub below_continuum: bool,
    /// `k0^2 - nu0^2 mu0 eps1_inf` for the minus and plus side.
    pub continuum_margin: (f64, f64),
    pub non_resonant: bool,
    pub resonance_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionData {
    pub k0: f64,
    pub nu0: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub err_nu1: f64,
    pub err_nu2: f64,
    pub curve: Vec<CurvePoint>,
    pub gap: f64,
    pub omega_3k0: Option<f64>,
    pub audit: Audit,
}

pub fn audit_assumptions(k0: f64, nu0: f64, gap: f64, omega_3k0: Option<f64>, profile: &PiecewiseProfile) -> Audit {
    let mu0 = profile.mu0;
    let continuum_margin = (k0 * k0 - nu0 * nu0 * mu0 * profile.eps1_inf_minus, k0 * k0 - nu0 * nu0 * mu0 * profile.eps1_inf_plus);
    let below_continuum = continuum_margin.0 > 0.0 && continuum_margin.1 > 0.0 && nu0 != 0.0 && omega_3k0.is_none_or(|w| w != 0.0);
    let resonance_margin = omega_3k0.map(|w| (3.0 * nu0 - w).abs());
    Audit {
        simple: gap > GAP_MARGIN,
        gap,
        below_continuum,
        continuum_margin,
        non_resonant: resonance_margin.is_none_or(|m| m > RESONANCE_MARGIN),
        resonance_margin,
    }
}

/// Largest `k` step of [`continue_branch`].
pub const BRANCH_STEP: f64 = 0.05;

/// Eigenvalue at `k_to` on the branch through `(k_from, omega_from)`, by
/// continuation in steps of at most `dk`. A direct solve at `k_to` seeded
/// with a scaled frequency lands among the box modes above the continuum edge.
/// `None` when the branch is lost on the way.
pub fn continue_branch(solver: &ModeSolver, k_from: f64, omega_from: f64, k_to: f64, dk: f64) -> Result<Option<f64>> {
    let n = ((k_to - k_from).abs() / dk).ceil().max(1.0) as usize;
    let ks: Vec<f64> = (1..=n).map(|i| k_from + (k_to - k_from) * i as f64 / n as f64).collect();
    let c = dispersion_scan(solver, &ks, omega_from)?;
    Ok(if c.lost_at.is_none() { c.points.last().map(|p| p.omega) } else { None })
}

/// Full dispersion analysis at `k0`: curve, derivatives, the `3 k0` solve and the audit.
pub fn analyze_dispersion(solver: &ModeSolver, k0: f64, seed: f64, k_values: &[f64], dk: f64) -> Result<DispersionData> {
    let base = solver.solve(k0, seed)?.ok_or_else(|| Error::Structural(format!("no localized mode at k = {k0}")))?;
    let nu0 = base.pair.omega;
    let der = dispersion_derivatives(solver, k0, nu0, dk)?;
    let curve = if k_values.is_empty() { Vec::new() } else { dispersion_scan(solver, k_values, seed)?.points };
    let omega_3k0 = continue_branch(solver, k0, nu0, 3.0 * k0, BRANCH_STEP)?;
    let audit = audit_assumptions(k0, nu0, base.gap, omega_3k0, &solver.profile);
    Ok(DispersionData {
        k0,
        nu0,
        nu1: der.nu1,
        nu2: der.nu2,
        err_nu1: der.err_nu1,
        err_nu2: der.err_nu2,
        curve,
        gap: base.gap,
        omega_3k0,
        audit,
    })
}

/// Aitken extrapolation of a sequence converging geometrically; falls back to
/// the last value when the differences are at rounding level.
pub fn aitken(a: f64, b: f64, c: f64) -> f64 {
    let den = (c - b) - (b - a);
    if den.abs() <= 1e-14 * c.abs().max(1.0) || ((c - b) * (b - a)) <= 0.0 {
        c
    } else {
        c - (c - b) * (c - b) / den
    }
}

/// Guided mode of the continuous problem on `[-d, d]`, sampled on the nodes and
/// half nodes of a grid. `H = H3` and `G = H' / eps1` are continuous across the
/// interface and solve `H' = eps1 G`, `G' = (k^2 / eps1 - omega^2 mu0) H` on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousMode {
    pub k: f64,
    pub omega: f64,
    pub grid: Grid1D,
    /// `H` at `x = (j / 2 - interface_index) h`, `j = 0..2 len - 1` (nodes at even `j`).
    pub h: Vec<f64>,
    pub g: Vec<f64>,
}

impl ContinuousMode {
    /// Shooting from both ends with `substeps` (even) RK4 steps per cell, each
    /// end started on the decaying exponential of the local coefficients, and a
    /// secant iteration in `omega` on the interface mismatch of `G / H`.
    pub fn shoot(profile: &PiecewiseProfile, grid: &Grid1D, k: f64, omega_guess: f64, substeps: usize) -> Result<Self> {
        if substeps < 2 || !substeps.is_multiple_of(2) {
            return Err(Error::InvalidArgument("substeps must be even and >= 2".into()));
        }
        let sweep = |omega: f64, side: Side| -> Result<(Vec<f64>, Vec<f64>)> {
            let n = match side {
                Side::Minus => grid.n_minus,
                Side::Plus => grid.n_plus,
            };
            let sgn = if side == Side::Minus { -1.0 } else { 1.0 };
            let rhs = |x: f64, y: [f64; 2]| -> [f64; 2] {
                let e = profile.eps1(side, x);
                [e * y[1], (k * k / e - omega * omega * profile.mu0) * y[0]]
            };
            let x_end = sgn * n as f64 * grid.h;
            let e_end = profile.eps1(side, x_end);
            let q2 = k * k - omega * omega * profile.mu0 * e_end;
            if !(q2 > 0.0) {
                return Err(Error::Structural(format!("omega = {omega} is not below the continuum edge")));
            }
            // H ~ exp(-q |x|) at the far end
            let mut y = [1.0, -sgn * q2.sqrt() / e_end];
            let dx = -sgn * grid.h / substeps as f64;
            let mut hs = vec![y[0]];
            let mut gs = vec![y[1]];
            for cell in 0..n {
                for sub in 0..substeps {
                    let x = x_end + (cell * substeps + sub) as f64 * dx;
                    let k1 = rhs(x, y);
                    let k2 = rhs(x + 0.5 * dx, [y[0] + 0.5 * dx * k1[0], y[1] + 0.5 * dx * k1[1]]);
                    let k3 = rhs(x + 0.5 * dx, [y[0] + 0.5 * dx * k2[0], y[1] + 0.5 * dx * k2[1]]);
                    let k4 = rhs(x + dx, [y[0] + dx * k3[0], y[1] + dx * k3[1]]);
                    for c in 0..2 {
                        y[c] += dx / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                    }
                    if (sub + 1) % (substeps / 2) == 0 {
                        hs.push(y[0]);
                        gs.push(y[1]);
                    }
                }
            }
            Ok((hs, gs))
        };
        let mismatch = |omega: f64| -> Result<f64> {
            let (hm, gm) = sweep(omega, Side::Minus)?;
            let (hp, gp) = sweep(omega, Side::Plus)?;
            let (a, b) = (hm.len() - 1, hp.len() - 1);
            Ok(gm[a] / hm[a] - gp[b] / hp[b])
        };
        let (mut w0, mut w1) = (omega_guess, omega_guess * (1.0 + 1e-6));
        let (mut f0, mut f1) = (mismatch(w0)?, mismatch(w1)?);
        let mut it = 0;
        while (w1 - w0).abs() > 1e-15 * w1.abs() && f1 != 0.0 {
            if it == 60 || f1 == f0 {
                return Err(Error::NoConvergence { iterations: it, residual: f1.abs() });
            }
            let w2 = w1 - f1 * (w1 - w0) / (f1 - f0);
            (w0, f0) = (w1, f1);
            w1 = w2;
            f1 = mismatch(w1)?;
            it += 1;
        }
        let (hm, gm) = sweep(w1, Side::Minus)?;
        let (mut hp, mut gp) = sweep(w1, Side::Plus)?;
        hp.reverse();
        gp.reverse();
        let (sm, sp) = (1.0 / hm[hm.len() - 1], 1.0 / hp[0]);
        let h: Vec<f64> = hm.iter().map(|v| v * sm).chain(hp[1..].iter().map(|v| v * sp)).collect();
        let g: Vec<f64> = gm.iter().map(|v| v * sm).chain(gp[1..].iter().map(|v| v * sp)).collect();
        Ok(Self { k, omega: w1, grid: *grid, h, g })
    }

    /// Complex amplitudes `(E1, E2, H3)` of `exp(i (k x2 - omega t))` on the
    /// staggered layout, from `-i omega eps1 E1 = i k H3` and
    /// `-i omega eps1 E2 = -H3'`; scaled to unit `max |H3|`.
    pub fn staggered(&self, profile: &PiecewiseProfile) -> Stag<Complex64> {
        let g = &self.grid;
        let iface = g.interface_index;
        let scale = 1.0 / self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let e1 = |i: usize, side: Side| -self.k * self.h[2 * i] / (self.omega * profile.eps1(side, g.x(i))) * scale;
        Stag {
            c1m: (0..=iface).map(|i| Complex64::new(e1(i, Side::Minus), 0.0)).collect(),
            c1p: (iface..g.len()).map(|i| Complex64::new(e1(i, Side::Plus), 0.0)).collect(),
            c2: (0..g.n_half()).map(|i| Complex64::new(0.0, -self.g[2 * i + 1] / self.omega * scale)).collect(),
            c3: (0..g.len()).map(|i| Complex64::new(self.h[2 * i] * scale, 0.0)).collect(),
        }
    }

    /// `Im E2` at the nodes, same scaling as [`Self::staggered`].
    pub fn e2_at_nodes(&self) -> Vec<f64> {
        let scale = 1.0 / self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.grid.len()).map(|i| -self.g[2 * i] / self.omega * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex21(d: f64, h: f64) -> (Grid1D, PiecewiseProfile) {
        (Grid1D::new(d, h).unwrap(), PiecewiseProfile::exp_step(0.0))
    }

    #[test]
    fn lift_parameters_for_exp_step() {
        let (g, p) = ex21(5.0, 0.1);
        let op = assemble_reduced_operator(0.5, &g, &p).unwrap();
        // eps_t = (2 - 1) / 1 = 1, so the lift is -1 on the left and -exp(-x) on the right
        assert_eq!(op.ell[0], -1.0);
        assert!((op.ell[g.len() - 1] + (-5.0f64).exp()).abs() < 1e-15);
        let u = PiecewiseProfile::uniform(1.0, 0.0, 1.0);
        let op = assemble_reduced_operator(0.5, &g, &u).unwrap();
        assert!(op.g.is_empty());
        assert!((op.diag[3] - (2.0 / 0.01 + 0.25)).abs() < 1e-12);
    }

    /// Dense reference: apply the continuous lifted operator to each basis vector.
    #[test]
    fn dense_assembly_matches_banded() {
        let (g, p) = ex21(2.5, 0.1);
        let k = 0.5;
        let op = assemble_reduced_operator(k, &g, &p).unwrap();
        let (a, b) = op.to_dense();
        let n = op.n();
        assert_eq!(n, 49);
        let h = g.h;
        let iface = g.interface_index;
        for j in 0..n {
            let mut wr = vec![0.0; g.len()];
            wr[j + 1] = 1.0;
            let c = (-3.0 * wr[iface] + 4.0 * wr[iface + 1] - wr[iface + 2]) / (2.0 * h);
            let ell = |x: f64| if x <= 0.0 { -1.0 } else { -(-x).exp() };
            wr[0] = -c * ell(-2.5);
            let last = g.len() - 1;
            wr[last] = -c * ell(2.5);
            for i in 1..last {
                let x = g.x(i);
                let coef = |side| {
                    let e = p.eps1(side, x);
                    let beta = p.deps1(side, x) / e;
                    let pl = match side {
                        Side::Minus => -k * k,
                        Side::Plus => (-x).exp() * (1.0 + beta - k * k),
                    };
                    (e, beta, pl)
                };
                let (e, beta, pl) = if i == iface {
                    let (a1, b1, c1) = coef(Side::Minus);
                    let (a2, b2, c2) = coef(Side::Plus);
                    (0.5 * (a1 + a2), 0.5 * (b1 + b2), 0.5 * (c1 + c2))
                } else {
                    coef(PiecewiseProfile::side_of(x))
                };
                let lap = (wr[i + 1] - 2.0 * wr[i] + wr[i - 1]) / (h * h);
                let d1 = (wr[i + 1] - wr[i - 1]) / (2.0 * h);
                let aij = -lap + beta * d1 + k * k * wr[i] + c * pl;
                let bij = e * (wr[i] + c * ell(x));
                assert!((a.get(i - 1, j) - aij).abs() < 1e-9, "A[{},{}]", i - 1, j);
                assert!((b.get(i - 1, j) - bij).abs() < 1e-12, "B[{},{}]", i - 1, j);
            }
        }
    }

    #[test]
    fn exp_step_ground_mode() {
        let (g, p) = ex21(60.0, 0.02);
        let s = ModeSolver::new(Scheme::Lifted, &g, &p).unwrap();
        let pairs = s.pairs(0.5, 0.49, 3).unwrap();
        let w = pairs[0].omega;
        assert!((w - 0.494).abs() < 2e-3, "omega {w}");
        assert!(pairs[0].residual <= EIGEN_TOL);
        let st = ModeSolver::new(Scheme::Staggered, &g, &p).unwrap();
        let w_st = st.nearest(0.5, 0.49).unwrap().omega;
        assert!((w_st - w).abs() < 1e-3, "{w_st} vs {w}");
    }

    #[test]
    fn uniform_medium_has_no_localized_mode() {
        // dense oracle (the matrix is tridiagonal, hence Hessenberg): the spectrum lies
        // above the continuum edge k^2 / (mu0 eps1)
        let g = Grid1D::new(5.0, 0.1).unwrap();
        let p = PiecewiseProfile::uniform(1.0, 0.0, 1.0);
        let op = assemble_reduced_operator(0.5, &g, &p).unwrap();
        let (a, _) = op.to_dense();
        let ev = a.hessenberg_eigenvalues().unwrap();
        assert!(ev.iter().all(|z| z.re > 0.25));
        let g = Grid1D::new(50.0, 0.05).unwrap();
        let s = ModeSolver::new(Scheme::Lifted, &g, &p).unwrap();
        assert!(s.solve(0.5, 0.49).unwrap().is_none());
    }

    #[test]
    fn reconstructed_mode_is_normalized_and_divergence_free() {
        let (g, p) = ex21(40.0, 0.05);
        let s = ModeSolver::new(Scheme::Staggered, &g, &p).unwrap();
        let pair = s.nearest(0.5, 0.49).unwrap();
        let m = reconstruct_mode(&pair.w3, pair.omega, 0.5, &s.medium).unwrap();
        assert!((m.normalization_integral(&s.medium) - 1.0).abs() < 1e-12);
        let iface = g.interface_index;
        let e = &s.medium.eps1;
        let jump = e.c1p[0] * m.w.c1p[0] - e.c1m[iface] * m.w.c1m[iface];
        assert!(jump.abs() < 1e-12);
        let mut worst = 0.0f64;
        for i in 0..g.len() - 1 {
            let left = if i < iface { e.c1m[i] * m.w.c1m[i] } else { e.c1p[i - iface] * m.w.c1p[i - iface] };
            let right = if i < iface { e.c1m[i + 1] * m.w.c1m[i + 1] } else { e.c1p[i + 1 - iface] * m.w.c1p[i + 1 - iface] };
            // d(eps1 w1)/dx1 + i k eps1 w2 with w2 = i Im w2
            let div = (right - left) / g.h - 0.5 * e.c2[i] * m.w.c2[i];
            worst = worst.max(div.abs());
        }
        assert!(worst < 1e-10, "{worst}");
        let tm = s.medium.apply_t(0.5, m.omega, &m.to_complex());
        assert!(tm.max_modulus() < 1e-9);
        assert!(matches!(reconstruct_mode(&pair.w3, 0.0, 0.5, &s.medium), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn mirror_symmetry_and_polynomial_stencil() {
        let (g, p) = ex21(40.0, 0.05);
        let s = ModeSolver::new(Scheme::Staggered, &g, &p).unwrap();
        let a = s.nearest(0.55, 0.5).unwrap().omega;
        let b = s.nearest(-0.55, 0.5).unwrap().omega;
        assert!((a - b).abs() < 1e-12);
        let d = richardson_derivatives(|k| Ok(1.0 + 0.3 * (k - 0.5) * (k - 0.5)), 0.5, 0.01).unwrap();
        assert!(d.nu1.abs() < 1e-12 && (d.nu2 - 0.6).abs() < 1e-9);
        let d = richardson_derivatives(|k| Ok(1.0 + 0.3 * k * k), 0.0, 0.01).unwrap();
        assert!(d.nu1.abs() < 1e-14);
    }

    #[test]
    fn filter_examples() {
        let g = Grid1D::new(30.0, 0.05).unwrap();
        let sech: Vec<f64> = g.nodes().iter().map(|x| 1.0 / x.cosh()).collect();
        let wave: Vec<f64> = g.nodes().iter().map(|x| (3.0 * x).sin()).collect();
        let mk = |w3: Vec<f64>| EigenPair { omega: 1.0, lambda: 1.0, w3, residual: 0.0 };
        let kept = filter_localized(vec![mk(sech), mk(wave)], &g, MARGIN_NODES, MARGIN_THRESHOLD);
        assert_eq!(kept.len(), 1);
        assert!(kept[0].w3[g.interface_index] == 1.0);
    }

    #[test]
    fn audit_flags() {
        let p = PiecewiseProfile::exp_step(0.0);
        let a = audit_assumptions(0.5, 0.494, 0.01, Some(1.404), &p);
        assert!(a.simple && a.below_continuum && a.non_resonant);
        assert!((a.continuum_margin.0 - (0.25 - 0.494f64.powi(2))).abs() < 1e-15);
        assert!((a.resonance_margin.unwrap() - 0.078).abs() < 1e-12);
        assert!(!audit_assumptions(0.5, 0.0, 0.01, Some(1.404), &p).below_continuum);
    }

    #[test]
    fn aitken_on_geometric_sequence() {
        let s = |n: i32| 2.0 + 0.5f64.powi(n);
        assert!((aitken(s(1), s(2), s(3)) - 2.0).abs() < 1e-14);
        assert_eq!(aitken(1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn shooting_mode_matches_discrete_and_converges() {
        let p = PiecewiseProfile::exp_step(0.0);
        let w = |h: f64| ContinuousMode::shoot(&p, &Grid1D::new(40.0, h).unwrap(), 0.5, 0.49, 8).unwrap();
        let (a, b) = (w(0.1), w(0.05));
        // RK4 at h / 8: the frequency is grid independent to near round-off
        assert!((a.omega - b.omega).abs() < 1e-9, "{} {}", a.omega, b.omega);
        let (g, _) = ex21(40.0, 0.05);
        let st = ModeSolver::new(Scheme::Staggered, &g, &p).unwrap().nearest(0.5, 0.49).unwrap();
        assert!((st.omega - b.omega).abs() < 1e-3, "{} vs {}", st.omega, b.omega);
        // H and H' / eps1 continuous, hence eps1 E1 continuous
        let m = b.staggered(&p);
        let iface = b.grid.interface_index;
        let d1m = m.c1m[iface].re * p.eps1(Side::Minus, 0.0);
        let d1p = m.c1p[0].re * p.eps1(Side::Plus, 0.0);
        assert!((d1m - d1p).abs() < 1e-12 * d1m.abs());
        assert!(ContinuousMode::shoot(&p, &g, 0.5, 0.49, 3).is_err());
    }

    #[test]
    fn third_harmonic_by_continuation() {
        let (g, p) = ex21(60.0, 0.05);
        let mut s = ModeSolver::new(Scheme::Lifted, &g, &p).unwrap();
        s.threshold = 0.05;
        let w3 = continue_branch(&s, 0.5, 0.4935, 1.5, BRANCH_STEP).unwrap().unwrap();
        assert!((w3 - 1.404).abs() < 1e-2, "{w3}");
        assert!(w3 < 1.5);
    }
}
