//! Time stepping of the 2D TM interface problem in flux form.
//!
//! The state is `(D1, D2, H3)` on the staggered layout of [`crate::stagger`],
//! `n_x2` periodic samples per location row:
//!
//! ```text
//! dt D1 = dx2 H3                 (nodes, one copy per side at the interface)
//! dt D2 = -(H3[i+1] - H3[i]) / h (half nodes)
//! mu0 dt H3 = dx2 E1^ - (E2[i+1/2] - E2[i-1/2]) / h   (interior nodes)
//! ```
//!
//! with `E1^` the mean of the two one-sided values at the interface node.
//! `E2` and `H3` have a single storage location across the interface, so
//! their continuity holds by construction, and `D1` jumps stay constant in
//! time. The discrete Kerr law couples each component to the average of the
//! other one, `D1 = eps1 E1 + eps3 (E1^2 + E2^2) E1` with `E2` averaged to the
//! node and vice versa; [`invert_field`] solves it by Jacobi sweeps of scalar
//! cubics. `x2` derivatives are spectral, time stepping is classical RK4.
//! Fields vanish on the outer nodes (`D1 = H3 = 0`).
use crate::fft::SpectralDiff;
use crate::field::{fd1_x1_o4, Field2D};
use crate::grid::Grid2D;
use crate::prelude::*;
use crate::profile::{PiecewiseProfile, Side};
use crate::stagger::{Medium, Stag, StagField2D};
use crate::{Complex64, Error, Result};

/// Default Courant factor in `dt <= C h sqrt(mu0 eps1_min)`.
pub const CFL_DEFAULT: f64 = 0.5;
/// Relative tolerance of the constitutive inversion.
pub const INVERT_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 200;
const NEWTON_SWEEPS: usize = 40;

/// Material coefficients with the admissible field region.
#[derive(Debug, Clone)]
pub struct MaterialState {
    pub medium: Medium,
    pub eta: f64,
    /// Bound on `|E|` per side (`None` when `eps3 >= 0` there).
    pub radius_minus: Option<f64>,
    pub radius_plus: Option<f64>,
}

impl MaterialState {
    /// `eta` must lie in `(0, min(mu0, eps1_min))`.
    pub fn new(medium: Medium, eta: f64) -> Result<Self> {
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let e1m = min(&medium.eps1.c1m).min(min(&medium.eps1.c2[..medium.iface()]));
        let e1p = min(&medium.eps1.c1p).min(min(&medium.eps1.c2[medium.iface()..]));
        let e3m = min(&medium.eps3.c1m).min(min(&medium.eps3.c2[..medium.iface()]));
        let e3p = min(&medium.eps3.c1p).min(min(&medium.eps3.c2[medium.iface()..]));
        if !(eta > 0.0 && eta < medium.mu0.min(e1m).min(e1p)) {
            return Err(Error::InvalidArgument(format!("positivity margin {eta} outside (0, min(mu0, eps1))")));
        }
        let radius = |e1: f64, e3: f64| if e3 < 0.0 { Some(((eta - e1) / (3.0 * e3)).sqrt()) } else { None };
        Ok(Self { eta, radius_minus: radius(e1m, e3m), radius_plus: radius(e1p, e3p), medium })
    }

    /// Half the largest admissible margin.
    pub fn with_default_margin(medium: Medium) -> Result<Self> {
        let e1 = medium.eps1.c1m.iter().chain(&medium.eps1.c1p).chain(&medium.eps1.c2).cloned().fold(f64::INFINITY, f64::min);
        let eta = 0.5 * medium.mu0.min(e1);
        Self::new(medium, eta)
    }

    /// `min over points of (smallest eigenvalue of S(x, E) - eta)`, with `S`
    /// having eigenvalues `mu0`, `eps1 + eps3 |E|^2`, `eps1 + 3 eps3 |E|^2`.
    pub fn omega_margin(&self, e: &StagField2D) -> f64 {
        let md = &self.medium;
        let g = &md.grid;
        let iface = md.iface();
        let n2 = e.grid.n_x2;
        let mut worst = md.mu0 - self.eta;
        let mut check = |eps1: f64, eps3: f64, r2: f64| {
            let lam = (eps1 + eps3 * r2).min(eps1 + 3.0 * eps3 * r2);
            worst = worst.min(lam - self.eta);
        };
        for i in 0..g.len() {
            for j in 0..n2 {
                let e2 = hat2(&e.c2, i, g.len() - 1, n2, j);
                if i <= iface {
                    let e1 = e.c1m[i * n2 + j];
                    check(md.eps1.c1m[i], md.eps3.c1m[i], e1 * e1 + e2 * e2);
                }
                if i >= iface {
                    let e1 = e.c1p[(i - iface) * n2 + j];
                    check(md.eps1.c1p[i - iface], md.eps3.c1p[i - iface], e1 * e1 + e2 * e2);
                }
            }
        }
        worst
    }
}

/// Mean of the two half-node rows next to node `i` (one-sided at the ends).
fn hat2(c2: &[f64], i: usize, n_half: usize, n2: usize, j: usize) -> f64 {
    if i == 0 {
        c2[j]
    } else if i == n_half {
        c2[(i - 1) * n2 + j]
    } else {
        0.5 * (c2[(i - 1) * n2 + j] + c2[i * n2 + j])
    }
}

/// Root of `a r^3 + b r = c` on the monotone branch (`b > 0`), odd in `c`.
pub fn solve_cubic(a: f64, b: f64, c: f64, guess: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::ExitsOmega { d_norm: c.abs() });
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    if a == 0.0 {
        return Ok(c / b);
    }
    let s = c.signum();
    let target = c.abs();
    // monotone on [0, hi]
    let hi = if a > 0.0 {
        target / b
    } else {
        let rstar = (b / (3.0 * -a)).sqrt();
        if a * rstar * rstar * rstar + b * rstar < target {
            return Err(Error::ExitsOmega { d_norm: target });
        }
        rstar
    };
    let f = |r: f64| a * r * r * r + b * r - target;
    let (mut lo, mut up) = (0.0, hi);
    let mut r = (guess * s).clamp(lo, up);
    if r == 0.0 {
        r = 0.5 * up;
    }
    for _ in 0..200 {
        let fr = f(r);
        if fr == 0.0 {
            return Ok(s * r);
        }
        if fr > 0.0 {
            up = r;
        } else {
            lo = r;
        }
        let dfr = 3.0 * a * r * r + b;
        let mut next = r - fr / dfr;
        if !(next > lo && next < up) {
            next = 0.5 * (lo + up);
        }
        if (next - r).abs() <= INVERT_TOL * r.max(f64::MIN_POSITIVE) || up - lo <= INVERT_TOL * up {
            return Ok(s * next);
        }
        r = next;
    }
    Err(Error::NoConvergence { iterations: 200, residual: f(r).abs() })
}

/// Inverse of the pointwise law `d = (eps1 + eps3 |e|^2) e`.
pub fn invert_constitutive(d: [f64; 2], eps1: f64, eps3: f64) -> Result<[f64; 2]> {
    let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if dn == 0.0 {
        return Ok([0.0, 0.0]);
    }
    if eps3 == 0.0 {
        return Ok([d[0] / eps1, d[1] / eps1]);
    }
    let r = solve_cubic(eps3, eps1, dn, dn / eps1)?;
    if eps1 + 3.0 * eps3 * r * r <= 0.0 {
        return Err(Error::ExitsOmega { d_norm: dn });
    }
    Ok([d[0] * r / dn, d[1] * r / dn])
}

/// Displacement of one column: `(D1, D2, H3)` from `(E1, E2, H3)`.
pub fn displacement_column(md: &Medium, e: &Stag<f64>) -> Stag<f64> {
    let iface = md.iface();
    let mut d = e.clone();
    for (k, v) in d.c1m.iter_mut().enumerate() {
        let e2 = md.hat2_at_node(&e.c2, k);
        let e1 = e.c1m[k];
        *v = md.eps1.c1m[k] * e1 + md.eps3.c1m[k] * (e1 * e1 + e2 * e2) * e1;
    }
    for (k, v) in d.c1p.iter_mut().enumerate() {
        let e2 = md.hat2_at_node(&e.c2, k + iface);
        let e1 = e.c1p[k];
        *v = md.eps1.c1p[k] * e1 + md.eps3.c1p[k] * (e1 * e1 + e2 * e2) * e1;
    }
    for (i, v) in d.c2.iter_mut().enumerate() {
        let e1 = md.hat1_at_half(e, i);
        let e2 = e.c2[i];
        *v = md.eps1.c2[i] * e2 + md.eps3.c2[i] * (e1 * e1 + e2 * e2) * e2;
    }
    d
}

/// Displacement of a whole field.
pub fn displacement(md: &Medium, e: &StagField2D) -> StagField2D {
    let mut out = e.clone();
    for j in 0..e.grid.n_x2 {
        out.set_column(j, &displacement_column(md, &e.column(j)));
    }
    out
}

/// Solves the discrete Kerr law for `E` given `D` (component 3 is copied),
/// starting from `e`. Returns the number of sweeps.
pub fn invert_field(md: &Medium, d: &StagField2D, e: &mut StagField2D) -> Result<usize> {
    let n2 = d.grid.n_x2;
    e.c3.copy_from_slice(&d.c3);
    let linear = md.eps3.c1m.iter().chain(&md.eps3.c1p).chain(&md.eps3.c2).all(|&v| v == 0.0);
    if linear {
        for (k, row) in e.c1m.chunks_mut(n2).enumerate() {
            row.iter_mut().zip(&d.c1m[k * n2..]).for_each(|(x, y)| *x = y / md.eps1.c1m[k]);
        }
        for (k, row) in e.c1p.chunks_mut(n2).enumerate() {
            row.iter_mut().zip(&d.c1p[k * n2..]).for_each(|(x, y)| *x = y / md.eps1.c1p[k]);
        }
        for (k, row) in e.c2.chunks_mut(n2).enumerate() {
            row.iter_mut().zip(&d.c2[k * n2..]).for_each(|(x, y)| *x = y / md.eps1.c2[k]);
        }
        return Ok(0);
    }
    let start = e.clone();
    match newton_jacobi(md, d, e) {
        Ok(n) => Ok(n),
        Err(_) => {
            e.clone_from(&start);
            jacobi(md, d, e, MAX_SWEEPS)
        }
    }
}

/// One Newton step per location on `a x^3 + b x = c`, `b = eps1 + eps3 p^2`
/// with the partner row `p`; returns the largest change, the largest new
/// value and the smallest diagonal derivative.
#[inline]
fn newton_row(out: &mut [f64], x: &[f64], c: &[f64], p: &[f64], eps1: f64, eps3: f64) -> (f64, f64, f64) {
    let mut change: f64 = 0.0;
    let mut emax: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for (((o, &x), &c), &p) in out.iter_mut().zip(x).zip(c).zip(p) {
        let b = eps1 + eps3 * p * p;
        let x2 = x * x;
        let df = 3.0 * eps3 * x2 + b;
        let nx = x - ((eps3 * x2 + b) * x - c) / df;
        *o = nx;
        change = change.max((nx - x).abs());
        emax = emax.max(nx.abs());
        dmin = dmin.min(df);
    }
    (change, emax, dmin)
}

fn newton_jacobi(md: &Medium, d: &StagField2D, e: &mut StagField2D) -> Result<usize> {
    let iface = md.iface();
    let len = md.grid.len();
    let n2 = d.grid.n_x2;
    let mut new1m = e.c1m.clone();
    let mut new1p = e.c1p.clone();
    let mut new2 = e.c2.clone();
    let mut partner = vec![0.0; n2];
    let row = |r: usize| r * n2..(r + 1) * n2;
    for sweep in 1..=NEWTON_SWEEPS {
        let mut change: f64 = 0.0;
        let mut emax: f64 = 0.0;
        let mut dmin = f64::INFINITY;
        let mut acc = |r: (f64, f64, f64)| {
            change = change.max(r.0);
            emax = emax.max(r.1);
            dmin = dmin.min(r.2);
        };
        for i in 0..len {
            if i == 0 {
                partner.copy_from_slice(&e.c2[row(0)]);
            } else if i == len - 1 {
                partner.copy_from_slice(&e.c2[row(i - 1)]);
            } else {
                let (a, b) = (&e.c2[row(i - 1)], &e.c2[row(i)]);
                for ((p, x), y) in partner.iter_mut().zip(a).zip(b) {
                    *p = 0.5 * (x + y);
                }
            }
            if i <= iface {
                let rg = row(i);
                acc(newton_row(&mut new1m[rg.clone()], &e.c1m[rg.clone()], &d.c1m[rg], &partner, md.eps1.c1m[i], md.eps3.c1m[i]));
            }
            if i >= iface {
                let r = i - iface;
                let rg = row(r);
                acc(newton_row(&mut new1p[rg.clone()], &e.c1p[rg.clone()], &d.c1p[rg], &partner, md.eps1.c1p[r], md.eps3.c1p[r]));
            }
        }
        for i in 0..len - 1 {
            let (blk, r) = if i < iface { (&e.c1m, i) } else { (&e.c1p, i - iface) };
            let (a, b) = (&blk[r * n2..(r + 1) * n2], &blk[(r + 1) * n2..(r + 2) * n2]);
            for ((p, x), y) in partner.iter_mut().zip(a).zip(b) {
                *p = 0.5 * (x + y);
            }
            let rg = i * n2..(i + 1) * n2;
            acc(newton_row(&mut new2[rg.clone()], &e.c2[rg.clone()], &d.c2[rg], &partner, md.eps1.c2[i], md.eps3.c2[i]));
        }
        core::mem::swap(&mut e.c1m, &mut new1m);
        core::mem::swap(&mut e.c1p, &mut new1p);
        core::mem::swap(&mut e.c2, &mut new2);
        if !(dmin > 0.0) || !change.is_finite() {
            return Err(Error::ExitsOmega { d_norm: d.max_abs() });
        }
        if change <= INVERT_TOL * emax {
            return Ok(sweep);
        }
    }
    Err(Error::NoConvergence { iterations: NEWTON_SWEEPS, residual: f64::NAN })
}

/// Jacobi sweeps solving each scalar cubic exactly; slower, but robust near the
/// edge of the admissible region.
fn jacobi(md: &Medium, d: &StagField2D, e: &mut StagField2D, max_sweeps: usize) -> Result<usize> {
    let iface = md.iface();
    let len = md.grid.len();
    let n2 = d.grid.n_x2;
    let solve = solve_cubic;
    let mut new1m = e.c1m.clone();
    let mut new1p = e.c1p.clone();
    let mut new2 = e.c2.clone();
    for sweep in 1..=max_sweeps {
        let mut change: f64 = 0.0;
        let mut emax: f64 = 0.0;
        for i in 0..len {
            for j in 0..n2 {
                let p2 = hat2(&e.c2, i, len - 1, n2, j);
                if i <= iface {
                    let k = i * n2 + j;
                    let (a, b) = (md.eps3.c1m[i], md.eps1.c1m[i] + md.eps3.c1m[i] * p2 * p2);
                    new1m[k] = solve(a, b, d.c1m[k], e.c1m[k])?;
                    change = change.max((new1m[k] - e.c1m[k]).abs());
                    emax = emax.max(new1m[k].abs());
                }
                if i >= iface {
                    let r = i - iface;
                    let k = r * n2 + j;
                    let (a, b) = (md.eps3.c1p[r], md.eps1.c1p[r] + md.eps3.c1p[r] * p2 * p2);
                    new1p[k] = solve(a, b, d.c1p[k], e.c1p[k])?;
                    change = change.max((new1p[k] - e.c1p[k]).abs());
                    emax = emax.max(new1p[k].abs());
                }
            }
        }
        for i in 0..len - 1 {
            let (ra, rb) = if i < iface { (&e.c1m, i) } else { (&e.c1p, i - iface) };
            for j in 0..n2 {
                let p1 = 0.5 * (ra[rb * n2 + j] + ra[(rb + 1) * n2 + j]);
                let k = i * n2 + j;
                let (a, b) = (md.eps3.c2[i], md.eps1.c2[i] + md.eps3.c2[i] * p1 * p1);
                new2[k] = solve(a, b, d.c2[k], e.c2[k])?;
                change = change.max((new2[k] - e.c2[k]).abs());
                emax = emax.max(new2[k].abs());
            }
        }
        core::mem::swap(&mut e.c1m, &mut new1m);
        core::mem::swap(&mut e.c1p, &mut new1p);
        core::mem::swap(&mut e.c2, &mut new2);
        if !change.is_finite() {
            return Err(Error::NotFinite("constitutive inversion".into()));
        }
        if change <= INVERT_TOL * emax {
            return Ok(sweep);
        }
    }
    Err(Error::NoConvergence { iterations: max_sweeps, residual: f64::NAN })
}

/// Divergence of `D` at the half nodes and the `D1` jump at the interface.
#[derive(Debug, Clone)]
pub struct DivJump {
    /// Row-major over half nodes, `n_x2` per row.
    pub div: Vec<f64>,
    pub jump: Vec<f64>,
    pub div_l2: f64,
    pub jump_max: f64,
    pub jump_l2: f64,
}

/// `(D1[i+1] - D1[i]) / h + dx2 D2` on each half (one-sided at the interface)
/// and `D1(0+) - D1(0-)` per x2 sample.
pub fn divergence_and_jump(md: &Medium, d: &StagField2D) -> Result<DivJump> {
    let g = &md.grid;
    let iface = md.iface();
    let n2 = d.grid.n_x2;
    let h = g.h;
    let dx2 = d.grid.dx2();
    let diff = SpectralDiff::new(n2, d.grid.length_x2())?;
    let mut div = vec![0.0; (g.len() - 1) * n2];
    let mut scratch = vec![Complex64::new(0.0, 0.0); n2];
    let mut rows = d.c2.chunks(n2).enumerate();
    let mut buf_a = vec![0.0; n2];
    let mut buf_b = vec![0.0; n2];
    loop {
        let a = rows.next();
        let b = rows.next();
        let Some((ia, ra)) = a else { break };
        let zero = vec![0.0; n2];
        let (ib, rb) = b.map(|(i, r)| (Some(i), r)).unwrap_or((None, &zero[..]));
        diff.derivative_real_pair(ra, rb, &mut buf_a, &mut buf_b, &mut scratch);
        div[ia * n2..(ia + 1) * n2].copy_from_slice(&buf_a);
        if let Some(ib) = ib {
            div[ib * n2..(ib + 1) * n2].copy_from_slice(&buf_b);
        }
    }
    for i in 0..g.len() - 1 {
        let (blk, r) = if i < iface { (&d.c1m, i) } else { (&d.c1p, i - iface) };
        for j in 0..n2 {
            div[i * n2 + j] += (blk[(r + 1) * n2 + j] - blk[r * n2 + j]) / h;
        }
    }
    let jump: Vec<f64> = (0..n2).map(|j| d.c1p[j] - d.c1m[iface * n2 + j]).collect();
    let div_l2 = (div.iter().map(|v| v * v).sum::<f64>() * h * dx2).sqrt();
    let jump_max = jump.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let jump_l2 = (jump.iter().map(|v| v * v).sum::<f64>() * dx2).sqrt();
    Ok(DivJump { div, jump, div_l2, jump_max, jump_l2 })
}

/// Flux state `(D1, D2, H3)` with the field `(E1, E2, H3)` it implies.
#[derive(Debug, Clone)]
pub struct FluxState {
    pub flux: StagField2D,
    pub e: StagField2D,
}

impl FluxState {
    pub fn t(&self) -> f64 {
        self.flux.t
    }

    /// From a field `(E1, E2, H3)`.
    pub fn from_field(md: &Medium, e: StagField2D) -> Self {
        Self { flux: displacement(md, &e), e }
    }

    pub fn zeros(grid: &Grid2D) -> Self {
        Self { flux: StagField2D::zeros(grid, 0.0), e: StagField2D::zeros(grid, 0.0) }
    }
}

/// RK4 stepper for the flux form.
#[derive(Debug, Clone)]
pub struct Maxwell2D {
    pub material: MaterialState,
    pub grid2: Grid2D,
    pub cfl: f64,
    diff: SpectralDiff,
}

impl Maxwell2D {
    pub fn new(material: MaterialState, grid2: &Grid2D) -> Result<Self> {
        if grid2.grid_x1 != material.medium.grid {
            return Err(Error::Structural("x1 grid differs from the material grid".into()));
        }
        let diff = SpectralDiff::new(grid2.n_x2, grid2.length_x2())?;
        Ok(Self { material, grid2: *grid2, cfl: CFL_DEFAULT, diff })
    }

    fn medium(&self) -> &Medium {
        &self.material.medium
    }

    /// Largest admissible time step `C h sqrt(mu0 eps1_min)`.
    pub fn dt_max(&self) -> f64 {
        let md = self.medium();
        let e1 = md.eps1.c1m.iter().chain(&md.eps1.c1p).chain(&md.eps1.c2).cloned().fold(f64::INFINITY, f64::min);
        self.cfl * md.grid.h * (md.mu0 * e1).sqrt()
    }

    /// Time derivative of the flux for the field `e`.
    pub fn rate(&self, e: &StagField2D) -> StagField2D {
        let md = self.medium();
        let g = &md.grid;
        let iface = md.iface();
        let len = g.len();
        let n2 = self.grid2.n_x2;
        let h = g.h;
        let mut out = StagField2D::zeros(&self.grid2, e.t);
        let mut scratch = vec![Complex64::new(0.0, 0.0); n2];
        let mut dh = vec![0.0; n2];
        let mut de = vec![0.0; n2];
        let mut ebar = vec![0.0; n2];
        for i in 1..len - 1 {
            let h3 = &e.c3[i * n2..(i + 1) * n2];
            if i < iface {
                ebar.copy_from_slice(&e.c1m[i * n2..(i + 1) * n2]);
            } else if i > iface {
                ebar.copy_from_slice(&e.c1p[(i - iface) * n2..(i - iface + 1) * n2]);
            } else {
                for (j, v) in ebar.iter_mut().enumerate() {
                    *v = 0.5 * (e.c1m[i * n2 + j] + e.c1p[j]);
                }
            }
            self.diff.derivative_real_pair(h3, &ebar, &mut dh, &mut de, &mut scratch);
            if i <= iface {
                out.c1m[i * n2..(i + 1) * n2].copy_from_slice(&dh);
            }
            if i >= iface {
                out.c1p[(i - iface) * n2..(i - iface + 1) * n2].copy_from_slice(&dh);
            }
            for j in 0..n2 {
                let curl = de[j] - (e.c2[i * n2 + j] - e.c2[(i - 1) * n2 + j]) / h;
                out.c3[i * n2 + j] = curl / md.mu0;
            }
        }
        for i in 0..len - 1 {
            for j in 0..n2 {
                out.c2[i * n2 + j] = -(e.c3[(i + 1) * n2 + j] - e.c3[i * n2 + j]) / h;
            }
        }
        out
    }

    /// One classical RK4 step.
    pub fn step(&self, state: &mut FluxState, dt: f64) -> Result<()> {
        let bound = self.dt_max();
        if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
            return Err(Error::Cfl { dt, bound });
        }
        let md = self.medium();
        let t0 = state.flux.t;
        let k1 = self.rate(&state.e);
        let mut stage = state.flux.clone();
        let mut e = state.e.clone();
        let eval = |q: &mut StagField2D, e: &mut StagField2D, base: &StagField2D, k: &StagField2D, a: f64| -> Result<StagField2D> {
            q.clone_from(base);
            q.axpy(a, k);
            invert_field(md, q, e)?;
            Ok(self.rate(e))
        };
        let k2 = eval(&mut stage, &mut e, &state.flux, &k1, 0.5 * dt)?;
        let k3 = eval(&mut stage, &mut e, &state.flux, &k2, 0.5 * dt)?;
        let k4 = eval(&mut stage, &mut e, &state.flux, &k3, dt)?;
        let mut next = state.flux.clone();
        next.axpy(dt / 6.0, &k1);
        next.axpy(dt / 3.0, &k2);
        next.axpy(dt / 3.0, &k3);
        next.axpy(dt / 6.0, &k4);
        next.t = t0 + dt;
        invert_field(md, &next, &mut e)?;
        e.t = next.t;
        if !next.is_finite() || !e.is_finite() {
            return Err(Error::NotFinite(format!("Maxwell state at t = {}", next.t)));
        }
        state.flux = next;
        state.e = e;
        Ok(())
    }

    /// Advances `n_steps` steps of size `dt`, calling `observe` at the start
    /// and after every `every`-th step. Fails when the field leaves the
    /// admissible region.
    pub fn run<F: FnMut(&FluxState) -> Result<()>>(
        &self,
        state: &mut FluxState,
        dt: f64,
        n_steps: usize,
        every: usize,
        mut observe: F,
    ) -> Result<()> {
        let every = every.max(1);
        observe(state)?;
        for s in 1..=n_steps {
            self.step(state, dt)?;
            if s % every == 0 || s == n_steps {
                let margin = self.material.omega_margin(&state.e);
                if !(margin > 0.0) {
                    return Err(Error::ExitsOmega { d_norm: state.flux.max_abs() });
                }
                observe(state)?;
            }
        }
        Ok(())
    }

    /// Discrete energy `1/2 <E, D> + 1/2 mu0 |H3|^2` in the staggered weights
    /// (quadratic part) plus the quartic Kerr part `3/4 eps3 |E|^4` at the nodes.
    pub fn energy(&self, state: &FluxState) -> f64 {
        let md = self.medium();
        let n2 = self.grid2.n_x2;
        let dx2 = self.grid2.dx2();
        let mut total = 0.0;
        for j in 0..n2 {
            let e = state.e.column(j);
            let lin = md.inner(&md.apply_lambda(&e), &e);
            let quartic = {
                let iface = md.iface();
                let h = md.grid.h;
                let mut s = 0.0;
                let nm = e.c1m.len();
                for (k, v) in e.c1m.iter().enumerate() {
                    let e2 = md.hat2_at_node(&e.c2, k);
                    let w = if k == 0 || k + 1 == nm { 0.5 * h } else { h };
                    s += w * md.eps3.c1m[k] * (v * v + e2 * e2).powi(2);
                }
                let np = e.c1p.len();
                for (k, v) in e.c1p.iter().enumerate() {
                    let e2 = md.hat2_at_node(&e.c2, k + iface);
                    let w = if k == 0 || k + 1 == np { 0.5 * h } else { h };
                    s += w * md.eps3.c1p[k] * (v * v + e2 * e2).powi(2);
                }
                s
            };
            total += dx2 * (0.5 * lin + 0.75 * quartic);
        }
        total
    }
}

/// Interface defects of one compatibility order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatDefect {
    pub order: usize,
    pub max2: f64,
    pub l2_2: f64,
    pub max3: f64,
    pub l2_3: f64,
}

struct BlockState {
    rows: usize,
    eps1: Vec<f64>,
    eps3: Vec<f64>,
    /// Time derivatives of orders `0..` of `E1, E2, H3`.
    e1: Vec<Vec<f64>>,
    e2: Vec<Vec<f64>>,
    h3: Vec<Vec<f64>>,
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Interface jumps of components 2 and 3 of the time derivatives
/// `V^(k) = d^k U / dt^k`, `k = 0..=order`, implied by the nonlinear system at
/// `t = 0` for the collocated field `u0 = (E1, E2, H3)`. Derivatives are
/// fourth-order one-sided/central differences in `x1` (per side), so that the
/// nested application up to order 3 stays consistent, and spectral in `x2`.
pub fn compatibility_check(u0: &Field2D, profile: &PiecewiseProfile, order: usize) -> Result<Vec<CompatDefect>> {
    if !(1..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let grid = &u0.grid;
    let g = &grid.grid_x1;
    let n2 = grid.n_x2;
    let h = g.h;
    let dx2 = grid.dx2();
    let diff = SpectralDiff::new(n2, grid.length_x2())?;
    let iface = g.interface_index;
    let mut blocks = Vec::new();
    for side in [Side::Minus, Side::Plus] {
        let (rows, x0) = match side {
            Side::Minus => (iface + 1, 0),
            Side::Plus => (g.len() - iface, iface),
        };
        let eps1 = (0..rows).map(|r| profile.eps1(side, g.x(x0 + r))).collect();
        let eps3 = (0..rows).map(|r| profile.eps3(side, g.x(x0 + r))).collect();
        blocks.push(BlockState {
            rows,
            eps1,
            eps3,
            e1: vec![u0.u1.block(side).to_vec()],
            e2: vec![u0.u2.block(side).to_vec()],
            h3: vec![u0.u3.block(side).to_vec()],
        });
    }
    let dx2_of = |v: &[f64], rows: usize| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n2];
        for r in 0..rows {
            for (b, x) in buf.iter_mut().zip(&v[r * n2..(r + 1) * n2]) {
                *b = Complex64::new(*x, 0.0);
            }
            diff.derivative_in_place(&mut buf, 1);
            for (o, b) in out[r * n2..(r + 1) * n2].iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    };
    let dx1_of = |v: &[f64], rows: usize| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for r in 0..rows {
            for j in 0..n2 {
                out[r * n2 + j] = fd1_x1_o4(|q| v[q * n2 + j], r, rows, h);
            }
        }
        out
    };
    for b in blocks.iter_mut() {
        let rows = b.rows;
        for n in 0..order {
            // H^(n+1) from E^(n)
            let de1 = dx2_of(&b.e1[n], rows);
            let de2 = dx1_of(&b.e2[n], rows);
            let mu0 = profile.mu0;
            let hn: Vec<f64> = de1.iter().zip(&de2).map(|(a, c)| (a - c) / mu0).collect();
            // E^(n+1) = J^-1 (r^(n) - sum_k C(n,k) J^(k) E^(n+1-k))
            let r1 = dx2_of(&b.h3[n], rows);
            let r2: Vec<f64> = dx1_of(&b.h3[n], rows).iter().map(|v| -v).collect();
            let mut n1 = vec![0.0; rows * n2];
            let mut n2v = vec![0.0; rows * n2];
            for r in 0..rows {
                let (eps1, eps3) = (b.eps1[r], b.eps3[r]);
                for j in 0..n2 {
                    let k = r * n2 + j;
                    let mut rhs = [r1[k], r2[k]];
                    for kk in 1..=n {
                        // J^(kk) = eps3 [ (E.E)^(kk) I + 2 (E x E)^(kk) ]
                        let mut dot = 0.0;
                        let mut outer = [[0.0; 2]; 2];
                        for a in 0..=kk {
                            let c = binom(kk, a);
                            let ea = [b.e1[a][k], b.e2[a][k]];
                            let eb = [b.e1[kk - a][k], b.e2[kk - a][k]];
                            dot += c * (ea[0] * eb[0] + ea[1] * eb[1]);
                            for p in 0..2 {
                                for q in 0..2 {
                                    outer[p][q] += c * ea[p] * eb[q];
                                }
                            }
                        }
                        let w = [b.e1[n + 1 - kk][k], b.e2[n + 1 - kk][k]];
                        let cnk = binom(n, kk);
                        for p in 0..2 {
                            let jw = eps3 * (dot * w[p] + 2.0 * (outer[p][0] * w[0] + outer[p][1] * w[1]));
                            rhs[p] -= cnk * jw;
                        }
                    }
                    let (e1, e2) = (b.e1[0][k], b.e2[0][k]);
                    let s = e1 * e1 + e2 * e2;
                    let lam2 = eps1 + eps3 * s;
                    let lam3 = eps1 + 3.0 * eps3 * s;
                    if !(lam2 > 0.0 && lam3 > 0.0 && profile.mu0 > 0.0) {
                        return Err(Error::ExitsOmega { d_norm: s.sqrt() });
                    }
                    let j00 = lam2 + 2.0 * eps3 * e1 * e1;
                    let j11 = lam2 + 2.0 * eps3 * e2 * e2;
                    let j01 = 2.0 * eps3 * e1 * e2;
                    let det = j00 * j11 - j01 * j01;
                    n1[k] = (j11 * rhs[0] - j01 * rhs[1]) / det;
                    n2v[k] = (j00 * rhs[1] - j01 * rhs[0]) / det;
                }
            }
            b.e1.push(n1);
            b.e2.push(n2v);
            b.h3.push(hn);
        }
    }
    let (bm, bp) = (&blocks[0], &blocks[1]);
    let mut out = Vec::new();
    for k in 0..=order {
        let jumps = |vm: &[f64], vp: &[f64]| {
            let j: Vec<f64> = (0..n2).map(|q| vp[q] - vm[iface * n2 + q]).collect();
            let mx = j.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let l2 = (j.iter().map(|v| v * v).sum::<f64>() * dx2).sqrt();
            (mx, l2)
        };
        let (max2, l2_2) = jumps(&bm.e2[k], &bp.e2[k]);
        let (max3, l2_3) = jumps(&bm.h3[k], &bp.h3[k]);
        out.push(CompatDefect { order: k, max2, l2_2, max3, l2_3 });
    }
    Ok(out)
}
