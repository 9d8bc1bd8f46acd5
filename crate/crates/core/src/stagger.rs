//! Staggered finite-volume discretization in `x1`.
//!
//! Component 1 (E1, D1) and component 3 (H3) live on the integer nodes,
//! component 2 (E2, D2) on the half nodes. Component 1 carries two one-sided
//! values at the interface node; component 3 is shared there. Row 3 of the
//! operator uses the mean of the two one-sided component-1 values at the
//! interface. Quadrature weights are trapezoidal per half-line for nodes and
//! midpoint for half nodes, which makes the discrete `T(k, w) = L(k) + w Lambda`
//! Hermitian in the weighted inner product.
use crate::banded::{Banded, BandedLu, Scalar};
use crate::field::Field2D;
use crate::grid::{Grid1D, Grid2D};
use crate::prelude::*;
use crate::profile::{PiecewiseProfile, Side};
use crate::{Complex64, Error, Result};

/// Three-component field on the staggered layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Stag<T> {
    /// Component 1 on nodes `0..=interface_index`, last entry = left trace.
    pub c1m: Vec<T>,
    /// Component 1 on nodes `interface_index..len`, first entry = right trace.
    pub c1p: Vec<T>,
    /// Component 2 on half nodes `0..len-1`.
    pub c2: Vec<T>,
    /// Component 3 on nodes `0..len`.
    pub c3: Vec<T>,
}

impl<T: Scalar> Stag<T> {
    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            c1m: vec![T::zero(); grid.interface_index + 1],
            c1p: vec![T::zero(); grid.len() - grid.interface_index],
            c2: vec![T::zero(); grid.n_half()],
            c3: vec![T::zero(); grid.len()],
        }
    }

    pub fn map<U, F: Fn(T) -> U>(&self, f: F) -> Stag<U> {
        Stag {
            c1m: self.c1m.iter().map(|&v| f(v)).collect(),
            c1p: self.c1p.iter().map(|&v| f(v)).collect(),
            c2: self.c2.iter().map(|&v| f(v)).collect(),
            c3: self.c3.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(T, T) -> T>(&self, other: &Self, f: F) -> Self {
        let z = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        Stag { c1m: z(&self.c1m, &other.c1m), c1p: z(&self.c1p, &other.c1p), c2: z(&self.c2, &other.c2), c3: z(&self.c3, &other.c3) }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn axpy(&mut self, a: T, x: &Self) {
        for (u, v) in self.c1m.iter_mut().zip(&x.c1m) {
            *u = *u + a * *v;
        }
        for (u, v) in self.c1p.iter_mut().zip(&x.c1p) {
            *u = *u + a * *v;
        }
        for (u, v) in self.c2.iter_mut().zip(&x.c2) {
            *u = *u + a * *v;
        }
        for (u, v) in self.c3.iter_mut().zip(&x.c3) {
            *u = *u + a * *v;
        }
    }

    /// Component 1 at node `i`, taking the one-sided value from `side` at the interface.
    pub fn c1(&self, iface: usize, i: usize, side: Side) -> T {
        if i < iface || (i == iface && side == Side::Minus) {
            self.c1m[i]
        } else {
            self.c1p[i - iface]
        }
    }

    /// Component 1 at node `i` with the interface mean.
    pub fn c1_bar(&self, iface: usize, i: usize) -> T {
        if i == iface {
            (self.c1m[iface] + self.c1p[0]) * T::from_f64(0.5)
        } else {
            self.c1(iface, i, Side::Plus)
        }
    }

    pub fn is_finite(&self) -> bool {
        let ok = |v: &[T]| v.iter().all(|x| x.modulus().is_finite());
        ok(&self.c1m) && ok(&self.c1p) && ok(&self.c2) && ok(&self.c3)
    }

    pub fn max_modulus(&self) -> f64 {
        let m = |v: &[T]| v.iter().fold(0.0f64, |a, x| a.max(x.modulus()));
        m(&self.c1m).max(m(&self.c1p)).max(m(&self.c2)).max(m(&self.c3))
    }
}

impl Stag<f64> {
    pub fn to_complex(&self) -> Stag<Complex64> {
        self.map(|v| Complex64::new(v, 0.0))
    }
}

impl Stag<Complex64> {
    pub fn re(&self) -> Stag<f64> {
        self.map(|v| v.re)
    }

    pub fn im(&self) -> Stag<f64> {
        self.map(|v| v.im)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }
}

/// Quadrature weight of component-1 node `k` within its one-sided array.
fn weight_c1(h: f64, k: usize, len: usize) -> f64 {
    if k == 0 || k + 1 == len {
        0.5 * h
    } else {
        h
    }
}

/// Coefficients sampled on the staggered layout.
#[derive(Debug, Clone)]
pub struct Medium {
    pub grid: Grid1D,
    pub mu0: f64,
    pub eps1: Stag<f64>,
    pub eps3: Stag<f64>,
}

impl Medium {
    pub fn new(grid: &Grid1D, profile: &PiecewiseProfile) -> Result<Self> {
        profile.validate(grid)?;
        let sample = |f: &dyn Fn(Side, f64) -> f64| {
            let iface = grid.interface_index;
            Stag {
                c1m: (0..=iface).map(|i| f(Side::Minus, grid.x(i))).collect(),
                c1p: (iface..grid.len()).map(|i| f(Side::Plus, grid.x(i))).collect(),
                c2: (0..grid.n_half())
                    .map(|i| {
                        let x = grid.x_half(i);
                        f(PiecewiseProfile::side_of(x), x)
                    })
                    .collect(),
                c3: (0..grid.len())
                    .map(|i| {
                        let x = grid.x(i);
                        f(PiecewiseProfile::side_of(x), x)
                    })
                    .collect(),
            }
        };
        let eps1 = sample(&|s, x| profile.eps1(s, x));
        let eps3 = sample(&|s, x| profile.eps3(s, x));
        Ok(Self { grid: *grid, mu0: profile.mu0, eps1, eps3 })
    }

    pub fn iface(&self) -> usize {
        self.grid.interface_index
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Weighted inner product `<u, v> = sum w u conj(v)`.
    pub fn inner<T: Scalar>(&self, u: &Stag<T>, v: &Stag<T>) -> T {
        let h = self.grid.h;
        let mut s = T::zero();
        let n1m = u.c1m.len();
        for k in 0..n1m {
            s = s + T::from_f64(weight_c1(h, k, n1m)) * u.c1m[k] * v.c1m[k].conj();
        }
        let n1p = u.c1p.len();
        for k in 0..n1p {
            s = s + T::from_f64(weight_c1(h, k, n1p)) * u.c1p[k] * v.c1p[k].conj();
        }
        for (a, b) in u.c2.iter().zip(&v.c2) {
            s = s + T::from_f64(h) * *a * b.conj();
        }
        let n3 = u.c3.len();
        for k in 0..n3 {
            let w = if k == 0 || k + 1 == n3 { 0.5 * h } else { h };
            s = s + T::from_f64(w) * u.c3[k] * v.c3[k].conj();
        }
        s
    }

    pub fn norm<T: Scalar>(&self, u: &Stag<T>) -> f64 {
        self.inner(u, u).modulus().sqrt()
    }

    /// `Lambda v = (eps1 v1, eps1 v2, mu0 v3)`.
    pub fn apply_lambda<T: Scalar>(&self, v: &Stag<T>) -> Stag<T> {
        let mul = |c: &[f64], x: &[T]| c.iter().zip(x).map(|(&a, &b)| T::from_f64(a) * b).collect();
        Stag {
            c1m: mul(&self.eps1.c1m, &v.c1m),
            c1p: mul(&self.eps1.c1p, &v.c1p),
            c2: mul(&self.eps1.c2, &v.c2),
            c3: v.c3.iter().map(|&b| T::from_f64(self.mu0) * b).collect(),
        }
    }

    /// `L1 v = (v3, 0, v1)`, with the interface mean of `v1` in row 3.
    pub fn apply_l1<T: Scalar>(&self, v: &Stag<T>) -> Stag<T> {
        let iface = self.iface();
        let len = self.len();
        let mut out = Stag::zeros(&self.grid);
        for i in 1..len - 1 {
            if i <= iface {
                out.c1m[i] = v.c3[i];
            }
            if i >= iface {
                out.c1p[i - iface] = v.c3[i];
            }
            out.c3[i] = v.c1_bar(iface, i);
        }
        out
    }

    /// Matrix-free `T(k, w) v`. Boundary rows (nodes 0 and len-1) are zero.
    pub fn apply_t(&self, k: f64, omega: f64, v: &Stag<Complex64>) -> Stag<Complex64> {
        let iface = self.iface();
        let len = self.len();
        let h = self.grid.h;
        let ih = Complex64::new(0.0, 1.0 / h);
        let mut out = Stag::zeros(&self.grid);
        for i in 1..len - 1 {
            if i <= iface {
                out.c1m[i] = k * v.c3[i] + omega * self.eps1.c1m[i] * v.c1m[i];
            }
            if i >= iface {
                let j = i - iface;
                out.c1p[j] = k * v.c3[i] + omega * self.eps1.c1p[j] * v.c1p[j];
            }
            out.c3[i] = k * v.c1_bar(iface, i) + ih * (v.c2[i] - v.c2[i - 1]) + omega * self.mu0 * v.c3[i];
        }
        for i in 0..len - 1 {
            out.c2[i] = ih * (v.c3[i + 1] - v.c3[i]) + omega * self.eps1.c2[i] * v.c2[i];
        }
        out
    }

    /// Zeroes entries that are not unknowns of `T` (boundary nodes of components 1 and 3).
    pub fn clear_boundary<T: Scalar>(&self, v: &mut Stag<T>) {
        let n = v.c1p.len();
        v.c1m[0] = T::zero();
        v.c1p[n - 1] = T::zero();
        let n3 = v.c3.len();
        v.c3[0] = T::zero();
        v.c3[n3 - 1] = T::zero();
    }

    /// Interface mean of component 2 at node `i` (partner value in the Kerr term).
    pub fn hat2_at_node<T: Scalar>(&self, c2: &[T], i: usize) -> T {
        if i == 0 {
            c2[0]
        } else if i == c2.len() {
            c2[i - 1]
        } else {
            (c2[i - 1] + c2[i]) * T::from_f64(0.5)
        }
    }

    /// Mean of component 1 at half node `i` from the owning block.
    pub fn hat1_at_half<T: Scalar>(&self, v: &Stag<T>, i: usize) -> T {
        let iface = self.iface();
        let half = T::from_f64(0.5);
        if i < iface {
            (v.c1m[i] + v.c1m[i + 1]) * half
        } else {
            (v.c1p[i - iface] + v.c1p[i + 1 - iface]) * half
        }
    }
}

/// Position of each unknown of `T` in the banded system.
#[derive(Debug, Clone)]
struct Layout {
    v1m: Vec<usize>,
    v1p: Vec<usize>,
    v2: Vec<usize>,
    v3: Vec<usize>,
    n: usize,
}

const NONE: usize = usize::MAX;

impl Layout {
    fn new(grid: &Grid1D) -> Self {
        let len = grid.len();
        let iface = grid.interface_index;
        let mut v1m = vec![NONE; iface + 1];
        let mut v1p = vec![NONE; len - iface];
        let mut v2 = vec![NONE; len - 1];
        let mut v3 = vec![NONE; len];
        let mut p = 0;
        v2[0] = p;
        p += 1;
        for i in 1..len - 1 {
            if i <= iface {
                v1m[i] = p;
                p += 1;
            }
            if i >= iface {
                v1p[i - iface] = p;
                p += 1;
            }
            v3[i] = p;
            p += 1;
            v2[i] = p;
            p += 1;
        }
        Self { v1m, v1p, v2, v3, n: p }
    }

    fn gather(&self, v: &Stag<Complex64>) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); self.n];
        let put = |x: &mut Vec<Complex64>, idx: &[usize], vals: &[Complex64]| {
            for (&p, &val) in idx.iter().zip(vals) {
                if p != NONE {
                    x[p] = val;
                }
            }
        };
        put(&mut x, &self.v1m, &v.c1m);
        put(&mut x, &self.v1p, &v.c1p);
        put(&mut x, &self.v2, &v.c2);
        put(&mut x, &self.v3, &v.c3);
        x
    }

    fn scatter(&self, x: &[Complex64], grid: &Grid1D) -> Stag<Complex64> {
        let mut v = Stag::zeros(grid);
        let get = |idx: &[usize], out: &mut [Complex64]| {
            for (&p, o) in idx.iter().zip(out.iter_mut()) {
                if p != NONE {
                    *o = x[p];
                }
            }
        };
        get(&self.v1m, &mut v.c1m);
        get(&self.v1p, &mut v.c1p);
        get(&self.v2, &mut v.c2);
        get(&self.v3, &mut v.c3);
        v
    }
}

/// Banded assembly of `T(k, w)`; rows are ordered like the unknowns.
pub fn assemble_t_banded(medium: &Medium, k: f64, omega: f64) -> Banded<Complex64> {
    let lay = Layout::new(&medium.grid);
    let iface = medium.iface();
    let len = medium.len();
    let h = medium.grid.h;
    let c = |re: f64| Complex64::new(re, 0.0);
    let ih = Complex64::new(0.0, 1.0 / h);
    let mut a = Banded::zeros(lay.n, 3, 3);
    for i in 1..len - 1 {
        if i <= iface {
            let r = lay.v1m[i];
            a.add(r, lay.v3[i], c(k));
            a.add(r, r, c(omega * medium.eps1.c1m[i]));
        }
        if i >= iface {
            let r = lay.v1p[i - iface];
            a.add(r, lay.v3[i], c(k));
            a.add(r, r, c(omega * medium.eps1.c1p[i - iface]));
        }
        let r = lay.v3[i];
        if i == iface {
            a.add(r, lay.v1m[i], c(0.5 * k));
            a.add(r, lay.v1p[0], c(0.5 * k));
        } else if i < iface {
            a.add(r, lay.v1m[i], c(k));
        } else {
            a.add(r, lay.v1p[i - iface], c(k));
        }
        a.add(r, lay.v2[i], ih);
        a.add(r, lay.v2[i - 1], -ih);
        a.add(r, r, c(omega * medium.mu0));
    }
    for i in 0..len - 1 {
        let r = lay.v2[i];
        if lay.v3[i + 1] != NONE {
            a.add(r, lay.v3[i + 1], ih);
        }
        if lay.v3[i] != NONE {
            a.add(r, lay.v3[i], -ih);
        }
        a.add(r, r, c(omega * medium.eps1.c2[i]));
    }
    a
}

/// Factored `T(k, w)` for repeated solves.
#[derive(Debug, Clone)]
pub struct TSolver {
    pub k: f64,
    pub omega: f64,
    lay: Layout,
    lu: BandedLu<Complex64>,
    grid: Grid1D,
}

impl TSolver {
    pub fn new(medium: &Medium, k: f64, omega: f64) -> Result<Self> {
        let lay = Layout::new(&medium.grid);
        let lu = assemble_t_banded(medium, k, omega).factor()?;
        Ok(Self { k, omega, lay, lu, grid: medium.grid })
    }

    pub fn solve(&self, f: &Stag<Complex64>) -> Stag<Complex64> {
        let mut x = self.lay.gather(f);
        self.lu.solve_in_place(&mut x);
        self.lay.scatter(&x, &self.grid)
    }
}

/// Reduced symmetric form for component 3: `S(k) w3 = lambda mu0 w3`, `lambda = w^2`,
/// on interior nodes `1..len-1`. Returns (diagonal, off-diagonal) of `S`.
pub fn reduced_tridiagonal(medium: &Medium, k: f64) -> (Vec<f64>, Vec<f64>) {
    let len = medium.len();
    let iface = medium.iface();
    let h2 = medium.grid.h * medium.grid.h;
    let n = len - 2;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for r in 0..n {
        let i = r + 1;
        let a = if i == iface {
            0.5 * (1.0 / medium.eps1.c1m[iface] + 1.0 / medium.eps1.c1p[0])
        } else if i < iface {
            1.0 / medium.eps1.c1m[i]
        } else {
            1.0 / medium.eps1.c1p[i - iface]
        };
        diag[r] = k * k * a + (1.0 / medium.eps1.c2[i - 1] + 1.0 / medium.eps1.c2[i]) / h2;
        if r + 1 < n {
            off[r] = -1.0 / (h2 * medium.eps1.c2[i]);
        }
    }
    (diag, off)
}

/// Staggered mode from component-3 node samples: `w1 = -k w3 / (eps1 w)`,
/// `Im w2 = -(D w3) / (eps1 w)` on half nodes.
pub fn mode_from_w3(medium: &Medium, k: f64, omega: f64, w3: &[f64]) -> Stag<f64> {
    let iface = medium.iface();
    let len = medium.len();
    let h = medium.grid.h;
    let mut m = Stag::zeros(&medium.grid);
    m.c3.copy_from_slice(w3);
    for i in 0..len {
        if i <= iface {
            m.c1m[i] = -k * w3[i] / (medium.eps1.c1m[i] * omega);
        }
        if i >= iface {
            m.c1p[i - iface] = -k * w3[i] / (medium.eps1.c1p[i - iface] * omega);
        }
    }
    for i in 0..len - 1 {
        m.c2[i] = -(w3[i + 1] - w3[i]) / (h * medium.eps1.c2[i] * omega);
    }
    m
}

/// Solve `T v = f` for a (numerically) singular `T(k, w)` with kernel `span{m}`:
/// shifted factorization `T(k, w + delta)` plus deflated iterative refinement.
/// The result is orthogonal to `m` in the weighted inner product.
#[derive(Debug, Clone)]
pub struct SingularSolver {
    shifted: TSolver,
    k: f64,
    omega: f64,
    kernel: Stag<Complex64>,
    kernel_norm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub relative_residual: f64,
    pub iterations: usize,
}

impl SingularSolver {
    pub fn new(medium: &Medium, k: f64, omega: f64, kernel: &Stag<Complex64>) -> Result<Self> {
        let delta = 1e-6 * omega.abs().max(1e-3);
        let shifted = TSolver::new(medium, k, omega + delta)?;
        let kernel_norm2 = medium.inner(kernel, kernel).re;
        if !(kernel_norm2 > 0.0) {
            return Err(Error::Degenerate(kernel_norm2));
        }
        Ok(Self { shifted, k, omega, kernel: kernel.clone(), kernel_norm2 })
    }

    pub fn project(&self, medium: &Medium, v: &mut Stag<Complex64>) {
        let c = medium.inner(v, &self.kernel) / self.kernel_norm2;
        v.axpy(-c, &self.kernel);
    }

    /// Weighted `<f, m> / (|f| |m|)`.
    pub fn solvability_defect(&self, medium: &Medium, f: &Stag<Complex64>) -> f64 {
        let nf = medium.norm(f);
        if nf == 0.0 {
            return 0.0;
        }
        medium.inner(f, &self.kernel).norm() / (nf * self.kernel_norm2.sqrt())
    }

    pub fn solve(&self, medium: &Medium, f: &Stag<Complex64>, tol: f64) -> Result<(Stag<Complex64>, SolveReport)> {
        let defect = self.solvability_defect(medium, f);
        if defect > tol {
            return Err(Error::Solvability { defect });
        }
        let mut rhs = f.clone();
        medium.clear_boundary(&mut rhs);
        self.project(medium, &mut rhs);
        let nf = medium.norm(&rhs);
        let mut v = Stag::zeros(&medium.grid);
        if nf == 0.0 {
            return Ok((v, SolveReport { relative_residual: 0.0, iterations: 0 }));
        }
        let mut rel = f64::INFINITY;
        let max_iter = 60;
        for it in 0..max_iter {
            let tv = medium.apply_t(self.k, self.omega, &v);
            let r = rhs.zip_with(&tv, |a, b| a - b);
            rel = medium.norm(&r) / nf;
            if rel < 1e-13 {
                return Ok((v, SolveReport { relative_residual: rel, iterations: it }));
            }
            let dv = self.shifted.solve(&r);
            v.axpy(Complex64::new(1.0, 0.0), &dv);
            medium.clear_boundary(&mut v);
            self.project(medium, &mut v);
        }
        if rel < 1e-9 {
            Ok((v, SolveReport { relative_residual: rel, iterations: max_iter }))
        } else {
            Err(Error::NoConvergence { iterations: max_iter, residual: rel })
        }
    }
}

/// Solve a regular system `T v = f` with a few steps of iterative refinement.
pub fn solve_regular(medium: &Medium, k: f64, omega: f64, f: &Stag<Complex64>) -> Result<(Stag<Complex64>, SolveReport)> {
    let solver = TSolver::new(medium, k, omega)?;
    let mut rhs = f.clone();
    medium.clear_boundary(&mut rhs);
    let nf = medium.norm(&rhs);
    let mut v = solver.solve(&rhs);
    let mut rel = 0.0;
    for it in 0..4 {
        let tv = medium.apply_t(k, omega, &v);
        let r = rhs.zip_with(&tv, |a, b| a - b);
        rel = if nf > 0.0 { medium.norm(&r) / nf } else { 0.0 };
        if rel < 1e-14 {
            return Ok((v, SolveReport { relative_residual: rel, iterations: it }));
        }
        let dv = solver.solve(&r);
        v.axpy(Complex64::new(1.0, 0.0), &dv);
    }
    Ok((v, SolveReport { relative_residual: rel, iterations: 4 }))
}

/// Node values of a staggered column: component 1 per block, component 2 by
/// cubic interpolation from the half nodes (one-sided at the ends and at the
/// interface, where the two one-sided values are averaged), component 3 as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Collocated {
    pub u1m: Vec<f64>,
    pub u1p: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
}

/// Cubic weights for a node at distance `1/2, 3/2, 5/2, 7/2` half-spacings from four half nodes on one side.
const EDGE: [f64; 4] = [35.0 / 16.0, -35.0 / 16.0, 21.0 / 16.0, -5.0 / 16.0];
/// Same with one half node on the near side and three on the far side.
const NEAR: [f64; 4] = [5.0 / 16.0, 15.0 / 16.0, -5.0 / 16.0, 1.0 / 16.0];
const CENTER: [f64; 4] = [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0];

pub fn collocate(v: &Stag<f64>, iface: usize) -> Collocated {
    let c2 = &v.c2;
    let len = v.c3.len();
    let dot = |w: &[f64; 4], idx: [usize; 4]| -> f64 { (0..4).map(|k| w[k] * c2[idx[k]]).sum() };
    // node i of a block [lo, hi] (node indices), half nodes lo..hi-1
    let block = |i: usize, lo: usize, hi: usize| -> f64 {
        if i == lo {
            dot(&EDGE, [lo, lo + 1, lo + 2, lo + 3])
        } else if i == hi {
            dot(&EDGE, [hi - 1, hi - 2, hi - 3, hi - 4])
        } else if i == lo + 1 {
            dot(&NEAR, [lo, lo + 1, lo + 2, lo + 3])
        } else if i + 1 == hi {
            dot(&NEAR, [hi - 1, hi - 2, hi - 3, hi - 4])
        } else {
            dot(&CENTER, [i - 2, i - 1, i, i + 1])
        }
    };
    let u2 = (0..len)
        .map(|i| {
            if i < iface {
                block(i, 0, iface)
            } else if i > iface {
                block(i, iface, len - 1)
            } else {
                0.5 * (block(i, 0, iface) + block(i, iface, len - 1))
            }
        })
        .collect();
    Collocated { u1m: v.c1m.clone(), u1p: v.c1p.clone(), u2, u3: v.c3.clone() }
}

/// Real staggered field on a 2D grid: each location row holds `n_x2` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StagField2D {
    pub grid: Grid2D,
    pub c1m: Vec<f64>,
    pub c1p: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    pub t: f64,
}

impl StagField2D {
    pub fn zeros(grid: &Grid2D, t: f64) -> Self {
        let g = &grid.grid_x1;
        let n2 = grid.n_x2;
        Self {
            grid: *grid,
            c1m: vec![0.0; (g.interface_index + 1) * n2],
            c1p: vec![0.0; (g.len() - g.interface_index) * n2],
            c2: vec![0.0; (g.len() - 1) * n2],
            c3: vec![0.0; g.len() * n2],
            t,
        }
    }

    pub fn column(&self, j: usize) -> Stag<f64> {
        let n2 = self.grid.n_x2;
        let col = |v: &[f64]| v.iter().skip(j).step_by(n2).copied().collect();
        Stag { c1m: col(&self.c1m), c1p: col(&self.c1p), c2: col(&self.c2), c3: col(&self.c3) }
    }

    pub fn set_column(&mut self, j: usize, v: &Stag<f64>) {
        let n2 = self.grid.n_x2;
        let put = |dst: &mut [f64], src: &[f64]| {
            for (r, x) in src.iter().enumerate() {
                dst[r * n2 + j] = *x;
            }
        };
        put(&mut self.c1m, &v.c1m);
        put(&mut self.c1p, &v.c1p);
        put(&mut self.c2, &v.c2);
        put(&mut self.c3, &v.c3);
    }

    pub fn arrays(&self) -> [&Vec<f64>; 4] {
        [&self.c1m, &self.c1p, &self.c2, &self.c3]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.c1m, &mut self.c1p, &mut self.c2, &mut self.c3]
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (dst, src) in self.arrays_mut().into_iter().zip(x.arrays()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.arrays().iter().flat_map(|v| v.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Collocated two-block field (see [`collocate`]).
    pub fn to_field2d(&self) -> Field2D {
        let g = &self.grid.grid_x1;
        let iface = g.interface_index;
        let mut f = Field2D::zeros(&self.grid, self.t);
        for j in 0..self.grid.n_x2 {
            let c = collocate(&self.column(j), iface);
            for i in 0..g.len() {
                if i <= iface {
                    f.u1.set_side(&self.grid, i, j, Side::Minus, c.u1m[i]);
                }
                if i >= iface {
                    f.u1.set_side(&self.grid, i, j, Side::Plus, c.u1p[i - iface]);
                }
                f.u2.set(&self.grid, i, j, c.u2[i]);
                f.u3.set(&self.grid, i, j, c.u3[i]);
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium(h: f64) -> Medium {
        let g = Grid1D::new(3.0, h).unwrap();
        Medium::new(&g, &PiecewiseProfile::exp_step(1.0)).unwrap()
    }

    fn sample(m: &Medium, seed: f64) -> Stag<Complex64> {
        let mut v = Stag::zeros(&m.grid);
        let f = |x: f64, s: f64| Complex64::new((x * s).sin() + 0.3, (x * (s + 0.7)).cos());
        for (i, val) in v.c1m.iter_mut().enumerate() {
            *val = f(m.grid.x(i), seed);
        }
        for (j, val) in v.c1p.iter_mut().enumerate() {
            *val = f(m.grid.x(j + m.iface()), seed + 1.3);
        }
        for (i, val) in v.c2.iter_mut().enumerate() {
            *val = f(m.grid.x_half(i), seed + 2.1);
        }
        for (i, val) in v.c3.iter_mut().enumerate() {
            *val = f(m.grid.x(i), seed + 0.4);
        }
        m.clear_boundary(&mut v);
        v
    }

    #[test]
    fn collocation_is_exact_on_cubics() {
        let g = Grid1D::new(1.0, 0.125).unwrap();
        let f = |x: f64| 0.3 + x - 2.0 * x * x + 0.7 * x.powi(3);
        let mut v = Stag::<f64>::zeros(&g);
        for (i, c) in v.c2.iter_mut().enumerate() {
            *c = f(g.x_half(i));
        }
        let c = collocate(&v, g.interface_index);
        for (i, u) in c.u2.iter().enumerate() {
            assert!((u - f(g.x(i))).abs() < 1e-12, "node {i}");
        }
    }

    #[test]
    fn t_is_hermitian_in_weighted_product() {
        let m = medium(0.1);
        let (u, v) = (sample(&m, 0.9), sample(&m, 2.3));
        let a = m.inner(&m.apply_t(0.5, 0.4, &u), &v);
        let b = m.inner(&u, &m.apply_t(0.5, 0.4, &v));
        assert!((a - b).norm() < 1e-12 * a.norm().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn banded_matches_matrix_free() {
        let m = medium(0.1);
        let u = sample(&m, 1.7);
        let a = assemble_t_banded(&m, 0.5, 0.4);
        let lay = Layout::new(&m.grid);
        let x = lay.gather(&u);
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        a.matvec(&x, &mut y);
        let got = lay.scatter(&y, &m.grid);
        let want = m.apply_t(0.5, 0.4, &u);
        let diff = got.zip_with(&want, |p, q| p - q);
        assert!(diff.max_modulus() < 1e-12);
    }

    #[test]
    fn manufactured_solution_recovered() {
        let m = medium(0.05);
        let v = sample(&m, 0.3);
        let f = m.apply_t(0.5, 0.37, &v);
        let (got, rep) = solve_regular(&m, 0.5, 0.37, &f).unwrap();
        assert!(rep.relative_residual < 1e-12);
        let diff = got.zip_with(&v, |p, q| p - q);
        assert!(diff.max_modulus() < 1e-9);
    }

    #[test]
    fn dense_assembly_agrees_entrywise() {
        let g = Grid1D::new(1.0, 0.05).unwrap();
        let m = Medium::new(&g, &PiecewiseProfile::exp_step(0.0)).unwrap();
        let a = assemble_t_banded(&m, 0.7, 0.3);
        let lay = Layout::new(&g);
        let n = lay.n;
        for col in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[col] = Complex64::new(1.0, 0.0);
            let v = lay.scatter(&e, &g);
            let tv = lay.gather(&m.apply_t(0.7, 0.3, &v));
            for row in 0..n {
                assert!((tv[row] - a.get(row, col)).norm() < 1e-13);
            }
        }
    }
}
