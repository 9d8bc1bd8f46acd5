//! Two-block collocated fields, interface jumps and broken Sobolev norms.
use crate::fft::SpectralDiff;
use crate::grid::{Grid1D, Grid2D};
use crate::prelude::*;
use crate::profile::Side;
use crate::{Complex64, Error, Result};

/// Scalar field on a 2D grid stored as two row-major blocks (rows = x1 nodes).
///
/// The minus block holds x1 nodes `0..=interface_index`, the plus block
/// `interface_index..len`; both contain their own copy of the interface row.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub minus: Vec<f64>,
    pub plus: Vec<f64>,
}

impl Blocks {
    pub fn zeros(grid: &Grid2D) -> Self {
        let g = &grid.grid_x1;
        Self { minus: vec![0.0; (g.interface_index + 1) * grid.n_x2], plus: vec![0.0; (g.len() - g.interface_index) * grid.n_x2] }
    }

    pub fn block(&self, side: Side) -> &[f64] {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }

    pub fn block_mut(&mut self, side: Side) -> &mut [f64] {
        match side {
            Side::Minus => &mut self.minus,
            Side::Plus => &mut self.plus,
        }
    }

    /// Value at global x1 node `i`, x2 node `j`; `side` picks the copy at the interface.
    pub fn at(&self, grid: &Grid2D, i: usize, j: usize, side: Side) -> f64 {
        let iface = grid.grid_x1.interface_index;
        let n2 = grid.n_x2;
        if i < iface || (i == iface && side == Side::Minus) {
            self.minus[i * n2 + j]
        } else {
            self.plus[(i - iface) * n2 + j]
        }
    }

    /// Writes both copies at the interface row when `i` is the interface node.
    pub fn set(&mut self, grid: &Grid2D, i: usize, j: usize, v: f64) {
        let iface = grid.grid_x1.interface_index;
        let n2 = grid.n_x2;
        if i <= iface {
            self.minus[i * n2 + j] = v;
        }
        if i >= iface {
            self.plus[(i - iface) * n2 + j] = v;
        }
    }

    pub fn set_side(&mut self, grid: &Grid2D, i: usize, j: usize, side: Side, v: f64) {
        let iface = grid.grid_x1.interface_index;
        let n2 = grid.n_x2;
        if i < iface || (i == iface && side == Side::Minus) {
            self.minus[i * n2 + j] = v;
        } else {
            self.plus[(i - iface) * n2 + j] = v;
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            minus: self.minus.iter().zip(&other.minus).map(|(&a, &b)| f(a, b)).collect(),
            plus: self.plus.iter().zip(&other.plus).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn all_finite(&self) -> bool {
        self.minus.iter().chain(&self.plus).all(|v| v.is_finite())
    }
}

/// Real three-component field `(U1, U2, U3)` on a two-block grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub u1: Blocks,
    pub u2: Blocks,
    pub u3: Blocks,
    pub time_stamp: f64,
}

impl Field2D {
    pub fn zeros(grid: &Grid2D, t: f64) -> Self {
        Self { grid: *grid, u1: Blocks::zeros(grid), u2: Blocks::zeros(grid), u3: Blocks::zeros(grid), time_stamp: t }
    }

    /// Samples `f(side, x1, x2)`; the interface row is evaluated once per side.
    pub fn from_fn<F: FnMut(Side, f64, f64) -> [f64; 3]>(grid: &Grid2D, t: f64, mut f: F) -> Self {
        let mut out = Self::zeros(grid, t);
        let g = &grid.grid_x1;
        let n2 = grid.n_x2;
        for side in [Side::Minus, Side::Plus] {
            let (lo, hi) = match side {
                Side::Minus => (0, g.interface_index + 1),
                Side::Plus => (g.interface_index, g.len()),
            };
            for i in lo..hi {
                let r = i - lo;
                for j in 0..n2 {
                    let v = f(side, g.x(i), grid.x2(j));
                    out.u1.block_mut(side)[r * n2 + j] = v[0];
                    out.u2.block_mut(side)[r * n2 + j] = v[1];
                    out.u3.block_mut(side)[r * n2 + j] = v[2];
                }
            }
        }
        out
    }

    pub fn components(&self) -> [&Blocks; 3] {
        [&self.u1, &self.u2, &self.u3]
    }

    pub fn components_mut(&mut self) -> [&mut Blocks; 3] {
        [&mut self.u1, &mut self.u2, &mut self.u3]
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Structural("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            u1: self.u1.zip(&other.u1, |a, b| a - b),
            u2: self.u2.zip(&other.u2, |a, b| a - b),
            u3: self.u3.zip(&other.u3, |a, b| a - b),
            time_stamp: self.time_stamp,
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.components().iter().all(|c| c.all_finite()) {
            Ok(())
        } else {
            Err(Error::NotFinite(format!("field at t = {}", self.time_stamp)))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().flat_map(|c| c.minus.iter().chain(&c.plus)).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Scalar one-dimensional field with one-sided samples on both half-lines.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenLine {
    pub minus: Vec<f64>,
    pub plus: Vec<f64>,
    pub h: f64,
}

impl BrokenLine {
    pub fn from_fn<F: FnMut(Side, f64) -> f64>(grid: &Grid1D, mut f: F) -> Self {
        let iface = grid.interface_index;
        Self {
            minus: (0..=iface).map(|i| f(Side::Minus, grid.x(i))).collect(),
            plus: (iface..grid.len()).map(|i| f(Side::Plus, grid.x(i))).collect(),
            h: grid.h,
        }
    }
}

/// Right trace minus left trace of a one-sided sampled line.
pub fn jump_at_interface(f: &BrokenLine) -> Result<f64> {
    match (f.minus.last(), f.plus.first()) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Structural("field has no interface samples".into())),
    }
}

/// Per-x2 jump of one component of a 2D field.
pub fn jump_at_interface_2d(f: &Blocks, grid: &Grid2D) -> Result<Vec<f64>> {
    let n2 = grid.n_x2;
    let iface = grid.grid_x1.interface_index;
    if f.minus.len() < (iface + 1) * n2 || f.plus.len() < n2 {
        return Err(Error::Structural("field has no interface row".into()));
    }
    Ok((0..n2).map(|j| f.plus[j] - f.minus[iface * n2 + j]).collect())
}

/// x1-derivative of order `order` at row `i` of a block with `n` rows
/// (second-order accurate, one-sided near the block edges).
pub fn fd_x1<G: Fn(usize) -> f64>(u: G, i: usize, n: usize, h: f64, order: usize) -> f64 {
    match order {
        0 => u(i),
        1 => {
            if i == 0 {
                (-3.0 * u(0) + 4.0 * u(1) - u(2)) / (2.0 * h)
            } else if i + 1 == n {
                (3.0 * u(i) - 4.0 * u(i - 1) + u(i - 2)) / (2.0 * h)
            } else {
                (u(i + 1) - u(i - 1)) / (2.0 * h)
            }
        }
        2 => {
            if i == 0 {
                (2.0 * u(0) - 5.0 * u(1) + 4.0 * u(2) - u(3)) / (h * h)
            } else if i + 1 == n {
                (2.0 * u(i) - 5.0 * u(i - 1) + 4.0 * u(i - 2) - u(i - 3)) / (h * h)
            } else {
                (u(i + 1) - 2.0 * u(i) + u(i - 1)) / (h * h)
            }
        }
        _ => {
            let c = 2.0 * h * h * h;
            if i < 2 {
                (-5.0 * u(i) + 18.0 * u(i + 1) - 24.0 * u(i + 2) + 14.0 * u(i + 3) - 3.0 * u(i + 4)) / c
            } else if i + 2 >= n {
                (5.0 * u(i) - 18.0 * u(i - 1) + 24.0 * u(i - 2) - 14.0 * u(i - 3) + 3.0 * u(i - 4)) / c
            } else {
                (-u(i - 2) + 2.0 * u(i - 1) - 2.0 * u(i + 1) + u(i + 2)) / c
            }
        }
    }
}

/// Fourth-order accurate first x1-derivative at row `i` of a block with `n >= 5`
/// rows: five-point central stencil inside, five-point one-sided stencils on the
/// two outermost rows at each end.
pub fn fd1_x1_o4<G: Fn(usize) -> f64>(u: G, i: usize, n: usize, h: f64) -> f64 {
    const LEFT: [[f64; 5]; 2] = [[-25.0, 48.0, -36.0, 16.0, -3.0], [-3.0, -10.0, 18.0, -6.0, 1.0]];
    let c = 12.0 * h;
    if i < 2 {
        (0..5).map(|k| LEFT[i][k] * u(k)).sum::<f64>() / c
    } else if i + 2 >= n {
        let m = n - 1 - i;
        -(0..5).map(|k| LEFT[m][k] * u(n - 1 - k)).sum::<f64>() / c
    } else {
        (u(i - 2) - 8.0 * u(i - 1) + 8.0 * u(i + 1) - u(i + 2)) / c
    }
}

fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * h
    } else {
        h
    }
}

/// Minimum rows per block required by the highest-order stencil.
const MIN_ROWS: usize = 5;

/// Broken `H^m` norm of a one-sided sampled line: `|u-|_{H^m} + |u+|_{H^m}`.
pub fn broken_norm_1d(f: &BrokenLine, order: usize) -> Result<f64> {
    if order > 3 {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut total = 0.0;
    for block in [&f.minus, &f.plus] {
        let n = block.len();
        if n < MIN_ROWS {
            return Err(Error::Structural("block too short for one-sided stencils".into()));
        }
        let mut s = 0.0;
        for a in 0..=order {
            for i in 0..n {
                let v = fd_x1(|r| block[r], i, n, f.h, a);
                s += trapezoid_weight(i, n, f.h) * v * v;
            }
        }
        total += s.sqrt();
    }
    Ok(total)
}

/// Broken `H^m` norm of a 2D field: per block, the root of the summed squared
/// `L^2` norms of all mixed derivatives of all components up to total order `m`;
/// block contributions are added. x1 derivatives are one-sided at block edges,
/// x2 derivatives spectral.
pub fn broken_norm(f: &Field2D, order: usize) -> Result<f64> {
    if order > 3 {
        return Err(Error::UnsupportedOrder(order));
    }
    let grid = &f.grid;
    let n2 = grid.n_x2;
    let h = grid.grid_x1.h;
    let dx2 = grid.dx2();
    let diff = if order > 0 { Some(SpectralDiff::new(n2, grid.length_x2())?) } else { None };
    let mut total = 0.0;
    for side in [Side::Minus, Side::Plus] {
        let mut s = 0.0;
        for comp in f.components() {
            let block = comp.block(side);
            let rows = block.len() / n2;
            if rows < MIN_ROWS {
                return Err(Error::Structural("block too short for one-sided stencils".into()));
            }
            for b in 0..=order {
                let dblock: Vec<f64> = if b == 0 {
                    block.to_vec()
                } else {
                    let d = diff.as_ref().expect("spectral operator for order > 0");
                    let mut out = vec![0.0; block.len()];
                    let mut buf = vec![Complex64::new(0.0, 0.0); n2];
                    for r in 0..rows {
                        for (c, v) in buf.iter_mut().zip(&block[r * n2..(r + 1) * n2]) {
                            *c = Complex64::new(*v, 0.0);
                        }
                        d.derivative_in_place(&mut buf, b as u32);
                        for (o, c) in out[r * n2..(r + 1) * n2].iter_mut().zip(&buf) {
                            *o = c.re;
                        }
                    }
                    out
                };
                for a in 0..=(order - b) {
                    for i in 0..rows {
                        let w = trapezoid_weight(i, rows, h) * dx2;
                        for j in 0..n2 {
                            let v = fd_x1(|r| dblock[r * n2 + j], i, rows, h, a);
                            s += w * v * v;
                        }
                    }
                }
            }
        }
        total += s.sqrt();
    }
    Ok(total)
}

/// Streaming order-0 broken norm over collocated columns; gives the same value
/// as [`broken_norm`] with `order = 0` on the assembled field.
#[derive(Debug, Clone)]
pub struct BrokenL2 {
    h: f64,
    dx2: f64,
    iface: usize,
    len: usize,
    minus: f64,
    plus: f64,
}

impl BrokenL2 {
    pub fn new(grid: &Grid2D) -> Self {
        let g = &grid.grid_x1;
        Self { h: g.h, dx2: grid.dx2(), iface: g.interface_index, len: g.len(), minus: 0.0, plus: 0.0 }
    }

    /// Adds one x2 column: component 1 per block and single-valued components 2, 3.
    pub fn add_column(&mut self, u1m: &[f64], u1p: &[f64], u2: &[f64], u3: &[f64]) {
        let (iface, len, h) = (self.iface, self.len, self.h);
        for i in 0..=iface {
            let w = trapezoid_weight(i, iface + 1, h) * self.dx2;
            self.minus += w * (u1m[i] * u1m[i] + u2[i] * u2[i] + u3[i] * u3[i]);
        }
        for i in iface..len {
            let r = i - iface;
            let w = trapezoid_weight(r, len - iface, h) * self.dx2;
            self.plus += w * (u1p[r] * u1p[r] + u2[i] * u2[i] + u3[i] * u3[i]);
        }
    }

    pub fn value(&self) -> f64 {
        self.minus.sqrt() + self.plus.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::PiecewiseProfile;
    use proptest::prelude::*;

    fn grid2(h: f64, n2: usize) -> Grid2D {
        Grid2D::centered(Grid1D::new(4.0, h).unwrap(), 8.0, n2).unwrap()
    }

    #[test]
    fn fourth_order_stencil_is_exact_on_quartics() {
        let h = 0.3;
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x + x.powi(3) - 0.25 * x.powi(4);
        let df = |x: f64| -2.0 + x + 3.0 * x * x - x.powi(3);
        let n = 9;
        for i in 0..n {
            let d = fd1_x1_o4(|r| f(r as f64 * h), i, n, h);
            assert!((d - df(i as f64 * h)).abs() < 1e-10, "row {i}: {d}");
        }
    }

    #[test]
    fn jump_examples() {
        let g = Grid1D::new(2.0, 0.1).unwrap();
        let cont = BrokenLine::from_fn(&g, |_, x| x.sin());
        assert_eq!(jump_at_interface(&cont).unwrap(), 0.0);
        let step = BrokenLine::from_fn(&g, |s, _| if s == Side::Minus { -1.0 } else { 1.0 });
        assert_eq!(jump_at_interface(&step).unwrap(), 2.0);
        let p = PiecewiseProfile::exp_step(0.0);
        let eps1 = BrokenLine::from_fn(&g, |s, x| p.eps1(s, x));
        assert!((jump_at_interface(&eps1).unwrap() - 1.0).abs() < 1e-15);
        let empty = BrokenLine { minus: vec![], plus: vec![1.0], h: 0.1 };
        assert!(matches!(jump_at_interface(&empty), Err(Error::Structural(_))));
    }

    #[test]
    fn constant_norm_and_zero() {
        let g = grid2(0.1, 16);
        let z = Field2D::zeros(&g, 0.0);
        assert_eq!(broken_norm(&z, 3).unwrap(), 0.0);
        let c = Field2D::from_fn(&g, 0.0, |_, _, _| [2.0, 0.0, 0.0]);
        // each half-plane has measure 4 * 8
        let want = 2.0 * 2.0 * (32.0f64).sqrt();
        assert!((broken_norm(&c, 0).unwrap() - want).abs() < 1e-12);
        assert!((broken_norm(&c, 2).unwrap() - want).abs() < 1e-9);
        assert!(matches!(broken_norm(&c, 4), Err(Error::UnsupportedOrder(4))));
    }

    #[test]
    fn fd_stencils_exact_on_polynomials() {
        let h = 0.1;
        let u = |r: usize| {
            let x = r as f64 * h;
            x * x * x - 2.0 * x * x + x
        };
        let n = 8;
        for i in 0..n {
            let x = i as f64 * h;
            let q = |r: usize| {
                let x = r as f64 * h;
                x * x - 3.0 * x
            };
            assert!((fd_x1(q, i, n, h, 1) - (2.0 * x - 3.0)).abs() < 1e-10);
            assert!((fd_x1(u, i, n, h, 2) - (6.0 * x - 4.0)).abs() < 1e-9);
            assert!((fd_x1(u, i, n, h, 3) - 6.0).abs() < 1e-7);
        }
    }

    #[test]
    fn gaussian_norm_converges_quadratically() {
        let f = |s: Side, x1: f64, x2: f64| {
            let a = if s == Side::Minus { 1.0 } else { 2.0 };
            [a * (-x1 * x1 - x2 * x2).exp(), 0.0, 0.0]
        };
        let n = |h: f64| broken_norm(&Field2D::from_fn(&grid2(h, 64), 0.0, f), 1).unwrap();
        let (a, b, c) = (n(0.1), n(0.05), n(0.025));
        let ratio = (a - b) / (b - c);
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn plus_perturbation_changes_only_plus_part() {
        let g = grid2(0.1, 16);
        let base = Field2D::from_fn(&g, 0.0, |_, x1, x2| [(-x1 * x1).exp() * x2.cos(), 0.0, 0.0]);
        let mut pert = base.clone();
        for v in pert.u1.plus.iter_mut() {
            *v *= 3.0;
        }
        let minus_only = |f: &Field2D| {
            let mut z = f.clone();
            for c in z.components_mut() {
                c.plus.iter_mut().for_each(|v| *v = 0.0);
            }
            broken_norm(&z, 2).unwrap()
        };
        assert_eq!(minus_only(&base), minus_only(&pert));
    }

    proptest! {
        #[test]
        fn jump_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0.1f64..2.0) {
            let g = Grid1D::new(1.0, 0.1).unwrap();
            let f = BrokenLine::from_fn(&g, |side, x| if side == Side::Plus { 1.0 + x } else { x * s });
            let q = BrokenLine::from_fn(&g, |side, x| if side == Side::Plus { s } else { -x });
            let c = BrokenLine {
                minus: f.minus.iter().zip(&q.minus).map(|(x, y)| a * x + b * y).collect(),
                plus: f.plus.iter().zip(&q.plus).map(|(x, y)| a * x + b * y).collect(),
                h: 0.1,
            };
            let lhs = jump_at_interface(&c).unwrap();
            let rhs = a * jump_at_interface(&f).unwrap() + b * jump_at_interface(&q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-14 * (1.0 + a.abs() + b.abs()) * 4.0);
        }

        #[test]
        fn norm_monotone_in_order(k in 0.2f64..2.0, shift in -1.0f64..1.0) {
            let g = grid2(0.2, 16);
            let f = Field2D::from_fn(&g, 0.0, |_, x1, x2| [((x1 - shift) * k).sin(), (x2 * 0.785).cos(), x1 * 0.1]);
            let mut prev = 0.0;
            for m in 0..=3 {
                let n = broken_norm(&f, m).unwrap();
                prop_assert!(n >= prev);
                prev = n;
            }
        }
    }
}
