use crate::grid::Grid1D;
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// A smooth coefficient on one half-line, evaluated at signed `x1`.
#[derive(Debug, Clone, PartialEq)]
pub enum SideFn {
    Const(f64),
    /// `base + amp * exp(-rate * |x1|)`.
    Exp {
        base: f64,
        amp: f64,
        rate: f64,
    },
    Tabulated(Table),
}

/// Tabulated samples with derivative samples from fourth-order differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    vs: Vec<f64>,
    dvs: Vec<f64>,
}

impl Table {
    /// `xs` must be uniformly spaced and increasing, at least 5 samples.
    pub fn new(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != vs.len() || n < 5 {
            return Err(Error::InvalidArgument("table needs >= 5 (x, value) pairs".to_string()));
        }
        let dx = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        if !(dx > 0.0) {
            return Err(Error::InvalidArgument("table abscissae must increase".to_string()));
        }
        for (i, x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * dx)).abs() > 1e-8 * (1.0 + x.abs()) {
                return Err(Error::InvalidArgument("table abscissae must be uniform".to_string()));
            }
        }
        let dvs = fourth_order_derivative(&vs, dx);
        Ok(Self { xs, vs, dvs })
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.xs.len();
        let dx = (self.xs[n - 1] - self.xs[0]) / (n - 1) as f64;
        let s = ((x - self.xs[0]) / dx).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        self.vs[i] * (1.0 - t) + self.vs[i + 1] * t
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > self.xs[self.xs.len() - 1] {
            return 0.0;
        }
        let (i, t) = self.locate(x);
        self.dvs[i] * (1.0 - t) + self.dvs[i + 1] * t
    }

    /// Value at the sample farthest from the interface.
    fn far_value(&self) -> f64 {
        if self.xs[0].abs() > self.xs[self.xs.len() - 1].abs() {
            self.vs[0]
        } else {
            self.vs[self.vs.len() - 1]
        }
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.vs)
    }
}

/// Central fourth-order differences inside, one-sided fourth-order stencils
/// on the two outermost samples at each end.
fn fourth_order_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * dx)
        } else if i < 2 {
            let s = if i == 0 { [-25.0, 48.0, -36.0, 16.0, -3.0] } else { [-3.0, -10.0, 18.0, -6.0, 1.0] };
            let base = 0;
            (0..5).map(|k| s[k] * v[base + k]).sum::<f64>() / (12.0 * dx)
        } else {
            let s = if i == n - 1 { [3.0, -16.0, 36.0, -48.0, 25.0] } else { [-1.0, 6.0, -18.0, 10.0, 3.0] };
            let base = n - 5;
            (0..5).map(|k| s[k] * v[base + k]).sum::<f64>() / (12.0 * dx)
        };
    }
    d
}

impl SideFn {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            SideFn::Const(c) => *c,
            SideFn::Exp { base, amp, rate } => base + amp * (-rate * x.abs()).exp(),
            SideFn::Tabulated(t) => t.value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            SideFn::Const(_) => 0.0,
            SideFn::Exp { amp, rate, .. } => {
                let s = if x < 0.0 { -1.0 } else { 1.0 };
                -s * rate * amp * (-rate * x.abs()).exp()
            }
            SideFn::Tabulated(t) => t.derivative(x),
        }
    }

    pub fn limit(&self) -> f64 {
        match self {
            SideFn::Const(c) => *c,
            SideFn::Exp { base, .. } => *base,
            SideFn::Tabulated(t) => t.far_value(),
        }
    }

    pub fn scaled(&self, c: f64) -> SideFn {
        match self {
            SideFn::Const(v) => SideFn::Const(c * v),
            SideFn::Exp { base, amp, rate } => SideFn::Exp { base: c * base, amp: c * amp, rate: *rate },
            SideFn::Tabulated(t) => SideFn::Tabulated(Table {
                xs: t.xs.clone(),
                vs: t.vs.iter().map(|v| c * v).collect(),
                dvs: t.dvs.iter().map(|v| c * v).collect(),
            }),
        }
    }
}

/// Coefficients `eps1`, `eps3` as two one-sided functions plus `mu0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseProfile {
    pub eps1_minus: SideFn,
    pub eps1_plus: SideFn,
    pub eps3_minus: SideFn,
    pub eps3_plus: SideFn,
    pub eps1_inf_minus: f64,
    pub eps1_inf_plus: f64,
    pub eps3_inf_minus: f64,
    pub eps3_inf_plus: f64,
    pub mu0: f64,
}

impl PiecewiseProfile {
    pub fn new(eps1_minus: SideFn, eps1_plus: SideFn, eps3_minus: SideFn, eps3_plus: SideFn, mu0: f64) -> Self {
        Self {
            eps1_inf_minus: eps1_minus.limit(),
            eps1_inf_plus: eps1_plus.limit(),
            eps3_inf_minus: eps3_minus.limit(),
            eps3_inf_plus: eps3_plus.limit(),
            eps1_minus,
            eps1_plus,
            eps3_minus,
            eps3_plus,
            mu0,
        }
    }

    /// `eps1 = 1` for `x1 < 0`, `1 + exp(-x1)` for `x1 > 0`, `mu0 = 1`.
    pub fn exp_step(eps3: f64) -> Self {
        Self::new(SideFn::Const(1.0), SideFn::Exp { base: 1.0, amp: 1.0, rate: 1.0 }, SideFn::Const(eps3), SideFn::Const(eps3), 1.0)
    }

    pub fn uniform(eps1: f64, eps3: f64, mu0: f64) -> Self {
        Self::new(SideFn::Const(eps1), SideFn::Const(eps1), SideFn::Const(eps3), SideFn::Const(eps3), mu0)
    }

    pub fn with_eps3(mut self, minus: SideFn, plus: SideFn) -> Self {
        self.eps3_inf_minus = minus.limit();
        self.eps3_inf_plus = plus.limit();
        self.eps3_minus = minus;
        self.eps3_plus = plus;
        self
    }

    pub fn with_eps3_scaled(&self, c: f64) -> Self {
        self.clone().with_eps3(self.eps3_minus.scaled(c), self.eps3_plus.scaled(c))
    }

    pub fn side_of(x: f64) -> Side {
        if x < 0.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    pub fn eps1(&self, side: Side, x: f64) -> f64 {
        match side {
            Side::Minus => self.eps1_minus.value(x),
            Side::Plus => self.eps1_plus.value(x),
        }
    }

    pub fn deps1(&self, side: Side, x: f64) -> f64 {
        match side {
            Side::Minus => self.eps1_minus.derivative(x),
            Side::Plus => self.eps1_plus.derivative(x),
        }
    }

    pub fn eps3(&self, side: Side, x: f64) -> f64 {
        match side {
            Side::Minus => self.eps3_minus.value(x),
            Side::Plus => self.eps3_plus.value(x),
        }
    }

    /// `eps1` away from the interface (side picked from the sign of `x`).
    pub fn eps1_at(&self, x: f64) -> f64 {
        self.eps1(Self::side_of(x), x)
    }

    pub fn eps3_at(&self, x: f64) -> f64 {
        self.eps3(Self::side_of(x), x)
    }

    pub fn eps1_jump(&self) -> f64 {
        self.eps1(Side::Plus, 0.0) - self.eps1(Side::Minus, 0.0)
    }

    /// Smallest `eps1` on each side over the grid nodes.
    pub fn eps1_min(&self, grid: &Grid1D) -> (f64, f64) {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        for i in 0..grid.len() {
            let x = grid.x(i);
            if i <= grid.interface_index {
                lo.0 = lo.0.min(self.eps1(Side::Minus, x));
            }
            if i >= grid.interface_index {
                lo.1 = lo.1.min(self.eps1(Side::Plus, x));
            }
        }
        lo
    }

    /// (min, max) of `eps3` on each side over the grid nodes.
    pub fn eps3_range(&self, grid: &Grid1D) -> ((f64, f64), (f64, f64)) {
        let mut m = (f64::INFINITY, f64::NEG_INFINITY);
        let mut p = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..grid.len() {
            let x = grid.x(i);
            if i <= grid.interface_index {
                let v = self.eps3(Side::Minus, x);
                m = (m.0.min(v), m.1.max(v));
            }
            if i >= grid.interface_index {
                let v = self.eps3(Side::Plus, x);
                p = (p.0.min(v), p.1.max(v));
            }
        }
        (m, p)
    }

    /// Checks positivity of `eps1` and `mu0` on the grid.
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(Error::InvalidArgument(format!("mu0 = {} must be positive", self.mu0)));
        }
        let (lm, lp) = self.eps1_min(grid);
        if !(lm > 0.0 && lp > 0.0) {
            return Err(Error::InvalidArgument(format!("eps1 not bounded below by a positive constant ({lm}, {lp})")));
        }
        Ok(())
    }

    /// True if `|eps1(x) - eps1_inf|` is non-increasing in `|x|` beyond `radius` on both sides.
    pub fn decays_beyond(&self, grid: &Grid1D, radius: f64) -> bool {
        let mut ok = true;
        let mut prev = f64::INFINITY;
        for i in (0..=grid.interface_index).rev() {
            let x = grid.x(i);
            if -x >= radius {
                let dev = (self.eps1(Side::Minus, x) - self.eps1_inf_minus).abs();
                ok &= dev <= prev + 1e-15;
                prev = dev;
            }
        }
        prev = f64::INFINITY;
        for i in grid.interface_index..grid.len() {
            let x = grid.x(i);
            if x >= radius {
                let dev = (self.eps1(Side::Plus, x) - self.eps1_inf_plus).abs();
                ok &= dev <= prev + 1e-15;
                prev = dev;
            }
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_step_values() {
        let p = PiecewiseProfile::exp_step(1.0);
        assert_eq!(p.eps1(Side::Minus, 0.0), 1.0);
        assert_eq!(p.eps1(Side::Plus, 0.0), 2.0);
        assert_eq!(p.eps1_jump(), 1.0);
        assert!((p.deps1(Side::Plus, 1.0) + (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(p.eps1_inf_plus, 1.0);
        let g = Grid1D::new(20.0, 0.1).unwrap();
        assert!(p.decays_beyond(&g, 0.0));
        assert!(p.validate(&g).is_ok());
    }

    #[test]
    fn tabulated_derivative_is_fourth_order() {
        let f = |x: f64| 1.0 + (-x).exp();
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&dx| {
                let xs: Vec<f64> = (0..=(4.0 / dx) as usize).map(|i| i as f64 * dx).collect();
                let vs = xs.iter().map(|&x| f(x)).collect();
                let t = Table::new(xs.clone(), vs).unwrap();
                xs.iter().map(|&x| (t.derivative(x) + (-x).exp()).abs()).fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.7, "order {order}");
    }

    #[test]
    fn negative_permittivity_rejected() {
        let p = PiecewiseProfile::uniform(-1.0, 0.0, 1.0);
        let g = Grid1D::new(1.0, 0.1).unwrap();
        assert!(p.validate(&g).is_err());
    }
}
