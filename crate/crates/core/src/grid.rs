use crate::prelude::*;
use crate::{Error, Result};

/// Uniform grid on `[-d, d]` with a node at `x1 = 0`.
///
/// Node `i` sits at `(i - interface_index) * h`. Half node `i` (for
/// `i < len() - 1`) sits between nodes `i` and `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub d: f64,
    pub h: f64,
    pub n_minus: usize,
    pub n_plus: usize,
    pub interface_index: usize,
}

impl Grid1D {
    pub fn new(d: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing h = {h} must be positive")));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidGrid(format!("half-width d = {d} must be positive")));
        }
        let n = (d / h).round();
        if n < 2.0 {
            return Err(Error::InvalidGrid(format!("d/h = {} gives fewer than two nodes per side", d / h)));
        }
        let n = n as usize;
        Ok(Self { d, h, n_minus: n, n_plus: n, interface_index: n })
    }

    /// Number of nodes including both end points.
    pub fn len(&self) -> usize {
        self.n_minus + self.n_plus + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.interface_index as f64) * self.h
    }

    pub fn x_half(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - self.interface_index as f64) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Half nodes left of the interface are `0..interface_index`.
    pub fn n_half(&self) -> usize {
        self.len() - 1
    }

    pub fn refine(&self, factor: usize) -> Result<Self> {
        Grid1D::new(self.d, self.h / factor as f64)
    }
}

/// Two-block grid: `grid_x1` across the interface, periodic uniform `x2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub grid_x1: Grid1D,
    pub x2_min: f64,
    pub x2_max: f64,
    pub n_x2: usize,
}

impl Grid2D {
    pub fn new(grid_x1: Grid1D, x2_min: f64, x2_max: f64, n_x2: usize) -> Result<Self> {
        if !n_x2.is_power_of_two() || n_x2 < 2 {
            return Err(Error::InvalidGrid(format!("n_x2 = {n_x2} must be a power of two >= 2")));
        }
        if !(x2_max > x2_min) {
            return Err(Error::InvalidGrid("x2_max must exceed x2_min".to_string()));
        }
        Ok(Self { grid_x1, x2_min, x2_max, n_x2 })
    }

    /// Centered periodic box of length `l2`.
    pub fn centered(grid_x1: Grid1D, l2: f64, n_x2: usize) -> Result<Self> {
        Self::new(grid_x1, -0.5 * l2, 0.5 * l2, n_x2)
    }

    pub fn length_x2(&self) -> f64 {
        self.x2_max - self.x2_min
    }

    pub fn dx2(&self) -> f64 {
        self.length_x2() / self.n_x2 as f64
    }

    pub fn x2(&self, j: usize) -> f64 {
        self.x2_min + j as f64 * self.dx2()
    }

    pub fn x2_nodes(&self) -> Vec<f64> {
        (0..self.n_x2).map(|j| self.x2(j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interface_is_a_node() {
        let g = Grid1D::new(1.0, 0.1).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g.x(g.interface_index), 0.0);
        assert!((g.x(0) + 1.0).abs() < 1e-12);
        assert!((g.x(20) - 1.0).abs() < 1e-12);
        assert!((g.x_half(9) + 0.05).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid1D::new(1.0, 0.0).is_err());
        assert!(Grid1D::new(-1.0, 0.1).is_err());
        let g = Grid1D::new(1.0, 0.1).unwrap();
        assert!(Grid2D::new(g, 0.0, 1.0, 12).is_err());
        assert!(Grid2D::new(g, 0.0, 1.0, 16).is_ok());
    }
}
