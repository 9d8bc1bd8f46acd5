//! Banded LU factorization with partial pivoting (real or complex).
use crate::prelude::*;
use crate::{Complex64, Error, Result};
use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage keeps `kl` extra super-diagonals for pivoting fill-in; row `i`
/// holds columns `i - kl ..= i + ku + kl`.
#[derive(Debug, Clone)]
pub struct Banded<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![T::zero(); n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            T::zero()
        }
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(i < self.n && j < self.n && self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(i < self.n && j < self.n && self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = self.data[k] + v;
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = T::zero();
            for j in lo..=hi {
                s = s + self.data[self.idx(i, j)] * x[j];
            }
            y[i] = s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    /// LU factorization with row pivoting; consumes the matrix.
    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.idx(i, i)].modulus();
            for r in i + 1..=last_row {
                let v = self.data[self.idx(r, i)].modulus();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > scale * 1e-300) || best == 0.0 {
                return Err(Error::Singular { pivot: i });
            }
            piv[i] = p;
            let last_col = (i + ku + kl).min(n - 1);
            if p != i {
                for j in i..=last_col {
                    let a = self.idx(i, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(i, i)];
            for r in i + 1..=last_row {
                let ri = self.idx(r, i);
                let f = self.data[ri] / d;
                self.data[ri] = f;
                if f == T::zero() {
                    continue;
                }
                for j in i + 1..=last_col {
                    let rj = self.idx(r, j);
                    let ij = self.idx(i, j);
                    self.data[rj] = self.data[rj] - f * self.data[ij];
                }
            }
        }
        Ok(BandedLu { a: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    a: Banded<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn n(&self) -> usize {
        self.a.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.a.n;
        let (kl, ku) = (self.a.kl, self.a.ku);
        let a = &self.a;
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            for r in i + 1..=(i + kl).min(n - 1) {
                b[r] = b[r] - a.data[a.idx(r, i)] * bi;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku + kl).min(n - 1) {
                s = s - a.data[a.idx(i, j)] * b[j];
            }
            b[i] = s / a.data[a.idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Smallest pivot modulus, a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        (0..self.a.n).map(|i| self.a.data[self.a.idx(i, i)].modulus()).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for i in 0..n {
            let p = (i..n).max_by(|&x, &y| a[x][i].abs().partial_cmp(&a[y][i].abs()).unwrap()).unwrap();
            a.swap(i, p);
            b.swap(i, p);
            for r in i + 1..n {
                let f = a[r][i] / a[i][i];
                for c in i..n {
                    a[r][c] -= f * a[i][c];
                }
                b[r] -= f * b[i];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    proptest! {
        #[test]
        fn matches_dense_solver(n in 3usize..30, kl in 0usize..4, ku in 0usize..4, seed in 0u64..1000) {
            let mut m = Banded::<f64>::zeros(n, kl, ku);
            let mut s = seed as f64 + 1.0;
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    s = (s * 16807.0) % 2147483647.0;
                    m.set(i, j, s / 2147483647.0 - 0.5 + if i == j { 0.1 } else { 0.0 });
                }
            }
            let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
            let dense = m.to_dense();
            let cond_ok = dense_solve(dense.clone(), b.clone()).iter().all(|v| v.abs() < 1e6);
            prop_assume!(cond_ok);
            let x = m.clone().factor().unwrap().solve(&b);
            let mut y = vec![0.0; n];
            m.matvec(&x, &mut y);
            for i in 0..n {
                prop_assert!((y[i] - b[i]).abs() < 1e-8 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))));
            }
        }
    }

    #[test]
    fn complex_tridiagonal() {
        let n = 50;
        let mut m = Banded::<Complex64>::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, Complex64::new(2.0, 0.3));
            if i > 0 {
                m.set(i, i - 1, Complex64::new(-1.0, 0.1));
            }
            if i + 1 < n {
                m.set(i, i + 1, Complex64::new(-1.0, -0.2));
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = m.clone().factor().unwrap().solve(&b);
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        m.matvec(&x, &mut y);
        for i in 0..n {
            assert!((y[i] - b[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_detected() {
        let m = Banded::<f64>::zeros(4, 1, 1);
        assert!(matches!(m.factor(), Err(Error::Singular { .. })));
    }
}
