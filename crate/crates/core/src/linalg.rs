//! Small dense kernels: Hessenberg QR eigenvalues, dense LU, Arnoldi.
use crate::prelude::*;
use crate::{Complex64, Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut p = i;
            for r in i + 1..n {
                if a[r * n + i].abs() > a[p * n + i].abs() {
                    p = r;
                }
            }
            if a[p * n + i] == 0.0 {
                return Err(Error::Singular { pivot: i });
            }
            if p != i {
                for c in 0..n {
                    a.swap(i * n + c, p * n + c);
                }
                x.swap(i, p);
            }
            for r in i + 1..n {
                let f = a[r * n + i] / a[i * n + i];
                if f != 0.0 {
                    for c in i..n {
                        a[r * n + c] -= f * a[i * n + c];
                    }
                    x[r] -= f * x[i];
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..n {
                s -= a[i * n + c] * x[c];
            }
            x[i] = s / a[i * n + i];
        }
        Ok(x)
    }

    /// All eigenvalues of an upper Hessenberg matrix (shifted QR, Francis double step).
    pub fn hessenberg_eigenvalues(&self) -> Result<Vec<Complex64>> {
        hqr(self)
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hqr(h: &Dense) -> Result<Vec<Complex64>> {
    let n = h.n;
    // 1-based working copy keeps the classic index arithmetic readable
    let mut a = vec![vec![0.0f64; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h.get(i, j);
        }
    }
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut x, mut y, mut z, mut w, mut p, mut q, mut r, mut s);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                y = a[nu - 1][nu - 1];
                w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return Err(Error::NoConvergence { iterations: its, residual: a[nu][nu - 1].abs() });
                    }
                    if its == 10 || its == 20 || its == 40 {
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nu - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l + 1 >= nn as usize {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Arnoldi factorization `OP V_m = V_{m+1} H` from a deterministic start vector.
/// Returns the basis (at most `m + 1` vectors) and the `(k+1) x k` Hessenberg
/// matrix stored as a `k x k` square part plus the trailing subdiagonal entry.
pub struct Arnoldi {
    pub basis: Vec<Vec<f64>>,
    pub h: Dense,
    pub h_next: f64,
}

pub fn arnoldi<F: FnMut(&[f64], &mut [f64])>(mut op: F, start: &[f64], m: usize) -> Arnoldi {
    let n = start.len();
    let m = m.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let nv = norm2(start);
    basis.push(start.iter().map(|v| v / nv).collect());
    let mut hfull = vec![vec![0.0; m]; m + 1];
    let mut k = 0;
    let mut h_next = 0.0;
    let mut w = vec![0.0; n];
    while k < m {
        op(&basis[k], &mut w);
        for _pass in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                hfull[j][k] += c;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let nw = norm2(&w);
        hfull[k + 1][k] = nw;
        k += 1;
        h_next = nw;
        let scale = hfull.iter().take(k + 1).map(|r| r[k - 1].abs()).fold(0.0, f64::max);
        if nw <= 1e-14 * scale || k == m {
            break;
        }
        basis.push(w.iter().map(|v| v / nw).collect());
    }
    let mut h = Dense::zeros(k);
    for i in 0..k {
        for j in 0..k {
            h.set(i, j, hfull[i][j]);
        }
    }
    basis.truncate(k);
    Arnoldi { basis, h, h_next }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessenberg_eigenvalues_of_companion() {
        // (x-1)(x-2)(x-3)(x^2+1) companion matrix
        // x^5 - 6x^4 + 12x^3 - 12x^2 + 11x - 6
        let coeffs = [-6.0, 11.0, -12.0, 12.0, -6.0];
        let n = 5;
        let mut h = Dense::zeros(n);
        for i in 1..n {
            h.set(i, i - 1, 1.0);
        }
        for i in 0..n {
            h.set(i, n - 1, -coeffs[i]);
        }
        let mut ev = h.hessenberg_eigenvalues().unwrap();
        ev.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        let expect = [
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ];
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn symmetric_tridiagonal_eigenvalues() {
        let n = 12;
        let mut h = Dense::zeros(n);
        for i in 0..n {
            h.set(i, i, 2.0);
            if i > 0 {
                h.set(i, i - 1, -1.0);
                h.set(i - 1, i, -1.0);
            }
        }
        let mut ev: Vec<f64> = h.hessenberg_eigenvalues().unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (j, v) in ev.iter().enumerate() {
            let e = 2.0 - 2.0 * (core::f64::consts::PI * (j + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_roundtrip() {
        let mut a = Dense::zeros(3);
        let vals = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                a.set(i, j, vals[i][j]);
            }
        }
        let x = a.solve(&[1.0, 2.0, 3.0]).unwrap();
        let y = a.matvec(&x);
        for (u, v) in y.iter().zip(&[1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn arnoldi_relation() {
        let n = 30;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = (i as f64 + 1.0) * x[i] + if i > 0 { 0.5 * x[i - 1] } else { 0.0 };
            }
        };
        let start: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin()).collect();
        let ar = arnoldi(op, &start, 10);
        assert_eq!(ar.basis.len(), 10);
        for i in 0..10 {
            for j in 0..10 {
                let d = dot(&ar.basis[i], &ar.basis[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
