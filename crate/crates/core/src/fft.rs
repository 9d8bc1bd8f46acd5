//! Radix-2 complex FFT and spectral differentiation on periodic grids.
use crate::prelude::*;
use crate::{Complex64, Error, Result};
use core::f64::consts::PI;

/// Precomputed plan for power-of-two complex transforms.
///
/// With the `std` feature the transforms run through `rustfft`; the built-in
/// radix-2 kernel is used otherwise (and stays available as `forward_radix2`).
#[derive(Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    rev: Vec<u32>,
    #[cfg(feature = "std")]
    backend: (std::sync::Arc<dyn rustfft::Fft<f64>>, std::sync::Arc<dyn rustfft::Fft<f64>>),
}

impl core::fmt::Debug for Fft {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Fft").field("n", &self.n).finish()
    }
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n == 0 {
            return Err(Error::InvalidArgument(format!("FFT length {n} is not a power of two")));
        }
        let bits = n.trailing_zeros();
        let rev = (0..n as u32).map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) }).collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        Ok(Self {
            n,
            twiddles,
            rev,
            #[cfg(feature = "std")]
            backend: {
                let mut planner = rustfft::FftPlanner::new();
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            },
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X_k = sum_j x_j e^{-2 pi i jk/n}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        #[cfg(feature = "std")]
        {
            assert_eq!(buf.len(), self.n, "buffer length does not match plan");
            self.backend.0.process(buf);
        }
        #[cfg(not(feature = "std"))]
        self.transform(buf, false);
    }

    /// In-place inverse transform including the `1/n` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        #[cfg(feature = "std")]
        {
            assert_eq!(buf.len(), self.n, "buffer length does not match plan");
            self.backend.1.process(buf);
        }
        #[cfg(not(feature = "std"))]
        self.transform(buf, true);
        let s = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// Forward transform through the built-in radix-2 kernel regardless of features.
    pub fn forward_radix2(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n, "buffer length does not match plan");
        for i in 0..n {
            let j = self.rev[i] as usize;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Angular wavenumbers of the DFT bins for a periodic domain of length `length`.
/// The Nyquist bin gets wavenumber 0 so that odd derivatives of real data stay real.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * PI / length;
    (0..n)
        .map(|k| {
            if k < n / 2 {
                base * k as f64
            } else if k == n / 2 {
                0.0
            } else {
                base * (k as f64 - n as f64)
            }
        })
        .collect()
}

/// Wavenumbers without zeroing the Nyquist bin (used for even-order multipliers).
pub fn wavenumbers_full(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * PI / length;
    (0..n).map(|k| if k <= n / 2 { base * k as f64 } else { base * (k as f64 - n as f64) }).collect()
}

/// Periodic spectral differentiation of complex samples.
#[derive(Debug, Clone)]
pub struct SpectralDiff {
    fft: Fft,
    xi: Vec<f64>,
    xi_full: Vec<f64>,
    length: f64,
}

impl SpectralDiff {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        Ok(Self { fft: Fft::new(n)?, xi: wavenumbers(n, length), xi_full: wavenumbers_full(n, length), length })
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fft.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn fft(&self) -> &Fft {
        &self.fft
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn xi_full(&self) -> &[f64] {
        &self.xi_full
    }

    /// `(i xi)^order` applied in Fourier space. Odd orders drop the Nyquist bin.
    pub fn multiplier(&self, k: usize, order: u32) -> Complex64 {
        let xi = if order % 2 == 1 { self.xi[k] } else { self.xi_full[k] };
        let mut m = Complex64::new(1.0, 0.0);
        for _ in 0..order {
            m *= Complex64::new(0.0, xi);
        }
        m
    }

    /// Returns the `order`-th derivative of `values`.
    pub fn derivative(&self, values: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.derivative_in_place(&mut buf, order);
        buf
    }

    pub fn derivative_in_place(&self, buf: &mut [Complex64], order: u32) {
        if order == 0 {
            return;
        }
        self.fft.forward(buf);
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= self.multiplier(k, order);
        }
        self.fft.inverse(buf);
    }

    /// Derivatives of orders `1..=max_order` sharing one forward transform.
    pub fn derivatives(&self, values: &[Complex64], max_order: u32) -> Vec<Vec<Complex64>> {
        let mut spec = values.to_vec();
        self.fft.forward(&mut spec);
        (1..=max_order)
            .map(|o| {
                let mut b: Vec<Complex64> = spec.iter().enumerate().map(|(k, v)| v * self.multiplier(k, o)).collect();
                self.fft.inverse(&mut b);
                b
            })
            .collect()
    }

    /// First derivatives of two real rows at once (packed as one complex signal).
    pub fn derivative_real_pair(&self, a: &[f64], b: &[f64], da: &mut [f64], db: &mut [f64], scratch: &mut [Complex64]) {
        for (s, (x, y)) in scratch.iter_mut().zip(a.iter().zip(b)) {
            *s = Complex64::new(*x, *y);
        }
        self.fft.forward(scratch);
        for (k, v) in scratch.iter_mut().enumerate() {
            *v *= Complex64::new(0.0, self.xi[k]);
        }
        self.fft.inverse(scratch);
        for (s, (x, y)) in scratch.iter().zip(da.iter_mut().zip(db.iter_mut())) {
            *x = s.re;
            *y = s.im;
        }
    }

    /// Shifts periodic samples by `shift` (new(x) = old(x - shift)) exactly in Fourier space.
    pub fn shift(&self, values: &[Complex64], shift: f64) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.fft.forward(&mut buf);
        for (k, v) in buf.iter_mut().enumerate() {
            // the Nyquist bin is shifted with a real cosine factor to keep real data real
            let f = if k == self.len() / 2 {
                Complex64::new((self.xi_full[k] * shift).cos(), 0.0)
            } else {
                Complex64::new(0.0, -self.xi[k] * shift).exp()
            };
            *v *= f;
        }
        self.fft.inverse(&mut buf);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| x.iter().enumerate().map(|(j, v)| v * Complex64::new(0.0, -2.0 * PI * (j * k) as f64 / n as f64).exp()).sum())
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for &n in &[1usize, 2, 8, 64] {
            let x: Vec<Complex64> = (0..n).map(|j| Complex64::new((j as f64 * 0.7).sin(), (j * j) as f64 * 0.01)).collect();
            let mut y = x.clone();
            let plan = Fft::new(n).unwrap();
            plan.forward(&mut y);
            let r = naive_dft(&x);
            for (a, b) in y.iter().zip(&r) {
                assert!((a - b).norm() < 1e-10 * n as f64);
            }
            plan.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).norm() < 1e-13);
            }
            let mut z = x.clone();
            plan.forward_radix2(&mut z);
            for (a, b) in z.iter().zip(&r) {
                assert!((a - b).norm() < 1e-10 * n as f64);
            }
        }
    }

    #[test]
    fn derivative_of_resolved_mode_is_exact() {
        let n = 32;
        let l = 2.0 * PI;
        let d = SpectralDiff::new(n, l).unwrap();
        let x: Vec<f64> = (0..n).map(|j| l * j as f64 / n as f64).collect();
        let v: Vec<Complex64> = x.iter().map(|&x| Complex64::new(0.0, 5.0 * x).exp()).collect();
        let dv = d.derivative(&v, 1);
        for (a, b) in dv.iter().zip(&v) {
            assert!((a - Complex64::new(0.0, 5.0) * b).norm() < 1e-12);
        }
    }

    #[test]
    fn packed_real_derivatives() {
        let n = 64;
        let l = 10.0;
        let d = SpectralDiff::new(n, l).unwrap();
        let x: Vec<f64> = (0..n).map(|j| l * j as f64 / n as f64).collect();
        let a: Vec<f64> = x.iter().map(|&x| (2.0 * PI * x / l).sin()).collect();
        let b: Vec<f64> = x.iter().map(|&x| (6.0 * PI * x / l).cos()).collect();
        let (mut da, mut db) = (vec![0.0; n], vec![0.0; n]);
        let mut s = vec![Complex64::new(0.0, 0.0); n];
        d.derivative_real_pair(&a, &b, &mut da, &mut db, &mut s);
        for j in 0..n {
            assert!((da[j] - 2.0 * PI / l * (2.0 * PI * x[j] / l).cos()).abs() < 1e-11);
            assert!((db[j] + 6.0 * PI / l * (6.0 * PI * x[j] / l).sin()).abs() < 1e-11);
        }
    }

    #[test]
    fn fourier_shift_of_gaussian() {
        let n = 128;
        let l = 40.0;
        let d = SpectralDiff::new(n, l).unwrap();
        let x: Vec<f64> = (0..n).map(|j| -20.0 + l * j as f64 / n as f64).collect();
        let g = |x: f64| Complex64::new((-x * x / 2.0).exp(), 0.0);
        let v: Vec<Complex64> = x.iter().map(|&x| g(x)).collect();
        let s = d.shift(&v, 0.37);
        for j in 0..n {
            assert!((s[j] - g(x[j] - 0.37)).norm() < 1e-12);
        }
    }
}
