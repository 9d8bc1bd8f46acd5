//! Split-step solver for the effective amplitude equation
//! `i A_T = -nu2/2 A_XX + kappa |A|^2 A` on a periodic `X` interval.
use crate::fft::SpectralDiff;
use crate::prelude::*;
use crate::{Complex64, Error, Result};
use core::f64::consts::PI;

/// Largest phase increment per step allowed by [`evolve`].
pub const MAX_PHASE_PER_STEP: f64 = PI;

/// Envelope samples at `X_j = x_min + j L / n`, `j = 0..n`, at slow time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeField {
    pub values: Vec<Complex64>,
    pub x_min: f64,
    pub length: f64,
    pub t: f64,
}

impl EnvelopeField {
    pub fn new(values: Vec<Complex64>, x_min: f64, length: f64, t: f64) -> Result<Self> {
        if !values.len().is_power_of_two() {
            return Err(Error::InvalidGrid(format!("envelope length {} is not a power of two", values.len())));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidGrid("envelope period must be positive".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NotFinite("envelope samples".into()));
        }
        Ok(Self { values, x_min, length, t })
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(n: usize, x_min: f64, length: f64, f: F) -> Result<Self> {
        let dx = length / n as f64;
        Self::new((0..n).map(|j| f(x_min + j as f64 * dx)).collect(), x_min, length, 0.0)
    }

    /// `exp(-X^2 / (2 w^2))` centred in the interval, times `amp`.
    pub fn gaussian(n: usize, length: f64, amp: f64, width: f64) -> Result<Self> {
        Self::from_fn(n, -0.5 * length, length, |x| Complex64::new(amp * (-x * x / (2.0 * width * width)).exp(), 0.0))
    }

    /// Stationary soliton `eta sech(beta X)` for `kappa nu2 < 0`, `beta^2 = eta^2 |kappa / nu2|`.
    pub fn soliton(n: usize, length: f64, eta: f64, nu2: f64, kappa: f64) -> Result<Self> {
        let (beta, _) = soliton_parameters(eta, nu2, kappa)?;
        Self::from_fn(n, -0.5 * length, length, |x| Complex64::new(eta / (beta * x).cosh(), 0.0))
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// Ratio of the largest modulus within the outer sixteenths of the period to the overall maximum.
    pub fn seam_ratio(&self) -> f64 {
        let n = self.n();
        let edge = (n / 16).max(1);
        let peak = self.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let e = self.values[..edge].iter().chain(&self.values[n - edge..]).fold(0.0f64, |m, v| m.max(v.norm()));
        e / peak
    }

    pub fn check_seam(&self, tol: f64) -> Result<()> {
        let r = self.seam_ratio();
        if r > tol {
            Err(Error::Seam(format!("envelope reaches the periodic seam (ratio {r:e})")))
        } else {
            Ok(())
        }
    }

    fn diff(&self) -> Result<SpectralDiff> {
        SpectralDiff::new(self.n(), self.length)
    }

    /// Periodic cubic (Catmull-Rom) interpolation at `x`.
    pub fn eval_cubic(&self, x: f64) -> Complex64 {
        let n = self.n() as isize;
        let s = (x - self.x_min) / self.dx();
        let j = s.floor();
        let t = s - j;
        let j = j as isize;
        let at = |k: isize| self.values[k.rem_euclid(n) as usize];
        let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        let t2 = t * t;
        let t3 = t2 * t;
        (p1 * 2.0 + (p2 - p0) * t + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2 + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3) * 0.5
    }

    /// Samples translated by `shift` (`new(X) = old(X - shift)`), exact for band-limited data.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let v = self.diff()?.shift(&self.values, shift);
        Ok(Self { values: v, ..self.clone() })
    }
}

pub fn soliton_parameters(eta: f64, nu2: f64, kappa: f64) -> Result<(f64, f64)> {
    if !(kappa * nu2 < 0.0) {
        return Err(Error::InvalidArgument("a bright soliton needs kappa * nu2 < 0".into()));
    }
    let beta = eta * (kappa / nu2).abs().sqrt();
    Ok((beta, -0.5 * nu2 * beta * beta))
}

/// Exact soliton `eta sech(beta X) exp(-i Omega T)`, `Omega = -nu2 beta^2 / 2`.
pub fn soliton_exact(x: f64, t: f64, eta: f64, nu2: f64, kappa: f64) -> Result<Complex64> {
    let (beta, omega) = soliton_parameters(eta, nu2, kappa)?;
    Ok(Complex64::new(0.0, -omega * t).exp() * (eta / (beta * x).cosh()))
}

/// Strang splitting: half nonlinear phase, full linear Fourier step, half nonlinear phase.
pub fn evolve(a0: &EnvelopeField, nu2: f64, kappa: f64, dt: f64, n_steps: usize) -> Result<EnvelopeField> {
    let diff = a0.diff()?;
    let kmax = diff.xi_full().iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let phase = dt.abs() * (0.5 * nu2.abs() * kmax * kmax).max(kappa.abs() * a0.max_abs().powi(2));
    if phase > MAX_PHASE_PER_STEP {
        return Err(Error::Cfl { dt, bound: dt * MAX_PHASE_PER_STEP / phase });
    }
    // a single mode e^{i xi X} has A_T = -i nu2 xi^2 / 2 A
    let lin: Vec<Complex64> = diff.xi_full().iter().map(|&xi| Complex64::new(0.0, -0.5 * nu2 * xi * xi * dt).exp()).collect();
    let fft = diff.fft();
    let mut a = a0.values.clone();
    let half_nl = |a: &mut [Complex64]| {
        for v in a.iter_mut() {
            *v *= Complex64::new(0.0, -kappa * v.norm_sqr() * 0.5 * dt).exp();
        }
    };
    for step in 0..n_steps {
        half_nl(&mut a);
        fft.forward(&mut a);
        for (v, l) in a.iter_mut().zip(&lin) {
            *v *= l;
        }
        fft.inverse(&mut a);
        half_nl(&mut a);
        if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NotFinite(format!("envelope after step {}", step + 1)));
        }
    }
    Ok(EnvelopeField { values: a, x_min: a0.x_min, length: a0.length, t: a0.t + dt * n_steps as f64 })
}

/// `(mass, hamiltonian)` with `mass = int |A|^2` and
/// `H = int (nu2/2 |A_X|^2 + kappa/2 |A|^4)`, the functional for which the
/// equation reads `i A_T = dH / d conj(A)`.
pub fn invariants(a: &EnvelopeField, nu2: f64, kappa: f64) -> Result<(f64, f64)> {
    let dx = a.dx();
    let mass = a.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx;
    let ax = a.diff()?.derivative(&a.values, 1);
    let h = a.values.iter().zip(&ax).map(|(v, d)| 0.5 * nu2 * d.norm_sqr() + 0.5 * kappa * v.norm_sqr() * v.norm_sqr()).sum::<f64>() * dx;
    Ok((mass, h))
}

/// Spectral `X` derivatives of orders `1..=max_order`.
pub fn derivatives(a: &EnvelopeField, max_order: usize) -> Result<Vec<Vec<Complex64>>> {
    if max_order > 3 {
        return Err(Error::UnsupportedOrder(max_order));
    }
    Ok(a.diff()?.derivatives(&a.values, max_order as u32))
}

/// `A_T` from the equation: `i nu2/2 A_XX - i kappa |A|^2 A`.
pub fn time_derivative(a: &EnvelopeField, nu2: f64, kappa: f64) -> Result<Vec<Complex64>> {
    let axx = a.diff()?.derivative(&a.values, 2);
    Ok(a.values.iter().zip(&axx).map(|(v, d)| Complex64::new(0.0, 0.5 * nu2) * d - Complex64::new(0.0, kappa * v.norm_sqr()) * v).collect())
}

/// Envelope derivatives needed by the ansatz and its residual, all spectral.
#[derive(Debug, Clone)]
pub struct EnvelopeJet {
    pub a: Vec<Complex64>,
    pub ax: Vec<Complex64>,
    pub axx: Vec<Complex64>,
    pub axxx: Vec<Complex64>,
    pub at: Vec<Complex64>,
    pub axt: Vec<Complex64>,
    pub axxt: Vec<Complex64>,
}

impl EnvelopeJet {
    pub fn new(a: &EnvelopeField, nu2: f64, kappa: f64) -> Result<Self> {
        let diff = a.diff()?;
        let d = diff.derivatives(&a.values, 3);
        let at = time_derivative(a, nu2, kappa)?;
        let dt = diff.derivatives(&at, 2);
        let mut it = d.into_iter();
        let (ax, axx, axxx) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        let mut it = dt.into_iter();
        let (axt, axxt) = (it.next().unwrap(), it.next().unwrap());
        Ok(Self { a: a.values.clone(), ax, axx, axxx, at, axt, axxt })
    }

    pub fn zeros(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self { a: z.clone(), ax: z.clone(), axx: z.clone(), axxx: z.clone(), at: z.clone(), axt: z.clone(), axxt: z }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_stays_zero() {
        let a = EnvelopeField::new(vec![Complex64::new(0.0, 0.0); 64], -10.0, 20.0, 0.0).unwrap();
        let b = evolve(&a, -0.3, 1.0, 0.01, 10).unwrap();
        assert!(b.max_abs() == 0.0);
        assert!((b.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_mode_phase() {
        let l = 20.0;
        let xi = 2.0 * PI * 3.0 / l;
        let nu2 = -0.4;
        let a = EnvelopeField::from_fn(64, 0.0, l, |x| Complex64::new(0.0, xi * x).exp()).unwrap();
        let b = evolve(&a, nu2, 0.0, 0.05, 20).unwrap();
        let want = Complex64::new(0.0, -0.5 * nu2 * xi * xi).exp();
        for (j, v) in b.values.iter().enumerate() {
            assert!((v - want * a.values[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_third_derivative() {
        let a = EnvelopeField::gaussian(256, 40.0, 1.0, 1.0).unwrap();
        let d = derivatives(&a, 3).unwrap();
        for j in 0..256 {
            let x = a.x(j);
            let want = (3.0 * x - x * x * x) * (-x * x / 2.0).exp();
            assert!((d[2][j].re - want).abs() < 1e-8);
        }
        assert!(matches!(derivatives(&a, 4), Err(Error::UnsupportedOrder(4))));
    }

    #[test]
    fn mass_of_normalized_gaussian() {
        let w = 1.3;
        let amp = (1.0 / (w * PI.sqrt())).sqrt();
        let a = EnvelopeField::gaussian(256, 40.0, amp, w).unwrap();
        let (m, _) = invariants(&a, 1.0, 0.0).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_interpolation_and_shift() {
        let a = EnvelopeField::gaussian(512, 40.0, 1.0, 1.0).unwrap();
        let x = 0.1234;
        assert!((a.eval_cubic(x).re - (-x * x / 2.0f64).exp()).abs() < 1e-5);
        let s = a.shifted(0.5).unwrap();
        let j = 256;
        assert!((s.values[j].re - (-(a.x(j) - 0.5).powi(2) / 2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn stability_guard() {
        let a = EnvelopeField::gaussian(1024, 20.0, 1.0, 1.0).unwrap();
        assert!(matches!(evolve(&a, 1.0, 0.0, 1.0, 1), Err(Error::Cfl { .. })));
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let a = EnvelopeField::gaussian(256, 40.0, 0.8, 1.5).unwrap();
        let (nu2, kappa) = (-0.3, 0.7);
        let at = time_derivative(&a, nu2, kappa).unwrap();
        let err = |d: f64| {
            let p = evolve(&a, nu2, kappa, d, 1).unwrap();
            let m = evolve(&a, nu2, kappa, -d, 1).unwrap();
            p.values.iter().zip(&m.values).zip(&at).map(|((p, m), t)| ((p - m) / (2.0 * d) - t).norm()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 < 1e-5 && e1 / e2 > 3.5, "{e1} {e2}");
    }
}
