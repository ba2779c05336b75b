//! Scalar and vector fields on the N x N periodic grid, plus their spectral
//! counterparts and the handful of spectral operators the solvers need.

use crate::fft::Fft2;
use num_complex::Complex64;
use rayon::prelude::*;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Real scalar samples of `f(ix/n, iy/n)`, row-major `values[iy * n + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    n: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n);
        Self { n, values }
    }

    /// Sample `f(x, y)` on the grid.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            let y = iy as f64 / n as f64;
            for (ix, v) in row.iter_mut().enumerate() {
                *v = f(ix as f64 / n as f64, y);
            }
        });
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n + ix]
    }

    /// Spatial mean over the torus (trapezoid-exact for band-limited data).
    pub fn mean(&self) -> f64 {
        deterministic_sum(&self.values) / (self.n * self.n) as f64
    }

    /// L2 norm over the unit torus.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        deterministic_sum_sq(&self.values) / (self.n * self.n) as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let values = self.values.iter().map(|v| c * v).collect();
        Self { n: self.n, values }
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn to_spectral(&self, fft: &mut Fft2) -> SpectralField {
        let mut coeffs = vec![Complex64::default(); fft.spectral_len()];
        fft.forward(&self.values, &mut coeffs);
        SpectralField { n: self.n, coeffs }
    }
}

/// Half-spectrum Fourier coefficients, `coeffs[kx * n + ky]`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        Self { n, coeffs: vec![Complex64::default(); (n / 2 + 1) * n] }
    }

    pub fn from_parts(n: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), (n / 2 + 1) * n);
        Self { n, coeffs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn to_real(&self, fft: &mut Fft2) -> ScalarField {
        let mut values = vec![0.0; self.n * self.n];
        fft.inverse(&self.coeffs, &mut values);
        ScalarField { n: self.n, values }
    }

    /// Parseval: integral of f^2 over the torus.
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.n;
        spectral_sum(n, &self.coeffs, |_kx, _ky, c| c.norm_sqr())
    }

    /// Integral of |grad f|^2 over the torus.
    pub fn grad_norm_sq(&self) -> f64 {
        let n = self.n;
        spectral_sum(n, &self.coeffs, |kx, ky, c| {
            TWO_PI * TWO_PI * (kx * kx + ky * ky) * c.norm_sqr()
        })
    }

    pub fn set_mean(&mut self, mean: f64) {
        self.coeffs[0] = Complex64::new(mean, 0.0);
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Multiply every coefficient by `g(kx, ky)` (signed frequencies).
    pub fn apply_multiplier(&mut self, g: impl Fn(f64, f64) -> f64 + Sync) {
        let n = self.n;
        self.coeffs.par_chunks_mut(n).enumerate().for_each(|(kx, col)| {
            let kxf = kx as f64;
            for (iy, c) in col.iter_mut().enumerate() {
                *c *= g(kxf, Fft2::freq(n, iy));
            }
        });
    }

    /// Heat semigroup e^{t Laplacian} (unit diffusivity, time t).
    pub fn heat_multiplier(&mut self, t: f64) {
        self.apply_multiplier(|kx, ky| (-TWO_PI * TWO_PI * (kx * kx + ky * ky) * t).exp());
    }
}

fn spectral_sum(n: usize, coeffs: &[Complex64], term: impl Fn(f64, f64, Complex64) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = coeffs
        .par_chunks(n)
        .enumerate()
        .map(|(kx, col)| {
            let w = Fft2::kx_weight(n, kx);
            let kxf = kx as f64;
            let mut s = 0.0;
            for (iy, c) in col.iter().enumerate() {
                s += term(kxf, Fft2::freq(n, iy), *c);
            }
            w * s
        })
        .collect();
    partials.iter().sum()
}

/// Velocity samples on the grid.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Self { n, x: vec![0.0; n * n], y: vec![0.0; n * n] }
    }

    pub fn max_speed(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(u, v)| u * u + v * v)
            .fold(0.0f64, f64::max)
            .sqrt()
    }
}

/// Perpendicular gradient u = (-d/dy, d/dx) of a stream function, in spectral space.
pub fn perp_grad(phi: &SpectralField) -> (SpectralField, SpectralField) {
    let mut ux = phi.clone();
    let mut uy = phi.clone();
    ux.apply_multiplier_complex(|_kx, ky| Complex64::new(0.0, -TWO_PI * ky));
    uy.apply_multiplier_complex(|kx, _ky| Complex64::new(0.0, TWO_PI * kx));
    (ux, uy)
}

impl SpectralField {
    pub fn apply_multiplier_complex(&mut self, g: impl Fn(f64, f64) -> Complex64 + Sync) {
        let n = self.n;
        self.coeffs.par_chunks_mut(n).enumerate().for_each(|(kx, col)| {
            let kxf = kx as f64;
            for (iy, c) in col.iter_mut().enumerate() {
                *c *= g(kxf, Fft2::freq(n, iy));
            }
        });
    }

    /// Zero all modes with |kx| or |ky| above n/3 (two-thirds rule).
    pub fn dealias(&mut self) {
        let n = self.n;
        let cut = (n / 3) as f64;
        self.apply_multiplier(|kx, ky| {
            if kx.abs() > cut || ky.abs() > cut {
                0.0
            } else {
                1.0
            }
        });
    }
}

/// Chunked, order-fixed summation; deterministic across runs and thread counts.
pub fn deterministic_sum(v: &[f64]) -> f64 {
    let partials: Vec<f64> = v
        .par_chunks(4096)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partials.iter().sum()
}

fn deterministic_sum_sq(v: &[f64]) -> f64 {
    let partials: Vec<f64> = v
        .par_chunks(4096)
        .map(|c| c.iter().map(|x| x * x).sum::<f64>())
        .collect();
    partials.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_match_parseval() {
        let n = 64;
        let mut fft = Fft2::new(n);
        let f = ScalarField::from_fn(n, |x, y| {
            (TWO_PI * x).sin() * 2.0f64.sqrt() + 0.3 * (TWO_PI * 2.0 * (x + y)).cos()
        });
        let s = f.to_spectral(&mut fft);
        assert!((f.l2_norm_sq() - s.l2_norm_sq()).abs() < 1e-12);
        // |grad sqrt(2) sin(2 pi x)|^2 integrates to 4 pi^2; the second mode adds
        // 2 * (2 pi)^2 * (4+4) * 0.045
        let expect = TWO_PI.powi(2) * (1.0 + 0.09 * 4.0);
        assert!((s.grad_norm_sq() - expect).abs() < 1e-10, "{}", s.grad_norm_sq());
    }

    #[test]
    fn perp_grad_is_divergence_free() {
        let n = 32;
        let mut fft = Fft2::new(n);
        let phi = ScalarField::from_fn(n, |x, y| (TWO_PI * (3.0 * x + y)).sin());
        let s = phi.to_spectral(&mut fft);
        let (ux, uy) = perp_grad(&s);
        // spectral divergence
        let mut div = 0.0f64;
        for kx in 0..=n / 2 {
            for iy in 0..n {
                let ky = Fft2::freq(n, iy);
                let d = Complex64::new(0.0, TWO_PI * kx as f64) * ux.coeffs()[kx * n + iy]
                    + Complex64::new(0.0, TWO_PI * ky) * uy.coeffs()[kx * n + iy];
                div = div.max(d.norm());
            }
        }
        assert!(div < 1e-12);
    }
}
