//! Cached 2-d real-to-complex FFT plans on the unit torus.
//!
//! Real fields are stored row-major, `values[iy * n + ix]`, sampling
//! `f(ix/n, iy/n)`. Spectral fields hold the half-spectrum `kx in 0..=n/2`
//! transposed column-major, `coeffs[kx * n + ky]`, normalized so that the
//! entries are true Fourier coefficients of `f(x) = sum c_k e^{2 pi i k.x}`.

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const TILE: usize = 32;

pub struct Fft2 {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    half: Vec<Complex64>,
    halft: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even and >= 4");
        let mut rp = RealFftPlanner::new();
        let mut cp = FftPlanner::new();
        Self {
            n,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            col_fwd: cp.plan_fft_forward(n),
            col_inv: cp.plan_fft_inverse(n),
            half: vec![Complex64::default(); n * (n / 2 + 1)],
            halft: vec![Complex64::default(); (n / 2 + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of retained kx columns (n/2 + 1).
    pub fn nkx(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spectral_len(&self) -> usize {
        self.nkx() * self.n
    }

    /// Forward transform; `out[kx * n + ky]` receives Fourier coefficients.
    pub fn forward(&mut self, real: &[f64], out: &mut [Complex64]) {
        let n = self.n;
        let nk = self.nkx();
        assert_eq!(real.len(), n * n);
        assert_eq!(out.len(), nk * n);
        let r2c = &self.r2c;
        self.half
            .par_chunks_mut(nk)
            .zip(real.par_chunks(n))
            .for_each_init(
                || (r2c.make_scratch_vec(), r2c.make_input_vec()),
                |(scratch, input), (row_out, row_in)| {
                    input.copy_from_slice(row_in);
                    r2c.process_with_scratch(input, row_out, scratch).unwrap();
                },
            );
        transpose(&self.half, &mut self.halft, n, nk);
        let col = &self.col_fwd;
        let scale = 1.0 / (n * n) as f64;
        out.par_chunks_mut(n)
            .zip(self.halft.par_chunks_mut(n))
            .for_each_init(
                || vec![Complex64::default(); col.get_inplace_scratch_len()],
                |scratch, (dst, colbuf)| {
                    col.process_with_scratch(colbuf, scratch);
                    for (d, s) in dst.iter_mut().zip(colbuf.iter()) {
                        *d = *s * scale;
                    }
                },
            );
    }

    /// Inverse transform of true Fourier coefficients back to samples.
    pub fn inverse(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.n;
        let nk = self.nkx();
        assert_eq!(coeffs.len(), nk * n);
        assert_eq!(out.len(), n * n);
        let col = &self.col_inv;
        self.halft
            .par_chunks_mut(n)
            .zip(coeffs.par_chunks(n))
            .for_each_init(
                || vec![Complex64::default(); col.get_inplace_scratch_len()],
                |scratch, (colbuf, src)| {
                    colbuf.copy_from_slice(src);
                    col.process_with_scratch(colbuf, scratch);
                },
            );
        transpose(&self.halft, &mut self.half, nk, n);
        let c2r = &self.c2r;
        out.par_chunks_mut(n)
            .zip(self.half.par_chunks_mut(nk))
            .for_each_init(
                || (c2r.make_scratch_vec(), c2r.make_output_vec()),
                |(scratch, obuf), (row_out, row_in)| {
                    // realfft rejects inconsistent Nyquist/DC imaginary parts only in
                    // debug; zero them for exactness.
                    row_in[0].im = 0.0;
                    let last = row_in.len() - 1;
                    row_in[last].im = 0.0;
                    c2r.process_with_scratch(row_in, obuf, scratch).unwrap();
                    row_out.copy_from_slice(obuf);
                },
            );
    }

    /// Signed frequency for index `ky in 0..n`.
    #[inline]
    pub fn freq(n: usize, idx: usize) -> f64 {
        if idx <= n / 2 {
            idx as f64
        } else {
            idx as f64 - n as f64
        }
    }

    /// Parseval weight of a half-spectrum column: 2 except for kx = 0, n/2.
    #[inline]
    pub fn kx_weight(n: usize, kx: usize) -> f64 {
        if kx == 0 || kx == n / 2 {
            1.0
        } else {
            2.0
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    // src is rows x cols, dst becomes cols x rows
    dst.par_chunks_mut(rows * TILE.min(cols))
        .enumerate()
        .for_each(|(band, out)| {
            let c0 = band * TILE;
            let cband = TILE.min(cols - c0);
            for r0 in (0..rows).step_by(TILE) {
                let rband = TILE.min(rows - r0);
                for dc in 0..cband {
                    let out_row = &mut out[dc * rows..(dc + 1) * rows];
                    for dr in 0..rband {
                        out_row[r0 + dr] = src[(r0 + dr) * cols + c0 + dc];
                    }
                }
            }
        });
}
