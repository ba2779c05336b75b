//! Periodic parabolic homogenization: cell problems, correctors (space and
//! time), effective tensors, Taylor dispersion closed forms, the parabolic
//! two-scale expansion and its quantitative error study.
//!
//! Matrix conventions: the stream matrix is s = psi I_perp with
//! (I_perp)_{21} = -(I_perp)_{12} = 1, the induced velocity is
//! b = -div s = perp-grad psi (row divergence), and skew flux potentials are
//! written m_e = mu_e I_perp with div m_e = perp-grad mu_e.

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::{ScalarField, SpectralField, VectorField, TWO_PI};
use crate::pde::{solve_observed, SolveConfig};
use num_complex::Complex64;

/// Periodic stream function psi(t, y) driving the cell problem.
#[derive(Debug, Clone)]
pub enum StreamSpec {
    Zero,
    /// psi(y) = a eps^2 sin(2 pi y_2): the single-mode shear layer.
    SingleModeShear { a: f64, eps: f64 },
    /// Arbitrary time-independent psi samples on the cell grid.
    Space(ScalarField),
    /// 1-periodic-in-time psi given by uniformly spaced frames.
    SpaceTime(Vec<ScalarField>),
}

#[derive(Debug, Clone)]
pub struct CellProblemSpec {
    pub kappa: f64,
    pub stream: StreamSpec,
    /// Constant drift, in cell-coordinate units.
    pub constant_drift: Option<[f64; 2]>,
    pub cell_resolution: usize,
}

impl CellProblemSpec {
    pub fn shear(a: f64, eps: f64, kappa: f64, n: usize) -> Self {
        Self {
            kappa,
            stream: StreamSpec::SingleModeShear { a, eps },
            constant_drift: None,
            cell_resolution: n,
        }
    }

    fn frames(&self) -> Vec<ScalarField> {
        let n = self.cell_resolution;
        match &self.stream {
            StreamSpec::Zero => vec![ScalarField::zeros(n)],
            StreamSpec::SingleModeShear { a, eps } => {
                let amp = a * eps * eps;
                vec![ScalarField::from_fn(n, move |_x, y| amp * (TWO_PI * y).sin())]
            }
            StreamSpec::Space(psi) => vec![psi.clone()],
            StreamSpec::SpaceTime(frames) => frames.clone(),
        }
    }

    /// Contraction number a eps^2 / kappa driving the fixed point.
    pub fn peclet(&self) -> f64 {
        let amp = match &self.stream {
            StreamSpec::Zero => 0.0,
            StreamSpec::SingleModeShear { a, eps } => a * eps * eps,
            StreamSpec::Space(psi) => psi.max_abs(),
            StreamSpec::SpaceTime(frames) => {
                frames.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
            }
        };
        amp / self.kappa
    }
}

/// Cell-problem outputs for both slopes.
pub struct CorrectorSet {
    pub n: usize,
    /// Frame count of the 1-periodic time dependence (1 when static).
    pub nt: usize,
    /// chi_e per slope, space-spectral per frame.
    chi: [Vec<SpectralField>; 2],
    /// Time correctors h_e per slope and frame.
    h: [Vec<SpectralField>; 2],
    /// Scalar potentials mu_e of the skew fluxes m_e = mu_e I_perp.
    mu: [Vec<SpectralField>; 2],
    /// Space-homogenized matrix per frame.
    pub abar_t: Vec<[[f64; 2]; 2]>,
    /// k(t) at the frame times (zero-mean in time).
    pub k_matrix: Vec<[[f64; 2]; 2]>,
    /// Relative residual of the cell PDE.
    pub residual: f64,
    pub peclet: f64,
    kappa: f64,
}

impl CorrectorSet {
    pub fn chi_field(&self, slope: usize, frame: usize) -> ScalarField {
        let mut fft = Fft2::new(self.n);
        self.chi[slope][frame].to_real(&mut fft)
    }

    pub fn h_field(&self, slope: usize, frame: usize) -> ScalarField {
        let mut fft = Fft2::new(self.n);
        self.h[slope][frame].to_real(&mut fft)
    }

    pub fn mu_field(&self, slope: usize, frame: usize) -> ScalarField {
        let mut fft = Fft2::new(self.n);
        self.mu[slope][frame].to_real(&mut fft)
    }

    pub fn chi_spectral(&self, slope: usize, frame: usize) -> &SpectralField {
        &self.chi[slope][frame]
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Space-time average of grad chi_i . grad chi_j.
    fn grad_bracket(&self, i: usize, j: usize) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for f in 0..self.nt {
            let a = self.chi[i][f].coeffs();
            let b = self.chi[j][f].coeffs();
            let mut s = 0.0;
            for kx in 0..=n / 2 {
                let w = Fft2::kx_weight(n, kx);
                for iy in 0..n {
                    let ky = Fft2::freq(n, iy);
                    let k2 = (kx * kx) as f64 + ky * ky;
                    let prod = (a[kx * n + iy] * b[kx * n + iy].conj()).re;
                    s += w * TWO_PI * TWO_PI * k2 * prod;
                }
            }
            acc += s;
        }
        acc / self.nt as f64
    }
}

/// The constant effective diffusion matrix with its independently assembled
/// symmetric part.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveTensor {
    pub abar: [[f64; 2]; 2],
    pub symmetric_part: [[f64; 2]; 2],
}

impl EffectiveTensor {
    pub fn isotropic(kappa: f64) -> Self {
        Self { abar: [[kappa, 0.0], [0.0, kappa]], symmetric_part: [[kappa, 0.0], [0.0, kappa]] }
    }

    /// Largest deviation between (abar + abar^T)/2 and the independent
    /// symmetric assembly, relative to |abar|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let s = 0.5 * (self.abar[i][j] + self.abar[j][i]);
                worst = worst.max((s - self.symmetric_part[i][j]).abs());
                scale = scale.max(self.abar[i][j].abs());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }

    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let s = &self.symmetric_part;
        let tr = s[0][0] + s[1][1];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        tr / 2.0 - disc
    }

    /// Skew part of abar.
    pub fn skew(&self) -> f64 {
        0.5 * (self.abar[0][1] - self.abar[1][0])
    }
}

/// Closed-form Taylor dispersion tensor diag(kappa + a^2 eps^4 / 2 kappa, kappa).
pub fn taylor_matrix(a: f64, eps: f64, kappa: f64) -> EffectiveTensor {
    assert!(a >= 0.0 && eps > 0.0 && kappa > 0.0);
    let enh = a * a * eps.powi(4) / (2.0 * kappa);
    let m = [[kappa + enh, 0.0], [0.0, kappa]];
    EffectiveTensor { abar: m, symmetric_part: m }
}

/// Single-mode resolvent closed form for the drifted shear: the streamwise
/// enhancement is damped by kappa^2 k^2 / (kappa^2 k^2 + c^2), k = 2 pi / eps.
pub fn drift_enhancement_oracle(a: f64, eps: f64, kappa: f64, c: f64) -> f64 {
    let k = TWO_PI / eps;
    let kk = kappa * k;
    (a * a * eps.powi(4) / (2.0 * kappa)) * kk * kk / (kk * kk + c * c)
}

const MAX_PICARD: usize = 400;
const PICARD_TOL: f64 = 1e-13;

/// Solves the cell problem for both slopes and assembles every corrector of
/// the parabolic two-scale expansion.
pub fn solve_cell_problem(spec: &CellProblemSpec) -> Result<CorrectorSet> {
    let n = spec.cell_resolution;
    let kappa = spec.kappa;
    assert!(kappa > 0.0, "kappa must be positive");
    let frames = spec.frames();
    let nt = frames.len();
    let drift = spec.constant_drift.unwrap_or([0.0, 0.0]);
    let mut fft = Fft2::new(n);
    let sl = fft.spectral_len();

    // stream spectra and velocities per frame
    let psi_hat: Vec<SpectralField> = frames.iter().map(|f| f.to_spectral(&mut fft)).collect();
    let vel: Vec<VectorField> = psi_hat
        .iter()
        .map(|p| {
            let (bx, by) = crate::field::perp_grad(p);
            let mut v = VectorField::zeros(n);
            fft.inverse(bx.coeffs(), &mut v.x);
            fft.inverse(by.coeffs(), &mut v.y);
            v
        })
        .collect();

    let mut chi: [Vec<SpectralField>; 2] = [Vec::new(), Vec::new()];
    let mut residuals = [0.0f64; 2];
    for (slope, chi_out) in chi.iter_mut().enumerate() {
        let e = if slope == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        // forcing (I_perp e) . grad psi, per frame, in spectral space
        let iperp_e = [-e[1], e[0]];
        let forcing: Vec<Vec<Complex64>> = psi_hat
            .iter()
            .map(|p| {
                let mut f = vec![Complex64::default(); sl];
                for kx in 0..=n / 2 {
                    for iy in 0..n {
                        let ky = Fft2::freq(n, iy);
                        let ikdote = Complex64::new(
                            0.0,
                            TWO_PI * (kx as f64 * iperp_e[0] + ky * iperp_e[1]),
                        );
                        f[kx * n + iy] = ikdote * p.coeffs()[kx * n + iy];
                    }
                }
                f
            })
            .collect();
        let (solution, residual) =
            picard_cell_solve(n, nt, kappa, drift, &vel, &forcing, &mut fft, spec.peclet())?;
        *chi_out = solution;
        residuals[slope] = residual;
    }

    // space-homogenized matrix per frame: abar(t) e = <kappa(e+grad chi) + psi I_perp (e+grad chi)>
    let mut abar_t = vec![[[0.0f64; 2]; 2]; nt];
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for f in 0..nt {
        for slope in 0..2 {
            let e = if slope == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            grad_into(&chi[slope][f], &mut fft, &mut gx, &mut gy);
            let psi = &frames[f];
            let mut f1 = 0.0;
            let mut f2 = 0.0;
            for i in 0..n * n {
                let px = e[0] + gx[i];
                let py = e[1] + gy[i];
                // kappa (e + grad chi) + psi I_perp (e + grad chi)
                f1 += kappa * px + psi.values()[i] * (-py);
                f2 += kappa * py + psi.values()[i] * px;
            }
            let inv = 1.0 / (n * n) as f64;
            abar_t[f][0][slope] = f1 * inv;
            abar_t[f][1][slope] = f2 * inv;
        }
    }
    let mut abar = [[0.0f64; 2]; 2];
    for fm in &abar_t {
        for i in 0..2 {
            for j in 0..2 {
                abar[i][j] += fm[i][j] / nt as f64;
            }
        }
    }

    // k(t) = int_0^t (abar(t') - abar) dt' by exact trigonometric
    // integration of the frame samples
    let k_matrix = integrate_zero_mean(&abar_t, &abar);

    // time correctors: -Lap h = d chi/dt per frame (zero for nt = 1)
    let mut h: [Vec<SpectralField>; 2] = [Vec::new(), Vec::new()];
    for slope in 0..2 {
        let dchi = time_derivative(&chi[slope], n);
        h[slope] = dchi
            .into_iter()
            .map(|mut d| {
                d.apply_multiplier(|kx, ky| {
                    let k2 = kx * kx + ky * ky;
                    if k2 == 0.0 {
                        0.0
                    } else {
                        1.0 / (TWO_PI * TWO_PI * k2)
                    }
                });
                d
            })
            .collect();
    }

    // skew potentials: g_e = a(e+grad chi) - abar(t) e + grad h_e = perp-grad mu_e
    let mut mu: [Vec<SpectralField>; 2] = [Vec::new(), Vec::new()];
    let mut hx = vec![0.0; n * n];
    let mut hy = vec![0.0; n * n];
    for slope in 0..2 {
        let e = if slope == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        for f in 0..nt {
            grad_into(&chi[slope][f], &mut fft, &mut gx, &mut gy);
            grad_into(&h[slope][f], &mut fft, &mut hx, &mut hy);
            let psi = &frames[f];
            let mut g1 = vec![0.0; n * n];
            let mut g2 = vec![0.0; n * n];
            // g_e = kappa(e + grad chi) + psi I_perp (e + grad chi)
            //       - abar(t) e + grad h_e
            for i in 0..n * n {
                g1[i] = kappa * (e[0] + gx[i]) - psi.values()[i] * (e[1] + gy[i])
                    - abar_t[f][0][slope]
                    + hx[i];
                g2[i] = kappa * (e[1] + gy[i]) + psi.values()[i] * (e[0] + gx[i])
                    - abar_t[f][1][slope]
                    + hy[i];
            }
            // mu = Lap^{-1} (d1 g2 - d2 g1)
            let mut s1 = vec![Complex64::default(); sl];
            let mut s2 = vec![Complex64::default(); sl];
            fft.forward(&g1, &mut s1);
            fft.forward(&g2, &mut s2);
            let mut muhat = vec![Complex64::default(); sl];
            for kx in 0..=n / 2 {
                for iy in 0..n {
                    let ky = Fft2::freq(n, iy);
                    let k2 = (kx * kx) as f64 + ky * ky;
                    let idx = kx * n + iy;
                    if k2 == 0.0 {
                        muhat[idx] = Complex64::default();
                    } else {
                        let curl = Complex64::new(0.0, TWO_PI * kx as f64) * s2[idx]
                            - Complex64::new(0.0, TWO_PI * ky) * s1[idx];
                        // Lap mu = curl g
                        muhat[idx] = curl / Complex64::new(-TWO_PI * TWO_PI * k2, 0.0);
                    }
                }
            }
            mu[slope].push(SpectralField::from_parts(n, muhat));
        }
    }

    Ok(CorrectorSet {
        n,
        nt,
        chi,
        h,
        mu,
        abar_t,
        k_matrix,
        residual: residuals[0].max(residuals[1]),
        peclet: spec.peclet(),
        kappa,
    })
}

fn grad_into(s: &SpectralField, fft: &mut Fft2, gx: &mut [f64], gy: &mut [f64]) {
    let mut sx = s.clone();
    sx.apply_multiplier_complex(|kx, _| Complex64::new(0.0, TWO_PI * kx));
    fft.inverse(sx.coeffs(), gx);
    let mut sy = s.clone();
    sy.apply_multiplier_complex(|_, ky| Complex64::new(0.0, TWO_PI * ky));
    fft.inverse(sy.coeffs(), gy);
}

/// Picard iteration in space(-time) Fourier variables with the full
/// constant-coefficient part (including drift) inverted exactly.
#[allow(clippy::too_many_arguments)]
fn picard_cell_solve(
    n: usize,
    nt: usize,
    kappa: f64,
    drift: [f64; 2],
    vel: &[VectorField],
    forcing: &[Vec<Complex64>],
    fft: &mut Fft2,
    peclet: f64,
) -> Result<(Vec<SpectralField>, f64)> {
    let sl = fft.spectral_len();
    // time-Fourier index per frame slot
    let mut cur: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); sl]; nt];
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    let mut advect = vec![0.0; n * n];
    let mut rhs_frames: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); sl]; nt];
    let mut last_change = f64::INFINITY;
    for iter in 0..MAX_PICARD {
        // rhs = forcing - F[b . grad chi], per frame
        for f in 0..nt {
            let chi_f = SpectralField::from_parts(n, cur[f].clone());
            grad_into(&chi_f, fft, &mut gx, &mut gy);
            let v = &vel[f % vel.len()];
            for i in 0..n * n {
                advect[i] = -(v.x[i] * gx[i] + v.y[i] * gy[i]);
            }
            fft.forward(&advect, &mut rhs_frames[f]);
            for (r, fo) in rhs_frames[f].iter_mut().zip(&forcing[f]) {
                *r += fo;
            }
        }
        // diagonal solve in time-Fourier space
        let next = diagonal_solve(n, nt, kappa, drift, &rhs_frames);
        let mut change = 0.0f64;
        let mut scale = 0.0f64;
        for f in 0..nt {
            for i in 0..sl {
                change = change.max((next[f][i] - cur[f][i]).norm());
                scale = scale.max(next[f][i].norm());
            }
        }
        cur = next;
        let rel = if scale > 0.0 { change / scale } else { 0.0 };
        if rel < PICARD_TOL {
            break;
        }
        if iter == MAX_PICARD - 1 || (iter > 20 && rel > last_change * 1.01 && rel > 1.0) {
            return Err(Error::CellNoConvergence { peclet, residual: rel, iters: iter + 1 });
        }
        last_change = rel;
    }
    // residual of the full PDE, relative to the forcing
    let mut res_num = 0.0f64;
    let mut res_den = 0.0f64;
    let dchi = time_derivative_raw(&cur, n);
    for f in 0..nt {
        let chi_f = SpectralField::from_parts(n, cur[f].clone());
        grad_into(&chi_f, fft, &mut gx, &mut gy);
        let v = &vel[f % vel.len()];
        for i in 0..n * n {
            advect[i] = v.x[i] * gx[i] + v.y[i] * gy[i];
        }
        let mut adv_hat = vec![Complex64::default(); sl];
        fft.forward(&advect, &mut adv_hat);
        for kx in 0..=n / 2 {
            let w = Fft2::kx_weight(n, kx);
            for iy in 0..n {
                let ky = Fft2::freq(n, iy);
                let idx = kx * n + iy;
                let lap = -TWO_PI * TWO_PI * ((kx * kx) as f64 + ky * ky);
                let idrift =
                    Complex64::new(0.0, TWO_PI * (drift[0] * kx as f64 + drift[1] * ky));
                let r = dchi[f][idx] - kappa * lap * cur[f][idx] + idrift * cur[f][idx]
                    + adv_hat[idx]
                    - forcing[f][idx];
                res_num += w * r.norm_sqr();
                res_den += w * forcing[f][idx].norm_sqr();
            }
        }
    }
    let residual = if res_den > 0.0 { (res_num / res_den).sqrt() } else { 0.0 };
    let fields = cur.into_iter().map(|c| SpectralField::from_parts(n, c)).collect();
    Ok((fields, residual))
}

/// Solves (d_t - kappa Lap + drift . grad) chi = rhs exactly per space-time mode.
fn diagonal_solve(
    n: usize,
    nt: usize,
    kappa: f64,
    drift: [f64; 2],
    rhs_frames: &[Vec<Complex64>],
) -> Vec<Vec<Complex64>> {
    let sl = (n / 2 + 1) * n;
    let mut out = vec![vec![Complex64::default(); sl]; nt];
    // direct DFT in time (nt is small)
    for idx in 0..sl {
        let kx = (idx / n) as f64;
        let ky = Fft2::freq(n, idx % n);
        let lap = TWO_PI * TWO_PI * (kx * kx + ky * ky);
        if lap == 0.0 {
            continue; // zero space-mean
        }
        let idrift = Complex64::new(0.0, TWO_PI * (drift[0] * kx + drift[1] * ky));
        if nt == 1 {
            out[0][idx] = rhs_frames[0][idx] / (Complex64::new(kappa * lap, 0.0) + idrift);
            continue;
        }
        for mt in 0..nt {
            // time frequency (signed)
            let m = if mt <= nt / 2 { mt as f64 } else { mt as f64 - nt as f64 };
            let mut hat = Complex64::default();
            for (f, fr) in rhs_frames.iter().enumerate() {
                let ph = -TWO_PI * m * f as f64 / nt as f64;
                hat += fr[idx] * Complex64::new(ph.cos(), ph.sin());
            }
            hat /= nt as f64;
            let sol = hat
                / (Complex64::new(kappa * lap, TWO_PI * m) + idrift);
            // accumulate back to frames
            for (f, o) in out.iter_mut().enumerate() {
                let ph = TWO_PI * m * f as f64 / nt as f64;
                o[idx] += sol * Complex64::new(ph.cos(), ph.sin());
            }
        }
    }
    out
}

fn time_derivative(frames: &[SpectralField], n: usize) -> Vec<SpectralField> {
    let raw: Vec<Vec<Complex64>> = frames.iter().map(|f| f.coeffs().to_vec()).collect();
    time_derivative_raw(&raw, n)
        .into_iter()
        .map(|c| SpectralField::from_parts(n, c))
        .collect()
}

fn time_derivative_raw(frames: &[Vec<Complex64>], n: usize) -> Vec<Vec<Complex64>> {
    let nt = frames.len();
    let sl = (n / 2 + 1) * n;
    let mut out = vec![vec![Complex64::default(); sl]; nt];
    if nt == 1 {
        return out;
    }
    for idx in 0..sl {
        for mt in 0..nt {
            let m = if mt <= nt / 2 { mt as f64 } else { mt as f64 - nt as f64 };
            if nt % 2 == 0 && mt == nt / 2 {
                continue; // drop the unmatched Nyquist mode of the derivative
            }
            let mut hat = Complex64::default();
            for (f, fr) in frames.iter().enumerate() {
                let ph = -TWO_PI * m * f as f64 / nt as f64;
                hat += fr[idx] * Complex64::new(ph.cos(), ph.sin());
            }
            hat /= nt as f64;
            let dhat = hat * Complex64::new(0.0, TWO_PI * m);
            for (f, o) in out.iter_mut().enumerate() {
                let ph = TWO_PI * m * f as f64 / nt as f64;
                o[idx] += dhat * Complex64::new(ph.cos(), ph.sin());
            }
        }
    }
    out
}

/// Exact trig-quadrature primitive of the zero-mean part of the frame samples.
fn integrate_zero_mean(abar_t: &[[[f64; 2]; 2]], abar: &[[f64; 2]; 2]) -> Vec<[[f64; 2]; 2]> {
    let nt = abar_t.len();
    let mut out = vec![[[0.0f64; 2]; 2]; nt];
    if nt == 1 {
        return out;
    }
    for i in 0..2 {
        for j in 0..2 {
            // DFT of the zero-mean samples
            let samples: Vec<f64> = abar_t.iter().map(|m| m[i][j] - abar[i][j]).collect();
            for mt in 1..nt {
                let m = if mt <= nt / 2 { mt as f64 } else { mt as f64 - nt as f64 };
                if nt % 2 == 0 && mt == nt / 2 {
                    continue;
                }
                let mut hat = Complex64::default();
                for (f, s) in samples.iter().enumerate() {
                    let ph = -TWO_PI * m * f as f64 / nt as f64;
                    hat += s * Complex64::new(ph.cos(), ph.sin());
                }
                hat /= nt as f64;
                let prim = hat / Complex64::new(0.0, TWO_PI * m);
                for (f, o) in out.iter_mut().enumerate() {
                    let t = f as f64 / nt as f64;
                    let ph = TWO_PI * m * t;
                    // primitive of e^{2 pi i m t} vanishing at t = 0
                    o[i][j] += (prim * (Complex64::new(ph.cos(), ph.sin()) - 1.0)).re;
                }
            }
        }
    }
    out
}

/// abar e = <<a (e + grad chi_e)>> assembled by quadrature, with the
/// symmetric part independently built as kappa I + kappa <<grad chi x grad chi>>.
pub fn effective_matrix(spec: &CellProblemSpec, correctors: &CorrectorSet) -> Result<EffectiveTensor> {
    let mut abar = [[0.0f64; 2]; 2];
    for fm in &correctors.abar_t {
        for i in 0..2 {
            for j in 0..2 {
                abar[i][j] += fm[i][j] / correctors.nt as f64;
            }
        }
    }
    let kappa = spec.kappa;
    let mut sym = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            sym[i][j] = kappa * ((i == j) as u64 as f64) + kappa * correctors.grad_bracket(i, j);
        }
    }
    let t = EffectiveTensor { abar, symmetric_part: sym };
    if t.symmetry_defect() > 1e-8 {
        return Err(Error::Config(format!(
            "symmetric-part cross-check failed: defect {} (corrector residual {})",
            t.symmetry_defect(),
            correctors.residual
        )));
    }
    Ok(t)
}

/// Effective tensor of the single-mode shear with a constant transverse
/// drift of physical speed c (drift enters the cell problem scaled by eps).
pub fn effective_with_drift(a: f64, eps: f64, kappa: f64, c: f64, n: usize) -> Result<EffectiveTensor> {
    assert!(c >= 0.0);
    let spec = CellProblemSpec {
        kappa,
        stream: StreamSpec::SingleModeShear { a, eps },
        constant_drift: Some([0.0, c * eps]),
        cell_resolution: n,
    };
    let correctors = solve_cell_problem(&spec)?;
    effective_matrix(&spec, &correctors)
}

/// theta + eps sum_i d_i theta chi_i(t/eps^2, x/eps)
/// + eps^2 sum_ij k_ij(t/eps^2) d_ij theta.
pub fn two_scale_expand(
    theta: &ScalarField,
    t: f64,
    correctors: &CorrectorSet,
    eps: f64,
) -> Result<ScalarField> {
    let n = theta.n();
    let inv_eps = (1.0 / eps).round();
    if (inv_eps * eps - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("1/eps = {} must be an integer", 1.0 / eps)));
    }
    let mut fft = Fft2::new(n);
    let spec = theta.to_spectral(&mut fft);
    let fast_t = (t / (eps * eps)).rem_euclid(1.0);
    let frame = ((fast_t * correctors.nt as f64).round() as usize) % correctors.nt;
    let mut out = theta.clone();
    let mut d = vec![0.0; n * n];
    for slope in 0..2 {
        // d_i theta
        let mut s = spec.clone();
        if slope == 0 {
            s.apply_multiplier_complex(|kx, _| Complex64::new(0.0, TWO_PI * kx));
        } else {
            s.apply_multiplier_complex(|_, ky| Complex64::new(0.0, TWO_PI * ky));
        }
        fft.inverse(s.coeffs(), &mut d);
        // chi_i at the fast variables, placed spectrally onto the macro grid
        let chi_fast = place_fast(&correctors.chi[slope][frame], inv_eps as usize, n)?;
        let chi_real = chi_fast.to_real(&mut fft);
        for (o, (dv, cv)) in out.values_mut().iter_mut().zip(d.iter().zip(chi_real.values())) {
            *o += eps * dv * cv;
        }
    }
    let k = correctors.k_matrix[frame];
    for i in 0..2 {
        for j in 0..2 {
            if k[i][j] == 0.0 {
                continue;
            }
            let mut s = spec.clone();
            s.apply_multiplier_complex(|kx, ky| {
                let ki = if i == 0 { kx } else { ky };
                let kj = if j == 0 { kx } else { ky };
                Complex64::new(-TWO_PI * TWO_PI * ki * kj, 0.0)
            });
            fft.inverse(s.coeffs(), &mut d);
            for (o, dv) in out.values_mut().iter_mut().zip(&d) {
                *o += eps * eps * k[i][j] * dv;
            }
        }
    }
    Ok(out)
}

/// Places a cell-periodic spectral field at the fast variable x / eps onto a
/// macro grid: coefficient (kx, ky) moves to (kx/eps, ky/eps). Exact while
/// the product frequencies stay below the macro Nyquist.
pub fn place_fast(cell: &SpectralField, inv_eps: usize, n: usize) -> Result<SpectralField> {
    let nc = cell.n();
    if nc / 2 * inv_eps > n / 2 {
        return Err(Error::GridTooCoarse {
            n,
            inv_eps: inv_eps as f64,
            min_n: nc * inv_eps,
        });
    }
    let mut out = SpectralField::zeros(n);
    for kx in 0..=nc / 2 {
        for iy in 0..nc {
            let ky = Fft2::freq(nc, iy);
            let c = cell.coeffs()[kx * nc + iy];
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let big_kx = kx * inv_eps;
            let big_ky = ky * inv_eps as f64;
            let big_iy = if big_ky >= 0.0 { big_ky as usize } else { (n as f64 + big_ky) as usize };
            out.coeffs_mut()[big_kx * n + big_iy] = c;
        }
    }
    Ok(out)
}

/// One row of the expansion error study.
#[derive(Debug, Clone)]
pub struct ErrorStudyRow {
    pub eps: f64,
    pub peclet: f64,
    /// sup_t ||theta_eps - theta_bar||_{L2} / ||theta_in||_{L2}.
    pub error_rel: f64,
    /// The scale (1 + P) eps of the quantitative bound.
    pub bound_scale: f64,
    /// sup_t of the L2 norm of the explicit defect field v_eps.
    pub v_eps_norm: f64,
    /// kappa eps (1 + P) ||theta_in|| : the energy-estimate scale of v_eps.
    pub v_eps_bound_scale: f64,
}

/// Solves the microscopic shear problem against the homogenized
/// constant-coefficient evolution for each eps at fixed P = a eps^2 / kappa,
/// and reports the measured errors next to the predicted first-order scale.
pub fn expansion_error_study(
    peclet: f64,
    kappa: f64,
    n: usize,
    eps_list: &[f64],
    theta_in: &ScalarField,
    horizon: f64,
    cfg: &SolveConfig,
) -> Result<Vec<ErrorStudyRow>> {
    let mut rows = Vec::new();
    for &eps in eps_list {
        let a = peclet * kappa / (eps * eps);
        let amp = TWO_PI * a * eps;
        let mut u = crate::pde::AnalyticVelocity {
            f: move |_t: f64, _x: f64, y: f64| (-amp * (TWO_PI * y / eps).cos(), 0.0),
            bound: amp,
        };
        let abar = taylor_matrix(a, eps, kappa);
        let mut fft = Fft2::new(n);
        let spec0 = theta_in.to_spectral(&mut fft);
        let norm0 = spec0.l2_norm_sq().sqrt();
        let chi_amp = a * eps * eps / (TWO_PI * kappa);

        let mut sup_err = 0.0f64;
        let mut sup_veps = 0.0f64;
        {
            let mut observer = |t: f64, state: &SpectralField| {
                // homogenized solution at time t: exact heat evolution
                let mut hom = spec0.clone();
                hom.apply_multiplier(|kx, ky| {
                    (-TWO_PI
                        * TWO_PI
                        * (abar.abar[0][0] * kx * kx + abar.abar[1][1] * ky * ky)
                        * t)
                        .exp()
                });
                let mut diff = 0.0f64;
                let nn = state.n();
                for kx in 0..=nn / 2 {
                    let w = Fft2::kx_weight(nn, kx);
                    for iy in 0..nn {
                        diff += w
                            * (state.coeffs()[kx * nn + iy] - hom.coeffs()[kx * nn + iy])
                                .norm_sqr();
                    }
                }
                sup_err = sup_err.max(diff.sqrt());
                sup_veps = sup_veps.max(v_eps_norm(&hom, kappa, a, eps, chi_amp));
            };
            solve_observed(&mut u, kappa, theta_in, horizon, cfg, Some(&mut observer))?;
        }
        rows.push(ErrorStudyRow {
            eps,
            peclet,
            error_rel: sup_err / norm0,
            bound_scale: (1.0 + peclet) * eps,
            v_eps_norm: sup_veps,
            v_eps_bound_scale: kappa * eps * (1.0 + peclet) * norm0,
        });
    }
    Ok(rows)
}

/// L2 norm of the explicit defect field of the shear two-scale expansion,
///
///   v = -C1 cos(2 pi x2/eps) grad d1(theta)
///       + C2 sin(4 pi x2/eps) perp-grad d1(theta)
///       + C1 cos(2 pi x2/eps) perp-grad d2(theta)
///       + C3 cos(2 pi x2/eps) dt(theta) e1,
///
/// with C1 = a eps^3 / 2 pi, C2 = a^2 eps^5 / 8 pi kappa,
/// C3 = a eps^3 / 2 pi kappa; the C1 contributions to the second component
/// cancel and dt(theta) = div(abar grad theta).
fn v_eps_norm(hom: &SpectralField, kappa: f64, a: f64, eps: f64, chi_amp: f64) -> f64 {
    let n = hom.n();
    let mut fft = Fft2::new(n);
    let mut d = |i: usize, j: usize| {
        let mut s = hom.clone();
        s.apply_multiplier_complex(|kx, ky| {
            let ki = if i == 0 { kx } else { ky };
            let kj = if j == 0 { kx } else { ky };
            Complex64::new(-TWO_PI * TWO_PI * ki * kj, 0.0)
        });
        let mut out = vec![0.0; n * n];
        fft.inverse(s.coeffs(), &mut out);
        out
    };
    let d11 = d(0, 0);
    let d12 = d(0, 1);
    let d22 = d(1, 1);
    let p = a * eps * eps / kappa;
    let c1 = a * eps.powi(3) / TWO_PI;
    let c2 = a * a * eps.powi(5) / (8.0 * std::f64::consts::PI * kappa);
    let c3 = eps * chi_amp;
    let mut acc = 0.0f64;
    let nf = n as f64;
    for iy in 0..n {
        let y = iy as f64 / nf;
        let cs = (TWO_PI * y / eps).cos();
        let sn = (2.0 * TWO_PI * y / eps).sin();
        for ix in 0..n {
            let i = iy * n + ix;
            let dt = kappa * (1.0 + 0.5 * p * p) * d11[i] + kappa * d22[i];
            let v1 = -c1 * cs * (d11[i] + d22[i]) - c2 * sn * d12[i] + c3 * cs * dt;
            let v2 = c2 * sn * d11[i];
            acc += v1 * v1 + v2 * v2;
        }
    }
    (acc / (nf * nf)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_stream_gives_isotropic_tensor() {
        let spec = CellProblemSpec {
            kappa: 0.7,
            stream: StreamSpec::Zero,
            constant_drift: None,
            cell_resolution: 32,
        };
        let c = solve_cell_problem(&spec).unwrap();
        assert!(c.chi_field(0, 0).max_abs() < 1e-14);
        assert!(c.chi_field(1, 0).max_abs() < 1e-14);
        let t = effective_matrix(&spec, &c).unwrap();
        assert!((t.abar[0][0] - 0.7).abs() < 1e-12);
        assert!((t.abar[1][1] - 0.7).abs() < 1e-12);
        assert!(t.abar[0][1].abs() < 1e-14);
    }

    #[test]
    fn shear_corrector_closed_form() {
        let (a, eps, kappa) = (2.0, 0.25, 0.05);
        let spec = CellProblemSpec::shear(a, eps, kappa, 64);
        let c = solve_cell_problem(&spec).unwrap();
        assert!(c.residual < 1e-10, "residual {}", c.residual);
        let chi = c.chi_field(0, 0);
        let amp = a * eps * eps / (TWO_PI * kappa);
        let n = 64;
        let mut worst = 0.0f64;
        for iy in 0..n {
            let y = iy as f64 / n as f64;
            let expect = amp * (TWO_PI * y).cos();
            for ix in 0..n {
                worst = worst.max((chi.at(ix, iy) - expect).abs());
            }
        }
        assert!(worst < 1e-10 * amp.max(1.0), "chi error {worst}");
        assert!(c.chi_field(1, 0).max_abs() < 1e-12);
        // time correctors and k vanish for static coefficients
        assert!(c.h_field(0, 0).max_abs() < 1e-12);
        assert!(c.k_matrix[0][0][0].abs() < 1e-14);
    }

    #[test]
    fn shear_flux_potentials_closed_form() {
        let (a, eps, kappa) = (1.5, 0.5, 0.08);
        let spec = CellProblemSpec::shear(a, eps, kappa, 64);
        let c = solve_cell_problem(&spec).unwrap();
        let amp = a * eps * eps;
        let n = 64;
        // mu_1 = a^2 eps^4/(8 pi kappa) sin(4 pi y_2),
        // mu_2 = -(a eps^2 / 2 pi) cos(2 pi y_2)
        let mu1 = c.mu_field(0, 0);
        let mu2 = c.mu_field(1, 0);
        let c1 = amp * amp / (8.0 * std::f64::consts::PI * kappa);
        let c2 = amp / TWO_PI;
        let mut w1 = 0.0f64;
        let mut w2 = 0.0f64;
        for iy in 0..n {
            let y = iy as f64 / n as f64;
            let e1 = c1 * (2.0 * TWO_PI * y).sin();
            let e2 = -c2 * (TWO_PI * y).cos();
            for ix in 0..n {
                w1 = w1.max((mu1.at(ix, iy) - e1).abs());
                w2 = w2.max((mu2.at(ix, iy) - e2).abs());
            }
        }
        assert!(w1 < 1e-8 * c1.max(1.0), "mu1 error {w1}");
        assert!(w2 < 1e-8 * c2.max(1.0), "mu2 error {w2}");
    }

    #[test]
    fn taylor_formula_from_spectral_solve() {
        for &(a, eps, kappa) in &[(1.0, 1.0, 1.0), (2.0, 0.25, 0.1), (5.0, 0.125, 0.02)] {
            let spec = CellProblemSpec::shear(a, eps, kappa, 64);
            let c = solve_cell_problem(&spec).unwrap();
            let t = effective_matrix(&spec, &c).unwrap();
            let expect = taylor_matrix(a, eps, kappa);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (t.abar[i][j] - expect.abar[i][j]).abs()
                            <= 1e-8 * expect.abar[0][0].abs(),
                        "({a},{eps},{kappa}) entry {i}{j}: {} vs {}",
                        t.abar[i][j],
                        expect.abar[i][j]
                    );
                }
            }
        }
        // direct spec examples
        let t = taylor_matrix(1.0, 1.0, 1.0);
        assert_eq!(t.abar[0][0], 1.5);
        assert_eq!(t.abar[1][1], 1.0);
        let t = taylor_matrix(2.0, 0.25, 0.1);
        assert!((t.abar[0][0] - 0.178125).abs() < 1e-15);
    }

    #[test]
    fn drift_solve_matches_resolvent_oracle() {
        let (a, eps, kappa) = (2.0, 0.25, 0.05);
        for &c in &[0.0, 0.5, 2.0 * std::f64::consts::PI * kappa / eps, 10.0] {
            let t = effective_with_drift(a, eps, kappa, c, 64).unwrap();
            let enh = t.abar[0][0] - kappa;
            let oracle = drift_enhancement_oracle(a, eps, kappa, c);
            assert!(
                (enh - oracle).abs() <= 1e-8 * oracle.max(kappa),
                "c={c}: {enh} vs {oracle}"
            );
        }
        // c = 2 pi kappa / eps halves the enhancement exactly
        let c_half = TWO_PI * kappa / eps;
        let half = drift_enhancement_oracle(a, eps, kappa, c_half);
        let full = drift_enhancement_oracle(a, eps, kappa, 0.0);
        assert!((half - 0.5 * full).abs() < 1e-14);
    }

    #[test]
    fn drift_enhancement_is_monotone() {
        let (a, eps, kappa) = (1.0, 0.25, 0.05);
        let mut last = f64::INFINITY;
        for i in 0..16 {
            let c = 0.4 * i as f64;
            let t = effective_with_drift(a, eps, kappa, c, 64).unwrap();
            let enh = t.abar[0][0] - kappa;
            assert!(enh < last + 1e-14, "not decreasing at c={c}");
            last = enh;
        }
    }

    #[test]
    fn time_periodic_alternating_shear_averages_both_axes() {
        // psi(t, y) alternating smoothly between the two shear directions;
        // the effective tensor should gain enhancement on both diagonal
        // entries and stay symmetric-positive
        let n = 48;
        let nt = 32;
        let (a, eps, kappa) = (0.3, 0.5, 0.15);
        let amp = a * eps * eps;
        let frames: Vec<ScalarField> = (0..nt)
            .map(|f| {
                let t = f as f64 / nt as f64;
                let w1 = (TWO_PI * t).cos().powi(2);
                let w2 = (TWO_PI * t).sin().powi(2);
                ScalarField::from_fn(n, move |x, y| {
                    amp * (w1 * (TWO_PI * y).sin() + w2 * (TWO_PI * x).sin())
                })
            })
            .collect();
        let spec = CellProblemSpec {
            kappa,
            stream: StreamSpec::SpaceTime(frames),
            constant_drift: None,
            cell_resolution: n,
        };
        let c = solve_cell_problem(&spec).unwrap();
        assert!(c.residual < 1e-8, "residual {}", c.residual);
        let t = effective_matrix(&spec, &c).unwrap();
        assert!(t.abar[0][0] > kappa * 1.01);
        assert!(t.abar[1][1] > kappa * 1.01);
        assert!(t.min_symmetric_eigenvalue() >= kappa * (1.0 - 1e-10));
        // time correctors now genuinely nonzero
        let hmax = (0..nt).map(|f| c.h_field(0, f).max_abs()).fold(0.0f64, f64::max);
        assert!(hmax > 1e-8, "expected nonzero time corrector, got {hmax}");
    }

    #[test]
    fn two_scale_expansion_shear_form() {
        let (a, eps, kappa) = (2.0, 0.125, 0.1);
        let n = 256;
        let spec = CellProblemSpec::shear(a, eps, kappa, 32);
        let c = solve_cell_problem(&spec).unwrap();
        let theta = ScalarField::from_fn(n, |x, y| {
            (TWO_PI * x).sin() + 0.5 * (TWO_PI * (x + y)).cos()
        });
        let expanded = two_scale_expand(&theta, 0.37, &c, eps).unwrap();
        // oracle: theta + (a eps^3 / 2 pi kappa) cos(2 pi x2/eps) d1 theta
        let mut fft = Fft2::new(n);
        let mut s = theta.to_spectral(&mut fft);
        s.apply_multiplier_complex(|kx, _| Complex64::new(0.0, TWO_PI * kx));
        let mut d1 = vec![0.0; n * n];
        fft.inverse(s.coeffs(), &mut d1);
        let camp = a * eps.powi(3) / (TWO_PI * kappa);
        let mut worst = 0.0f64;
        for iy in 0..n {
            let y = iy as f64 / n as f64;
            let cs = (TWO_PI * y / eps).cos();
            for ix in 0..n {
                let i = iy * n + ix;
                let expect = theta.values()[i] + camp * cs * d1[i];
                worst = worst.max((expanded.values()[i] - expect).abs());
            }
        }
        assert!(worst < 1e-10, "two-scale mismatch {worst}");
        // triangle bound: || expansion - theta ||_2 <= camp || d1 theta ||_2 (1 + 1e-6)
        let mut diff = expanded.clone();
        diff.add_scaled(&theta, -1.0);
        let d1norm = (d1.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64).sqrt();
        assert!(diff.l2_norm() <= camp * d1norm * (1.0 + 1e-6));
        // zero correctors: expansion reduces to theta
        let zspec = CellProblemSpec {
            kappa,
            stream: StreamSpec::Zero,
            constant_drift: None,
            cell_resolution: 32,
        };
        let zc = solve_cell_problem(&zspec).unwrap();
        let same = two_scale_expand(&theta, 0.0, &zc, eps).unwrap();
        let mut w = 0.0f64;
        for (x, y) in same.values().iter().zip(theta.values()) {
            w = w.max((x - y).abs());
        }
        assert!(w < 1e-12);
    }

    #[test]
    fn enhancement_positivity_across_peclet_range() {
        // shear specs spanning four decades of a eps^2 / kappa
        for &p in &[1e-2, 1e-1, 1.0, 1e1, 1e2] {
            let (eps, kappa) = (0.25, 0.05);
            let a = p * kappa / (eps * eps);
            let spec = CellProblemSpec::shear(a, eps, kappa, 64);
            let c = solve_cell_problem(&spec).unwrap();
            let t = effective_matrix(&spec, &c).unwrap();
            assert!(t.min_symmetric_eigenvalue() >= kappa * (1.0 - 1e-10));
            let taylor = taylor_matrix(a, eps, kappa);
            assert!(
                (t.abar[0][0] - taylor.abar[0][0]).abs() <= 1e-8 * taylor.abar[0][0],
                "P={p}: {} vs {}",
                t.abar[0][0],
                taylor.abar[0][0]
            );
        }
    }

    #[test]
    fn skew_part_tracks_stream_mean() {
        // a stream with nonzero cell mean contributes exactly that mean to
        // the skew part of abar
        let n = 48;
        let mean = 0.37;
        let psi = ScalarField::from_fn(n, move |_x, y| mean + 0.05 * (TWO_PI * y).sin());
        let spec = CellProblemSpec {
            kappa: 0.3,
            stream: StreamSpec::Space(psi),
            constant_drift: None,
            cell_resolution: n,
        };
        let c = solve_cell_problem(&spec).unwrap();
        let t = effective_matrix(&spec, &c).unwrap();
        // abar - sym should be the skew matrix mean * I_perp
        let skew01 = t.abar[0][1] - t.symmetric_part[0][1];
        assert!((skew01 + mean).abs() < 1e-8, "skew {} vs mean {}", skew01, mean);
    }
}
