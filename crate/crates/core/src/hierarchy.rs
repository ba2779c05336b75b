//! The recursive multi-scale stream-function hierarchy.
//!
//! Level m adds a shear layer of amplitude `a_m eps_m^2` at scale `eps_m`,
//! glued in time by `zeta(t/tau_m - k)`. In Lagrangian mode the layer is
//! composed with the inverse flow of the coarser field, so that the small
//! scales ride along the large-scale motion; in naive mode it is superposed
//! in Eulerian coordinates as-is.
//!
//! Flow maps of the level-1 field are exact compositions of unidirectional
//! shear maps and are evaluated pointwise; maps of deeper fields are
//! maintained on the grid, re-anchored on intervals short enough to keep
//! them near the identity. The anchor interval subdivides tau''_m because at
//! desk scale `tau''_m |grad u_m|` is far above one; the subdivision keeps
//! every Jacobian within the near-identity cap at the cost of more frequent
//! frame refreshes.

use crate::cutoff::TimeCutoff;
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::{ScalarField, VectorField, TWO_PI};
use crate::flow::{
    bicubic_periodic, integrate_flow_map, rk4_flow, FlowMapGrid, FlowMapTolerances,
    GluedShearField, PointVelocity, ZeroVelocity,
};
use crate::params::ParameterCascade;
use crate::shear::{ShearAxis, ShearWave};
use crate::trig::{cos_2pi, sin_2pi};
use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructionMode {
    /// Increments superposed in Eulerian coordinates.
    Naive,
    /// Increments composed with inverse flows of the coarser field.
    Lagrangian,
}

/// Dimensionless knobs of the hierarchy.
#[derive(Debug, Clone, Copy)]
pub struct HierarchyConfig {
    pub zeta_width: f64,
    pub zeta_hat_width: f64,
    /// Cap on |grad X - I| across one anchor window.
    pub near_identity_cap: f64,
    pub flow_tol: FlowMapTolerances,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            zeta_width: 1.0 / 6.0,
            zeta_hat_width: 1.0 / 12.0,
            near_identity_cap: 0.2,
            flow_tol: FlowMapTolerances::default(),
        }
    }
}

/// Grid-resolution rule: at least this many points per finest wavelength.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;

pub struct StreamHierarchy {
    cascade: ParameterCascade,
    n: usize,
    mode: ConstructionMode,
    cfg: HierarchyConfig,
    zeta: TimeCutoff,
    zeta_hat: TimeCutoff,
    /// Anchor refresh rate 1/tau-hat_j per map level j (index j), j >= 1.
    inv_tau_hat: Vec<f64>,
    layer1: GluedShearField,
    /// Gridded inverse-map states for map levels j >= 2.
    gridded: Vec<MapLevelState>,
    fft: Fft2,
    spec_scratch: Vec<Complex64>,
    spec_scratch2: Vec<Complex64>,
    frozen: bool,
}

struct MapLevelState {
    j: usize,
    inv_tau_hat: f64,
    cur_time: f64,
    h_cap: f64,
    anchors: Vec<AnchorState>,
}

struct AnchorState {
    ell: i64,
    t_prev: f64,
    t_next: f64,
    prev: [Vec<f64>; 2],
    next: [Vec<f64>; 2],
}

impl StreamHierarchy {
    pub fn new(cascade: ParameterCascade, grid_size: usize, mode: ConstructionMode) -> Result<Self> {
        Self::with_config(cascade, grid_size, mode, HierarchyConfig::default())
    }

    pub fn with_config(
        cascade: ParameterCascade,
        grid_size: usize,
        mode: ConstructionMode,
        cfg: HierarchyConfig,
    ) -> Result<Self> {
        let depth = cascade.depth();
        let finest = cascade.inv_eps[depth];
        let min_n = (POINTS_PER_WAVELENGTH * finest).ceil() as usize;
        if grid_size < min_n {
            return Err(Error::GridTooCoarse { n: grid_size, inv_eps: finest, min_n });
        }
        if mode == ConstructionMode::Lagrangian && depth > 3 {
            return Err(Error::Config(format!(
                "lagrangian depth {depth} > 3: pointwise flows of fields above level 2 \
                 are not implemented"
            )));
        }
        let zeta = TimeCutoff::new(crate::cutoff::CutoffKind::Zeta, cfg.zeta_width);
        let zeta_hat = TimeCutoff::new(crate::cutoff::CutoffKind::ZetaHat, cfg.zeta_hat_width);
        let layer1 = GluedShearField {
            amp: cascade.stream_amplitude(1),
            inv_eps: cascade.inv_eps[1],
            inv_tau: cascade.inv_tau[0],
            zeta,
        };
        // anchor refresh: tau-hat_j = tau''_j / r_j with the smallest integer
        // r_j keeping |grad X - I| <= cap across one (1 + 2w)-window
        let mut inv_tau_hat = vec![f64::NAN; depth.max(1)];
        let mut grad_bound_sum = 0.0;
        for j in 1..depth {
            grad_bound_sum += 4.0 * std::f64::consts::PI.powi(2) * cascade.a[j];
            let g = 1.3 * grad_bound_sum;
            let span = (1.0 + 2.0 * cfg.zeta_hat_width) / (1.0 + cfg.near_identity_cap).ln();
            let r = (cascade.tau_pp(j) * g * span).ceil().max(1.0);
            inv_tau_hat[j] = cascade.inv_tau_pp[j] * r;
        }
        let mut gridded = Vec::new();
        if mode == ConstructionMode::Lagrangian {
            for j in 2..depth {
                gridded.push(MapLevelState {
                    j,
                    inv_tau_hat: inv_tau_hat[j],
                    cur_time: 0.0,
                    h_cap: 0.1 / (4.0 * std::f64::consts::PI.powi(2) * 1.3 * cascade.a[j]),
                    anchors: Vec::new(),
                });
            }
        }
        Ok(Self {
            fft: Fft2::new(grid_size),
            spec_scratch: Vec::new(),
            spec_scratch2: Vec::new(),
            cascade,
            n: grid_size,
            mode,
            cfg,
            zeta,
            zeta_hat,
            inv_tau_hat,
            layer1,
            gridded,
            frozen: false,
        })
    }

    pub fn cascade(&self) -> &ParameterCascade {
        &self.cascade
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> ConstructionMode {
        self.mode
    }

    pub fn depth(&self) -> usize {
        self.cascade.depth()
    }

    /// Enhancement constant consistent with these cutoffs: the shear-window
    /// share 1/4 of the Taylor factor 1/2, weighted by the L^2 mass of the
    /// cutoffs.
    pub fn effective_c_star(&self) -> f64 {
        self.zeta.sq_integral() * self.zeta_hat.sq_integral() / 8.0
    }

    /// Uniform bound on |u_m|.
    pub fn speed_bound(&self, m: usize) -> f64 {
        let mut s = 0.0;
        for j in 1..=m {
            let distort = if j >= 2 { 1.0 + self.cfg.near_identity_cap } else { 1.0 };
            s += TWO_PI * self.cascade.stream_amplitude(j) * self.cascade.inv_eps[j] * distort;
        }
        s
    }

    /// Marks the hierarchy immutable: mutating entry points panic afterwards.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// The naive increment `sum_k zeta(t/tau_m - k) a_m eps_m^2 Psi_k(x/eps_m)`.
    pub fn naive_stream_increment(&self, m: usize, t: f64) -> Result<ScalarField> {
        self.check_level(m)?;
        let mut out = vec![0.0; self.n * self.n];
        self.add_naive_increment(m, t, &mut out);
        Ok(ScalarField::from_values(self.n, out))
    }

    /// The Lagrangian increment, with the shear waves evaluated along the
    /// inverse flow of the next-coarser field.
    pub fn lagrangian_stream_increment(&mut self, m: usize, t: f64) -> Result<ScalarField> {
        self.check_level(m)?;
        if m >= 3 {
            self.advance_to(t)?;
        }
        let mut out = vec![0.0; self.n * self.n];
        self.add_lagrangian_increment(m, t, &mut out)?;
        Ok(ScalarField::from_values(self.n, out))
    }

    /// Increment of the hierarchy's construction mode.
    pub fn stream_increment(&mut self, m: usize, t: f64) -> Result<ScalarField> {
        match self.mode {
            ConstructionMode::Naive => self.naive_stream_increment(m, t),
            ConstructionMode::Lagrangian => self.lagrangian_stream_increment(m, t),
        }
    }

    /// phi_m = sum of increments up to level m.
    pub fn stream_function(&mut self, m: usize, t: f64) -> Result<ScalarField> {
        self.check_level(m)?;
        if m >= 3 && self.mode == ConstructionMode::Lagrangian {
            self.advance_to(t)?;
        }
        let mut out = vec![0.0; self.n * self.n];
        self.assemble_stream(m, t, &mut out)?;
        Ok(ScalarField::from_values(self.n, out))
    }

    /// u_m as the spectral perpendicular gradient of the gridded phi_m; the
    /// spectral divergence vanishes identically by construction.
    pub fn velocity(&mut self, m: usize, t: f64) -> Result<VectorField> {
        if m == 0 {
            return Ok(VectorField::zeros(self.n));
        }
        self.check_level(m)?;
        if m >= 3 && self.mode == ConstructionMode::Lagrangian {
            self.advance_to(t)?;
        }
        let mut phi = vec![0.0; self.n * self.n];
        self.assemble_stream(m, t, &mut phi)?;
        let mut v = VectorField::zeros(self.n);
        self.velocity_from_phi(&phi, &mut v);
        Ok(v)
    }

    pub(crate) fn velocity_from_phi(&mut self, phi: &[f64], out: &mut VectorField) {
        let n = self.n;
        if self.spec_scratch.len() != self.fft.spectral_len() {
            self.spec_scratch = vec![Complex64::default(); self.fft.spectral_len()];
            self.spec_scratch2 = self.spec_scratch.clone();
        }
        self.fft.forward(phi, &mut self.spec_scratch);
        // u = (-d2, d1) phi, both multipliers in one pass
        self.spec_scratch2
            .par_chunks_mut(n)
            .zip(self.spec_scratch.par_chunks_mut(n))
            .enumerate()
            .for_each(|(kx, (uy, col))| {
                let fx = Complex64::new(0.0, TWO_PI * kx as f64);
                for (iy, (y, c)) in uy.iter_mut().zip(col.iter_mut()).enumerate() {
                    let fy = Complex64::new(0.0, TWO_PI * Fft2::freq(n, iy));
                    *y = fx * *c;
                    *c = -fy * *c;
                }
            });
        self.fft.inverse(&self.spec_scratch, &mut out.x);
        self.fft.inverse(&self.spec_scratch2, &mut out.y);
    }

    /// Assembles phi_m samples into `out` (caller-provided, length n^2).
    pub(crate) fn assemble_stream(&self, m: usize, t: f64, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        for level in 1..=m {
            match (self.mode, level) {
                (ConstructionMode::Naive, _) | (_, 1) => self.add_naive_increment(level, t, out),
                (ConstructionMode::Lagrangian, _) => {
                    self.add_lagrangian_increment(level, t, out)?
                }
            }
        }
        Ok(())
    }

    fn check_level(&self, m: usize) -> Result<()> {
        if m < 1 || m > self.depth() {
            return Err(Error::LevelOutOfRange { level: m, depth: self.depth() });
        }
        Ok(())
    }

    /// Active (k, weight) pairs of the shear-window cutoff at level m.
    fn active_waves(&self, m: usize, t: f64) -> Vec<(ShearWave, f64)> {
        let arg = t * self.cascade.inv_tau[m - 1];
        self.zeta
            .active_shifts(arg)
            .into_iter()
            .flatten()
            .filter_map(|k| {
                let z = self.zeta.value(arg - k as f64);
                let wave = ShearWave::new(k);
                (z != 0.0 && wave.axis().is_some()).then_some((wave, z))
            })
            .collect()
    }

    fn add_naive_increment(&self, m: usize, t: f64, out: &mut [f64]) {
        let n = self.n;
        let amp = self.cascade.stream_amplitude(m);
        let inv_eps = self.cascade.inv_eps[m];
        for (wave, z) in self.active_waves(m, t) {
            let c = amp * z;
            let axis = wave.axis().unwrap();
            let wave1d: Vec<f64> =
                (0..n).map(|i| c * (TWO_PI * inv_eps * i as f64 / n as f64).sin()).collect();
            add_axis_profile(out, n, axis, &wave1d);
        }
    }

    /// Active anchor indices of map level j at time t. Level-1 maps are
    /// exact, so their windows are centered at the anchor times (anchor ell
    /// covers |t/tau-hat - ell| < 1/2 + w, and at t = ell tau-hat that anchor
    /// alone is active with weight one). Gridded levels use windows that
    /// start at the anchor, so a freshly born map is the identity.
    fn active_anchors(&self, j: usize, t: f64) -> Vec<(i64, f64)> {
        let ith = self.inv_tau_hat[j];
        let s = t * ith;
        if j == 1 {
            self.zeta_hat
                .active_shifts(s)
                .into_iter()
                .flatten()
                .filter_map(|ell| {
                    let zh = self.zeta_hat.value(s - ell as f64);
                    (zh != 0.0).then_some((ell, zh))
                })
                .collect()
        } else {
            let w = self.cfg.zeta_hat_width;
            let lo = (s - w).floor() as i64 - 1;
            let hi = (s + w).floor() as i64;
            (lo..=hi)
                .filter_map(|ell| {
                    let zh = self.zeta_hat.value(s - ell as f64 - 0.5);
                    (zh != 0.0).then_some((ell, zh))
                })
                .collect()
        }
    }

    fn add_lagrangian_increment(&self, m: usize, t: f64, out: &mut [f64]) -> Result<()> {
        if m == 1 {
            // X_0 = id and the anchor partition sums to one exactly
            self.add_naive_increment(m, t, out);
            return Ok(());
        }
        let j = m - 1;
        let waves = self.active_waves(m, t);
        if waves.is_empty() {
            return Ok(());
        }
        let amp = self.cascade.stream_amplitude(m);
        let inv_eps = self.cascade.inv_eps[m];
        for (ell, zh) in self.active_anchors(j, t) {
            let anchor_time = ell as f64 / self.inv_tau_hat[j];
            if j == 1 {
                // exact backward map of the glued shear layer
                let steps = self.layer1.steps(t, anchor_time);
                for (wave, z) in &waves {
                    let c = amp * zh * z;
                    self.add_sheared_wave(*wave, c, inv_eps, &steps, out);
                }
            } else {
                let state = self
                    .gridded
                    .iter()
                    .find(|s| s.j == j)
                    .expect("gridded map level missing");
                let anchor = state
                    .anchors
                    .iter()
                    .find(|a| a.ell == ell)
                    .ok_or_else(|| Error::Config(format!(
                        "anchor {ell} of map level {j} not materialized at t = {t}; \
                         advance_to must move forward monotonically"
                    )))?;
                for (wave, z) in &waves {
                    let c = amp * zh * z;
                    anchor.add_wave(self.n, *wave, c, inv_eps, t, out);
                }
            }
        }
        Ok(())
    }

    /// Adds `c * Psi(B(x)/eps)` where B is an exact composition of shear
    /// steps. Zero or one step keeps the term a sum of separable products;
    /// longer compositions (not reachable with the shipped anchor spacing)
    /// fall back to a pointwise loop.
    fn add_sheared_wave(
        &self,
        wave: ShearWave,
        c: f64,
        inv_eps: f64,
        steps: &[crate::flow::ShearStep],
        out: &mut [f64],
    ) {
        let n = self.n;
        let axis = wave.axis().unwrap();
        if steps.is_empty() {
            let wave1d: Vec<f64> =
                (0..n).map(|i| c * (TWO_PI * inv_eps * i as f64 / n as f64).sin()).collect();
            add_axis_profile(out, n, axis, &wave1d);
            return;
        }
        if steps.len() == 1 {
            let st = steps[0];
            let (sheared_coord, sign) = match st.axis() {
                ShearAxis::X1 => (1usize, 1.0),
                ShearAxis::X2 => (0usize, -1.0),
            };
            let psi_coord = match axis {
                ShearAxis::X1 => 0usize,
                ShearAxis::X2 => 1usize,
            };
            if psi_coord != sheared_coord {
                // the map leaves Psi's coordinate untouched
                let wave1d: Vec<f64> =
                    (0..n).map(|i| c * (TWO_PI * inv_eps * i as f64 / n as f64).sin()).collect();
                add_axis_profile(out, n, axis, &wave1d);
                return;
            }
            // sin(2 pi (x_d + s w cos(2 pi x_c / eps_1)) / eps_m)
            let k1 = self.layer1.inv_eps;
            let w = st.w();
            let sin_d: Vec<f64> =
                (0..n).map(|i| (TWO_PI * inv_eps * i as f64 / n as f64).sin()).collect();
            let cos_d: Vec<f64> =
                (0..n).map(|i| (TWO_PI * inv_eps * i as f64 / n as f64).cos()).collect();
            let phase: Vec<f64> = (0..n)
                .map(|i| sign * w * (TWO_PI * k1 * i as f64 / n as f64).cos() * inv_eps)
                .collect();
            let sin_v: Vec<f64> = phase.iter().map(|p| (TWO_PI * p).sin()).collect();
            let cos_v: Vec<f64> = phase.iter().map(|p| (TWO_PI * p).cos()).collect();
            // outer combination depends on which axis is rows (iy) vs cols (ix)
            add_sheared_outer(out, n, c, sheared_coord, &sin_d, &cos_d, &sin_v, &cos_v);
            return;
        }
        // general fallback: exact pointwise composition
        let nf = self.n as f64;
        out.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            let y = iy as f64 / nf;
            for (ix, v) in row.iter_mut().enumerate() {
                let mut x = [ix as f64 / nf, y];
                for st in steps {
                    st.apply(self.layer1.inv_eps, &mut x);
                }
                *v += c * wave.eval(x[0] * inv_eps, x[1] * inv_eps);
            }
        });
    }

    /// Advances the gridded inverse-map states to time t (monotone).
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        assert!(!self.frozen, "hierarchy is frozen");
        if self.gridded.is_empty() {
            return Ok(());
        }
        // split borrows: the view reads layer1/cascade while gridded mutates
        let u2 = U2View {
            layer1: &self.layer1,
            zeta: self.zeta,
            zeta_hat: self.zeta_hat,
            amp2: self.cascade.stream_amplitude(2),
            inv_eps2: self.cascade.inv_eps[2],
            inv_tau2: self.cascade.inv_tau[1],
            inv_tau_hat1: self.inv_tau_hat[1],
            speed: {
                let mut s = 0.0;
                for j in 1..=2usize {
                    let distort = if j >= 2 { 1.0 + self.cfg.near_identity_cap } else { 1.0 };
                    s += TWO_PI
                        * self.cascade.stream_amplitude(j)
                        * self.cascade.inv_eps[j]
                        * distort;
                }
                s
            },
        };
        let n = self.n;
        let w = self.cfg.zeta_hat_width;
        // currently only map level 2 can be gridded (depth <= 3)
        for state in &mut self.gridded {
            // the maps only matter while the served level's shear windows
            // are active; outside them the increment vanishes identically
            // and the anchors can be dropped and re-born later
            let lvl = state.j + 1;
            let inv_tau = self.cascade.inv_tau[lvl - 1];
            if !odd_window_intersects(&self.zeta, inv_tau, state.cur_time, t) {
                state.anchors.clear();
                state.cur_time = t;
                continue;
            }
            state.advance(&u2, n, w, t)?;
        }
        Ok(())
    }

    /// Pointwise-evaluable velocity of level j in {0, 1, 2}.
    pub fn point_velocity(&self, j: usize) -> Result<LevelVelocity<'_>> {
        match j {
            0 => Ok(LevelVelocity::Zero),
            1 => Ok(LevelVelocity::Layer1(&self.layer1)),
            2 if self.depth() >= 2 => Ok(LevelVelocity::U2(U2View::new(self))),
            _ => Err(Error::Config(format!(
                "pointwise velocity for level {j} unavailable (depth {})",
                self.depth()
            ))),
        }
    }

    /// Gridded flow-map snapshot of u_m anchored at ell tau''_m, per the
    /// published anchor convention (RK4 characteristics both ways).
    pub fn build_flow_map(&self, m: usize, ell: i64, t: f64) -> Result<FlowMapGrid> {
        let anchor_time = ell as f64 * self.cascade.tau_pp(m.min(self.cascade.inv_tau_pp.len() - 1));
        let h_max = (self.cascade.tau_pp(m.min(self.cascade.inv_tau_pp.len() - 1)) / 64.0)
            .min(0.1 / self.cascade.a[m]);
        let eps = self.cascade.eps(m.min(self.depth()));
        match self.point_velocity(m)? {
            LevelVelocity::Zero => integrate_flow_map(
                &ZeroVelocity,
                m,
                ell,
                anchor_time,
                t,
                self.n,
                h_max,
                eps,
                self.cfg.flow_tol,
            ),
            LevelVelocity::Layer1(f) => integrate_flow_map(
                f, m, ell, anchor_time, t, self.n, h_max, eps, self.cfg.flow_tol,
            ),
            LevelVelocity::U2(v) => integrate_flow_map(
                &v, m, ell, anchor_time, t, self.n, h_max, eps, self.cfg.flow_tol,
            ),
        }
    }
}

/// Does any odd (nonzero) shear window of the cutoff overlap [t0, t1]?
fn odd_window_intersects(zeta: &TimeCutoff, inv_tau: f64, t0: f64, t1: f64) -> bool {
    let hw = zeta.support_half_width();
    let lo = (t0 * inv_tau - hw).floor() as i64;
    let hi = (t1 * inv_tau + hw).ceil() as i64;
    (lo..=hi).any(|k| {
        k % 2 != 0 && {
            // window support (k - hw, k + hw) in cutoff units
            let a = (k as f64 - hw) / inv_tau;
            let b = (k as f64 + hw) / inv_tau;
            b > t0 && a < t1
        }
    })
}

/// out[iy][ix] += profile along the given axis (broadcast over the other).
fn add_axis_profile(out: &mut [f64], n: usize, axis: ShearAxis, wave1d: &[f64]) {
    match axis {
        ShearAxis::X1 => {
            out.par_chunks_mut(n).for_each(|row| {
                for (v, wv) in row.iter_mut().zip(wave1d) {
                    *v += wv;
                }
            });
        }
        ShearAxis::X2 => {
            out.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
                let wv = wave1d[iy];
                for v in row.iter_mut() {
                    *v += wv;
                }
            });
        }
    }
}

/// out += c * sin(arg_d + v(arg_c)) expanded into separable outer products.
/// `sheared_coord` = 1: rows carry sin_d/cos_d (x_2 data), columns the phase
/// vectors; `sheared_coord` = 0: transposed roles.
fn add_sheared_outer(
    out: &mut [f64],
    n: usize,
    c: f64,
    sheared_coord: usize,
    sin_d: &[f64],
    cos_d: &[f64],
    sin_v: &[f64],
    cos_v: &[f64],
) {
    if sheared_coord == 1 {
        // x_2 sheared by a function of x_1: row factor sin_d[iy], col cos_v[ix]
        out.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            let (sd, cd) = (c * sin_d[iy], c * cos_d[iy]);
            for (ix, v) in row.iter_mut().enumerate() {
                *v += sd * cos_v[ix] + cd * sin_v[ix];
            }
        });
    } else {
        // x_1 sheared by a function of x_2
        out.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            let (sv, cv) = (c * sin_v[iy], c * cos_v[iy]);
            for (ix, v) in row.iter_mut().enumerate() {
                *v += cv * sin_d[ix] + sv * cos_d[ix];
            }
        });
    }
}

impl MapLevelState {
    fn advance(&mut self, u: &U2View<'_>, n: usize, w: f64, t_new: f64) -> Result<()> {
        let ith = self.inv_tau_hat;
        let span_start = self.cur_time;
        // drop anchors whose window ended before the advance span
        self.anchors
            .retain(|a| (a.ell as f64 + 1.0 + w) / ith >= span_start - 1e-12);
        // materialize anchors active anywhere in [span_start, t_new]
        let lo = (span_start * ith - w).floor() as i64 - 1;
        let hi = (t_new * ith + w).floor() as i64;
        for ell in lo..=hi {
            let win_lo = (ell as f64 - w) / ith;
            let win_hi = (ell as f64 + 1.0 + w) / ith;
            if win_hi < span_start - 1e-12 || win_lo > t_new + 1e-12 {
                continue;
            }
            if self.anchors.iter().any(|a| a.ell == ell) {
                continue;
            }
            // birth: direct short integration from the current time (or the
            // window start if it lies ahead) back to the anchor time
            let t0 = span_start.max(win_lo);
            let anchor_time = ell as f64 / ith;
            let mut prev = [vec![0.0; n * n], vec![0.0; n * n]];
            let nf = n as f64;
            let h = self.h_cap;
            let (px, py) = prev.split_at_mut(1);
            px[0]
                .par_chunks_mut(n)
                .zip(py[0].par_chunks_mut(n))
                .enumerate()
                .for_each(|(iy, (rx, ry))| {
                    let y = iy as f64 / nf;
                    for ix in 0..n {
                        let x0 = [ix as f64 / nf, y];
                        let b = rk4_flow(u, x0, t0, anchor_time, h);
                        rx[ix] = b[0] - x0[0];
                        ry[ix] = b[1] - x0[1];
                    }
                });
            self.anchors.push(AnchorState {
                ell,
                t_prev: t0,
                t_next: t0,
                prev: prev.clone(),
                next: prev,
            });
        }
        self.anchors.sort_by_key(|a| a.ell);
        // advance every anchor to t_new by midpoint composition steps
        for a in &mut self.anchors {
            while a.t_next < t_new - 1e-14 {
                let h = (t_new - a.t_next).min(self.h_cap.max(1e-7));
                a.compose_step(u, n, h);
            }
        }
        self.cur_time = t_new;
        Ok(())
    }
}

impl AnchorState {
    /// B(t+h, x) = B(t, G(x)) with G one midpoint backward step of u.
    fn compose_step(&mut self, u: &U2View<'_>, n: usize, h: f64) {
        let t_hi = self.t_next + h;
        let nf = n as f64;
        let (bx, by) = (&self.next[0], &self.next[1]);
        let mut nx = vec![0.0; n * n];
        let mut ny = vec![0.0; n * n];
        nx.par_chunks_mut(n)
            .zip(ny.par_chunks_mut(n))
            .enumerate()
            .for_each(|(iy, (rx, ry))| {
                let y = iy as f64 / nf;
                for ix in 0..n {
                    let x = [ix as f64 / nf, y];
                    let k1 = u.velocity(t_hi, x);
                    let xm = [x[0] - 0.5 * h * k1[0], x[1] - 0.5 * h * k1[1]];
                    let k2 = u.velocity(t_hi - 0.5 * h, xm);
                    let foot = [x[0] - h * k2[0], x[1] - h * k2[1]];
                    rx[ix] = (foot[0] - x[0]) + bicubic_periodic(bx, n, foot[0], foot[1]);
                    ry[ix] = (foot[1] - x[1]) + bicubic_periodic(by, n, foot[0], foot[1]);
                }
            });
        std::mem::swap(&mut self.prev, &mut self.next);
        self.t_prev = self.t_next;
        self.next = [nx, ny];
        self.t_next = t_hi;
    }

    /// Adds `c * Psi(B(t, x)/eps)` using time-interpolated displacement grids.
    fn add_wave(&self, n: usize, wave: ShearWave, c: f64, inv_eps: f64, t: f64, out: &mut [f64]) {
        let span = self.t_next - self.t_prev;
        let s = if span > 0.0 { ((t - self.t_prev) / span).clamp(0.0, 1.0) } else { 0.0 };
        let axis = wave.axis().unwrap();
        let comp = match axis {
            ShearAxis::X1 => 0usize,
            ShearAxis::X2 => 1usize,
        };
        let (dp, dn) = (&self.prev[comp], &self.next[comp]);
        let nf = n as f64;
        out.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            let base = iy * n;
            let xbase = if comp == 0 { 0.0 } else { iy as f64 / nf };
            for (ix, v) in row.iter_mut().enumerate() {
                let coord = if comp == 0 { ix as f64 / nf } else { xbase };
                let d = (1.0 - s) * dp[base + ix] + s * dn[base + ix];
                *v += c * sin_2pi((coord + d) * inv_eps);
            }
        });
    }
}

/// Pointwise velocity views of hierarchy levels.
pub enum LevelVelocity<'a> {
    Zero,
    Layer1(&'a GluedShearField),
    U2(U2View<'a>),
}

impl PointVelocity for LevelVelocity<'_> {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        match self {
            LevelVelocity::Zero => [0.0, 0.0],
            LevelVelocity::Layer1(f) => f.velocity(t, x),
            LevelVelocity::U2(v) => v.velocity(t, x),
        }
    }
    fn velocity_and_grad(&self, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        match self {
            LevelVelocity::Zero => ([0.0, 0.0], [[0.0; 2]; 2]),
            LevelVelocity::Layer1(f) => f.velocity_and_grad(t, x),
            LevelVelocity::U2(v) => v.velocity_and_grad(t, x),
        }
    }
    fn speed_bound(&self) -> f64 {
        match self {
            LevelVelocity::Zero => 0.0,
            LevelVelocity::Layer1(f) => f.speed_bound(),
            LevelVelocity::U2(v) => v.speed_bound(),
        }
    }
}

/// Exact pointwise u_2 = u_1 + perp-grad of the level-2 Lagrangian increment;
/// the level-1 inverse flow and its Jacobian are closed-form.
pub struct U2View<'a> {
    layer1: &'a GluedShearField,
    zeta: TimeCutoff,
    zeta_hat: TimeCutoff,
    amp2: f64,
    inv_eps2: f64,
    inv_tau2: f64,
    inv_tau_hat1: f64,
    speed: f64,
}

impl<'a> U2View<'a> {
    fn new(h: &'a StreamHierarchy) -> Self {
        Self {
            layer1: &h.layer1,
            zeta: h.zeta,
            zeta_hat: h.zeta_hat,
            amp2: h.cascade.stream_amplitude(2),
            inv_eps2: h.cascade.inv_eps[2],
            inv_tau2: h.cascade.inv_tau[1],
            inv_tau_hat1: h.inv_tau_hat[1],
            speed: h.speed_bound(2),
        }
    }
}

impl PointVelocity for U2View<'_> {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let mut v = self.layer1.velocity(t, x);
        let arg_k = t * self.inv_tau2;
        let arg_l = t * self.inv_tau_hat1;
        for k in self.zeta.active_shifts(arg_k).into_iter().flatten() {
            let wave = ShearWave::new(k);
            let Some(axis) = wave.axis() else { continue };
            let z = self.zeta.value(arg_k - k as f64);
            if z == 0.0 {
                continue;
            }
            for ell in self.zeta_hat.active_shifts(arg_l).into_iter().flatten() {
                let zh = self.zeta_hat.value(arg_l - ell as f64);
                if zh == 0.0 {
                    continue;
                }
                let anchor_time = ell as f64 / self.inv_tau_hat1;
                let (b, jac) = self.layer1.inverse_with_grad(anchor_time, t, x);
                // grad of Psi(B/eps): (1/eps) J^T gradPsi; table trig is
                // accurate enough for the flow kernels
                let (g0, g1) = match axis {
                    ShearAxis::X1 => (TWO_PI * cos_2pi(b[0] * self.inv_eps2), 0.0),
                    ShearAxis::X2 => (0.0, TWO_PI * cos_2pi(b[1] * self.inv_eps2)),
                };
                let gx = self.inv_eps2 * (jac[0][0] * g0 + jac[1][0] * g1);
                let gy = self.inv_eps2 * (jac[0][1] * g0 + jac[1][1] * g1);
                let c = self.amp2 * z * zh;
                v[0] += -c * gy;
                v[1] += c * gx;
            }
        }
        v
    }

    fn velocity_and_grad(&self, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        // central differences; only exercised by diagnostic paths
        let h = 1e-6;
        let v = self.velocity(t, x);
        let vxp = self.velocity(t, [x[0] + h, x[1]]);
        let vxm = self.velocity(t, [x[0] - h, x[1]]);
        let vyp = self.velocity(t, [x[0], x[1] + h]);
        let vym = self.velocity(t, [x[0], x[1] - h]);
        let g = [
            [(vxp[0] - vxm[0]) / (2.0 * h), (vyp[0] - vym[0]) / (2.0 * h)],
            [(vxp[1] - vxm[1]) / (2.0 * h), (vyp[1] - vym[1]) / (2.0 * h)],
        ];
        (v, g)
    }

    fn speed_bound(&self) -> f64 {
        self.speed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{build_cascade, CascadeConfig};

    /// Small strictly-buildable M=2 cascade: 1/eps = [1, 13, 28].
    fn small_m2() -> ParameterCascade {
        build_cascade(&CascadeConfig::new(0.15, 1.3, 13, 2).unwrap()).unwrap()
    }

    fn hier(mode: ConstructionMode) -> StreamHierarchy {
        StreamHierarchy::new(small_m2(), 256, mode).unwrap()
    }

    #[test]
    fn grid_rule_rejects_coarse_grids() {
        let c = small_m2();
        assert!(matches!(
            StreamHierarchy::new(c, 128, ConstructionMode::Naive),
            Err(Error::GridTooCoarse { min_n: 224, .. })
        ));
    }

    #[test]
    fn naive_plateau_is_a_single_shear() {
        let h = hier(ConstructionMode::Naive);
        let c = h.cascade().clone();
        // t/tau_1 = 1: k = 1 plateau, Psi = sin(2 pi x1 / eps1)
        let t = c.tau(1);
        let inc = h.naive_stream_increment(1, t).unwrap();
        let amp = c.stream_amplitude(1);
        let n = h.grid_size();
        let mut worst = 0.0f64;
        for iy in (0..n).step_by(17) {
            for ix in 0..n {
                let x1 = ix as f64 / n as f64;
                let expect = amp * (TWO_PI * c.inv_eps[1] * x1).sin();
                worst = worst.max((inc.at(ix, iy) - expect).abs());
            }
        }
        assert!(worst < 1e-14 * amp.max(1.0), "plateau mismatch {worst}");
    }

    #[test]
    fn naive_even_window_is_zero() {
        let h = hier(ConstructionMode::Naive);
        let c = h.cascade().clone();
        let t = 2.0 * c.tau(1); // k = 2 interior
        let inc = h.naive_stream_increment(1, t).unwrap();
        assert!(inc.max_abs() == 0.0);
    }

    #[test]
    fn increments_are_mean_zero() {
        let mut h = hier(ConstructionMode::Lagrangian);
        for &t in &[0.03, 0.11, 0.27, 0.52, 0.89] {
            for m in 1..=2 {
                let inc = h.lagrangian_stream_increment(m, t).unwrap();
                assert!(inc.mean().abs() < 1e-12, "mean {} at m={m} t={t}", inc.mean());
            }
        }
    }

    #[test]
    fn lagrangian_equals_naive_at_level_one() {
        let mut h = hier(ConstructionMode::Lagrangian);
        for &t in &[0.0, 0.1, 0.37, 0.62, 0.95] {
            let a = h.naive_stream_increment(1, t).unwrap();
            let b = h.lagrangian_stream_increment(1, t).unwrap();
            let diff: f64 = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-10, "modes disagree at t={t}: {diff}");
        }
    }

    #[test]
    fn lagrangian_level_two_reduces_to_naive_at_anchor_times() {
        let mut h = hier(ConstructionMode::Lagrangian);
        let ith = h.inv_tau_hat[1];
        // pick an anchor time inside a nonzero shear window of level 2
        let mut t_anchor = None;
        for ell in 0..(ith as i64) {
            let t = ell as f64 / ith;
            if !h.active_waves(2, t).is_empty() {
                t_anchor = Some(t);
                break;
            }
        }
        let t = t_anchor.expect("no anchor inside an active window");
        let a = h.naive_stream_increment(2, t).unwrap();
        let b = h.lagrangian_stream_increment(2, t).unwrap();
        let diff: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12, "anchor-time mismatch {diff}");
    }

    #[test]
    fn velocity_is_spectrally_divergence_free() {
        let mut h = hier(ConstructionMode::Lagrangian);
        let v = h.velocity(2, 0.23).unwrap();
        let n = h.grid_size();
        let mut fft = Fft2::new(n);
        let mut cx = vec![Complex64::default(); fft.spectral_len()];
        let mut cy = vec![Complex64::default(); fft.spectral_len()];
        fft.forward(&v.x, &mut cx);
        fft.forward(&v.y, &mut cy);
        let mut div = 0.0f64;
        let mut scale = 0.0f64;
        for kx in 0..=n / 2 {
            for iy in 0..n {
                let ky = Fft2::freq(n, iy);
                let d = Complex64::new(0.0, TWO_PI * kx as f64) * cx[kx * n + iy]
                    + Complex64::new(0.0, TWO_PI * ky) * cy[kx * n + iy];
                div = div.max(d.norm());
                scale = scale.max(cx[kx * n + iy].norm().max(cy[kx * n + iy].norm()));
            }
        }
        assert!(div <= 1e-12 * scale.max(1.0), "divergence {div} scale {scale}");
    }

    #[test]
    fn pointwise_u2_matches_spectral_velocity() {
        let mut h = hier(ConstructionMode::Lagrangian);
        // a time where both a level-2 shear window and an anchor transition
        // are active
        let t = 0.5 / h.cascade().inv_tau[1] + 0.45 / h.inv_tau_hat[1];
        let v = h.velocity(2, t).unwrap();
        let u2 = match h.point_velocity(2).unwrap() {
            LevelVelocity::U2(v) => v,
            _ => unreachable!(),
        };
        let n = h.grid_size();
        let mut worst = 0.0f64;
        for iy in (0..n).step_by(7) {
            for ix in (0..n).step_by(3) {
                let x = [ix as f64 / n as f64, iy as f64 / n as f64];
                let p = u2.velocity(t, x);
                let i = iy * n + ix;
                worst = worst.max((p[0] - v.x[i]).abs().max((p[1] - v.y[i]).abs()));
            }
        }
        let scale = v.max_speed();
        assert!(worst <= 1e-7 * scale, "pointwise vs spectral {worst}, scale {scale}");
    }

    #[test]
    fn per_level_velocity_sup_bound() {
        let mut h = hier(ConstructionMode::Lagrangian);
        let c = h.cascade().clone();
        for &t in &[0.05, 0.21, 0.33, 0.68] {
            for m in 1..=2usize {
                let vm = h.velocity(m, t).unwrap();
                let vprev = h.velocity(m - 1, t).unwrap();
                let mut diff = 0.0f64;
                for i in 0..vm.x.len() {
                    let dx = vm.x[i] - vprev.x[i];
                    let dy = vm.y[i] - vprev.y[i];
                    diff = diff.max((dx * dx + dy * dy).sqrt());
                }
                let bound = TWO_PI * c.eps(m).powf(c.alpha) * 1.25;
                assert!(diff <= bound, "level {m}: |u_m - u_(m-1)| = {diff} > {bound}");
            }
        }
    }

    #[test]
    fn time_smoothness_of_sampled_velocity() {
        let mut h = hier(ConstructionMode::Lagrangian);
        let c = h.cascade().clone();
        let tau = c.tau(2);
        let dt = tau / 200.0;
        let t0 = 0.31;
        let n = h.grid_size();
        let probe = [n / 3, (2 * n) / 5];
        let mut samples = Vec::new();
        for i in 0..5 {
            let v = h.velocity(2, t0 + i as f64 * dt).unwrap();
            samples.push(v.x[probe[1] * n + probe[0]]);
        }
        // second finite difference bounded by C/tau_m^2 per unit amplitude
        let amp = TWO_PI * c.eps(2).powf(c.alpha) * 1.25;
        for w in samples.windows(3) {
            let dd = (w[2] - 2.0 * w[1] + w[0]) / (dt * dt);
            let cap = 300.0 * amp / (tau * tau);
            assert!(dd.abs() <= cap, "second difference {dd} exceeds {cap}");
        }
    }

    #[test]
    fn effective_c_star_reflects_cutoff_mass() {
        let h = hier(ConstructionMode::Naive);
        let c = h.effective_c_star();
        // both cutoffs carry L2 mass below one, so c* < 1/8, but not by much
        assert!(c < 0.125 && c > 0.10, "effective c* = {c}");
    }
}
