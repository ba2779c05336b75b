//! Lagrangian flow maps: exact flows of glued shear fields, pointwise RK4
//! characteristics with variational Jacobians, and gridded flow-map snapshots
//! with their invariant checks.

use crate::cutoff::{cutoff_antiderivative, TimeCutoff};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::TWO_PI;
use crate::shear::{ShearAxis, ShearWave};
use num_complex::Complex64;
use rayon::prelude::*;

/// Pointwise-evaluable velocity field.
pub trait PointVelocity: Sync {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2];
    /// Velocity and its spatial gradient `g[i][j] = d u_i / d x_j`.
    fn velocity_and_grad(&self, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]);
    /// Uniform bound on |u|.
    fn speed_bound(&self) -> f64;
}

/// The zero field (level 0).
pub struct ZeroVelocity;

impl PointVelocity for ZeroVelocity {
    fn velocity(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn velocity_and_grad(&self, _t: f64, _x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        ([0.0, 0.0], [[0.0; 2]; 2])
    }
    fn speed_bound(&self) -> f64 {
        0.0
    }
}

/// Steady unidirectional shear `u = amp * cos(2 pi x_c / eps) e_d`; the
/// closed-form flow is `x_d += (t - s) amp cos(...)`.
pub struct SteadyShear {
    pub axis: ShearAxis,
    pub amp: f64,
    pub inv_eps: f64,
}

impl PointVelocity for SteadyShear {
    fn velocity(&self, _t: f64, x: [f64; 2]) -> [f64; 2] {
        let c = match self.axis {
            ShearAxis::X1 => (TWO_PI * self.inv_eps * x[0]).cos(),
            ShearAxis::X2 => (TWO_PI * self.inv_eps * x[1]).cos(),
        };
        match self.axis {
            ShearAxis::X1 => [0.0, self.amp * c],
            ShearAxis::X2 => [-self.amp * c, 0.0],
        }
    }
    fn velocity_and_grad(&self, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let v = self.velocity(t, x);
        let k = TWO_PI * self.inv_eps;
        let mut g = [[0.0; 2]; 2];
        match self.axis {
            ShearAxis::X1 => g[1][0] = -self.amp * k * (k * x[0]).sin(),
            ShearAxis::X2 => g[0][1] = self.amp * k * (k * x[1]).sin(),
        }
        (v, g)
    }
    fn speed_bound(&self) -> f64 {
        self.amp.abs()
    }
}

/// A time-glued alternating shear layer: stream function
/// `sum_k zeta(t/tau - k) * amp * Psi_k(x / eps)`.
///
/// Because consecutive nonzero waves are separated by zero windows, at most
/// one shear direction is active at a time, and the flow between any two
/// times is an exact finite composition of unidirectional shear maps.
#[derive(Debug, Clone)]
pub struct GluedShearField {
    /// amp = a_m eps_m^2.
    pub amp: f64,
    pub inv_eps: f64,
    pub inv_tau: f64,
    pub zeta: TimeCutoff,
}

/// One exact shear map: `x_d += w * cos(2 pi x_c / eps)` along `axis`'s
/// induced velocity direction.
#[derive(Debug, Clone, Copy)]
pub struct ShearStep {
    axis: ShearAxis,
    w: f64,
}

impl ShearStep {
    pub fn axis(&self) -> ShearAxis {
        self.axis
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn apply(&self, inv_eps: f64, x: &mut [f64; 2]) {
        let k = TWO_PI * inv_eps;
        match self.axis {
            ShearAxis::X1 => x[1] += self.w * (k * x[0]).cos(),
            ShearAxis::X2 => x[0] -= self.w * (k * x[1]).cos(),
        }
    }

    /// Multiply the accumulated Jacobian on the left by this step's Jacobian.
    #[inline]
    fn apply_grad(&self, inv_eps: f64, x: &[f64; 2], jac: &mut [[f64; 2]; 2]) {
        let k = TWO_PI * inv_eps;
        // d(new)/d(old) = I + s e_d (x) e_c with s = -w k sin(k x_c) (X1 case)
        match self.axis {
            ShearAxis::X1 => {
                let s = -self.w * k * (k * x[0]).sin();
                jac[1][0] += s * jac[0][0];
                jac[1][1] += s * jac[0][1];
            }
            ShearAxis::X2 => {
                let s = self.w * k * (k * x[1]).sin();
                jac[0][0] += s * jac[1][0];
                jac[0][1] += s * jac[1][1];
            }
        }
    }
}

impl GluedShearField {
    /// Signed displacement weight accumulated in window k between s and t:
    /// `amp * 2 pi / eps * tau * [Z(t/tau - k) - Z(s/tau - k)]`.
    fn window_weight(&self, k: i64, s: f64, t: f64) -> f64 {
        let z = |time: f64| cutoff_antiderivative(&self.zeta, time * self.inv_tau - k as f64);
        self.amp * TWO_PI * self.inv_eps / self.inv_tau * (z(t) - z(s))
    }

    /// Exact shear-step decomposition of the flow from s to t.
    pub fn steps(&self, s: f64, t: f64) -> Vec<ShearStep> {
        let (t0, t1) = (s.min(t), s.max(t));
        let h = self.zeta.support_half_width() / self.inv_tau;
        let k_lo = ((t0 - h) * self.inv_tau).ceil() as i64 - 1;
        let k_hi = ((t1 + h) * self.inv_tau).floor() as i64 + 1;
        let mut steps = Vec::new();
        let mut ks: Vec<i64> = (k_lo..=k_hi).collect();
        if t < s {
            ks.reverse();
        }
        for k in ks {
            let wave = ShearWave::new(k);
            if let Some(axis) = wave.axis() {
                let w = self.window_weight(k, s, t);
                if w != 0.0 {
                    steps.push(ShearStep { axis, w });
                }
            }
        }
        steps
    }

    /// Exact flow map X(t, x; s).
    pub fn flow(&self, s: f64, t: f64, mut x: [f64; 2]) -> [f64; 2] {
        for st in self.steps(s, t) {
            st.apply(self.inv_eps, &mut x);
        }
        x
    }

    /// Exact flow map and its Jacobian.
    pub fn flow_with_grad(&self, s: f64, t: f64, mut x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut jac = [[1.0, 0.0], [0.0, 1.0]];
        for st in self.steps(s, t) {
            st.apply_grad(self.inv_eps, &x, &mut jac);
            st.apply(self.inv_eps, &mut x);
        }
        (x, jac)
    }

    /// Exact inverse map X^{-1}(t, x; s): the flow from t back to s.
    pub fn inverse(&self, s: f64, t: f64, x: [f64; 2]) -> [f64; 2] {
        self.flow(t, s, x)
    }

    pub fn inverse_with_grad(&self, s: f64, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        self.flow_with_grad(t, s, x)
    }
}

impl PointVelocity for GluedShearField {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (v, _) = self.velocity_and_grad(t, x);
        v
    }

    fn velocity_and_grad(&self, t: f64, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut v = [0.0, 0.0];
        let mut g = [[0.0; 2]; 2];
        for k in self.zeta.active_shifts(t * self.inv_tau).into_iter().flatten() {
            let wave = ShearWave::new(k);
            if let Some(axis) = wave.axis() {
                let z = self.zeta.value(t * self.inv_tau - k as f64);
                if z == 0.0 {
                    continue;
                }
                let amp = self.amp * z * TWO_PI * self.inv_eps;
                let kk = TWO_PI * self.inv_eps;
                match axis {
                    ShearAxis::X1 => {
                        v[1] += amp * (kk * x[0]).cos();
                        g[1][0] += -amp * kk * (kk * x[0]).sin();
                    }
                    ShearAxis::X2 => {
                        v[0] -= amp * (kk * x[1]).cos();
                        g[0][1] += amp * kk * (kk * x[1]).sin();
                    }
                }
            }
        }
        (v, g)
    }

    fn speed_bound(&self) -> f64 {
        self.amp * TWO_PI * self.inv_eps
    }
}

/// One RK4 step of dx/dt = u(t, x).
#[inline]
pub fn rk4_step(u: &impl PointVelocity, t: f64, h: f64, x: [f64; 2]) -> [f64; 2] {
    let k1 = u.velocity(t, x);
    let k2 = u.velocity(t + 0.5 * h, [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
    let k3 = u.velocity(t + 0.5 * h, [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
    let k4 = u.velocity(t + h, [x[0] + h * k3[0], x[1] + h * k3[1]]);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Fixed-step RK4 characteristic from (t0, x0) to t1 (either direction).
pub fn rk4_flow(u: &impl PointVelocity, x0: [f64; 2], t0: f64, t1: f64, h_max: f64) -> [f64; 2] {
    let span = t1 - t0;
    if span == 0.0 {
        return x0;
    }
    let steps = (span.abs() / h_max).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut x = x0;
    let mut t = t0;
    for _ in 0..steps {
        x = rk4_step(u, t, h, x);
        t += h;
    }
    x
}

/// RK4 with the variational equation dJ/dt = grad u(X) J integrated alongside.
pub fn rk4_flow_with_grad(
    u: &impl PointVelocity,
    x0: [f64; 2],
    t0: f64,
    t1: f64,
    h_max: f64,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let span = t1 - t0;
    let mut jac = [[1.0, 0.0], [0.0, 1.0]];
    if span == 0.0 {
        return (x0, jac);
    }
    let steps = (span.abs() / h_max).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut x = x0;
    let mut t = t0;
    let mat_mul_add = |g: &[[f64; 2]; 2], j: &[[f64; 2]; 2]| {
        [
            [
                g[0][0] * j[0][0] + g[0][1] * j[1][0],
                g[0][0] * j[0][1] + g[0][1] * j[1][1],
            ],
            [
                g[1][0] * j[0][0] + g[1][1] * j[1][0],
                g[1][0] * j[0][1] + g[1][1] * j[1][1],
            ],
        ]
    };
    for _ in 0..steps {
        let (k1, g1) = u.velocity_and_grad(t, x);
        let j1 = mat_mul_add(&g1, &jac);
        let x2 = [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]];
        let jac2 = add_scaled(&jac, &j1, 0.5 * h);
        let (k2, g2) = u.velocity_and_grad(t + 0.5 * h, x2);
        let j2 = mat_mul_add(&g2, &jac2);
        let x3 = [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]];
        let jac3 = add_scaled(&jac, &j2, 0.5 * h);
        let (k3, g3) = u.velocity_and_grad(t + 0.5 * h, x3);
        let j3 = mat_mul_add(&g3, &jac3);
        let x4 = [x[0] + h * k3[0], x[1] + h * k3[1]];
        let jac4 = add_scaled(&jac, &j3, h);
        let (k4, g4) = u.velocity_and_grad(t + h, x4);
        let j4 = mat_mul_add(&g4, &jac4);
        x = [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        for i in 0..2 {
            for j in 0..2 {
                jac[i][j] += h / 6.0 * (j1[i][j] + 2.0 * j2[i][j] + 2.0 * j3[i][j] + j4[i][j]);
            }
        }
        t += h;
    }
    (x, jac)
}

fn add_scaled(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], c: f64) -> [[f64; 2]; 2] {
    [
        [a[0][0] + c * b[0][0], a[0][1] + c * b[0][1]],
        [a[1][0] + c * b[1][0], a[1][1] + c * b[1][1]],
    ]
}

/// Tolerances for the gridded flow-map invariants.
#[derive(Debug, Clone, Copy)]
pub struct FlowMapTolerances {
    /// |X(X^{-1}) - id| cap, in units of eps_m (default 1e-6 eps_m).
    pub composition_rel: f64,
    /// |det grad X - 1| cap.
    pub jacobian: f64,
}

impl Default for FlowMapTolerances {
    fn default() -> Self {
        Self { composition_rel: 1e-6, jacobian: 1e-8 }
    }
}

/// Forward and backward characteristics of one anchor, sampled on a grid.
#[derive(Debug, Clone)]
pub struct FlowMapGrid {
    pub level: usize,
    pub anchor: i64,
    pub anchor_time: f64,
    pub time: f64,
    pub n: usize,
    /// Forward displacement X(t, x) - x.
    pub fwd: [Vec<f64>; 2],
    /// Backward displacement X^{-1}(t, x) - x.
    pub bwd: [Vec<f64>; 2],
    /// Forward-map Jacobian entries, row-major 2x2.
    pub grad_fwd: [Vec<f64>; 4],
    /// Backward-map Jacobian entries.
    pub grad_bwd: [Vec<f64>; 4],
}

/// Builds the flow-map snapshot of `u` at time `t` for the anchor at
/// `anchor_time`, by fixed-step RK4 characteristics from every grid node; the
/// backward map uses direct backward-time integration rather than inversion
/// of the forward map, so the composition residual is a genuine cross-check.
pub fn integrate_flow_map(
    u: &impl PointVelocity,
    level: usize,
    anchor: i64,
    anchor_time: f64,
    t: f64,
    n: usize,
    h_max: f64,
    eps_level: f64,
    tol: FlowMapTolerances,
) -> Result<FlowMapGrid> {
    let mut map = FlowMapGrid {
        level,
        anchor,
        anchor_time,
        time: t,
        n,
        fwd: [vec![0.0; n * n], vec![0.0; n * n]],
        bwd: [vec![0.0; n * n], vec![0.0; n * n]],
        grad_fwd: std::array::from_fn(|_| vec![0.0; n * n]),
        grad_bwd: std::array::from_fn(|_| vec![0.0; n * n]),
    };
    let nf = n as f64;
    // forward and backward characteristics per node
    let (fx, rest) = map.fwd.split_at_mut(1);
    let fy = rest;
    let (bx, resb) = map.bwd.split_at_mut(1);
    let by = resb;
    fx[0]
        .par_chunks_mut(n)
        .zip(fy[0].par_chunks_mut(n))
        .zip(bx[0].par_chunks_mut(n))
        .zip(by[0].par_chunks_mut(n))
        .enumerate()
        .for_each(|(iy, (((rfx, rfy), rbx), rby))| {
            let y = iy as f64 / nf;
            for ix in 0..n {
                let x0 = [ix as f64 / nf, y];
                let xf = rk4_flow(u, x0, anchor_time, t, h_max);
                rfx[ix] = xf[0] - x0[0];
                rfy[ix] = xf[1] - x0[1];
                let xb = rk4_flow(u, x0, t, anchor_time, h_max);
                rbx[ix] = xb[0] - x0[0];
                rby[ix] = xb[1] - x0[1];
            }
        });

    // spectral gradients of the periodic displacement fields
    let mut fft = Fft2::new(n);
    let grads = |fft: &mut Fft2, dx: &[f64], dy: &[f64]| -> [Vec<f64>; 4] {
        let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n * n]);
        let mut cx = vec![Complex64::default(); fft.spectral_len()];
        let mut cy = vec![Complex64::default(); fft.spectral_len()];
        fft.forward(dx, &mut cx);
        fft.forward(dy, &mut cy);
        let mut tmp = vec![Complex64::default(); fft.spectral_len()];
        let deriv = |c: &[Complex64], along_x: bool, tmp: &mut [Complex64]| {
            for kx in 0..=n / 2 {
                for iy in 0..n {
                    let k = if along_x { kx as f64 } else { Fft2::freq(n, iy) };
                    tmp[kx * n + iy] = c[kx * n + iy] * Complex64::new(0.0, TWO_PI * k);
                }
            }
        };
        deriv(&cx, true, &mut tmp);
        fft.inverse(&tmp, &mut out[0]); // d dx / dx
        deriv(&cx, false, &mut tmp);
        fft.inverse(&tmp, &mut out[1]); // d dx / dy
        deriv(&cy, true, &mut tmp);
        fft.inverse(&tmp, &mut out[2]); // d dy / dx
        deriv(&cy, false, &mut tmp);
        fft.inverse(&tmp, &mut out[3]); // d dy / dy
        out
    };
    let gf = grads(&mut fft, &map.fwd[0], &map.fwd[1]);
    let gb = grads(&mut fft, &map.bwd[0], &map.bwd[1]);
    // grad X = I + grad displacement, stored as [xx, xy, yx, yy]
    for (i, g) in gf.into_iter().enumerate() {
        map.grad_fwd[i] = g;
    }
    for (i, g) in gb.into_iter().enumerate() {
        map.grad_bwd[i] = g;
    }

    // volume preservation
    let (jac_err, jac_node) = map.jacobian_defect();
    if jac_err > tol.jacobian {
        return Err(Error::FlowMapBreach {
            level,
            anchor,
            what: "det grad X - 1",
            value: jac_err,
            tol: tol.jacobian,
            node: jac_node,
        });
    }
    // composition residual: re-integrate forward from the backward feet
    let comp_tol = tol.composition_rel * eps_level;
    let mut worst = (0.0f64, (0usize, 0usize));
    let rows: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|iy| {
            let y = iy as f64 / nf;
            let mut w = (0.0f64, 0usize);
            for ix in 0..n {
                let x0 = [ix as f64 / nf, y];
                let foot = [x0[0] + map.bwd[0][iy * n + ix], x0[1] + map.bwd[1][iy * n + ix]];
                let back = rk4_flow(u, foot, anchor_time, t, h_max);
                let d0 = periodic_dist(back[0], x0[0]);
                let d1 = periodic_dist(back[1], x0[1]);
                let d = d0.hypot(d1);
                if d > w.0 {
                    w = (d, ix);
                }
            }
            (w.0, w.1, iy)
        })
        .collect();
    for (d, ix, iy) in rows {
        if d > worst.0 {
            worst = (d, (ix, iy));
        }
    }
    if worst.0 > comp_tol {
        return Err(Error::FlowMapBreach {
            level,
            anchor,
            what: "X(X^{-1}) - id",
            value: worst.0,
            tol: comp_tol,
            node: worst.1,
        });
    }
    Ok(map)
}

impl FlowMapGrid {
    /// Max |det grad X - 1| over both maps with the offending node.
    pub fn jacobian_defect(&self) -> (f64, (usize, usize)) {
        let n = self.n;
        let mut worst = (0.0f64, (0usize, 0usize));
        for (g, _name) in [(&self.grad_fwd, "fwd"), (&self.grad_bwd, "bwd")] {
            for iy in 0..n {
                for ix in 0..n {
                    let i = iy * n + ix;
                    let det = (1.0 + g[0][i]) * (1.0 + g[3][i]) - g[1][i] * g[2][i];
                    let d = (det - 1.0).abs();
                    if d > worst.0 {
                        worst = (d, (ix, iy));
                    }
                }
            }
        }
        worst
    }

    /// Max |grad X - I| over the forward map. Entries store the displacement
    /// gradient, which is exactly grad X - I.
    pub fn near_identity_defect(&self) -> f64 {
        self.grad_fwd
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub fn periodic_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Periodic Catmull-Rom interpolation of a gridded field.
#[inline]
pub fn bicubic_periodic(field: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let nf = n as f64;
    let gx = (x.rem_euclid(1.0)) * nf;
    let gy = (y.rem_euclid(1.0)) * nf;
    let ix = gx.floor() as usize % n;
    let iy = gy.floor() as usize % n;
    let fx = gx - gx.floor();
    let fy = gy - gy.floor();
    let wx = catmull_weights(fx);
    let wy = catmull_weights(fy);
    let mut acc = 0.0;
    for (dy, wyv) in wy.iter().enumerate() {
        let row = (iy + n + dy - 1) % n;
        let base = row * n;
        let mut r = 0.0;
        for (dx, wxv) in wx.iter().enumerate() {
            let col = (ix + n + dx - 1) % n;
            r += wxv * field[base + col];
        }
        acc += wyv * r;
    }
    acc
}

#[inline]
fn catmull_weights(f: f64) -> [f64; 4] {
    let f2 = f * f;
    let f3 = f2 * f;
    [
        0.5 * (-f3 + 2.0 * f2 - f),
        0.5 * (3.0 * f3 - 5.0 * f2 + 2.0),
        0.5 * (-3.0 * f3 + 4.0 * f2 + f),
        0.5 * (f3 - f2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_m1_layer() -> GluedShearField {
        // level-1 field of the (0.25, 1.1, 16) cascade: amp = 8/256
        GluedShearField {
            amp: 8.0 / 256.0,
            inv_eps: 16.0,
            inv_tau: 6.0,
            zeta: TimeCutoff::zeta(),
        }
    }

    #[test]
    fn zero_velocity_gives_identity() {
        let m = integrate_flow_map(
            &ZeroVelocity,
            0,
            0,
            0.0,
            0.25,
            32,
            1e-2,
            1.0,
            FlowMapTolerances::default(),
        )
        .unwrap();
        assert!(m.fwd[0].iter().all(|v| v.abs() < 1e-15));
        assert!(m.bwd[1].iter().all(|v| v.abs() < 1e-15));
        assert_eq!(m.jacobian_defect().0, 0.0);
    }

    #[test]
    fn steady_shear_flow_is_exact() {
        let u = SteadyShear { axis: ShearAxis::X2, amp: 0.7, inv_eps: 4.0 };
        let x0 = [0.13, 0.37];
        let t = 0.8;
        let xf = rk4_flow(&u, x0, 0.0, t, 1e-2);
        let expect = [x0[0] - t * 0.7 * (TWO_PI * 4.0 * x0[1]).cos(), x0[1]];
        assert!((xf[0] - expect[0]).abs() < 1e-13);
        assert!((xf[1] - expect[1]).abs() < 1e-14);
        let (_, jac) = rk4_flow_with_grad(&u, x0, 0.0, t, 1e-2);
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn glued_flow_matches_rk4() {
        let f = desk_m1_layer();
        // span two shear windows plus the gap between them
        let (s, t) = (0.12, 0.64);
        for &x0 in &[[0.1, 0.2], [0.77, 0.51], [0.031, 0.93]] {
            let exact = f.flow(s, t, x0);
            let rk = rk4_flow(&f, x0, s, t, 2e-4);
            assert!(
                (exact[0] - rk[0]).abs() + (exact[1] - rk[1]).abs() < 1e-9,
                "exact {exact:?} vs rk {rk:?}"
            );
        }
    }

    #[test]
    fn glued_flow_composition_is_identity() {
        let f = desk_m1_layer();
        let (s, t) = (0.2, 0.55);
        for &x0 in &[[0.41, 0.9], [0.05, 0.05]] {
            let fwd = f.flow(s, t, x0);
            let back = f.flow(t, s, fwd);
            assert!((back[0] - x0[0]).abs() < 1e-14);
            assert!((back[1] - x0[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn glued_jacobian_is_volume_preserving() {
        let f = desk_m1_layer();
        let (_, jac) = f.flow_with_grad(0.1, 0.62, [0.3, 0.8]);
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        assert!((det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gridded_map_invariants_on_level_one() {
        let f = desk_m1_layer();
        // anchor window of width tau''_1-ish around t = 0.25
        let anchor_time = 0.25;
        let t = anchor_time + 0.01;
        let m = integrate_flow_map(
            &f,
            1,
            0,
            anchor_time,
            t,
            64,
            2e-4,
            1.0 / 16.0,
            FlowMapTolerances::default(),
        )
        .unwrap();
        let (jd, _) = m.jacobian_defect();
        assert!(jd < 1e-8, "jacobian defect {jd}");
    }

    #[test]
    fn psi_round_trip_through_inverse() {
        let f = desk_m1_layer();
        let wave = ShearWave::new(3);
        let (s, t) = (0.3, 0.34);
        let inv_eps2 = 122.0;
        for &x0 in &[[0.2, 0.6], [0.9, 0.1]] {
            let fwd = f.flow(s, t, x0);
            let back = f.inverse(s, t, fwd);
            let a = wave.eval(back[0] * inv_eps2, back[1] * inv_eps2);
            let b = wave.eval(x0[0] * inv_eps2, x0[1] * inv_eps2);
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn bicubic_reproduces_smooth_fields() {
        let n = 64;
        let f: Vec<f64> = (0..n * n)
            .map(|i| {
                let (ix, iy) = (i % n, i / n);
                (TWO_PI * 3.0 * ix as f64 / n as f64).sin()
                    * (TWO_PI * 2.0 * iy as f64 / n as f64).cos()
            })
            .collect();
        let mut worst = 0.0f64;
        for p in 0..400 {
            let x = 0.003 + 0.9931 * (p as f64 / 400.0);
            let y = (0.57 * x + 0.11).rem_euclid(1.0);
            let v = bicubic_periodic(&f, n, x, y);
            let exact = (TWO_PI * 3.0 * x).sin() * (TWO_PI * 2.0 * y).cos();
            worst = worst.max((v - exact).abs());
        }
        assert!(worst < 5e-4, "bicubic error {worst}");
    }
}
