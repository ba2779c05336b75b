//! Smooth unit-scale time cutoffs whose integer shifts tile the line.
//!
//! Both kinds are plateau bumps with polynomial smoothstep edges centered at
//! t = -1/2 and t = 1/2. Because the falling edge of one shift and the rising
//! edge of the next are exact complements, `sum_k zeta(t - k) = 1` holds
//! pointwise for every transition width.

/// Seventh-order smoothstep: C^3, S(0) = 0, S(1) = 1, S(s) + S(1-s) = 1.
#[inline]
pub fn smoothstep7(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let s2 = s * s;
        s2 * s2 * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffKind {
    /// Shear-window cutoff: support in [-2/3, 2/3], plateau on [-1/3, 1/3].
    Zeta,
    /// Flow-anchor cutoff: a smooth approximation of the indicator of
    /// [-1/2, 1/2].
    ZetaHat,
}

#[derive(Debug, Clone, Copy)]
pub struct TimeCutoff {
    pub kind: CutoffKind,
    /// Half-width of each transition; the edges live on
    /// [±1/2 - w, ±1/2 + w]. Must lie in (0, 1/6].
    pub transition_width: f64,
}

impl TimeCutoff {
    pub fn new(kind: CutoffKind, transition_width: f64) -> Self {
        assert!(
            transition_width > 0.0 && transition_width <= 1.0 / 6.0,
            "transition width must lie in (0, 1/6]"
        );
        Self { kind, transition_width }
    }

    /// The widest admissible zeta: support exactly [-2/3, 2/3].
    pub fn zeta() -> Self {
        Self::new(CutoffKind::Zeta, 1.0 / 6.0)
    }

    pub fn zeta_hat() -> Self {
        Self::new(CutoffKind::ZetaHat, 1.0 / 12.0)
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let w = self.transition_width;
        let a = t.abs();
        if a <= 0.5 - w {
            1.0
        } else if a >= 0.5 + w {
            0.0
        } else {
            1.0 - smoothstep7((a - (0.5 - w)) / (2.0 * w))
        }
    }

    /// Support half-width: value vanishes for |t| beyond this.
    pub fn support_half_width(&self) -> f64 {
        0.5 + self.transition_width
    }

    /// Integral of the square over the line (equals the mean of
    /// `sum_k zeta(t-k)^2` over a unit period).
    pub fn sq_integral(&self) -> f64 {
        // plateau + two edges; each edge contributes 2w * int_0^1 S^2
        let w = self.transition_width;
        (1.0 - 2.0 * w) + 4.0 * w * smoothstep7_sq_integral()
    }

    /// Indices k with value(t - k) != 0; at most two.
    pub fn active_shifts(&self, t: f64) -> [Option<i64>; 2] {
        let h = self.support_half_width();
        let lo = (t - h).ceil() as i64;
        let hi = (t + h).floor() as i64;
        match hi - lo {
            0 => [Some(lo), None],
            _ => [Some(lo), Some(hi)],
        }
    }
}

/// Exact value of `int_0^1 smoothstep7(s)^2 ds`.
pub fn smoothstep7_sq_integral() -> f64 {
    // expand (35 s^4 - 84 s^5 + 70 s^6 - 20 s^7)^2 and integrate monomials
    1225.0 / 9.0 - 588.0 + 11956.0 / 11.0 - 13160.0 / 12.0 + 8260.0 / 13.0 - 200.0
        + 400.0 / 15.0
}

/// Integral of smoothstep7 from 0 to s.
#[inline]
pub fn smoothstep7_antiderivative(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        // int_0^1 S = 1/2 by symmetry
        0.5 + (s - 1.0)
    } else {
        let s5 = s * s * s * s * s;
        s5 * (7.0 + s * (-14.0 + s * (10.0 - 2.5 * s)))
    }
}

/// Integral of `cutoff.value` from -inf to t.
pub fn cutoff_antiderivative(c: &TimeCutoff, t: f64) -> f64 {
    let w = c.transition_width;
    let rise_start = -0.5 - w;
    let fall_start = 0.5 - w;
    if t <= rise_start {
        return 0.0;
    }
    // rising edge: value = S((t - rise_start) / 2w)
    let mut acc = 0.0;
    let s_r = ((t - rise_start) / (2.0 * w)).min(1.0);
    acc += 2.0 * w * smoothstep7_antiderivative(s_r);
    // plateau
    if t > -0.5 + w {
        acc += (t.min(fall_start) - (-0.5 + w)).max(0.0);
    }
    // falling edge: value = 1 - S((t - fall_start) / 2w)
    if t > fall_start {
        let s_f = ((t - fall_start) / (2.0 * w)).min(1.0);
        acc += 2.0 * w * (s_f - smoothstep7_antiderivative(s_f));
    }
    acc
}
