//! The parameter cascade: scales, amplitudes, time scales, renormalized
//! diffusivities, and machine-checkable validation of the scale-separation
//! constraints.
//!
//! All reciprocal scales (`1/eps_m`, `1/tau_m`, `1/tau''_m`) are integer
//! valued; they are stored as f64 so that deep cascades (M = 20 and beyond)
//! stay representable. Entries below 2^53 are exact integers.

use crate::error::{Error, Result};
use std::fmt::Write as _;

/// Configuration for one cascade instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeConfig {
    /// Hölder exponent, in (0, 1/3) for a strictly admissible construction.
    pub alpha: f64,
    /// Super-exponential rate, > 1.
    pub q: f64,
    /// Base scale: eps_1 = 1/lambda.
    pub lambda: u32,
    /// Number of oscillating levels M >= 1.
    pub levels: usize,
    /// Enhancement constant of the diffusivity recursion. The classical
    /// time-averaged shear value is 1/8; the shipped presets fold the
    /// measured L^2 mass of the time cutoffs into it.
    pub c_star: f64,
}

impl CascadeConfig {
    pub const DEFAULT_C_STAR: f64 = 0.125;

    pub fn new(alpha: f64, q: f64, lambda: u32, levels: usize) -> Result<Self> {
        let cfg = Self { alpha, q, lambda, levels, c_star: Self::DEFAULT_C_STAR };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_c_star(mut self, c_star: f64) -> Self {
        self.c_star = c_star;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha * (2.0 * self.q + 1.0) < 1.0) {
            return Err(Error::Config(format!(
                "alpha*(2q+1) = {} must be < 1 (alpha = {}, q = {})",
                self.alpha * (2.0 * self.q + 1.0),
                self.alpha,
                self.q
            )));
        }
        if self.q <= 1.0 {
            return Err(Error::Config(format!("q = {} must exceed 1", self.q)));
        }
        if self.lambda < 2 {
            return Err(Error::Config(format!("lambda = {} must be >= 2", self.lambda)));
        }
        if self.levels < 1 {
            return Err(Error::Config("levels must be >= 1".into()));
        }
        if !(self.c_star > 0.0) {
            return Err(Error::Config(format!("c_star = {} must be positive", self.c_star)));
        }
        Ok(())
    }

    /// Skip the admissibility window on (alpha, q); used to build cascades
    /// whose constraint report is expected to show violations.
    pub fn unchecked(alpha: f64, q: f64, lambda: u32, levels: usize) -> Self {
        Self { alpha, q, lambda, levels, c_star: Self::DEFAULT_C_STAR }
    }

    pub fn gamma(&self) -> f64 {
        (self.q - 1.0) * (1.0 + self.alpha) / (self.q + 1.0)
    }
}

/// How to resolve time-scale choices when an admissible open interval
/// contains no integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalPolicy {
    /// Fail with a diagnostic naming the first violated interval.
    Strict,
    /// Take the nearest integer anyway and record the violation; useful for
    /// constraint-report studies of inadmissible parameters.
    Nearest,
}

/// All scalar sequences of one construction instance.
#[derive(Debug, Clone)]
pub struct ParameterCascade {
    pub alpha: f64,
    pub q: f64,
    pub gamma: f64,
    pub c_star: f64,
    /// 1/eps_m for m = 0..=M (eps_0 = 1).
    pub inv_eps: Vec<f64>,
    /// a_m = eps_m^(alpha-1) for m = 0..=M.
    pub a: Vec<f64>,
    /// 1/tau_m for m = 1..=M (index m-1).
    pub inv_tau: Vec<f64>,
    /// 1/tau''_m for m = 0..M (index m).
    pub inv_tau_pp: Vec<f64>,
    /// Windows that contained no admissible integer (Nearest policy only).
    pub interval_violations: Vec<String>,
}

impl ParameterCascade {
    pub fn depth(&self) -> usize {
        self.inv_eps.len() - 1
    }

    pub fn eps(&self, m: usize) -> f64 {
        1.0 / self.inv_eps[m]
    }

    pub fn a(&self, m: usize) -> f64 {
        self.a[m]
    }

    pub fn tau(&self, m: usize) -> f64 {
        assert!(m >= 1, "tau_m defined for m >= 1");
        1.0 / self.inv_tau[m - 1]
    }

    pub fn tau_pp(&self, m: usize) -> f64 {
        1.0 / self.inv_tau_pp[m]
    }

    /// Band exponent 1 + alpha + gamma.
    pub fn band_exponent(&self) -> f64 {
        1.0 + self.alpha + self.gamma
    }

    /// Center kappa of the level-m permissible band, eps_m^(1+alpha+gamma).
    pub fn kappa_center(&self, m: usize) -> f64 {
        self.inv_eps[m].powf(-self.band_exponent())
    }

    /// The closed permissible band at level m.
    pub fn band(&self, m: usize) -> (f64, f64) {
        let c = self.kappa_center(m);
        (0.5 * c, 2.0 * c)
    }

    /// Amplitude a_m eps_m^2 of the level-m stream increment.
    pub fn stream_amplitude(&self, m: usize) -> f64 {
        self.inv_eps[m].powf(-(1.0 + self.alpha))
    }

    /// Flat CSV with columns m, inv_eps, a, inv_tau, inv_tau_pp, kappa.
    pub fn to_csv(&self, kappas: Option<&[f64]>) -> String {
        let mut out = String::from("m,inv_eps,a,inv_tau,inv_tau_pp,kappa\n");
        for m in 0..=self.depth() {
            let tau = if m >= 1 { format!("{}", self.inv_tau[m - 1]) } else { String::new() };
            let tpp = if m < self.inv_tau_pp.len() {
                format!("{}", self.inv_tau_pp[m])
            } else {
                String::new()
            };
            let kap = kappas.map_or(String::new(), |k| format!("{}", k[m]));
            let _ = writeln!(out, "{},{},{},{},{},{}", m, self.inv_eps[m], self.a[m], tau, tpp, kap);
        }
        out
    }
}

/// Nearest integer to `target`, clamped strictly inside the open interval
/// (lo, hi). Returns None when the interval contains no integer.
fn integer_in_open(target: f64, lo: f64, hi: f64) -> Option<f64> {
    // smallest integer strictly above lo, largest strictly below hi
    let lo_i = lo.floor() + 1.0;
    let hi_i = if hi.fract() == 0.0 { hi - 1.0 } else { hi.floor() };
    if lo_i > hi_i {
        return None;
    }
    Some(target.round().clamp(lo_i, hi_i))
}

pub fn build_cascade(config: &CascadeConfig) -> Result<ParameterCascade> {
    build_cascade_with(config, IntervalPolicy::Strict)
}

pub fn build_cascade_with(
    config: &CascadeConfig,
    policy: IntervalPolicy,
) -> Result<ParameterCascade> {
    let m_max = config.levels;
    let (alpha, q) = (config.alpha, config.q);
    let gamma = config.gamma();
    let mut violations = Vec::new();

    // scales and amplitudes
    let mut inv_eps = Vec::with_capacity(m_max + 1);
    inv_eps.push(1.0);
    inv_eps.push(config.lambda as f64);
    for m in 2..=m_max {
        let next = inv_eps[m - 1].powf(q).round();
        if next <= inv_eps[m - 1] {
            return Err(Error::Config(format!(
                "scales stall at level {m}: round((1/eps_{})^q) = {next} does not decrease eps \
                 (lambda too small for q = {q})",
                m - 1
            )));
        }
        inv_eps.push(next);
    }
    let a: Vec<f64> = inv_eps.iter().map(|ie| ie.powf(1.0 - alpha)).collect();

    // tau_m in (eps_{m-1}^{alpha-1}, eps_m^{alpha-1+gamma}) around the
    // geometric-mean formula value
    let tau_exp = -((alpha - 1.0) * (q + 1.0) + gamma * q) / (2.0 * q);
    let mut inv_tau = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let lo = a[m - 1];
        let hi = inv_eps[m].powf(1.0 - alpha - gamma);
        let target = inv_eps[m].powf(tau_exp);
        match integer_in_open(target, lo, hi) {
            Some(v) => inv_tau.push(v),
            None => match policy {
                IntervalPolicy::Strict => {
                    return Err(Error::EmptyInterval { name: "1/tau", level: m, lo, hi })
                }
                IntervalPolicy::Nearest => {
                    let v = target.round().max((lo.floor() + 1.0).max(2.0));
                    violations.push(format!(
                        "1/tau_{m} = {v} outside its admissible interval ({lo}, {hi})"
                    ));
                    inv_tau.push(v);
                }
            },
        }
    }

    // tau''_m in (a_m, 1/tau_{m+1}); needed for m = 0..M-1, and we also fix a
    // value at m = M (anchors of the deepest level's own maps) inside
    // (a_M, formula) for completeness of exports.
    let tpp_exp = -((alpha - 1.0) * (q + 3.0) + gamma * q) / 4.0;
    let mut inv_tau_pp = Vec::with_capacity(m_max);
    for m in 0..m_max {
        let lo = a[m];
        let hi = inv_tau[m]; // = 1/tau_{m+1}
        let target = inv_eps[m].powf(tpp_exp);
        match integer_in_open(target, lo, hi) {
            Some(v) => inv_tau_pp.push(v),
            None => match policy {
                IntervalPolicy::Strict => {
                    return Err(Error::EmptyInterval { name: "1/tau''", level: m, lo, hi })
                }
                IntervalPolicy::Nearest => {
                    let v = target.round().max((lo.floor() + 1.0).max(2.0));
                    violations.push(format!(
                        "1/tau''_{m} = {v} outside its admissible interval ({lo}, {hi})"
                    ));
                    inv_tau_pp.push(v);
                }
            },
        }
    }

    Ok(ParameterCascade {
        alpha,
        q,
        gamma,
        c_star: config.c_star,
        inv_eps,
        a,
        inv_tau,
        inv_tau_pp,
        interval_violations: violations,
    })
}

/// Backward recursion of renormalized diffusivities from kappa_M up to
/// kappa_0; `kappas[m]` holds the level-m value.
pub fn renormalized_diffusivities(
    cascade: &ParameterCascade,
    kappa_m: f64,
) -> Result<Vec<f64>> {
    let m_max = cascade.depth();
    let (lo, hi) = cascade.band(m_max);
    if !(kappa_m >= lo && kappa_m <= hi) {
        return Err(Error::OutsideBand { kappa: kappa_m, level: m_max, lo, hi });
    }
    let mut kappas = vec![0.0; m_max + 1];
    kappas[m_max] = kappa_m;
    for m in (1..=m_max).rev() {
        let r = cascade.stream_amplitude(m) / kappas[m];
        kappas[m - 1] = kappas[m] * (1.0 + cascade.c_star * r * r);
    }
    Ok(kappas)
}

/// One row of the constraint report.
#[derive(Debug, Clone)]
pub struct ConstraintEntry {
    pub name: String,
    pub level: usize,
    /// Larger side of the separation, as a log10 when out of f64 range.
    pub lhs: f64,
    pub rhs: f64,
    /// lhs/rhs; the separation is deemed satisfied when ratio >= margin_min.
    pub ratio: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub margin_min: f64,
    pub entries: Vec<ConstraintEntry>,
}

impl ConstraintReport {
    pub fn all_satisfied(&self) -> bool {
        self.entries.iter().all(|e| e.satisfied)
    }

    pub fn min_ratio(&self) -> f64 {
        self.entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,level,lhs,rhs,ratio,satisfied\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.name, e.level, e.lhs, e.rhs, e.ratio, e.satisfied
            );
        }
        out
    }
}

pub const DEFAULT_MARGIN_MIN: f64 = 4.0;

/// Numeric margins of every scale-separation requirement; report-only.
pub fn validate_constraints(
    cascade: &ParameterCascade,
    kappas: &[f64],
    margin_min: f64,
) -> ConstraintReport {
    assert_eq!(kappas.len(), cascade.depth() + 1, "kappa sequence length mismatch");
    let mut entries = Vec::new();
    let mut push = |name: String, level: usize, ln_lhs: f64, ln_rhs: f64| {
        let ratio = (ln_lhs - ln_rhs).exp();
        entries.push(ConstraintEntry {
            name,
            level,
            lhs: ln_lhs.exp(),
            rhs: ln_rhs.exp(),
            ratio,
            satisfied: ratio >= margin_min,
        });
    };
    let alpha = cascade.alpha;
    let gamma = cascade.gamma;
    let q = cascade.q;
    for m in 1..=cascade.depth() {
        let ln_eps = -cascade.inv_eps[m].ln();
        let ln_eps_prev = -cascade.inv_eps[m - 1].ln();
        let ln_tau = -cascade.inv_tau[m - 1].ln();
        let ln_kappa = kappas[m].ln();
        let ln_a = cascade.a[m].ln();
        // homogenization-in-time window
        push(
            "tau_m >> eps_m^2/kappa_m".into(),
            m,
            ln_tau,
            2.0 * ln_eps - ln_kappa,
        );
        // space-scale separation
        push(
            "eps_{m-1} >> a_m eps_m^3/kappa_m".into(),
            m,
            ln_eps_prev,
            ln_a + 3.0 * ln_eps - ln_kappa,
        );
        // ordering of shear windows below anchor windows
        if m >= 1 && m - 1 < cascade.inv_tau_pp.len() {
            push(
                "tau''_{m-1} >> tau_m".into(),
                m,
                -cascade.inv_tau_pp[m - 1].ln(),
                ln_tau,
            );
        }
        // admissibility exponent window
        push(
            "eps_m^{(1-alpha)/q} >> eps_m^{1-alpha-gamma}".into(),
            m,
            ln_eps * (1.0 - alpha) / q,
            ln_eps * (1.0 - alpha - gamma),
        );
    }
    for m in 0..cascade.inv_tau_pp.len() {
        // flow maps stay near identity on their window
        push(
            "1 >> tau''_m a_m".into(),
            m,
            0.0,
            cascade.a[m].ln() - cascade.inv_tau_pp[m].ln(),
        );
    }
    ConstraintReport { margin_min, entries }
}

/// The unique level whose permissible band contains kappa, if any. When
/// neighboring bands overlap (possible at desk scale), the level with the
/// nearest band center wins.
pub fn permissible_index(kappa: f64, cascade: &ParameterCascade) -> Option<usize> {
    assert!(kappa > 0.0);
    let mut best: Option<(usize, f64)> = None;
    for m in 0..=cascade.depth() {
        let (lo, hi) = cascade.band(m);
        if kappa >= lo && kappa <= hi {
            let d = (kappa / cascade.kappa_center(m)).ln().abs();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((m, d));
            }
        }
    }
    best.map(|(m, _)| m)
}

/// Smallest m >= 1 with radius >= eps_m^{1 + gamma/2}.
pub fn m_star(analyticity_radius: f64, cascade: &ParameterCascade) -> Result<usize> {
    assert!(
        analyticity_radius > 0.0 && analyticity_radius <= 1.0,
        "radius must lie in (0, 1]"
    );
    let e = 1.0 + cascade.gamma / 2.0;
    for m in 1..=cascade.depth() {
        if analyticity_radius >= cascade.inv_eps[m].powf(-e) {
            return Ok(m);
        }
    }
    Err(Error::RadiusTooSmall { radius: analyticity_radius, depth: cascade.depth() })
}

/// Named desk-scale configurations. Grids stay at or below 1024^2.
///
/// The published interval arithmetic leaves no admissible integer time
/// scales for smaller lambda at these (alpha, q); the shipped values are the
/// smallest that build strictly.
pub fn preset_config(name: &str) -> Option<CascadeConfig> {
    let cfg = match name {
        "desk-m1" => CascadeConfig::unchecked(0.25, 1.1, 16, 1),
        "desk-m2" => CascadeConfig::unchecked(0.2, 1.4, 31, 2),
        "desk-m3" => CascadeConfig::unchecked(0.2, 1.25, 22, 3),
        _ => return None,
    };
    Some(cfg)
}

pub fn preset_names() -> &'static [&'static str] {
    &["desk-m1", "desk-m2", "desk-m3"]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(name: &str) -> ParameterCascade {
        build_cascade(&preset_config(name).unwrap()).unwrap()
    }

    #[test]
    fn gamma_formula() {
        let cfg = CascadeConfig::new(0.25, 1.1, 16, 3).unwrap();
        assert!((cfg.gamma() - 0.1 * 1.25 / 2.1).abs() < 1e-15);
    }

    #[test]
    fn base_amplitude() {
        // a_1 = eps_1^{alpha-1} = 16^{3/4} = 8 for alpha = 1/4
        let c = desk("desk-m1");
        assert!((c.a[1] - 8.0).abs() < 1e-12);
        assert_eq!(c.inv_eps[0], 1.0);
        assert_eq!(c.a[0], 1.0);
    }

    #[test]
    fn presets_build_strictly_with_integer_scales() {
        for name in preset_names() {
            preset_config(name).unwrap().validate().unwrap();
            let c = desk(name);
            assert!(c.interval_violations.is_empty());
            for m in 1..=c.depth() {
                assert!(c.inv_eps[m].fract() == 0.0);
                assert!(c.inv_tau[m - 1].fract() == 0.0);
                // strict ordering of the admissible windows
                assert!(c.inv_tau[m - 1] > c.a[m - 1]);
                assert!(c.inv_tau[m - 1] < c.inv_eps[m].powf(1.0 - c.alpha - c.gamma));
            }
            for m in 0..c.inv_tau_pp.len() {
                assert!(c.inv_tau_pp[m].fract() == 0.0);
                assert!(c.inv_tau_pp[m] > c.a[m]);
                assert!(c.inv_tau_pp[m] < c.inv_tau[m]);
            }
            // eps strictly decreasing, a strictly increasing
            for m in 1..=c.depth() {
                assert!(c.inv_eps[m] > c.inv_eps[m - 1]);
                assert!(c.a[m] > c.a[m - 1]);
            }
        }
    }

    #[test]
    fn spec_lambda_for_m2_has_empty_interval() {
        // (alpha, q) = (0.25, 1.1) at lambda = 16 leaves (8, 8.18) for 1/tau_2
        let cfg = CascadeConfig::unchecked(0.25, 1.1, 16, 2);
        match build_cascade(&cfg) {
            Err(Error::EmptyInterval { name, level: 2, lo, hi }) => {
                assert_eq!(name, "1/tau");
                assert!((lo - 8.0).abs() < 1e-12);
                assert!(hi < 8.2 && hi > 8.1);
            }
            other => panic!("expected empty tau interval, got {other:?}"),
        }
    }

    #[test]
    fn recursion_direct_evaluation() {
        // kappa = 1e-3, a eps^2 = 2e-3, c* = 1/8 -> 1.5e-3
        let r: f64 = 2e-3 / 1e-3;
        let next = 1e-3 * (1.0 + 0.125 * r * r);
        assert!((next - 1.5e-3).abs() < 1e-18);
        // zero amplitude leaves kappa unchanged
        let r0: f64 = 0.0;
        assert_eq!(1e-3 * (1.0 + 0.125 * r0 * r0), 1e-3);
    }

    #[test]
    fn recursion_monotone_and_in_band_above_base() {
        let cfg = CascadeConfig::new(0.25, 1.1, 64, 8).unwrap().with_c_star(1.0);
        let c = build_cascade_with(&cfg, IntervalPolicy::Nearest).unwrap();
        let k = renormalized_diffusivities(&c, c.kappa_center(8)).unwrap();
        for m in 1..=8 {
            assert!(k[m - 1] > k[m], "monotone breach at {m}");
            // exact ratio identity
            let r = c.stream_amplitude(m) / k[m];
            let ratio = k[m - 1] / k[m];
            assert!((ratio - (1.0 + c.c_star * r * r)).abs() < 1e-12);
        }
        for m in 1..=8 {
            let (lo, hi) = c.band(m);
            assert!(k[m] >= lo && k[m] <= hi, "level {m}: {} not in [{lo}, {hi}]", k[m]);
        }
    }

    #[test]
    fn rejects_kappa_outside_band() {
        let c = desk("desk-m2");
        let (lo, _) = c.band(2);
        assert!(matches!(
            renormalized_diffusivities(&c, lo * 0.49),
            Err(Error::OutsideBand { .. })
        ));
    }

    #[test]
    fn permissible_bands() {
        let c = desk("desk-m2");
        let center = c.kappa_center(2);
        assert_eq!(permissible_index(center, &c), Some(2));
        assert_eq!(permissible_index(0.5 * c.kappa_center(1), &c), Some(1));
        // far outside every band
        assert_eq!(permissible_index(3.0 * c.kappa_center(0), &c), None);
    }

    #[test]
    fn m_star_boundaries() {
        let c = desk("desk-m3");
        assert_eq!(m_star(1.0, &c).unwrap(), 1);
        let e = 1.0 + c.gamma / 2.0;
        let r2 = c.eps(2).powf(e);
        assert_eq!(m_star(r2, &c).unwrap(), 2);
        let too_small = c.eps(3).powf(e) / 2.0;
        assert!(matches!(m_star(too_small, &c), Err(Error::RadiusTooSmall { .. })));
    }

    #[test]
    fn constraint_report_margins_at_least_one_for_relaxed_m2() {
        // (0.25, 1.1, 64, M=2): every separation holds with ratio >= 1 under
        // Nearest policy (the tau'' window at level 1 is empty by a hair).
        // c_star = 1 keeps the recursion at the band centers, which is what
        // the homogenization-time margin at level 1 needs.
        let cfg = CascadeConfig::new(0.25, 1.1, 64, 2).unwrap().with_c_star(1.0);
        let c = build_cascade_with(&cfg, IntervalPolicy::Nearest).unwrap();
        let k = renormalized_diffusivities(&c, c.kappa_center(2)).unwrap();
        let rep = validate_constraints(&c, &k, DEFAULT_MARGIN_MIN);
        assert!(rep.min_ratio() >= 1.0, "min ratio {}", rep.min_ratio());
    }

    #[test]
    fn constraint_report_flags_super_onsager_alpha() {
        // alpha = 0.40 with q = 1.1 violates alpha < 1/(2q+1); the exponent
        // window margin must dip below 1 at deep levels
        let cfg = CascadeConfig::unchecked(0.40, 1.1, 16, 6);
        let c = build_cascade_with(&cfg, IntervalPolicy::Nearest).unwrap();
        assert!(!c.interval_violations.is_empty());
        let k = renormalized_diffusivities(&c, c.kappa_center(6)).unwrap();
        let rep = validate_constraints(&c, &k, DEFAULT_MARGIN_MIN);
        let exp_window: Vec<&ConstraintEntry> = rep
            .entries
            .iter()
            .filter(|e| e.name.contains("(1-alpha)/q"))
            .collect();
        assert!(exp_window.iter().any(|e| e.ratio < 1.0));
    }

    #[test]
    fn empty_report_for_depth_zero_is_vacuous() {
        // a cascade truncated to its base level yields no constraint rows
        let c = ParameterCascade {
            alpha: 0.25,
            q: 1.1,
            gamma: 0.05952380952380958,
            c_star: 0.125,
            inv_eps: vec![1.0],
            a: vec![1.0],
            inv_tau: vec![],
            inv_tau_pp: vec![],
            interval_violations: vec![],
        };
        let rep = validate_constraints(&c, &[1.0], DEFAULT_MARGIN_MIN);
        assert!(rep.entries.is_empty());
        assert!(rep.all_satisfied());
    }

    #[test]
    fn deterministic_rebuild() {
        let cfg = preset_config("desk-m3").unwrap();
        let a = build_cascade(&cfg).unwrap();
        let b = build_cascade(&cfg).unwrap();
        assert_eq!(a.inv_eps, b.inv_eps);
        assert_eq!(a.inv_tau, b.inv_tau);
        assert_eq!(a.inv_tau_pp, b.inv_tau_pp);
        assert_eq!(a.to_csv(None), b.to_csv(None));
    }

    #[test]
    fn csv_layout() {
        let c = desk("desk-m2");
        let k = renormalized_diffusivities(&c, c.kappa_center(2)).unwrap();
        let csv = c.to_csv(Some(&k));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "m,inv_eps,a,inv_tau,inv_tau_pp,kappa");
        let row0 = lines.next().unwrap();
        assert!(row0.starts_with("0,1,1,,2,"));
        let row1 = lines.next().unwrap();
        assert!(row1.starts_with("1,31,"));
    }
}
