//! Run configuration: TOML file format, presets, validation.

use eddylab::params::{
    self, build_cascade, renormalized_diffusivities, validate_constraints, CascadeConfig,
    ParameterCascade,
};
use eddylab::pde::{Dealias, SolveConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Taylor,
    Cell,
    CascadeParams,
    FieldSnapshot,
    Simulate,
    Sweep,
    Twoscale,
    Sweeping,
    RhoChain,
    Selection,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Taylor => "taylor",
            Self::Cell => "cell",
            Self::CascadeParams => "cascade-params",
            Self::FieldSnapshot => "field-snapshot",
            Self::Simulate => "simulate",
            Self::Sweep => "sweep",
            Self::Twoscale => "twoscale",
            Self::Sweeping => "sweeping",
            Self::RhoChain => "rho-chain",
            Self::Selection => "selection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "taylor" => Self::Taylor,
            "cell" => Self::Cell,
            "cascade-params" => Self::CascadeParams,
            "field-snapshot" => Self::FieldSnapshot,
            "simulate" => Self::Simulate,
            "sweep" => Self::Sweep,
            "twoscale" => Self::Twoscale,
            "sweeping" => Self::Sweeping,
            "rho-chain" => Self::RhoChain,
            "selection" => Self::Selection,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    pub alpha: f64,
    pub q: f64,
    pub lambda: u32,
    pub levels: usize,
    #[serde(default)]
    pub c_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt_max: f64,
    pub cfl_number: f64,
    /// "two_thirds" or "none".
    pub dealias: String,
    pub record_stride: usize,
    pub balance_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            dt_max: d.dt_max,
            cfl_number: d.cfl_number,
            dealias: "two_thirds".into(),
            record_stride: d.record_stride,
            balance_tol: d.balance_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Emit field snapshots in the flat binary format.
    pub binary_fields: bool,
    /// Emit field CSV dumps (small grids only).
    pub field_csv: bool,
    pub svg_plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), binary_fields: true, field_csv: false, svg_plots: true }
    }
}

/// Experiment-specific knobs; unused entries are simply ignored by other
/// experiments but unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArgsSection {
    /// simulate / field-snapshot: hierarchy level.
    pub level: usize,
    /// simulate: diffusivity (defaults to the band center of `level`).
    pub kappa: Option<f64>,
    /// field-snapshot / twoscale: sample time.
    pub time: f64,
    /// solve horizon.
    pub horizon: f64,
    /// sweep / selection: explicit kappa list (defaults to band centers).
    pub kappas: Vec<f64>,
    /// rho-chain: mollification scale.
    pub lambda: f64,
    /// taylor / cell / twoscale: shear parameters.
    pub shear_a: f64,
    pub shear_eps: f64,
    pub cell_kappa: f64,
    pub cell_resolution: usize,
    /// twoscale: scale list for the error study.
    pub eps_list: Vec<f64>,
    /// twoscale: fixed Peclet number a eps^2 / kappa.
    pub peclet: f64,
    /// construction mode: "lagrangian" or "naive".
    pub mode: String,
}

impl Default for ArgsSection {
    fn default() -> Self {
        Self {
            level: usize::MAX,
            kappa: None,
            time: 0.25,
            horizon: 1.0,
            kappas: Vec::new(),
            lambda: 0.4,
            shear_a: 2.0,
            shear_eps: 0.25,
            cell_kappa: 0.05,
            cell_resolution: 64,
            eps_list: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            peclet: 2.0,
            mode: "lagrangian".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub grid_size: usize,
    pub cascade: CascadeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub args: ArgsSection,
}

impl RunConfig {
    /// Parses and fully validates a TOML document; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| format!("config parse: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.grid_size.is_power_of_two() {
            return Err(format!("grid_size = {} must be a power of two", self.grid_size));
        }
        let c = self.cascade_config();
        if let Err(e) = c.validate() {
            // embed the constraint report for inadmissible exponent windows
            let mut msg = format!("{e}");
            if let Ok(cascade) = params::build_cascade_with(&c, params::IntervalPolicy::Nearest) {
                if let Ok(k) =
                    renormalized_diffusivities(&cascade, cascade.kappa_center(cascade.depth()))
                {
                    let rep = validate_constraints(&cascade, &k, params::DEFAULT_MARGIN_MIN);
                    msg.push_str("\nconstraint report:\n");
                    msg.push_str(&rep.to_csv());
                }
            }
            return Err(msg);
        }
        match self.args.mode.as_str() {
            "lagrangian" | "naive" => {}
            other => return Err(format!("mode = {other:?} must be lagrangian or naive")),
        }
        match self.solver.dealias.as_str() {
            "two_thirds" | "none" => {}
            other => return Err(format!("dealias = {other:?} must be two_thirds or none")),
        }
        Ok(())
    }

    pub fn cascade_config(&self) -> CascadeConfig {
        let mut c = CascadeConfig::unchecked(
            self.cascade.alpha,
            self.cascade.q,
            self.cascade.lambda,
            self.cascade.levels,
        );
        if let Some(cs) = self.cascade.c_star {
            c = c.with_c_star(cs);
        }
        c
    }

    pub fn build_cascade(&self) -> Result<ParameterCascade, String> {
        build_cascade(&self.cascade_config()).map_err(|e| e.to_string())
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            dt_max: self.solver.dt_max,
            cfl_number: self.solver.cfl_number,
            dealias: if self.solver.dealias == "none" { Dealias::None } else { Dealias::TwoThirds },
            record_stride: self.solver.record_stride,
            balance_tol: self.solver.balance_tol,
        }
    }

    pub fn mode(&self) -> eddylab::hierarchy::ConstructionMode {
        if self.args.mode == "naive" {
            eddylab::hierarchy::ConstructionMode::Naive
        } else {
            eddylab::hierarchy::ConstructionMode::Lagrangian
        }
    }
}

/// Named desk-scale run configurations. Grid sizes follow the finest-scale
/// resolution rule on the shipped cascades.
pub fn preset(name: &str, experiment: ExperimentKind) -> Option<RunConfig> {
    let cc = params::preset_config(name)?;
    let grid_size = match name {
        "desk-m1" => 512,
        "desk-m2" | "desk-m3" => 1024,
        _ => return None,
    };
    Some(RunConfig {
        experiment,
        grid_size,
        cascade: CascadeSection {
            alpha: cc.alpha,
            q: cc.q,
            lambda: cc.lambda,
            levels: cc.levels,
            c_star: None,
        },
        solver: SolverSection { cfl_number: 0.85, ..Default::default() },
        output: OutputSection::default(),
        args: ArgsSection { level: cc.levels, ..Default::default() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let cfg = preset("desk-m2", ExperimentKind::Sweep).unwrap();
        let text = cfg.emit();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        // twice more through the emitter for byte identity
        assert_eq!(text, back.emit());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = preset("desk-m1", ExperimentKind::Taylor).unwrap().emit();
        text.push_str("\nunknown_key = 3\n");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn super_onsager_alpha_is_rejected_with_message() {
        let mut cfg = preset("desk-m1", ExperimentKind::Simulate).unwrap();
        cfg.cascade.alpha = 0.4;
        cfg.cascade.q = 1.1;
        let err = cfg.validate().unwrap_err();
        assert!(err.contains("alpha*(2q+1)"), "{err}");
        assert!(err.contains("constraint report"), "{err}");
    }

    #[test]
    fn empty_config_is_rejected() {
        assert!(RunConfig::parse("").is_err());
    }

    #[test]
    fn non_power_of_two_grid_rejected() {
        let mut cfg = preset("desk-m1", ExperimentKind::Simulate).unwrap();
        cfg.grid_size = 500;
        assert!(cfg.validate().is_err());
    }
}
