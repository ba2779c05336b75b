use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "no admissible integer for {name} at level {level}: interval ({lo}, {hi}) contains none \
         (lambda too small for this (alpha, q))"
    )]
    EmptyInterval {
        name: &'static str,
        level: usize,
        lo: f64,
        hi: f64,
    },

    #[error("diffusivity {kappa} outside the permissible band [{lo}, {hi}] for level {level}")]
    OutsideBand {
        kappa: f64,
        level: usize,
        lo: f64,
        hi: f64,
    },

    #[error("analyticity radius {radius} requires level beyond cascade depth {depth}")]
    RadiusTooSmall { radius: f64, depth: usize },

    #[error("grid size {n} under-resolves the finest scale 1/{inv_eps}: need n >= {min_n}")]
    GridTooCoarse { n: usize, inv_eps: f64, min_n: usize },

    #[error("flow map invariant breach at level {level}, anchor {anchor}: {what} = {value:.3e} exceeds {tol:.3e} (worst node {node:?})")]
    FlowMapBreach {
        level: usize,
        anchor: i64,
        what: &'static str,
        value: f64,
        tol: f64,
        node: (usize, usize),
    },

    #[error("CFL step underflow at t = {t}: dt = {dt:.3e}")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("energy balance residual {residual:.3e} exceeds {tol:.3e} at step {step}")]
    EnergyBalance { residual: f64, tol: f64, step: usize },

    #[error("cell problem iteration did not converge: contraction estimate a*eps^2/kappa = {peclet:.3e}, residual {residual:.3e} after {iters} iterations")]
    CellNoConvergence {
        peclet: f64,
        residual: f64,
        iters: usize,
    },

    #[error("zero input field")]
    ZeroField,

    #[error("level {level} outside hierarchy depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
