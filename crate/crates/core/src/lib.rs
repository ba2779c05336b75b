//! A spectral laboratory for passive-scalar transport on the periodic 2-torus.

pub mod cutoff;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod flow;
pub mod hierarchy;
pub mod params;
pub mod report;
pub mod shear;
pub(crate) mod trig;
pub mod homog;
pub mod pde;

pub use cutoff::{CutoffKind, TimeCutoff};
pub use error::{Error, Result};
pub use field::{ScalarField, SpectralField, VectorField};
pub use flow::FlowMapGrid;
pub use hierarchy::{ConstructionMode, StreamHierarchy};
pub use params::{CascadeConfig, ConstraintReport, ParameterCascade};
pub use pde::{DissipationTrace, SolveConfig};
pub use shear::ShearWave;
