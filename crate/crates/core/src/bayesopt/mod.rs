//! Bayesian optimization: GP surrogate, expected improvement, the tuning
//! loop, and elementary-effects screening.

pub mod acquisition;
pub mod gp;
pub mod optimizer;
pub mod screening;
pub mod space;

pub use acquisition::{expected_improvement, propose_next, AcquisitionSettings, Proposal};
pub use gp::{matern52, FitSettings, GpModel, Hypers};
pub use optimizer::{optimize, Aborted, BoConfig, IterationRecord, Observation, OptResult, PointSource};
pub use screening::{elementary_effects, EffectSummary, MorrisConfig};
pub use space::{ParamDim, ParamKind, ParamSpace};
