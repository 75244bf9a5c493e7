//! Design of channel-estimation preambles under an out-of-band emission
//! budget, with the estimators and link simulation used to evaluate them.
//!
//! Numeric modules are generic over [`Real`] (`f32`/`f64`); the aliases
//! below pin them to `f64`, which is what the scenario runner and CLI use.

// `!(x > 0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod scalar;
pub mod channel;
pub mod design;
pub mod estimation;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::{db_to_lin, lin_to_db, Cplx, Real};
pub use channel::{ChannelModel, ChannelRealization, MimoObservation, MonteCarlo};
pub use design::{DesignContext, DesignProblem, DesignSolution, Mask, Mode};
pub use estimation::{EstimationReport, Estimator, ToneGrid};
pub use spectral::{FrameConfig, PinchWindow, SpectrumOperator};

pub type SpectrumOperatorF64 = SpectrumOperator<f64>;
pub type DesignProblemF64 = DesignProblem<f64>;
pub type DesignSolutionF64 = DesignSolution<f64>;
pub type DesignContextF64 = DesignContext<f64>;
pub type ToneGridF64 = ToneGrid<f64>;
pub type ChannelRealizationF64 = ChannelRealization<f64>;
