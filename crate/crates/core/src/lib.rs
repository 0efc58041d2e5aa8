//! Reduced-order models with statistical error correction.
//!
//! The pipeline: parameterized full-order problems ([`problems`]), POD trial
//! and out-of-plane subspaces ([`subspaces`]), Galerkin/LSPG reduced solves
//! ([`rom`]), reduced dual solutions producing error indicators ([`duals`]),
//! Gaussian-process regression from indicators to error coordinates
//! ([`gpr`]), and the offline/online ROMES driver ([`romes`]).
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

pub mod duals;
pub mod error;
pub mod gpr;
pub mod io;
pub mod linalg;
mod newton;
pub mod problems;
pub mod rom;
pub mod romes;
pub mod scalar;
pub mod subspaces;

pub use error::{Result, RomError};
pub use scalar::Real;

pub type ParameterBox64 = problems::ParameterBox<f64>;
pub type ParameterVector64 = problems::ParameterVector<f64>;
pub type QoiFunctional64 = problems::QoiFunctional<f64>;
pub type Metric64 = subspaces::Metric<f64>;
pub type SubspaceSet64 = subspaces::SubspaceSet<f64>;
pub type RomSolution64 = rom::RomSolution<f64>;
pub type DualBasis64 = duals::DualBasis<f64>;
pub type GpErrorModel64 = gpr::GpErrorModel<f64>;
pub type GpHyperparameters64 = gpr::GpHyperparameters<f64>;
pub type OfflinePackage64 = romes::OfflinePackage<f64>;
pub type OnlinePrediction64 = romes::OnlinePrediction<f64>;
pub type ErrorMetrics64 = romes::ErrorMetrics<f64>;
