//! Numerical laboratory for recovering stochastic Airy parameters from edge
//! spectra.
//!
//! The crate is organized by role:
//!
//! * [`ensembles`] samples beta-Hermite and spiked Wishart/Gaussian spectra
//!   and maps them to edge coordinates.
//! * [`sao_operator`] discretizes the scalar, multivariate and generalized
//!   stochastic Airy operators and extracts their low spectrum.
//! * [`estimators`] holds exponential traces, the recovery functional `T`,
//!   the rigidity count and the energy-based inverse-temperature estimator.
//! * [`bridge_mc`] simulates Brownian and reflected bridges together with
//!   their local-time functionals.
//! * [`feynman_kac`] implements matchings, jump paths, combinatorial
//!   constants and the path-integral Monte Carlo of the expected trace.
//!
//! All randomness flows from explicit `u64` seeds (see [`seed`]), so every
//! result is reproducible.

pub mod bridge_mc;
pub mod ensembles;
pub mod error;
pub mod estimators;
pub mod feynman_kac;
pub mod linalg;
pub mod sao_operator;
pub mod seed;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{EstimatorSettings, PointConfiguration, TraceCurve};
pub use ensembles::{FieldTag, SpectrumSample, SpikeVector, SpikedKind, SpikedModelSpec};
pub use sao_operator::{DiscretizedOperator, GeneralizedParams, GridSpec, SaoParams};
pub use bridge_mc::{BridgePath, LocalTimeField};
pub use feynman_kac::{JumpPath, Matching};
