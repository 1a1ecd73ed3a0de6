//! Structured stability radius of interconnected linear time-invariant
//! systems under block-diagonal-masked coupling perturbations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod generate;
mod golden;
pub mod interconnect;
pub mod linalg;
pub mod radius;
pub mod system;
pub mod verify;
pub mod worstcase;

pub use error::{Error, Result};
pub use interconnect::{BlockPerturbation, CompositeSystem, InterconnectionMatrix, ValidationReport};
pub use linalg::{DenseMatrix, C64};
pub use radius::{stability_radius, RadiusReport, StabilityRadius, SweepOptions};
pub use system::{HinfNorm, StateSpaceBlock};
pub use verify::NormKind;
pub use worstcase::{construct_delta, WorstCaseCertificate};
