#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]
//! Strain localization in elastoplastic solids by direct energy minimization
//! over a neural approximation space with an embedded, trainable band.

pub mod autodiff;
pub mod config;
pub mod driver;
pub mod energy;
pub mod error;
pub mod fields;
pub mod kernels;
pub mod material;
pub mod optim;
pub mod oracle;
pub mod report;
pub mod sweep;

pub use autodiff::{ExprGraph, GradientBundle, NodeId};
pub use config::{load_config, parse_config, ProblemKind, RunConfig};
pub use driver::{LoadProgram, Problem, ProgramOutcome, Protocol, StepReport};
pub use energy::{AreaProfile, CollocationSet, EnergyBreakdown, PlasticNorm, Quadrature};
pub use error::{Error, Result};
pub use fields::{BandGeometry, FieldModel, RegularField1D, RegularField2D};
pub use kernels::{Evaluator, LossTerms};
pub use material::{MaterialSpec, Tensor2, YieldProfile};
