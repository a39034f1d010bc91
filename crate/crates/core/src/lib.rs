//! D-optimal experimental design for generalized linear models and for
//! random-intercept mixed models with blocks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod design;
pub mod error;
pub mod glm;
pub mod glmm;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod minimize;
pub mod optimize;
pub mod priors;
pub mod region;
pub mod rng;

pub use design::{ContinuousDesign, Criterion, EquivalenceReport, ExactDesign, GlmCriterion, InformationMatrix};
pub use error::{Error, Result};
pub use glm::{Family, FamilyKind, Link, ModelBasis, ModelSpec, ParameterVector, Term};
pub use grid::GridSpec;
pub use region::DesignRegion;
