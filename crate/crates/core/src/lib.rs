//! Sparse precision-matrix estimation by the graphical lasso (Glasso) with
//! robust covariance plug-ins, together with the robustness diagnostics used
//! to compare them: influence functions, worst-case contamination directions,
//! sensitivity curves and asymptotic variances.
//!
//! The reference distribution throughout is a zero-mean multivariate normal
//! [`GaussianModel`]. Every scatter functional ([`PluginKind`]) can be
//! evaluated at the model, at a point-mass contaminated mixture, or on a data
//! matrix.

pub mod asv;
pub mod contamination;
pub mod error;
pub mod glasso;
pub mod influence;
pub mod linalg;
pub mod model;
pub mod plugins;
pub mod sensitivity;

pub use error::{Error, Result};
pub use contamination::{contaminated_plugin_cov, plugin_if, PluginIF};
pub use glasso::{glasso_solve, kkt_residual, support_permutation, PenaltySpec, PrecisionEstimate, SupportPermutation};
pub use influence::{glasso_if, InfluenceEvaluation};
pub use model::{ContaminationPoint, GaussianModel, QuadratureRule, QuadratureSpec};
pub use plugins::{CorrelationKind, CorrelationValue, McdOptions, PluginKind};
pub use sensitivity::{sc_surface, SCExperiment};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

