//! Fixed-effects regression with cluster-robust inference.
//!
//! A [`Frame`] holds named columns, a [`ModelSpec`] names the outcome,
//! regressor terms, absorbed groups and clusters, and [`fit_model`] returns
//! coefficients with CR1 standard errors and t(G−1) p-values.

mod design;
mod fit;
mod frame;
mod ols;
mod report;
mod specs;
mod vcov;

use thiserror::Error;

pub use design::{build_design, Condition, Design, Factor, ModelSpec, Term, INTERCEPT};
pub use fit::{fit_design, fit_model, stars, t_critical, two_sided_p, Coefficient, FitResult};
pub use frame::{Column, Frame};
pub use ols::{ols_fit, within_transform, OlsFit, PivotedQr};
pub use report::{
    binned_effects, decomposition, render_binned, render_decomposition, render_table, results_csv,
    BinRow, BinnedEffects, BinnedSpec, Decomposition, DecompositionRow,
};
pub use specs::{builtin, builtin_names, display_label, BuiltinTable, BASE_REGRESSORS};
pub use vcov::{cluster_meat, cluster_vcov, hc1, sandwich};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("no observations left after subsetting and dropping missing values")]
    EmptyDesign,
    #[error("regressors are collinear: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("cluster-robust inference needs at least 2 clusters, found {clusters}")]
    TooFewClusters { clusters: usize },
    #[error("{parameters} parameters leave no residual degrees of freedom with {n_obs} observations")]
    NoResidualDof { n_obs: usize, parameters: usize },
    #[error("{0}")]
    Io(String),
}
