use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::design::{build_design, Design, ModelSpec};
use super::frame::Frame;
use super::ols::{ols_fit, within_transform};
use super::vcov::cluster_vcov;
use super::EconError;

/// Significance marker: `***` below 0.01, `**` below 0.05, `*` below 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

impl Coefficient {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub label: String,
    pub outcome: String,
    pub coefficients: Vec<Coefficient>,
    /// Row-major cluster-robust covariance of the coefficients.
    pub vcov: Vec<Vec<f64>>,
    pub n_obs: usize,
    /// Distinct fixed-effect groups among the used rows.
    pub n_groups: usize,
    pub n_clusters: usize,
    pub fixed_effects: bool,
    /// Residual degrees of freedom, `N − groups − k` with fixed effects.
    pub dof: usize,
    /// Degrees of freedom of the reference t distribution, `G − 1`.
    pub t_dof: usize,
    pub correction: String,
    pub mean_outcome: f64,
    pub dropped_missing: usize,
    pub dropped_subset: usize,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.coefficients.iter().map(|c| c.name.as_str()).collect()
    }
}

/// Two-sided p-value against a t distribution with `dof` degrees of freedom.
pub fn two_sided_p(t: f64, dof: usize) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Upper `1 − alpha/2` quantile of the t distribution.
pub fn t_critical(alpha: f64, dof: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof");
    dist.inverse_cdf(1.0 - alpha / 2.0)
}

/// Estimates `spec` by within-group OLS (or pooled OLS with an intercept)
/// with CR1 cluster-robust standard errors.
pub fn fit_model(frame: &Frame, spec: &ModelSpec) -> Result<FitResult, EconError> {
    let design = build_design(frame, spec)?;
    fit_design(&design, spec)
}

pub fn fit_design(design: &Design, spec: &ModelSpec) -> Result<FitResult, EconError> {
    if design.n_clusters < 2 {
        return Err(EconError::TooFewClusters {
            clusters: design.n_clusters,
        });
    }
    let (y, x, absorbed) = if spec.fixed_effects {
        let (y, x) = within_transform(&design.y, &design.x, &design.groups, design.n_groups);
        (y, x, design.n_groups)
    } else {
        (design.y.clone(), design.x.clone(), 0)
    };
    let ols = ols_fit(&y, &x, &design.names, absorbed)?;
    let parameters = absorbed + x.ncols();
    let v = cluster_vcov(&x, &ols.residuals, &ols.xtx_inv, &design.clusters, design.n_clusters, parameters);
    let t_dof = design.n_clusters - 1;
    let coefficients = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = ols.beta[j];
            let std_error = v[(j, j)].max(0.0).sqrt();
            let t_stat = if std_error == 0.0 {
                if estimate == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(estimate)
                }
            } else {
                estimate / std_error
            };
            Coefficient {
                name: name.clone(),
                estimate,
                std_error,
                t_stat,
                p_value: two_sided_p(t_stat, t_dof),
            }
        })
        .collect();
    let k = x.ncols();
    Ok(FitResult {
        label: spec.heading().to_string(),
        outcome: spec.outcome.clone(),
        coefficients,
        vcov: (0..k).map(|i| (0..k).map(|j| v[(i, j)]).collect()).collect(),
        n_obs: design.n_obs(),
        n_groups: design.n_groups,
        n_clusters: design.n_clusters,
        fixed_effects: spec.fixed_effects,
        dof: ols.dof,
        t_dof,
        correction: format!(
            "CR1 clustered by {} (G = {}), t({}) reference",
            spec.cluster, design.n_clusters, t_dof
        ),
        mean_outcome: mean(&design.y),
        dropped_missing: design.dropped_missing,
        dropped_subset: design.dropped_subset,
    })
}

fn mean(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.sum() / v.len() as f64
    }
}
