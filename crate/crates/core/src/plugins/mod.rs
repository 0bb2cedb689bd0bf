//! Scatter functionals and finite-sample scatter estimators that can be
//! plugged into the Glasso.
//!
//! Pairwise plug-ins assemble a covariance entrywise as
//! `T_jk = S(F_j) S(F_k) R~(F_jk)` from the Qn scale of each margin and a
//! Fisher-consistent robust correlation of each pair.

mod functional;
mod mcd;
mod sample;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GaussianModel;

pub use functional::{correlation_functional, qn_consistency, qn_scale_functional, BivariateLaw, MarginalLaw};
pub use mcd::{fast_mcd, McdFit, McdOptions};
pub use sample::{
    finite_sample_estimate, gauss_rank_correlation, kendall_correlation, psd_repair, qn_estimate, quadrant_correlation, ranks,
    spearman_correlation, PSD_FLOOR,
};

/// Robust correlation measures used by the pairwise plug-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    GaussRank,
    Spearman,
    Kendall,
    Quadrant,
}

impl CorrelationKind {
    pub const ALL: [CorrelationKind; 4] = [CorrelationKind::GaussRank, CorrelationKind::Spearman, CorrelationKind::Kendall, CorrelationKind::Quadrant];
}

/// Choice of scatter functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginKind {
    Classical,
    GaussRank,
    Spearman,
    Kendall,
    Quadrant,
    /// Finite-sample only; there is no functional path.
    FastMcd(McdOptions),
}

impl PluginKind {
    /// The five kinds with a functional (population) version.
    pub const FUNCTIONAL: [PluginKind; 5] = [PluginKind::Classical, PluginKind::GaussRank, PluginKind::Spearman, PluginKind::Kendall, PluginKind::Quadrant];

    pub fn correlation(&self) -> Option<CorrelationKind> {
        match self {
            PluginKind::GaussRank => Some(CorrelationKind::GaussRank),
            PluginKind::Spearman => Some(CorrelationKind::Spearman),
            PluginKind::Kendall => Some(CorrelationKind::Kendall),
            PluginKind::Quadrant => Some(CorrelationKind::Quadrant),
            _ => None,
        }
    }

    pub fn has_functional(&self) -> bool {
        !matches!(self, PluginKind::FastMcd(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            PluginKind::Classical => "classical",
            PluginKind::GaussRank => "gauss-rank",
            PluginKind::Spearman => "spearman",
            PluginKind::Kendall => "kendall",
            PluginKind::Quadrant => "quadrant",
            PluginKind::FastMcd(_) => "fast-mcd",
        }
    }
}

impl From<CorrelationKind> for PluginKind {
    fn from(kind: CorrelationKind) -> Self {
        match kind {
            CorrelationKind::GaussRank => PluginKind::GaussRank,
            CorrelationKind::Spearman => PluginKind::Spearman,
            CorrelationKind::Kendall => PluginKind::Kendall,
            CorrelationKind::Quadrant => PluginKind::Quadrant,
        }
    }
}

impl fmt::Display for PluginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PluginKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "classical" => Ok(PluginKind::Classical),
            "gauss-rank" | "gaussrank" | "gaussian-rank" => Ok(PluginKind::GaussRank),
            "spearman" => Ok(PluginKind::Spearman),
            "kendall" => Ok(PluginKind::Kendall),
            "quadrant" => Ok(PluginKind::Quadrant),
            "fast-mcd" | "fastmcd" | "mcd" => Ok(PluginKind::FastMcd(McdOptions::default())),
            other => Err(Error::domain(format!("unknown plug-in kind '{other}'"))),
        }
    }
}

/// Raw and Fisher-consistent values of a correlation functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationValue {
    pub kind: CorrelationKind,
    pub raw: f64,
    pub transformed: f64,
}

/// Map a raw correlation to its Fisher-consistent version at the normal
/// model. The Gaussian rank correlation needs no transformation.
pub fn fisher_transform(kind: CorrelationKind, r: f64) -> Result<f64> {
    if !(r.abs() <= 1.0) {
        return Err(Error::domain(format!("correlation {r} outside [-1, 1]")));
    }
    use std::f64::consts::PI;
    Ok(match kind {
        CorrelationKind::GaussRank => r,
        CorrelationKind::Spearman => 2.0 * (PI * r / 6.0).sin(),
        CorrelationKind::Kendall | CorrelationKind::Quadrant => (PI * r / 2.0).sin(),
    })
}

/// Classical covariance functional at the model, optionally contaminated
/// with mass `eps` at `z`: `(1 - eps) Sigma + eps (1 - eps) z z'`.
pub fn classical_cov(model: &GaussianModel, contamination: Option<(f64, &DVector<f64>)>) -> DMatrix<f64> {
    match contamination {
        None => model.sigma().clone(),
        Some((eps, z)) => model.sigma() * (1.0 - eps) + z * z.transpose() * (eps * (1.0 - eps)),
    }
}

/// Pairwise covariance functional of `kind` at the model, optionally at the
/// contaminated mixture `(1 - eps) F + eps Delta(z)`.
pub fn pairwise_cov_mixture(kind: CorrelationKind, model: &GaussianModel, contamination: Option<(f64, &DVector<f64>)>) -> Result<DMatrix<f64>> {
    let p = model.dim();
    if let Some((eps, z)) = contamination {
        if z.len() != p {
            return Err(Error::domain(format!("contamination point has length {}, expected {p}", z.len())));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::domain(format!("contamination mass {eps} outside [0, 1)")));
        }
    }
    let atom = |j: usize| contamination.map(|(eps, z)| (eps, z[j]));
    let scales: Vec<f64> = (0..p)
        .map(|j| qn_scale_functional(&MarginalLaw { sigma: model.std_dev(j), atom: atom(j) }))
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|k| (0..k).map(move |j| (j, k))).collect();
    let corr: Vec<f64> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let law = BivariateLaw {
                sigma: [model.std_dev(j), model.std_dev(k)],
                rho: model.correlation(j, k),
                atom: contamination.map(|(eps, z)| (eps, [z[j], z[k]])),
            };
            correlation_functional(kind, &law).map(|v| v.transformed)
        })
        .collect::<Result<_>>()?;

    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        out[(j, j)] = scales[j] * scales[j];
    }
    for (&(j, k), r) in pairs.iter().zip(corr) {
        let v = scales[j] * scales[k] * r;
        out[(j, k)] = v;
        out[(k, j)] = v;
    }
    Ok(out)
}

/// Pairwise covariance functional at the clean model.
pub fn pairwise_cov(kind: CorrelationKind, model: &GaussianModel) -> Result<DMatrix<f64>> {
    pairwise_cov_mixture(kind, model, None)
}

/// Plug-in covariance functional of any kind with a functional version.
pub fn plugin_cov(kind: &PluginKind, model: &GaussianModel) -> Result<DMatrix<f64>> {
    match kind {
        PluginKind::Classical => Ok(classical_cov(model, None)),
        PluginKind::FastMcd(_) => Err(Error::domain("FastMCD has no functional version")),
        other => pairwise_cov(other.correlation().expect("pairwise kind"), model),
    }
}
