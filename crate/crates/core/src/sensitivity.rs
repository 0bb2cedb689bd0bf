//! Sensitivity curves `SC_n(z) = n (Omega(X_z) - Omega(X_{n-1}))`, where
//! `X_{n-1}` is a clean sample and `X_z` appends the point `z` to it,
//! averaged over independent replications.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glasso::{glasso_solve, PenaltySpec};
use crate::model::GaussianModel;
use crate::plugins::{finite_sample_estimate, PluginKind};

/// Largest fraction of replications that may be dropped.
pub const MAX_DROPPED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SCExperiment {
    pub model: GaussianModel,
    pub kind: PluginKind,
    pub penalty: PenaltySpec,
    /// Sample size including the added point.
    pub n: usize,
    pub replications: usize,
    pub grid: Vec<DVector<f64>>,
    pub seed: u64,
}

impl SCExperiment {
    pub fn validate(&self) -> Result<()> {
        let p = self.model.dim();
        if self.n < 4 {
            return Err(Error::domain(format!("sample size {} below 4", self.n)));
        }
        if matches!(self.kind, PluginKind::FastMcd(_)) && self.n <= 2 * p {
            return Err(Error::domain(format!("FastMCD needs n > 2p, got n = {}", self.n)));
        }
        if self.replications < 1 {
            return Err(Error::domain("at least one replication is required"));
        }
        if self.grid.is_empty() {
            return Err(Error::domain("empty contamination grid"));
        }
        if self.grid.iter().any(|z| z.len() != p || z.iter().any(|v| !v.is_finite())) {
            return Err(Error::domain("grid points must be finite vectors of the model dimension"));
        }
        self.penalty.validate()
    }

    /// FastMCD sensitivity curves are approximate and reported as such.
    pub fn is_experimental(&self) -> bool {
        matches!(self.kind, PluginKind::FastMcd(_))
    }

    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: usize) -> u64 {
        // splitmix64 increment keeps streams of nearby seeds apart
        self.seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScPoint {
    pub z: DVector<f64>,
    /// Mean sensitivity-curve matrix over the kept replications.
    pub mean: DMatrix<f64>,
    pub norm: f64,
    /// Standard error of `norm`, from the replication values projected on
    /// the direction of the mean.
    pub norm_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScSurface {
    pub points: Vec<ScPoint>,
    pub used: usize,
    pub dropped: usize,
    pub experimental: bool,
}

fn replication(exp: &SCExperiment, r: usize) -> Result<Vec<DMatrix<f64>>> {
    let clean = exp.model.sample(exp.n - 1, exp.replication_seed(r))?;
    let base = glasso_solve(&finite_sample_estimate(&exp.kind, &clean)?, &exp.penalty)?;
    let p = exp.model.dim();
    let mut extended = clean.insert_row(exp.n - 1, 0.0);
    let scale = exp.n as f64;
    exp.grid
        .iter()
        .map(|z| {
            for j in 0..p {
                extended[(exp.n - 1, j)] = z[j];
            }
            let est = glasso_solve(&finite_sample_estimate(&exp.kind, &extended)?, &exp.penalty)?;
            Ok((est.omega - &base.omega) * scale)
        })
        .collect()
}

/// Mean sensitivity curve over the grid. Replications whose estimator or
/// solver fails are dropped; more than 10% dropped is an error.
pub fn sc_surface(exp: &SCExperiment) -> Result<ScSurface> {
    exp.validate()?;
    let runs: Vec<Option<Vec<DMatrix<f64>>>> = (0..exp.replications).into_par_iter().map(|r| replication(exp, r).ok()).collect();
    let kept: Vec<&Vec<DMatrix<f64>>> = runs.iter().flatten().collect();
    let dropped = exp.replications - kept.len();
    if dropped as f64 > MAX_DROPPED_FRACTION * exp.replications as f64 || kept.is_empty() {
        return Err(Error::numerical(format!("{dropped} of {} replications failed", exp.replications)));
    }
    let p = exp.model.dim();
    let m = kept.len() as f64;
    let points = exp
        .grid
        .iter()
        .enumerate()
        .map(|(g, z)| {
            // sum in replication order so results do not depend on scheduling
            let mut mean = DMatrix::zeros(p, p);
            for run in &kept {
                mean += &run[g];
            }
            mean /= m;
            let norm = mean.norm();
            let norm_stderr = if kept.len() > 1 && norm > 0.0 {
                let u: Vec<f64> = kept.iter().map(|run| run[g].dot(&mean) / norm).collect();
                let mu = u.iter().sum::<f64>() / m;
                let var = u.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            } else {
                0.0
            };
            ScPoint { z: z.clone(), mean, norm, norm_stderr }
        })
        .collect();
    Ok(ScSurface { points, used: kept.len(), dropped, experimental: exp.is_experimental() })
}
