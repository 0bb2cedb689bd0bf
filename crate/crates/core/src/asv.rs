//! Asymptotic variances `E[vec(IF) vec(IF)']` of plug-in and Glasso
//! functionals, and relative efficiencies against the classical plug-in.
//!
//! These assume the estimators are asymptotically linear with the given
//! influence functions; the outputs carry that assumption as a flag.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contamination::{plugin_if_flagged, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::glasso::{glasso_solve, support_permutation, PenaltySpec, SupportPermutation, SUPPORT_TOL};
use crate::influence::GlassoInfluence;
use crate::linalg::{symmetrize, vec_of};
use crate::model::{GaussianModel, QuadratureSpec};
use crate::plugins::{plugin_cov, PluginKind};

/// Gauss-Hermite order per axis for smooth influence functions.
pub const DEFAULT_ORDER: usize = 24;
/// Monte Carlo sample size for the discontinuous quadrant influence function.
pub const DEFAULT_MC_SAMPLES: usize = 200_000;

/// Default integration rule for `kind`.
pub fn default_quadrature(kind: &PluginKind, seed: u64) -> Result<QuadratureSpec> {
    match kind {
        PluginKind::Quadrant => QuadratureSpec::monte_carlo(DEFAULT_MC_SAMPLES, seed),
        _ => QuadratureSpec::gauss_hermite(DEFAULT_ORDER),
    }
}

/// Plug-in influence functions at the integration nodes.
#[derive(Debug, Clone)]
pub struct IfSample {
    pub kind: PluginKind,
    pub quadrature: QuadratureSpec,
    pub values: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    /// Total weight of nodes whose difference quotients disagreed.
    pub unstable_weight: f64,
}

impl IfSample {
    pub fn new(kind: &PluginKind, model: &GaussianModel, quadrature: &QuadratureSpec) -> Result<Self> {
        if !kind.has_functional() {
            return Err(Error::domain("FastMCD has no functional influence function"));
        }
        let nodes = quadrature.nodes(model)?;
        let evaluated: Vec<(DMatrix<f64>, bool)> =
            nodes.par_iter().map(|(z, _)| plugin_if_flagged(kind, model, z, DEFAULT_STEP).map(|r| (r.matrix, r.stable))).collect::<Result<_>>()?;
        let unstable_weight = evaluated.iter().zip(&nodes).filter(|((_, stable), _)| !stable).map(|(_, (_, w))| w).sum();
        let values = evaluated.into_iter().map(|(m, _)| m).collect();
        let weights = nodes.into_iter().map(|(_, w)| w).collect();
        Ok(IfSample { kind: *kind, quadrature: *quadrature, values, weights, unstable_weight })
    }
}

/// Weighted mean of `f` over the sample and, for Monte Carlo, its standard error.
fn mean_and_stderr(sample: &IfSample, f: impl Fn(&DMatrix<f64>) -> f64) -> (f64, Option<f64>) {
    let vals: Vec<f64> = sample.values.iter().map(&f).collect();
    let mean: f64 = vals.iter().zip(&sample.weights).map(|(v, w)| v * w).sum();
    if !sample.quadrature.is_monte_carlo() {
        return (mean, None);
    }
    let n = vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginAsv {
    /// `p^2 x p^2` matrix, vec indices column-major.
    pub matrix: DMatrix<f64>,
    /// Entrywise Monte Carlo standard errors.
    pub stderr: Option<DMatrix<f64>>,
    pub quadrature: QuadratureSpec,
    pub unstable_weight: f64,
}

/// Asymptotic variance of `vec` of the plug-in functional.
pub fn plugin_asv(kind: &PluginKind, model: &GaussianModel, quadrature: &QuadratureSpec) -> Result<PluginAsv> {
    plugin_asv_from(&IfSample::new(kind, model, quadrature)?)
}

pub fn plugin_asv_from(sample: &IfSample) -> Result<PluginAsv> {
    let p2 = sample.values.first().map(|m| m.len()).ok_or_else(|| Error::numerical("no integration nodes"))?;
    let vecs: Vec<DVector<f64>> = sample.values.iter().map(vec_of).collect();
    let mut acc = DMatrix::zeros(p2, p2);
    let mut sq = DMatrix::zeros(p2, p2);
    for (v, &w) in vecs.iter().zip(&sample.weights) {
        acc.ger(w, v, v, 1.0);
    }
    let stderr = if sample.quadrature.is_monte_carlo() {
        for (v, &w) in vecs.iter().zip(&sample.weights) {
            let outer = v * v.transpose();
            sq += outer.map(|x| x * x) * w;
        }
        let n = vecs.len() as f64;
        Some((sq - acc.map(|x| x * x)).map(|x| (x.max(0.0) * n / (n - 1.0) / n).sqrt()))
    } else {
        None
    };
    Ok(PluginAsv { matrix: symmetrize(&acc), stderr, quadrature: sample.quadrature, unstable_weight: sample.unstable_weight })
}

/// Asymptotic variance of the Glasso functional on its support,
/// `A ASV_SS A'`, in the order of the support permutation.
pub fn glasso_asv(system: &GlassoInfluence, plugin: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let perm = system.permutation();
    if plugin.nrows() != perm.len() || plugin.ncols() != perm.len() {
        return Err(Error::domain(format!("plug-in ASV must be {0} x {0}", perm.len())));
    }
    let idx = perm.support_indices();
    let s = idx.len();
    let inner = DMatrix::from_fn(s, s, |r, c| plugin[(idx[r], idx[c])]);
    let a = system.a_matrix();
    Ok(symmetrize(&(a * inner * a.transpose())))
}

/// One cell of an efficiency table. Components are 0-based `(row, column)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub component: (usize, usize),
    pub kind: PluginKind,
    pub asv: f64,
    /// `ASV_classical / ASV_kind`.
    pub efficiency: f64,
    pub mc_stderr: Option<f64>,
    pub method: String,
    /// Integration weight carried by nodes with unstable difference quotients.
    pub unstable_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyTable {
    pub lambda: f64,
    pub rows: Vec<EfficiencyRow>,
    /// Efficiencies presume asymptotic linearity of the estimators.
    pub under_bahadur_assumption: bool,
}

fn method_name(q: &QuadratureSpec) -> String {
    match q.rule {
        crate::model::QuadratureRule::GaussHermite { order } => format!("gauss-hermite-{order}"),
        crate::model::QuadratureRule::MonteCarlo { samples, .. } => format!("monte-carlo-{samples}"),
    }
}

struct KindAsv {
    values: Vec<(f64, Option<f64>)>,
    method: String,
    unstable_weight: f64,
}

fn component_asv(kind: &PluginKind, model: &GaussianModel, penalty: &PenaltySpec, components: &[(usize, usize)], quadrature: &QuadratureSpec) -> Result<KindAsv> {
    let est = glasso_solve(&plugin_cov(kind, model)?, penalty)?;
    let perm: SupportPermutation = support_permutation(&est, SUPPORT_TOL)?;
    for &(i, j) in components {
        if !est.in_support(i, j) {
            return Err(Error::domain(format!("component ({}, {}) is not in the support for {kind}", i + 1, j + 1)));
        }
    }
    let system = GlassoInfluence::new(&est, &perm)?;
    let sample = IfSample::new(kind, model, quadrature)?;
    let glasso: Vec<DMatrix<f64>> = sample.values.par_iter().map(|m| system.apply(m)).collect();
    let glasso_sample = IfSample { values: glasso, ..sample };
    let values = components.iter().map(|&(i, j)| mean_and_stderr(&glasso_sample, |m| m[(i, j)] * m[(i, j)])).collect();
    Ok(KindAsv { values, method: method_name(quadrature), unstable_weight: glasso_sample.unstable_weight })
}

/// Efficiencies of the Glasso with each plug-in relative to the classical
/// plug-in, for the given 0-based components. Each kind uses
/// `quadrature(kind)` to integrate; the classical baseline always uses its
/// own rule from the same function.
pub fn efficiency_table(
    model: &GaussianModel,
    penalty: &PenaltySpec,
    kinds: &[PluginKind],
    components: &[(usize, usize)],
    quadrature: impl Fn(&PluginKind) -> Result<QuadratureSpec>,
) -> Result<EfficiencyTable> {
    if components.is_empty() || kinds.is_empty() {
        return Err(Error::domain("efficiency table needs kinds and components"));
    }
    let p = model.dim();
    if components.iter().any(|&(i, j)| i >= p || j >= p) {
        return Err(Error::domain("component index outside the model dimension"));
    }
    let baseline = component_asv(&PluginKind::Classical, model, penalty, components, &quadrature(&PluginKind::Classical)?)?;
    let mut rows = Vec::new();
    for kind in kinds {
        let own = if *kind == PluginKind::Classical {
            KindAsv { values: baseline.values.clone(), method: baseline.method.clone(), unstable_weight: baseline.unstable_weight }
        } else {
            component_asv(kind, model, penalty, components, &quadrature(kind)?)?
        };
        for (c, &component) in components.iter().enumerate() {
            let (asv, se) = own.values[c];
            let efficiency = baseline.values[c].0 / asv;
            rows.push(EfficiencyRow {
                component,
                kind: *kind,
                asv,
                efficiency,
                mc_stderr: se.map(|s| efficiency * s / asv),
                method: own.method.clone(),
                unstable_weight: own.unstable_weight,
            });
        }
    }
    Ok(EfficiencyTable { lambda: penalty.lambda, rows, under_bahadur_assumption: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, min_eigenvalue};

    #[test]
    fn classical_fourth_moments() {
        // diagonal covariance: Var(s_ij) = S_ii S_jj + S_ij^2
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0, 0.5]));
        let model = GaussianModel::new(sigma.clone()).unwrap();
        let r = plugin_asv(&PluginKind::Classical, &model, &QuadratureSpec::gauss_hermite(8).unwrap()).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                let a = i + 3 * j;
                let expected = sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2);
                assert!((r.matrix[(a, a)] - expected).abs() < 1e-10, "({i},{j})");
            }
        }
        assert!(min_eigenvalue(&r.matrix) > -1e-8);
    }

    #[test]
    fn zero_plugin_asv_gives_zero() {
        let model = GaussianModel::paper_toeplitz();
        let est = glasso_solve(model.sigma(), &PenaltySpec::new(8e-4).unwrap()).unwrap();
        let perm = support_permutation(&est, SUPPORT_TOL).unwrap();
        let system = GlassoInfluence::new(&est, &perm).unwrap();
        let out = glasso_asv(&system, &DMatrix::zeros(9, 9)).unwrap();
        assert_eq!(out.shape(), (7, 7));
        assert_eq!(max_abs(&out), 0.0);
    }

    #[test]
    fn classical_self_efficiency_is_one() {
        let model = GaussianModel::paper_toeplitz();
        let t = efficiency_table(&model, &PenaltySpec::new(8e-4).unwrap(), &[PluginKind::Classical], &[(0, 0), (1, 0)], |_| QuadratureSpec::gauss_hermite(8)).unwrap();
        assert!(t.rows.iter().all(|r| r.efficiency == 1.0));
        assert!(t.under_bahadur_assumption);
    }

    #[test]
    fn off_support_component_is_rejected() {
        let model = GaussianModel::paper_toeplitz();
        let r = efficiency_table(&model, &PenaltySpec::new(8e-4).unwrap(), &[PluginKind::Classical], &[(2, 0)], |_| QuadratureSpec::gauss_hermite(8));
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
