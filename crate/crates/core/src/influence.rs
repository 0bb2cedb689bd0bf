//! Influence function of the Glasso functional.
//!
//! With `W` the inverse of the Glasso solution and `S` its support, the
//! influence function on the support solves
//! `(W (x) W)_SS vec(IF)_S = -vec(IF of the plug-in)_S` and vanishes
//! elsewhere. [`glasso_if_fd`] differentiates the solver directly and serves
//! as an independent check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contamination::{contaminated_plugin_cov, PluginIF};
use crate::error::{Error, Result};
use crate::glasso::{glasso_solve, PenaltySpec, PrecisionEstimate, SupportPermutation};
use crate::linalg::{mat_of, spd_inverse, sym_eigen_desc, symmetrize, vec_of};
use crate::model::GaussianModel;
use crate::plugins::{pairwise_cov_mixture, plugin_cov, PluginKind};

/// Restricted Kronecker system of a Glasso solution, factorised once and
/// reused for many plug-in influence functions.
#[derive(Debug, Clone)]
pub struct GlassoInfluence {
    p: usize,
    perm: SupportPermutation,
    /// `((W (x) W)_SS)^-1`, in the order of `perm`.
    a: DMatrix<f64>,
    condition: f64,
}

impl GlassoInfluence {
    pub fn new(estimate: &PrecisionEstimate, perm: &SupportPermutation) -> Result<Self> {
        let p = estimate.dim();
        if perm.len() != p * p {
            return Err(Error::domain(format!("permutation has length {}, expected {}", perm.len(), p * p)));
        }
        let mut mask = vec![false; p * p];
        for &i in perm.support_indices() {
            mask[i] = true;
        }
        if mask != estimate.support {
            return Err(Error::domain("support permutation does not match the estimate's support"));
        }
        let w = estimate.covariance()?;
        let idx = perm.support_indices();
        let s = idx.len();
        if s == 0 {
            return Err(Error::numerical("empty support"));
        }
        // (W (x) W)[(i + j p), (k + l p)] = W[j, l] W[i, k]
        let block = DMatrix::from_fn(s, s, |r, c| {
            let (i, j) = (idx[r] % p, idx[r] / p);
            let (k, l) = (idx[c] % p, idx[c] / p);
            w[(j, l)] * w[(i, k)]
        });
        let (vals, _) = sym_eigen_desc(&block);
        let condition = vals[0] / vals[s - 1];
        let a = spd_inverse(&block).map_err(|_| Error::numerical(format!("restricted Kronecker block is singular (condition {condition:e})")))?;
        Ok(GlassoInfluence { p, perm: perm.clone(), a: symmetrize(&a), condition })
    }

    /// The `s x s` matrix `A`.
    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn permutation(&self) -> &SupportPermutation {
        &self.perm
    }

    /// Influence on the support, `-A (D vec(plugin IF))_{1:s}`.
    pub fn restricted(&self, plugin: &DMatrix<f64>) -> DVector<f64> {
        let v = vec_of(plugin);
        let b = DVector::from_iterator(self.perm.s, self.perm.support_indices().iter().map(|&i| v[i]));
        -(&self.a * b)
    }

    /// Glasso influence matrix for a plug-in influence matrix.
    pub fn apply(&self, plugin: &DMatrix<f64>) -> DMatrix<f64> {
        let on_support = self.restricted(plugin);
        let mut v = DVector::zeros(self.p * self.p);
        for (r, &i) in self.perm.support_indices().iter().enumerate() {
            v[i] = on_support[r];
        }
        mat_of(&v, self.p)
    }
}

#[derive(Debug, Clone)]
pub struct InfluenceEvaluation {
    pub z: DVector<f64>,
    pub glasso_if: DMatrix<f64>,
    pub norm: f64,
    pub plugin_if: PluginIF,
    pub permutation: SupportPermutation,
}

/// Closed-form Glasso influence function at the point of `plugin`.
pub fn glasso_if(estimate: &PrecisionEstimate, perm: &SupportPermutation, plugin: &PluginIF) -> Result<InfluenceEvaluation> {
    let system = GlassoInfluence::new(estimate, perm)?;
    Ok(evaluate(&system, plugin))
}

/// Evaluate with a prepared system.
pub fn evaluate(system: &GlassoInfluence, plugin: &PluginIF) -> InfluenceEvaluation {
    let m = system.apply(&plugin.matrix);
    InfluenceEvaluation { z: plugin.z.clone(), norm: m.norm(), glasso_if: m, plugin_if: plugin.clone(), permutation: system.perm.clone() }
}

/// Finite-difference Glasso influence function.
#[derive(Debug, Clone, PartialEq)]
pub struct FdInfluence {
    pub matrix: DMatrix<f64>,
    /// Step actually used after any shrinking.
    pub step: f64,
    /// Relative gap between the two difference quotients.
    pub step_gap: f64,
}

/// Smallest step tried when contamination changes the support.
pub const MIN_FD_STEP: f64 = 1e-9;

/// Differentiate `eps -> T_Omega((1 - eps) F + eps Delta(z))` at zero by a
/// Richardson-extrapolated forward difference. The step is divided by ten
/// while the contaminated solution has a different support from the clean
/// one, since the derivative is taken along a fixed support. The closed form
/// is comparable when its plug-in influence function uses the same step.
pub fn glasso_if_fd(model: &GaussianModel, kind: &PluginKind, penalty: &PenaltySpec, z: &DVector<f64>, step: f64) -> Result<FdInfluence> {
    // for pairwise kinds the zero-mass mixture shares the quadrature nodes of
    // the contaminated evaluations, so discretisation errors cancel
    let base = match kind.correlation() {
        Some(corr) => pairwise_cov_mixture(corr, model, Some((0.0, z)))?,
        None => plugin_cov(kind, model)?,
    };
    let clean = glasso_solve(&base, penalty)?;
    let solve_at = |eps: f64| -> Result<PrecisionEstimate> { glasso_solve(&contaminated_plugin_cov(kind, model, z, eps)?, penalty) };
    // compare exact zero patterns: an entry that has just left zero is still
    // below the reporting threshold of the support mask
    let pattern = |e: &PrecisionEstimate| e.omega.iter().map(|v| *v != 0.0).collect::<Vec<bool>>();
    let clean_pattern = pattern(&clean);
    let mut h = step;
    loop {
        let coarse = solve_at(h)?;
        let fine = solve_at(0.5 * h)?;
        if pattern(&coarse) == clean_pattern && pattern(&fine) == clean_pattern {
            let dc = (&coarse.omega - &clean.omega) / h;
            let df = (&fine.omega - &clean.omega) / (0.5 * h);
            let scale = dc.norm().max(df.norm());
            let gap = if scale == 0.0 { 0.0 } else { (&dc - &df).norm() / scale };
            let mut m = &df * 2.0 - dc;
            // entries off the support are zero in both solutions
            for (v, &on) in m.iter_mut().zip(&clean.support) {
                if !on {
                    *v = 0.0;
                }
            }
            return Ok(FdInfluence { matrix: symmetrize(&m), step: h, step_gap: gap });
        }
        h /= 10.0;
        if h < MIN_FD_STEP {
            return Err(Error::numerical("support changes under contamination at every step size"));
        }
    }
}

/// Upper bound `||A||_op * plugin_ges` on the Frobenius norm of the Glasso
/// influence function, where `plugin_ges` bounds the plug-in influence.
pub fn ges_bound(estimate: &PrecisionEstimate, perm: &SupportPermutation, plugin_ges: f64) -> Result<f64> {
    if !(plugin_ges >= 0.0 && plugin_ges.is_finite()) {
        return Err(Error::domain("plug-in gross-error sensitivity must be finite and nonnegative"));
    }
    if plugin_ges == 0.0 {
        return Ok(0.0);
    }
    let p = estimate.dim();
    if perm.s == p * p {
        // (W (x) W)^-1 = Omega (x) Omega
        let top = sym_eigen_desc(&estimate.omega).0[0];
        return Ok(top * top * plugin_ges);
    }
    let system = GlassoInfluence::new(estimate, perm)?;
    Ok(sym_eigen_desc(system.a_matrix()).0[0] * plugin_ges)
}

/// Worst-case contamination direction of the unpenalised functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxDirection {
    pub direction: Vec<f64>,
    /// Maximum of the squared Frobenius norm over the unit sphere.
    pub value: f64,
    /// Eigenvalues of Omega in decreasing order.
    pub eigenvalues: Vec<f64>,
    /// Index of the chosen eigenvalue (0 or p - 1).
    pub chosen: usize,
}

fn g(x: f64) -> f64 {
    x.powi(4) - 2.0 * x.powi(3)
}

/// For the classical plug-in at zero penalty, `||IF(z)||_F^2` on the unit
/// sphere is maximised at the eigenvector of the largest or the smallest
/// eigenvalue of Omega, whichever has larger `g(x) = x^4 - 2 x^3`; the
/// maximum is `sum(lambda_i^2) + g`. Ties pick the largest eigenvalue.
///
/// The value is the maximum of the squared norm.
pub fn max_direction_unpenalized(omega: &DMatrix<f64>) -> Result<MaxDirection> {
    let p = omega.nrows();
    if p < 1 || omega.ncols() != p {
        return Err(Error::domain("Omega must be square"));
    }
    let (vals, vecs) = sym_eigen_desc(&symmetrize(omega));
    if !(vals[p - 1] > 0.0) {
        return Err(Error::domain("Omega must be positive definite"));
    }
    let chosen = if g(vals[0]) >= g(vals[p - 1]) { 0 } else { p - 1 };
    let sum_sq: f64 = vals.iter().map(|l| l * l).sum();
    Ok(MaxDirection {
        direction: vecs.column(chosen).iter().copied().collect(),
        value: sum_sq + g(vals[chosen]),
        eigenvalues: vals.iter().copied().collect(),
        chosen,
    })
}
