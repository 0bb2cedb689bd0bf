//! Scatter functionals at point-mass contaminated mixtures, their influence
//! functions, and gross-error-sensitivity scans.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::GaussianModel;
use crate::plugins::{classical_cov, pairwise_cov_mixture, PluginKind};

/// Largest admissible contamination mass.
pub const MAX_EPS: f64 = 0.2;
/// Default difference step; the second quotient uses half of it.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Smallest step tried before an unstable derivative is reported.
pub const MIN_STEP: f64 = 1e-8;
/// Relative disagreement of the two quotients that raises the stability flag.
pub const UNSTABLE_FLAG: f64 = 1e-3;
/// Relative disagreement that is reported as an error.
pub const UNSTABLE_ERROR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IfMethod {
    ClosedForm,
    FiniteDifference,
}

/// Influence function of a scatter functional at a point `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginIF {
    pub z: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub method: IfMethod,
    /// Larger of the two steps actually used, for difference quotients.
    pub step: Option<f64>,
    /// Relative Frobenius gap between the two difference quotients.
    pub step_gap: f64,
    /// False when `step_gap` exceeds [`UNSTABLE_FLAG`].
    pub stable: bool,
}

impl PluginIF {
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }
}

fn check_point(model: &GaussianModel, z: &DVector<f64>) -> Result<()> {
    if z.len() != model.dim() {
        return Err(Error::domain(format!("contamination point has length {}, expected {}", z.len(), model.dim())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("contamination point must be finite"));
    }
    Ok(())
}

/// Scatter functional of `kind` at `(1 - eps) F + eps Delta(z)`.
pub fn contaminated_plugin_cov(kind: &PluginKind, model: &GaussianModel, z: &DVector<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps <= MAX_EPS) {
        return Err(Error::domain(format!("contamination mass {eps} outside (0, {MAX_EPS}]")));
    }
    check_point(model, z)?;
    match kind {
        PluginKind::Classical => Ok(classical_cov(model, Some((eps, z)))),
        PluginKind::FastMcd(_) => Err(Error::domain("FastMCD has no functional version")),
        other => pairwise_cov_mixture(other.correlation().expect("pairwise kind"), model, Some((eps, z))),
    }
}

/// Influence function of the plug-in functional at `z` with the default step.
pub fn plugin_if(kind: &PluginKind, model: &GaussianModel, z: &DVector<f64>) -> Result<PluginIF> {
    plugin_if_with_step(kind, model, z, DEFAULT_STEP)
}

/// Influence function with a chosen step. The classical kind uses the closed
/// form `z z' - Sigma`; the others use the Richardson combination
/// `2 D(h/2) - D(h)` of forward quotients `D(h) = (T(F_h) - T(F)) / h`.
/// The step is divided by ten, down to [`MIN_STEP`], while the two quotients
/// disagree by more than [`UNSTABLE_ERROR`].
pub fn plugin_if_with_step(kind: &PluginKind, model: &GaussianModel, z: &DVector<f64>, step: f64) -> Result<PluginIF> {
    // near a jump of the functional the quotients only agree once the step
    // is small relative to the distance to the jump
    let mut h = step;
    loop {
        let r = single_step_if(kind, model, z, h)?;
        if r.step_gap <= UNSTABLE_ERROR {
            return Ok(r);
        }
        if h / 10.0 < MIN_STEP {
            return Err(Error::UnstableDerivative { relative: r.step_gap });
        }
        h /= 10.0;
    }
}

/// One Richardson pair at `step`, without shrinking and without failing on
/// disagreement; `stable` and `step_gap` report the quality. Used for
/// integrals over the model, where a few far-tail nodes of negligible weight
/// cannot be resolved at any practical step.
pub fn plugin_if_flagged(kind: &PluginKind, model: &GaussianModel, z: &DVector<f64>, step: f64) -> Result<PluginIF> {
    single_step_if(kind, model, z, step)
}

fn single_step_if(kind: &PluginKind, model: &GaussianModel, z: &DVector<f64>, step: f64) -> Result<PluginIF> {
    check_point(model, z)?;
    match kind {
        PluginKind::Classical => Ok(PluginIF {
            z: z.clone(),
            matrix: z * z.transpose() - model.sigma(),
            method: IfMethod::ClosedForm,
            step: None,
            step_gap: 0.0,
            stable: true,
        }),
        PluginKind::FastMcd(_) => Err(Error::domain("FastMCD has no functional influence function")),
        _ => {
            // the zero-mass mixture shares the contaminated evaluation's
            // quadrature nodes, so their discretisation errors cancel
            let correlation = kind.correlation().expect("pairwise kind");
            let clean = pairwise_cov_mixture(correlation, model, Some((0.0, z)))?;
            let (matrix, gap) = richardson(step, |eps| contaminated_plugin_cov(kind, model, z, eps), &clean)?;
            Ok(PluginIF { z: z.clone(), matrix: symmetrize(&matrix), method: IfMethod::FiniteDifference, step: Some(step), step_gap: gap, stable: gap <= UNSTABLE_FLAG })
        }
    }
}

/// Richardson-extrapolated forward difference of `f` at zero, with the
/// relative gap between the two quotients.
pub(crate) fn richardson<F>(step: f64, f: F, at_zero: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    if !(step > 0.0 && step <= MAX_EPS) {
        return Err(Error::domain(format!("difference step {step} outside (0, {MAX_EPS}]")));
    }
    let coarse = (f(step)? - at_zero) / step;
    let half = 0.5 * step;
    let fine = (f(half)? - at_zero) / half;
    let gap = relative_gap(&coarse, &fine);
    Ok((&fine * 2.0 - coarse, gap))
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    let diff = (a - b).norm();
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesRow {
    pub direction: usize,
    pub radius: f64,
    pub z: Vec<f64>,
    pub norm: f64,
    /// Whether the difference quotients agreed; see [`plugin_if_flagged`].
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesScan {
    pub kind: PluginKind,
    pub rows: Vec<GesRow>,
    /// Largest norm over the scan.
    pub max_norm: f64,
    /// Largest ratio between the norms at the two outermost radii along a
    /// direction; `None` with fewer than two radii.
    pub outer_ratio: Option<f64>,
}

/// Ratio below which the outer radii are treated as a plateau.
pub const PLATEAU_RATIO: f64 = 1.2;

impl GesScan {
    /// Whether the scan looks bounded: the outermost ratio stays below
    /// [`PLATEAU_RATIO`].
    pub fn plateaued(&self) -> Option<bool> {
        self.outer_ratio.map(|r| r <= PLATEAU_RATIO)
    }
}

/// Frobenius norms of the plug-in influence function at `z = r d` for all
/// radii and directions. Directions are normalised to unit length. Far-tail
/// points whose difference quotients disagree are kept and flagged.
pub fn ges_scan(kind: &PluginKind, model: &GaussianModel, radii: &[f64], directions: &[DVector<f64>]) -> Result<GesScan> {
    if radii.is_empty() || directions.is_empty() {
        return Err(Error::domain("GES scan needs at least one radius and one direction"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::domain("radii must be finite and nonnegative"));
    }
    let units: Vec<DVector<f64>> = directions
        .iter()
        .map(|d| {
            let n = d.norm();
            if d.len() != model.dim() || !(n > 0.0 && n.is_finite()) {
                Err(Error::domain("directions must be nonzero vectors of the model dimension"))
            } else {
                Ok(d / n)
            }
        })
        .collect::<Result<_>>()?;
    let points: Vec<(usize, f64)> = (0..units.len()).flat_map(|d| radii.iter().map(move |&r| (d, r))).collect();
    let rows: Vec<GesRow> = points
        .par_iter()
        .map(|&(d, r)| {
            let z = &units[d] * r;
            let pif = plugin_if_flagged(kind, model, &z, DEFAULT_STEP)?;
            Ok(GesRow { direction: d, radius: r, z: z.iter().copied().collect(), norm: pif.norm(), stable: pif.stable })
        })
        .collect::<Result<_>>()?;
    let max_norm = rows.iter().map(|r| r.norm).fold(0.0, f64::max);

    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let outer_ratio = if sorted.len() >= 2 {
        let (inner, outer) = (sorted[sorted.len() - 2], sorted[sorted.len() - 1]);
        let find = |d: usize, r: f64| rows.iter().find(|row| row.direction == d && row.radius == r).map(|row| row.norm).unwrap_or(0.0);
        Some((0..units.len()).map(|d| find(d, outer) / find(d, inner).max(f64::MIN_POSITIVE)).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(GesScan { kind: *kind, rows, max_norm, outer_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::plugins::McdOptions;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn eps_range() {
        let m = GaussianModel::paper_toeplitz();
        let z = v(&[1.0, 1.0, 0.0]);
        assert!(contaminated_plugin_cov(&PluginKind::Kendall, &m, &z, 0.0).is_err());
        assert!(contaminated_plugin_cov(&PluginKind::Kendall, &m, &z, 0.25).is_err());
        assert!(contaminated_plugin_cov(&PluginKind::FastMcd(McdOptions::default()), &m, &z, 0.1).is_err());
        assert!(contaminated_plugin_cov(&PluginKind::Kendall, &m, &z, 0.2).is_ok());
    }

    #[test]
    fn small_eps_approaches_clean() {
        let m = GaussianModel::paper_toeplitz();
        let z = v(&[2.0, -1.0, 0.5]);
        for kind in PluginKind::FUNCTIONAL {
            let c = contaminated_plugin_cov(&kind, &m, &z, 1e-10).unwrap();
            assert!(max_abs(&(c - crate::plugins::plugin_cov(&kind, &m).unwrap())) < 1e-8, "{kind}");
        }
    }

    #[test]
    fn kendall_symmetric_point_keeps_zero_correlation() {
        let m = GaussianModel::identity(2).unwrap();
        let c = contaminated_plugin_cov(&PluginKind::Kendall, &m, &v(&[0.0, 0.0]), 0.01).unwrap();
        assert!(c[(0, 1)].abs() < 1e-8);
    }

    #[test]
    fn classical_if_closed_form() {
        let m = GaussianModel::paper_toeplitz();
        let z = v(&[1.0, 1.0, 0.0]);
        let r = plugin_if(&PluginKind::Classical, &m, &z).unwrap();
        assert_eq!(r.method, IfMethod::ClosedForm);
        assert!(max_abs(&(r.matrix - (&z * z.transpose() - m.sigma()))) < 1e-12);
    }

    #[test]
    fn origin_under_identity_has_no_cross_influence() {
        let m = GaussianModel::identity(3).unwrap();
        let z = DVector::zeros(3);
        for kind in PluginKind::FUNCTIONAL {
            let r = plugin_if(&kind, &m, &z).unwrap();
            for j in 0..3 {
                for k in 0..3 {
                    if j != k {
                        assert!(r.matrix[(j, k)].abs() < 1e-6, "{kind} ({j},{k}) {}", r.matrix[(j, k)]);
                    }
                }
            }
        }
    }

    #[test]
    fn scan_shapes_and_growth() {
        let m = GaussianModel::paper_toeplitz();
        let d = vec![v(&[1.0, -1.0, 0.0])];
        let single = ges_scan(&PluginKind::Classical, &m, &[3.0], &d).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.outer_ratio, None);
        let classical = ges_scan(&PluginKind::Classical, &m, &[3.0, 6.0], &d).unwrap();
        let ratio = classical.outer_ratio.unwrap();
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
        assert!(ges_scan(&PluginKind::Classical, &m, &[], &d).is_err());
    }
}
