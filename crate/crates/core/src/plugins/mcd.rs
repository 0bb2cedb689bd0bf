//! FastMCD: concentration steps from random elemental subsets, with the
//! usual consistency scaling and an optional reweighting step.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McdOptions {
    /// Fraction of observations in the optimal subset, in (0.5, 1).
    pub subset_fraction: f64,
    pub reweight: bool,
    /// Number of random elemental starts.
    pub starts: usize,
    pub seed: u64,
    /// Chi-square quantile level of the reweighting cutoff.
    pub cutoff: f64,
}

impl Default for McdOptions {
    fn default() -> Self {
        McdOptions { subset_fraction: 0.75, reweight: false, starts: 500, seed: 0, cutoff: 0.975 }
    }
}

impl McdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.subset_fraction > 0.5 && self.subset_fraction < 1.0) {
            return Err(Error::domain(format!("subset fraction {} outside (0.5, 1)", self.subset_fraction)));
        }
        if self.starts < 500 {
            return Err(Error::domain(format!("at least 500 elemental starts required, got {}", self.starts)));
        }
        if !(self.cutoff > 0.5 && self.cutoff < 1.0) {
            return Err(Error::domain(format!("reweighting level {} outside (0.5, 1)", self.cutoff)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdFit {
    /// Consistency-scaled (and possibly reweighted) scatter.
    pub cov: DMatrix<f64>,
    pub location: DVector<f64>,
    /// Determinant of the raw covariance of the best `h`-subset.
    pub determinant: f64,
    /// Indices of the best `h`-subset, sorted.
    pub subset: Vec<usize>,
}

const C_STEPS_INITIAL: usize = 2;
const KEEP_BEST: usize = 10;
const C_STEPS_MAX: usize = 200;

struct Candidate {
    det: f64,
    subset: Vec<usize>,
}

fn mean_cov(data: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let p = data.ncols();
    let m = rows.len() as f64;
    let mut mean = DVector::zeros(p);
    for &i in rows {
        mean += data.row(i).transpose();
    }
    mean /= m;
    let mut cov = DMatrix::zeros(p, p);
    for &i in rows {
        let d = data.row(i).transpose() - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    (mean, symmetrize(&(cov / m)))
}

fn weighted_mean_cov(data: &DMatrix<f64>, keep: &[bool]) -> (DVector<f64>, DMatrix<f64>) {
    let rows: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    let (mean, cov) = mean_cov(data, &rows);
    // unbiased divisor for the reweighted step
    let m = rows.len() as f64;
    (mean, cov * (m / (m - 1.0)))
}

/// Squared Mahalanobis distances, or `None` when the scatter is singular.
fn distances(data: &DMatrix<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<Vec<f64>> {
    let chol = cov.clone().cholesky()?;
    let n = data.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = data.row(i).transpose() - mean;
        let y = chol.l().solve_lower_triangular(&d)?;
        out.push(y.norm_squared());
    }
    Some(out)
}

fn smallest(d: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx.truncate(h);
    idx.sort_unstable();
    idx
}

/// One concentration step; returns the new subset and the determinant of
/// the covariance it was derived from.
fn c_step(data: &DMatrix<f64>, subset: &[usize], h: usize) -> Option<(Vec<usize>, f64)> {
    let (mean, cov) = mean_cov(data, subset);
    let det = cov.determinant();
    if !(det > 0.0) {
        return None;
    }
    let d = distances(data, &mean, &cov)?;
    Some((smallest(&d, h), det))
}

fn elemental_start(data: &DMatrix<f64>, rng: &mut ChaCha8Rng, h: usize) -> Option<Vec<usize>> {
    let (n, p) = data.shape();
    let perm = sample(rng, n, n).into_vec();
    // grow the elemental set until its scatter is nonsingular
    for size in (p + 1)..=n {
        let (mean, cov) = mean_cov(data, &perm[..size]);
        if cov.determinant() > 0.0 {
            if let Some(d) = distances(data, &mean, &cov) {
                return Some(smallest(&d, h));
            }
        }
    }
    None
}

fn determinant_of(data: &DMatrix<f64>, subset: &[usize]) -> f64 {
    mean_cov(data, subset).1.determinant()
}

fn refine(data: &DMatrix<f64>, mut subset: Vec<usize>, h: usize, steps: usize) -> Option<Candidate> {
    let mut det = determinant_of(data, &subset);
    for _ in 0..steps {
        let (next, _) = c_step(data, &subset, h)?;
        let next_det = determinant_of(data, &next);
        let done = next == subset || next_det >= det;
        if next_det <= det {
            subset = next;
            det = next_det;
        }
        if done {
            break;
        }
    }
    Some(Candidate { det, subset })
}

/// Minimum covariance determinant estimate of an `n x p` data matrix.
pub fn fast_mcd(data: &DMatrix<f64>, options: &McdOptions) -> Result<McdFit> {
    options.validate()?;
    let (n, p) = data.shape();
    if n <= 2 * p {
        return Err(Error::domain(format!("FastMCD needs n > 2p, got n = {n}, p = {p}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("data contain non-finite values"));
    }
    let h = ((options.subset_fraction * n as f64).ceil() as usize).clamp(p + 1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut candidates: Vec<Candidate> = Vec::new();
    for _ in 0..options.starts {
        let Some(start) = elemental_start(data, &mut rng, h) else { continue };
        if let Some(c) = refine(data, start, h, C_STEPS_INITIAL) {
            candidates.push(c);
        }
    }
    if candidates.is_empty() {
        return Err(Error::numerical("every elemental start produced a singular scatter"));
    }
    candidates.sort_by(|a, b| a.det.total_cmp(&b.det));
    candidates.dedup_by(|a, b| a.subset == b.subset);
    candidates.truncate(KEEP_BEST);

    let best = candidates
        .into_iter()
        .filter_map(|c| refine(data, c.subset, h, C_STEPS_MAX))
        .min_by(|a, b| a.det.total_cmp(&b.det))
        .ok_or_else(|| Error::numerical("concentration steps failed"))?;

    let (location, raw) = mean_cov(data, &best.subset);
    let chi_p = ChiSquared::new(p as f64).map_err(|e| Error::numerical(e.to_string()))?;
    let chi_p2 = ChiSquared::new(p as f64 + 2.0).map_err(|e| Error::numerical(e.to_string()))?;
    let frac = h as f64 / n as f64;
    let consistency = frac / chi_p2.cdf(chi_p.inverse_cdf(frac));
    let mut cov = raw * consistency;
    let mut location = location;

    if options.reweight {
        let d = distances(data, &location, &cov).ok_or_else(|| Error::numerical("raw MCD scatter is singular"))?;
        let q = chi_p.inverse_cdf(options.cutoff);
        let keep: Vec<bool> = d.iter().map(|&v| v <= q).collect();
        if keep.iter().filter(|&&k| k).count() <= p {
            return Err(Error::numerical("reweighting retained too few observations"));
        }
        let (m, c) = weighted_mean_cov(data, &keep);
        let factor = options.cutoff / chi_p2.cdf(q);
        location = m;
        cov = c * factor;
    }

    Ok(McdFit { cov: symmetrize(&cov), location, determinant: best.det, subset: best.subset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianModel;

    #[test]
    fn options_validation() {
        assert!(McdOptions::default().validate().is_ok());
        assert!(McdOptions { subset_fraction: 0.5, ..Default::default() }.validate().is_err());
        assert!(McdOptions { starts: 10, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn needs_more_than_2p_rows() {
        let data = DMatrix::from_element(6, 3, 1.0);
        assert!(matches!(fast_mcd(&data, &McdOptions::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn deterministic_and_resists_outliers() {
        let model = GaussianModel::paper_toeplitz();
        let mut data = model.sample(200, 7).unwrap();
        for i in 0..20 {
            for j in 0..3 {
                data[(i, j)] = 50.0 + i as f64;
            }
        }
        let opts = McdOptions::default();
        let a = fast_mcd(&data, &opts).unwrap();
        let b = fast_mcd(&data, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.subset.iter().all(|&i| i >= 20));
        let diff = (&a.cov - model.sigma()).abs().max();
        assert!(diff < 0.6, "{}", a.cov);
        let rw = fast_mcd(&data, &McdOptions { reweight: true, ..opts }).unwrap();
        assert!((&rw.cov - model.sigma()).abs().max() < 0.6);
        assert_eq!(rw.determinant, a.determinant);
    }
}
