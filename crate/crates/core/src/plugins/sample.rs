//! Finite-sample scatter estimators: classical covariance, Qn, the four
//! pairwise correlations, and the PSD projection applied after the Fisher
//! transforms.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use super::{fast_mcd, fisher_transform, qn_consistency, CorrelationKind, PluginKind};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, sym_eigen_desc, symmetrize};
use crate::model::norm_ppf;

/// Eigenvalue floor of the PSD projection.
pub const PSD_FLOOR: f64 = 1e-8;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!("column lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 4 {
        return Err(Error::domain(format!("need at least 4 observations, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("data contain non-finite values"));
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Ranks 1..n with ties given their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            out[k] = avg;
        }
        i = j;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample correlation of the ranks.
pub fn spearman_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(pearson(&ranks(x), &ranks(y)))
}

/// Kendall's tau-a, `2 / (n (n - 1)) sum_{i<l} sign((x_i - x_l)(y_i - y_l))`.
pub fn kendall_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let mut total = 0i64;
    for i in 0..n {
        for l in (i + 1)..n {
            total += sign((x[i] - x[l]) * (y[i] - y[l])) as i64;
        }
    }
    Ok(2.0 * total as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Correlation of Van der Waerden scores `Phi^-1(rank / (n + 1))`,
/// normalised by the sum of squared scores.
pub fn gauss_rank_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let scale = 1.0 / (n as f64 + 1.0);
    let sx: Vec<f64> = ranks(x).iter().map(|r| norm_ppf(r * scale)).collect();
    let sy: Vec<f64> = ranks(y).iter().map(|r| norm_ppf(r * scale)).collect();
    let num: f64 = sx.iter().zip(&sy).map(|(a, b)| a * b).sum();
    let den: f64 = (1..=n).map(|i| norm_ppf(i as f64 * scale).powi(2)).sum();
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Mean sign of the median-centred products.
pub fn quadrant_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (median(x), median(y));
    let total: f64 = x.iter().zip(y).map(|(a, b)| sign((a - mx) * (b - my))).sum();
    Ok(total / x.len() as f64)
}

/// Small-sample correction factor of Qn.
fn qn_small_sample(n: usize) -> f64 {
    const TABLE: [f64; 8] = [0.399, 0.994, 0.512, 0.844, 0.611, 0.857, 0.669, 0.872];
    if n >= 100 {
        1.0
    } else if n <= 9 {
        TABLE[n - 2]
    } else if n % 2 == 1 {
        n as f64 / (n as f64 + 1.4)
    } else {
        n as f64 / (n as f64 + 3.8)
    }
}

/// Qn scale: the `C(h, 2)`-th smallest pairwise distance, `h = n/2 + 1`,
/// times the normal consistency constant.
pub fn qn_estimate(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 4 {
        return Err(Error::domain(format!("need at least 4 observations, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("data contain non-finite values"));
    }
    let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            diffs.push((x[i] - x[j]).abs());
        }
    }
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    let (_, kth, _) = diffs.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(qn_consistency() * qn_small_sample(n) * *kth)
}

/// Frobenius-nearest matrix with eigenvalues at least [`PSD_FLOOR`].
pub fn psd_repair(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(&symmetrize(m));
    let clipped = vals.map(|v| v.max(PSD_FLOOR));
    symmetrize(&(&vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose()))
}

fn classical_sample(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows() as f64;
    let mean = data.row_mean();
    let mut centred = data.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    symmetrize(&(centred.transpose() * &centred / n))
}

fn correlation(kind: CorrelationKind, x: &[f64], y: &[f64]) -> Result<f64> {
    match kind {
        CorrelationKind::Spearman => spearman_correlation(x, y),
        CorrelationKind::Kendall => kendall_correlation(x, y),
        CorrelationKind::GaussRank => gauss_rank_correlation(x, y),
        CorrelationKind::Quadrant => quadrant_correlation(x, y),
    }
}

fn pairwise_sample(kind: CorrelationKind, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = data.ncols();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| data.column(j).iter().copied().collect()).collect();
    let scales: Vec<f64> = cols.iter().map(|c| qn_estimate(c)).collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(p, p);
    for k in 0..p {
        out[(k, k)] = scales[k] * scales[k];
        for j in 0..k {
            let r = fisher_transform(kind, correlation(kind, &cols[j], &cols[k])?)?;
            let v = scales[j] * scales[k] * r;
            out[(j, k)] = v;
            out[(k, j)] = v;
        }
    }
    if min_eigenvalue(&out) < PSD_FLOOR {
        out = psd_repair(&out);
    }
    Ok(out)
}

/// Estimate the scatter matrix of an `n x p` data matrix.
///
/// Classical covariance is centred at the mean and divided by `n`. Pairwise
/// kinds combine Qn scales with Fisher-transformed correlations and are
/// projected onto the PSD cone when needed.
pub fn finite_sample_estimate(kind: &PluginKind, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = data.shape();
    if n < 4 {
        return Err(Error::domain(format!("need at least 4 observations, got {n}")));
    }
    if p < 1 {
        return Err(Error::domain("data have no columns"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("data contain non-finite values"));
    }
    match kind {
        PluginKind::Classical => Ok(classical_sample(data)),
        PluginKind::FastMcd(options) => fast_mcd(data, options).map(|fit| fit.cov),
        other => pairwise_sample(other.correlation().expect("pairwise kind"), data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::model::GaussianModel;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(ranks(&[1.0, 2.0, 2.0, 5.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn kendall_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_correlation(&x, &[2.0, 3.0, 5.0, 9.0]).unwrap(), 1.0);
        // pairs: (1,2)- (1,3)+ (1,4)+ (2,3)+ (2,4)+ (3,4)-  => 2/6
        let r = kendall_correlation(&x, &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert_eq!(r, 2.0 / 6.0);
    }

    #[test]
    fn rank_invariance() {
        let x = [0.3, -1.2, 2.0, 0.7, -0.1, 1.5];
        let y = [1.0, 0.2, -0.3, 0.9, -2.0, 0.4];
        let cubed: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        let expx: Vec<f64> = y.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(spearman_correlation(&x, &y).unwrap(), spearman_correlation(&cubed, &expx).unwrap());
    }

    #[test]
    fn gauss_rank_of_identical_columns_is_one() {
        let x = [0.3, -1.2, 2.0, 0.7, -0.1];
        assert!((gauss_rank_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrant_sign_zero() {
        // odd n: the median observation contributes zero
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quadrant_correlation(&x, &x).unwrap(), 0.8);
    }

    #[test]
    fn qn_small_sample_and_scale() {
        let x = [1.0, 2.0, 4.0, 7.0, 11.0];
        // distances sorted: 1 2 3 3 4 5 6 7 9 10; h = 3, k = 3 -> 3
        let expected = qn_consistency() * 0.844 * 3.0;
        assert!((qn_estimate(&x).unwrap() - expected).abs() < 1e-15);
        let scaled: Vec<f64> = x.iter().map(|v| 2.0 * v + 5.0).collect();
        assert!((qn_estimate(&scaled).unwrap() - 2.0 * expected).abs() < 1e-14);
    }

    #[test]
    fn psd_repair_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let r = psd_repair(&m);
        assert!(max_abs(&(r - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-8]))) < 1e-15);
        let spd = GaussianModel::paper_toeplitz().sigma().clone();
        assert!(max_abs(&(psd_repair(&spd) - &spd)) < 1e-12);
    }

    #[test]
    fn too_few_observations() {
        let data = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(finite_sample_estimate(&PluginKind::Kendall, &data), Err(Error::Domain(_))));
    }

    #[test]
    fn classical_divides_by_n() {
        let data = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 3.0, -3.0]);
        let cov = finite_sample_estimate(&PluginKind::Classical, &data).unwrap();
        assert!((cov[(0, 0)] - 5.0).abs() < 1e-15);
    }
}
