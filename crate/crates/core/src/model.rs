//! Reference distribution, contamination points and the numerical kernels
//! every other module leans on: univariate and bivariate normal
//! probabilities, Gauss-Hermite / Gauss-Legendre rules, and seeded sampling.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Smallest eigenvalue a model covariance may have.
pub const MIN_MODEL_EIGENVALUE: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Univariate normal
// ---------------------------------------------------------------------------

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal quantile. Accurate in both tails because the upper half
/// is computed from `1 - p` by symmetry.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else if p < 0.5 {
        -SQRT_2 * erfc_inv(2.0 * p)
    } else {
        SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    }
}

/// Quantile at `1 - q` computed without forming `1 - q`.
pub fn norm_ppf_upper(q: f64) -> f64 {
    -norm_ppf(q)
}

// ---------------------------------------------------------------------------
// Bivariate normal
// ---------------------------------------------------------------------------

// Gauss-Legendre half rules (weight, negative node) used by the
// Drezner-Wesolowsky / Genz scheme.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];
const GL12: [(f64, f64); 6] = [
    (0.471_753_363_865_117_7e-1, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.176_140_071_391_521_2e-1, -0.993_128_599_185_094_9),
    (0.406_014_298_003_869_4e-1, -0.963_971_927_277_913_8),
    (0.626_720_483_341_090_6e-1, -0.912_234_428_251_325_9),
    (0.832_767_415_767_047_5e-1, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.765_265_211_334_973_3e-1),
];

/// Upper orthant probability `P(X > h, Y > k)` for standard bivariate normal
/// with correlation `r`, following Genz's `bvnd`.
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let h = h;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for &(w, x) in rule {
            for sgn in [-1.0, 1.0] {
                let sn = (asr * (sgn * x + 1.0) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (4.0 * PI) + norm_cdf(-h) * norm_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a * (-(bs / as_ + hk) / 2.0).exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp() * (2.0 * PI).sqrt() * norm_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in rule {
            for sgn in [-1.0, 1.0] {
                let xs = (a * (sgn * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                bvn += a * w * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
        bvn = -bvn / (2.0 * PI);
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += norm_cdf(k) - norm_cdf(h);
            } else {
                bvn += norm_cdf(-h) - norm_cdf(-k);
            }
        }
        bvn
    }
}

/// `P(X <= x, Y <= y)` without argument validation; `rho` must lie in
/// `[-1, 1]`. Used in hot loops once the caller has validated inputs.
pub(crate) fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return norm_cdf(y);
    }
    if y == f64::INFINITY {
        return norm_cdf(x);
    }
    if rho >= 1.0 {
        return norm_cdf(x.min(y));
    }
    if rho <= -1.0 {
        return (norm_cdf(x) - norm_cdf(-y)).max(0.0);
    }
    bvn_upper(-x, -y, rho).clamp(0.0, 1.0)
}

/// Standard bivariate normal CDF `P(X <= x, Y <= y)` with correlation `rho`.
/// Infinite arguments express orthant and marginal probabilities.
pub fn std_bivariate_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("correlation {rho} outside [-1, 1]")));
    }
    if x.is_nan() || y.is_nan() {
        return Err(Error::domain("NaN CDF argument"));
    }
    Ok(bvn_cdf(x, y, rho))
}

// ---------------------------------------------------------------------------
// Quadrature rules
// ---------------------------------------------------------------------------

/// Gauss-Hermite rule normalised for `N(0, 1)`: `sum w_i f(x_i) ~ E f(X)`.
/// Nodes are returned in increasing order.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::domain("Gauss-Hermite order must be at least 1"));
    }
    let n = order;
    // physicists' rule by Newton iteration on orthonormal Hermite polynomials
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    let scale = PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&xi, &wi)| (xi * SQRT_2, wi / scale)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // renormalise the total to exactly one; the rule is exact for constants
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(pairs.into_iter().map(|(xi, wi)| (xi, wi / total)).unzip())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on `[lo, hi]` with panel edges at every
/// breakpoint inside the interval and panels no wider than `max_width`.
#[derive(Debug, Clone)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PanelRule {
    pub fn new(lo: f64, hi: f64, breaks: &[f64], max_width: f64, points: usize) -> Self {
        let (gx, gw) = gauss_legendre(points);
        let mut edges = vec![lo];
        let mut inner: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        edges.extend(inner);
        edges.push(hi);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for seg in edges.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let panels = ((b - a) / max_width).ceil().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for k in 0..panels {
                let left = a + k as f64 * h;
                for (xi, wi) in gx.iter().zip(&gw) {
                    nodes.push(left + 0.5 * h * (xi + 1.0));
                    weights.push(0.5 * h * wi);
                }
            }
        }
        PanelRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Zero-mean multivariate normal `N(0, Sigma)`.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    sigma: DMatrix<f64>,
    omega: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianModel {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let p = sigma.nrows();
        if p < 2 || sigma.ncols() != p {
            return Err(Error::Model(format!("covariance must be square with p >= 2, got {}x{}", sigma.nrows(), sigma.ncols())));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("covariance has non-finite entries".into()));
        }
        if linalg::max_asymmetry(&sigma) > 1e-12 * linalg::max_abs(&sigma).max(1.0) {
            return Err(Error::Model("covariance is not symmetric".into()));
        }
        let sigma = linalg::symmetrize(&sigma);
        let min_ev = linalg::min_eigenvalue(&sigma);
        if min_ev <= MIN_MODEL_EIGENVALUE {
            return Err(Error::Model(format!("covariance is not positive definite (min eigenvalue {min_ev:e})")));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Model("Cholesky factorisation failed".into()))?
            .l();
        let omega = linalg::spd_inverse(&sigma)?;
        Ok(GaussianModel { sigma, omega, chol })
    }

    /// The 3-variate Toeplitz example with `Sigma_ij = 2^-|i-j|`, whose
    /// inverse is tridiagonal.
    pub fn paper_toeplitz() -> Self {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        Self::new(sigma).expect("fixture is positive definite")
    }

    /// The exact inverse of [`GaussianModel::paper_toeplitz`].
    pub fn paper_toeplitz_precision() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0 / 3.0, -2.0 / 3.0, 0.0, -2.0 / 3.0, 5.0 / 3.0, -2.0 / 3.0, 0.0, -2.0 / 3.0, 4.0 / 3.0])
    }

    pub fn identity(p: usize) -> Result<Self> {
        Self::new(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn std_dev(&self, j: usize) -> f64 {
        self.sigma[(j, j)].sqrt()
    }

    pub fn correlation(&self, j: usize, k: usize) -> f64 {
        (self.sigma[(j, k)] / (self.std_dev(j) * self.std_dev(k))).clamp(-1.0, 1.0)
    }

    /// `n x p` matrix of i.i.d. rows from the model. Deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::domain("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = self.dim();
        let mut out = DMatrix::zeros(n, p);
        let mut u = DVector::zeros(p);
        for i in 0..n {
            for v in u.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let x = &self.chol * &u;
            out.set_row(i, &x.transpose());
        }
        Ok(out)
    }
}

/// A contamination location `z`, optionally with the mass `eps` of a
/// materialised mixture `(1 - eps) F + eps Delta(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationPoint {
    pub z: DVector<f64>,
    pub eps: Option<f64>,
}

impl ContaminationPoint {
    pub fn at(z: DVector<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("contamination point must be finite"));
        }
        Ok(ContaminationPoint { z, eps: None })
    }

    pub fn with_mass(z: DVector<f64>, eps: f64) -> Result<Self> {
        let mut point = Self::at(z)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("contamination mass {eps} outside (0, 1)")));
        }
        point.eps = Some(eps);
        Ok(point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum QuadratureRule {
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// Largest number of integration nodes a [`QuadratureSpec`] may produce.
pub const MAX_NODES: usize = 4_000_000;

/// How an expectation over the model is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub tolerance: f64,
}

impl QuadratureSpec {
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        let spec = QuadratureSpec { rule: QuadratureRule::GaussHermite { order }, tolerance: 1e-8 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Result<Self> {
        let spec = QuadratureSpec { rule: QuadratureRule::MonteCarlo { samples, seed }, tolerance: 1e-3 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.rule {
            QuadratureRule::GaussHermite { order } if order < 8 => Err(Error::domain(format!("Gauss-Hermite order {order} below 8"))),
            QuadratureRule::MonteCarlo { samples, .. } if samples < 10_000 => Err(Error::domain(format!("Monte Carlo sample count {samples} below 10^4"))),
            _ if !(self.tolerance > 0.0) => Err(Error::domain("quadrature tolerance must be positive")),
            _ => Ok(()),
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.rule, QuadratureRule::MonteCarlo { .. })
    }

    /// Integration nodes `z` with weights summing to one, for expectations
    /// under `model`. Tensor Gauss-Hermite nodes are mapped through the
    /// Cholesky factor.
    pub fn nodes(&self, model: &GaussianModel) -> Result<Vec<(DVector<f64>, f64)>> {
        self.validate()?;
        let p = model.dim();
        match self.rule {
            QuadratureRule::GaussHermite { order } => {
                let (x, w) = gauss_hermite(order)?;
                let total = order
                    .checked_pow(p as u32)
                    .filter(|&t| t <= MAX_NODES)
                    .ok_or_else(|| Error::Budget(format!("tensor grid of order {order} in dimension {p} exceeds {MAX_NODES} nodes")))?;
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; p];
                for _ in 0..total {
                    let u = DVector::from_iterator(p, idx.iter().map(|&i| x[i]));
                    let weight: f64 = idx.iter().map(|&i| w[i]).product();
                    out.push((model.cholesky_factor() * u, weight));
                    for slot in idx.iter_mut() {
                        *slot += 1;
                        if *slot < order {
                            break;
                        }
                        *slot = 0;
                    }
                }
                Ok(out)
            }
            QuadratureRule::MonteCarlo { samples, seed } => {
                if samples > MAX_NODES {
                    return Err(Error::Budget(format!("{samples} Monte Carlo samples exceed {MAX_NODES}")));
                }
                let data = model.sample(samples, seed)?;
                let w = 1.0 / samples as f64;
                Ok((0..samples).map(|i| (data.row(i).transpose(), w)).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bivariate_cdf_examples() {
        assert_abs_diff_eq!(std_bivariate_cdf(0.0, 0.0, 0.0).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(std_bivariate_cdf(f64::INFINITY, f64::INFINITY, 0.7).unwrap(), 1.0, epsilon = 1e-15);
        let expected = 0.25 + 0.5f64.asin() / (2.0 * PI);
        assert_abs_diff_eq!(std_bivariate_cdf(0.0, 0.0, 0.5).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bivariate_cdf_rejects_bad_rho() {
        assert!(matches!(std_bivariate_cdf(0.0, 0.0, 1.5), Err(Error::Domain(_))));
        assert!(std_bivariate_cdf(0.0, 0.0, -1.0).is_ok());
    }

    #[test]
    fn bivariate_cdf_degenerate_correlations() {
        assert_abs_diff_eq!(bvn_cdf(0.3, -0.2, 1.0), norm_cdf(-0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(bvn_cdf(0.3, 0.2, -1.0), norm_cdf(0.3) + norm_cdf(0.2) - 1.0, epsilon = 1e-15);
        assert_eq!(bvn_cdf(-1.0, -1.0, -1.0), 0.0);
    }

    #[test]
    fn hermite_moments() {
        for order in [2usize, 3, 8, 24, 40] {
            let (x, w) = gauss_hermite(order).unwrap();
            let m0: f64 = w.iter().sum();
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            assert_abs_diff_eq!(m0, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-12);
            if order >= 3 {
                let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
                assert_abs_diff_eq!(m4, 3.0, epsilon = 1e-10);
            }
            for i in 0..order {
                assert_abs_diff_eq!(x[i], -x[order - 1 - i], epsilon = 1e-13);
            }
        }
        let (x, w) = gauss_hermite(1).unwrap();
        assert_eq!((x[0], w[0]), (0.0, 1.0));
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert_abs_diff_eq!(s, 2.0 / 19.0, epsilon = 1e-14);
    }

    #[test]
    fn panel_rule_respects_breaks() {
        let rule = PanelRule::new(-1.0, 1.0, &[0.3], 0.5, 8);
        let s: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| if *x < 0.3 { w * 1.0 } else { 0.0 }).sum();
        assert_abs_diff_eq!(s, 1.3, epsilon = 1e-14);
    }

    #[test]
    fn model_rejects_non_spd() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianModel::new(bad), Err(Error::Model(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(GaussianModel::new(asym).is_err());
    }

    #[test]
    fn paper_pair_is_exact_inverse() {
        let m = GaussianModel::paper_toeplitz();
        let diff = m.omega() - GaussianModel::paper_toeplitz_precision();
        assert!(linalg::max_abs(&diff) < 1e-14);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = GaussianModel::identity(3).unwrap();
        assert_eq!(m.sample(50, 7).unwrap(), m.sample(50, 7).unwrap());
        assert_ne!(m.sample(50, 7).unwrap(), m.sample(50, 8).unwrap());
    }

    #[test]
    fn quadrature_spec_validation() {
        assert!(QuadratureSpec::gauss_hermite(4).is_err());
        assert!(QuadratureSpec::monte_carlo(100, 1).is_err());
        let spec = QuadratureSpec::gauss_hermite(8).unwrap();
        let m = GaussianModel::paper_toeplitz();
        let nodes = spec.nodes(&m).unwrap();
        assert_eq!(nodes.len(), 512);
        // second moments of the model are reproduced exactly
        let mut cov = DMatrix::zeros(3, 3);
        for (z, w) in &nodes {
            cov += z * z.transpose() * *w;
        }
        assert!(linalg::max_abs(&(cov - m.sigma())) < 1e-12);
    }
}
