//! Graphical lasso solver for an arbitrary symmetric input matrix.
//!
//! Minimises `-logdet(Omega) + tr(S Omega) + lambda * sum_{i != j} |Omega_ij|`
//! over positive definite `Omega`, with the diagonal left unpenalised. The
//! solver is a primal block-coordinate descent: each sweep re-optimises one
//! row/column of `Omega` exactly, which reduces to a small lasso solved by
//! coordinate descent. Once the support has settled, a few Newton steps on
//! the active set drive the stationarity residual to rounding level.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Entries with magnitude above this are reported as part of the support.
pub const SUPPORT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub lambda: f64,
    /// Target KKT residual.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl PenaltySpec {
    pub fn new(lambda: f64) -> Result<Self> {
        let spec = PenaltySpec { lambda, tolerance: 1e-12, max_iter: 10_000 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        self.tolerance = tolerance;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::domain(format!("penalty {} must be finite and >= 0", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::domain("solver tolerance must be positive"));
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub omega: DMatrix<f64>,
    /// Column-major support mask, `|Omega_ij| > SUPPORT_TOL`; the diagonal is
    /// always included. Without a penalty nothing is held at zero, so every
    /// entry is in the support.
    pub support: Vec<bool>,
    pub kkt_residual: f64,
    pub objective: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

impl PrecisionEstimate {
    fn from_omega(omega: DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, sweeps: usize) -> Result<Self> {
        let p = omega.nrows();
        let mut support = vec![false; p * p];
        for j in 0..p {
            for i in 0..p {
                support[i + j * p] = lambda == 0.0 || i == j || omega[(i, j)].abs() > SUPPORT_TOL;
            }
        }
        let kkt = kkt_residual(s, lambda, &omega)?;
        let objective = objective(s, lambda, &omega)?;
        Ok(PrecisionEstimate { omega, support, kkt_residual: kkt, objective, lambda, sweeps })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn in_support(&self, i: usize, j: usize) -> bool {
        self.support[i + j * self.dim()]
    }

    /// Vectorised view `vec(Omega)`.
    pub fn omega_vec(&self) -> DVector<f64> {
        linalg::vec_of(&self.omega)
    }

    /// `Omega^{-1}`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.omega)
    }
}

/// Penalised negative log-likelihood.
pub fn objective(s: &DMatrix<f64>, lambda: f64, omega: &DMatrix<f64>) -> Result<f64> {
    let logdet = linalg::spd_logdet(omega)?;
    let trace = s.component_mul(omega).sum();
    let p = omega.nrows();
    let mut l1 = 0.0;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                l1 += omega[(i, j)].abs();
            }
        }
    }
    Ok(-logdet + trace + lambda * l1)
}

/// Maximum violation of the stationarity conditions
/// `W - S = lambda * Z` with `W = Omega^{-1}`, `Z_ii = 0`,
/// `Z_ij = sign(Omega_ij)` on nonzeros and `|Z_ij| <= 1` on zeros.
pub fn kkt_residual(s: &DMatrix<f64>, lambda: f64, omega: &DMatrix<f64>) -> Result<f64> {
    let p = omega.nrows();
    if s.nrows() != p || s.ncols() != p || omega.ncols() != p {
        return Err(Error::domain("dimension mismatch between S and Omega"));
    }
    let w = linalg::spd_inverse(omega).map_err(|_| Error::domain("Omega is not positive definite"))?;
    let s = linalg::symmetrize(s);
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in 0..p {
            let g = w[(i, j)] - s[(i, j)];
            let v = if i == j {
                g.abs()
            } else if omega[(i, j)] != 0.0 {
                (g - lambda * omega[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn submatrix_without(m: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    m.clone().remove_row(j).remove_column(j)
}

/// Solve the Glasso problem for symmetric `s`.
pub fn glasso_solve(s: &DMatrix<f64>, penalty: &PenaltySpec) -> Result<PrecisionEstimate> {
    penalty.validate()?;
    let p = s.nrows();
    if p == 0 || s.ncols() != p {
        return Err(Error::domain("input matrix must be square and non-empty"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("input matrix has non-finite entries"));
    }
    let s = linalg::symmetrize(s);
    let lambda = penalty.lambda;

    if lambda == 0.0 {
        let omega = linalg::spd_inverse(&s).map_err(|_| Error::Singular("lambda = 0 requires a positive definite input".into()))?;
        let omega = newton_polish(&s, 0.0, omega);
        return PrecisionEstimate::from_omega(omega, &s, 0.0, 0);
    }

    if (0..p).any(|i| s[(i, i)] <= 0.0) {
        return Err(Error::domain("input diagonal must be strictly positive"));
    }
    let mut omega = DMatrix::from_diagonal(&s.diagonal().map(|v| 1.0 / v));
    if p == 1 {
        return PrecisionEstimate::from_omega(omega, &s, lambda, 0);
    }

    let mut residual = f64::INFINITY;
    for sweep in 1..=penalty.max_iter {
        let mut max_change = 0.0f64;
        for j in 0..p {
            max_change = max_change.max(update_column(&s, lambda, &mut omega, j)?);
        }
        if max_change < 1e-10 || sweep % 10 == 0 {
            residual = kkt_residual(&s, lambda, &omega)?;
            if residual <= penalty.tolerance.max(1e-9) {
                let polished = newton_polish(&s, lambda, omega.clone());
                let est = PrecisionEstimate::from_omega(polished, &s, lambda, sweep)?;
                if est.kkt_residual <= penalty.tolerance {
                    return Ok(est);
                }
                residual = est.kkt_residual;
                if max_change == 0.0 {
                    break;
                }
            }
        }
    }
    Err(Error::IterationLimit { iterations: penalty.max_iter, residual })
}

/// Exact minimisation over row/column `j` of `omega`. Returns the largest
/// entry change.
fn update_column(s: &DMatrix<f64>, lambda: f64, omega: &mut DMatrix<f64>, j: usize) -> Result<f64> {
    let p = s.nrows();
    let others: Vec<usize> = (0..p).filter(|&i| i != j).collect();
    let q = linalg::spd_inverse(&submatrix_without(omega, j)).map_err(|_| Error::numerical("iterate lost positive definiteness"))?;
    let s22 = s[(j, j)];
    let s12 = DVector::from_iterator(p - 1, others.iter().map(|&i| s[(i, j)]));
    let mut beta = DVector::from_iterator(p - 1, others.iter().map(|&i| omega[(i, j)]));

    // minimise s22 b'Qb + 2 s12'b + 2 lambda |b|_1 by coordinate descent
    let mut qb = &q * &beta;
    for _ in 0..10_000 {
        let mut delta_max = 0.0f64;
        for i in 0..p - 1 {
            let qii = q[(i, i)];
            let r = s22 * (qb[i] - qii * beta[i]) + s12[i];
            let new = -soft_threshold(r, lambda) / (s22 * qii);
            let delta = new - beta[i];
            if delta != 0.0 {
                qb.axpy(delta, &q.column(i), 1.0);
                beta[i] = new;
                delta_max = delta_max.max(delta.abs());
            }
        }
        if delta_max <= 1e-16 {
            break;
        }
    }
    let omega22 = 1.0 / s22 + beta.dot(&(&q * &beta));

    let mut change = (omega[(j, j)] - omega22).abs();
    omega[(j, j)] = omega22;
    for (slot, &i) in others.iter().enumerate() {
        change = change.max((omega[(i, j)] - beta[slot]).abs());
        omega[(i, j)] = beta[slot];
        omega[(j, i)] = beta[slot];
    }
    Ok(change)
}

/// Newton iterations on the smooth problem restricted to the current
/// support. Returns the input unchanged if a step would change a sign or
/// fails to reduce the residual.
fn newton_polish(s: &DMatrix<f64>, lambda: f64, omega: DMatrix<f64>) -> DMatrix<f64> {
    let p = omega.nrows();
    let vars: Vec<(usize, usize)> = (0..p)
        .flat_map(|j| (0..=j).map(move |i| (i, j)))
        .filter(|&(i, j)| i == j || omega[(i, j)] != 0.0)
        .collect();
    let mut current = omega;
    let mut current_res = match kkt_residual(s, lambda, &current) {
        Ok(r) => r,
        Err(_) => return current,
    };
    for _ in 0..8 {
        let w = match linalg::spd_inverse(&current) {
            Ok(w) => w,
            Err(_) => break,
        };
        let m = vars.len();
        let mut f = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, m);
        for (a, &(i, j)) in vars.iter().enumerate() {
            let target = if i == j { s[(i, j)] } else { s[(i, j)] + lambda * current[(i, j)].signum() };
            f[a] = w[(i, j)] - target;
            for (b, &(k, l)) in vars.iter().enumerate() {
                // derivative of W_ij w.r.t. the symmetric variable (k, l)
                let d = if k == l {
                    -w[(i, k)] * w[(k, j)]
                } else {
                    -(w[(i, k)] * w[(l, j)] + w[(i, l)] * w[(k, j)])
                };
                jac[(a, b)] = d;
            }
        }
        let step = match jac.lu().solve(&(-&f)) {
            Some(step) => step,
            None => break,
        };
        let mut next = current.clone();
        for (a, &(i, j)) in vars.iter().enumerate() {
            next[(i, j)] += step[a];
            next[(j, i)] = next[(i, j)];
        }
        let sign_kept = vars.iter().all(|&(i, j)| i == j || next[(i, j)].signum() == current[(i, j)].signum());
        if !sign_kept {
            break;
        }
        match kkt_residual(s, lambda, &next) {
            Ok(res) if res < current_res => {
                current = next;
                current_res = res;
            }
            _ => break,
        }
        if current_res == 0.0 {
            break;
        }
    }
    current
}

/// Involutive permutation of `{0, .., p^2 - 1}` that moves the nonzero
/// entries of `vec(Omega)` to the first `s` positions.
///
/// Nonzeros already in the leading block stay in place; each zero in the
/// leading block is swapped with a nonzero from the trailing block, pairing
/// both lists in column-major order. The result satisfies `D^2 = I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPermutation {
    /// `perm[i]` is the vec index moved to position `i`.
    pub perm: Vec<usize>,
    /// Number of nonzero entries.
    pub s: usize,
}

impl SupportPermutation {
    /// Build from a column-major nonzero mask.
    pub fn from_mask(mask: &[bool]) -> Self {
        let n = mask.len();
        let s = mask.iter().filter(|&&m| m).count();
        let mut perm: Vec<usize> = (0..n).collect();
        let holes: Vec<usize> = (0..s).filter(|&i| !mask[i]).collect();
        let movers: Vec<usize> = (s..n).filter(|&i| mask[i]).collect();
        debug_assert_eq!(holes.len(), movers.len());
        for (&h, &m) in holes.iter().zip(&movers) {
            perm.swap(h, m);
        }
        SupportPermutation { perm, s }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Vec indices of the nonzero block, in permuted order.
    pub fn support_indices(&self) -> &[usize] {
        &self.perm[..self.s]
    }

    /// `D v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(v.len(), self.perm.iter().map(|&i| v[i]))
    }

    /// The `p^2 x p^2` permutation matrix `D`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.perm.len();
        let mut d = DMatrix::zeros(n, n);
        for (row, &col) in self.perm.iter().enumerate() {
            d[(row, col)] = 1.0;
        }
        d
    }
}

/// Support permutation of an estimate, counting entries with magnitude
/// above `tol` as nonzero.
pub fn support_permutation(estimate: &PrecisionEstimate, tol: f64) -> Result<SupportPermutation> {
    if !(tol > 0.0) {
        return Err(Error::domain("support tolerance must be positive"));
    }
    let p = estimate.dim();
    let mask: Vec<bool> = estimate
        .omega
        .iter()
        .enumerate()
        .map(|(k, v)| estimate.lambda == 0.0 || k % p == k / p || v.abs() > tol)
        .collect();
    Ok(SupportPermutation::from_mask(&mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianModel;

    fn paper() -> (DMatrix<f64>, DMatrix<f64>) {
        (GaussianModel::paper_toeplitz().sigma().clone(), GaussianModel::paper_toeplitz_precision())
    }

    #[test]
    fn exact_inverse_at_zero_penalty() {
        let (sigma, omega) = paper();
        let est = glasso_solve(&sigma, &PenaltySpec::new(0.0).unwrap()).unwrap();
        assert!(linalg::max_abs(&(&est.omega - &omega)) < 1e-12);
        assert!(est.kkt_residual < 1e-12);
    }

    #[test]
    fn identity_is_fixed_point() {
        let eye = DMatrix::<f64>::identity(4, 4);
        for lambda in [0.0, 0.01, 0.5] {
            let est = glasso_solve(&eye, &PenaltySpec::new(lambda).unwrap()).unwrap();
            assert!(linalg::max_abs(&(&est.omega - &eye)) < 1e-12);
        }
    }

    #[test]
    fn paper_support_at_small_penalty() {
        let (sigma, _) = paper();
        let est = glasso_solve(&sigma, &PenaltySpec::new(8e-4).unwrap()).unwrap();
        assert_eq!(est.omega[(0, 2)], 0.0);
        assert_eq!(est.omega[(2, 0)], 0.0);
        assert!(!est.in_support(0, 2) && !est.in_support(2, 0));
        assert_eq!(est.support.iter().filter(|&&b| b).count(), 7);
        assert!(est.kkt_residual <= 1e-12);
    }

    #[test]
    fn large_penalty_gives_diagonal() {
        let (sigma, _) = paper();
        let est = glasso_solve(&sigma, &PenaltySpec::new(1.0).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / sigma[(i, i)] } else { 0.0 };
                assert!((est.omega[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_input_at_zero_penalty() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(glasso_solve(&s, &PenaltySpec::new(0.0).unwrap()), Err(Error::Singular(_))));
        // a positive penalty regularises the same input
        assert!(glasso_solve(&s, &PenaltySpec::new(0.1).unwrap()).is_ok());
    }

    #[test]
    fn iteration_limit_is_reported() {
        let (sigma, _) = paper();
        let spec = PenaltySpec::new(0.05).unwrap().with_max_iter(1).with_tolerance(1e-300).unwrap();
        assert!(matches!(glasso_solve(&sigma, &spec), Err(Error::IterationLimit { .. })));
    }

    #[test]
    fn kkt_examples() {
        let (sigma, omega) = paper();
        assert!(kkt_residual(&sigma, 0.0, &omega).unwrap() <= 1e-10);
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(kkt_residual(&eye, 0.3, &eye).unwrap(), 0.0);
        let est = glasso_solve(&sigma, &PenaltySpec::new(0.05).unwrap()).unwrap();
        let mut bumped = est.omega.clone();
        bumped[(1, 0)] += 0.01;
        bumped[(0, 1)] += 0.01;
        assert!(kkt_residual(&sigma, 0.05, &bumped).unwrap() > 1e-4);
        let singular = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(kkt_residual(&sigma, 0.0, &singular), Err(Error::Domain(_))));
    }

    #[test]
    fn permutation_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let est = PrecisionEstimate::from_omega(eye.clone(), &eye, 0.1, 0).unwrap();
        let d = support_permutation(&est, 1e-7).unwrap();
        assert_eq!(d.s, 3);
        assert_eq!(d.support_indices(), &[0, 4, 8]);

        let (sigma, omega) = paper();
        let est = PrecisionEstimate::from_omega(omega.clone(), &sigma, 8e-4, 0).unwrap();
        let d = support_permutation(&est, 1e-7).unwrap();
        assert_eq!(d.s, 7);
        let dm = d.matrix();
        assert_eq!(&dm * &dm, DMatrix::identity(9, 9));
        let permuted = d.apply(&est.omega_vec());
        assert!(permuted.rows(7, 2).iter().all(|v| *v == 0.0));
        assert!(permuted.rows(0, 7).iter().all(|v| *v != 0.0));

        let dense = DMatrix::from_element(3, 3, 0.2) + DMatrix::identity(3, 3);
        let est = PrecisionEstimate::from_omega(dense.clone(), &dense, 0.0, 0).unwrap();
        let d = support_permutation(&est, 1e-7).unwrap();
        assert_eq!(d.s, 9);
        assert_eq!(d.perm, (0..9).collect::<Vec<_>>());
        assert!(support_permutation(&est, 0.0).is_err());

        // no penalty: structural zeros of Omega stay in the support
        let est = PrecisionEstimate::from_omega(omega, &sigma, 0.0, 0).unwrap();
        assert_eq!(support_permutation(&est, 1e-7).unwrap().s, 9);
        assert!(est.support.iter().all(|&b| b));
    }
}
