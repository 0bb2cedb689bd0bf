//! Population versions of the Qn scale and the robust correlations, at a
//! normal law or at its mixture with a point mass.
//!
//! All correlation functionals are invariant to marginal scale, so they are
//! evaluated in standardised coordinates. Mixture expectations are expanded
//! into clean-clean, clean-atom and atom-atom terms; the clean terms reduce to
//! bivariate normal orthant probabilities except for the Gaussian rank
//! correlation, which needs a two-dimensional quadrature split along the
//! discontinuities introduced by the atom.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::erf::{erf, erfc};

use super::{fisher_transform, CorrelationKind, CorrelationValue};
use crate::error::{Error, Result};
use crate::model::{bvn_cdf, norm_cdf, norm_pdf, norm_ppf, PanelRule};

/// Fisher-consistency constant of Qn at the normal, `1 / (sqrt(2) Phi^-1(5/8))`.
pub fn qn_consistency() -> f64 {
    1.0 / (SQRT_2 * norm_ppf(0.625))
}

/// Bounds for the Gaussian-rank grade of the atom itself.
const GRADE_CLAMP: f64 = 1e-12;

/// `N(0, sigma^2)`, optionally mixed as `(1 - eps) N(0, sigma^2) + eps Delta(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalLaw {
    pub sigma: f64,
    /// `(eps, z)`.
    pub atom: Option<(f64, f64)>,
}

/// Bivariate normal with standard deviations `sigma` and correlation `rho`,
/// optionally mixed with a point mass `eps` at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateLaw {
    pub sigma: [f64; 2],
    pub rho: f64,
    /// `(eps, [z_j, z_k])`.
    pub atom: Option<(f64, [f64; 2])>,
}

fn check_mass(eps: f64) -> Result<()> {
    if (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::domain(format!("mixture mass {eps} outside [0, 1)")))
    }
}

/// Qn scale functional `c H^-1(1/4)`, where `H` is the CDF of `|X1 - X2|`
/// for independent copies drawn from the marginal law.
pub fn qn_scale_functional(law: &MarginalLaw) -> Result<f64> {
    if !(law.sigma > 0.0 && law.sigma.is_finite()) {
        return Err(Error::domain("marginal scale must be positive and finite"));
    }
    let (eps, a) = match law.atom {
        None => return Ok(law.sigma),
        Some((eps, z)) => {
            check_mass(eps)?;
            if !z.is_finite() {
                return Err(Error::domain("atom location must be finite"));
            }
            (eps, z / law.sigma)
        }
    };
    if eps == 0.0 {
        return Ok(law.sigma);
    }
    let clean = (1.0 - eps) * (1.0 - eps);
    let cross = 2.0 * eps * (1.0 - eps);
    // H(d) - 1/4 for d > 0 in standardised units
    let h = |d: f64| {
        let cross_mass = 0.5 * (erfc(-(a + d) * FRAC_1_SQRT_2) - erfc(-(a - d) * FRAC_1_SQRT_2));
        clean * erf(0.5 * d) + cross * cross_mass + eps * eps - 0.25
    };
    let dh = |d: f64| clean * SQRT_2 * norm_pdf(d / SQRT_2) + cross * (norm_pdf(a + d) + norm_pdf(a - d));

    if h(0.0) >= 0.0 {
        return Err(Error::numerical("Qn root not bracketed: atom carries a quarter of the pair mass"));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while h(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::numerical("Qn root bracketing failed"));
        }
    }
    // safeguarded Newton
    let mut d = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = h(d);
        if v == 0.0 {
            break;
        }
        if v < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let slope = dh(d);
        let mut next = d - v / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - d).abs() <= 1e-16 * d.max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
            d = next;
            break;
        }
        d = next;
    }
    Ok(law.sigma * qn_consistency() * d)
}

/// Median of the standardised mixture `(1 - eps) N(0,1) + eps Delta(a)`,
/// as the right-continuous generalised inverse of its CDF at 1/2.
fn mixture_median(eps: f64, a: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    let below = norm_ppf(0.5 / (1.0 - eps));
    if below < a {
        return below;
    }
    if (1.0 - eps) * norm_cdf(a) + eps >= 0.5 {
        return a;
    }
    norm_ppf((0.5 - eps) / (1.0 - eps))
}

/// Evaluate a raw correlation functional and its Fisher-consistent version.
pub fn correlation_functional(kind: CorrelationKind, law: &BivariateLaw) -> Result<CorrelationValue> {
    if !(law.sigma[0] > 0.0 && law.sigma[1] > 0.0) {
        return Err(Error::domain("marginal scales must be positive"));
    }
    if !(law.rho.abs() < 1.0) {
        return Err(Error::domain(format!("bivariate normal correlation {} must lie in (-1, 1)", law.rho)));
    }
    let atom = match law.atom {
        Some((eps, z)) => {
            check_mass(eps)?;
            if !(z[0].is_finite() && z[1].is_finite()) {
                return Err(Error::domain("atom location must be finite"));
            }
            Some((eps, z[0] / law.sigma[0], z[1] / law.sigma[1]))
        }
        None => None,
    };
    let rho = law.rho;
    let raw = match (kind, atom) {
        (CorrelationKind::Spearman, None) => 6.0 / PI * (rho / 2.0).asin(),
        (CorrelationKind::Kendall, None) => 2.0 / PI * rho.asin(),
        (CorrelationKind::Quadrant, None) => 2.0 / PI * rho.asin(),
        (CorrelationKind::GaussRank, None) => rho,
        (CorrelationKind::Spearman, Some((eps, a, b))) => spearman_mixture(rho, eps, a, b),
        (CorrelationKind::Kendall, Some((eps, a, b))) => kendall_mixture(rho, eps, a, b),
        (CorrelationKind::Quadrant, Some((eps, a, b))) => quadrant_mixture(rho, eps, a, b),
        (CorrelationKind::GaussRank, Some((eps, a, b))) => gauss_rank_mixture(rho, eps, a, b),
    };
    let raw = raw.clamp(-1.0, 1.0);
    Ok(CorrelationValue { kind, raw, transformed: fisher_transform(kind, raw)? })
}

/// `E[sign((X - a)(Y - b))]` for standard bivariate normal.
fn sign_concordance(rho: f64, a: f64, b: f64) -> f64 {
    1.0 - 2.0 * norm_cdf(a) - 2.0 * norm_cdf(b) + 4.0 * bvn_cdf(a, b, rho)
}

fn kendall_mixture(rho: f64, eps: f64, a: f64, b: f64) -> f64 {
    // independent pairs: clean-clean, clean-atom (twice), atom-atom (sign 0)
    let clean = 2.0 / PI * rho.asin();
    (1.0 - eps).powi(2) * clean + 2.0 * eps * (1.0 - eps) * sign_concordance(rho, a, b)
}

fn spearman_mixture(rho: f64, eps: f64, a: f64, b: f64) -> f64 {
    // grades G(x) = (1-eps) Phi(x) + eps 1{x >= a}; the atom itself gets the
    // mid-grade so the functional is exactly sign equivariant
    let r2 = rho * FRAC_1_SQRT_2;
    let phi_phi = bvn_cdf(0.0, 0.0, rho / 2.0);
    let phi_ind_b = bvn_cdf(0.0, -b, r2);
    let ind_a_phi = bvn_cdf(0.0, -a, r2);
    let ind_ind = bvn_cdf(-a, -b, rho);
    let clean = (1.0 - eps).powi(2) * phi_phi + eps * (1.0 - eps) * (phi_ind_b + ind_a_phi) + eps * eps * ind_ind;
    let grade_a = (1.0 - eps) * norm_cdf(a) + 0.5 * eps;
    let grade_b = (1.0 - eps) * norm_cdf(b) + 0.5 * eps;
    12.0 * ((1.0 - eps) * clean + eps * grade_a * grade_b) - 3.0
}

fn quadrant_mixture(rho: f64, eps: f64, a: f64, b: f64) -> f64 {
    let mj = mixture_median(eps, a);
    let mk = mixture_median(eps, b);
    let atom_sign = ((a - mj) * (b - mk)).signum();
    let atom_sign = if (a - mj) * (b - mk) == 0.0 { 0.0 } else { atom_sign };
    (1.0 - eps) * sign_concordance(rho, mj, mk) + eps * atom_sign
}

/// Normal scores `Phi^-1(G(x))` for the mixture grade function, evaluated
/// through whichever tail keeps full precision.
fn normal_score(x: f64, eps: f64, a: f64) -> f64 {
    let (lower, upper) = if x >= a {
        ((1.0 - eps) * norm_cdf(x) + eps, (1.0 - eps) * norm_cdf(-x))
    } else {
        ((1.0 - eps) * norm_cdf(x), (1.0 - eps) * norm_cdf(-x) + eps)
    };
    if lower <= upper {
        norm_ppf(lower)
    } else {
        -norm_ppf(upper)
    }
}

fn atom_score(eps: f64, a: f64) -> f64 {
    let lower = (1.0 - eps) * norm_cdf(a) + 0.5 * eps;
    let upper = (1.0 - eps) * norm_cdf(-a) + 0.5 * eps;
    if lower <= upper {
        norm_ppf(lower.max(GRADE_CLAMP))
    } else {
        -norm_ppf(upper.max(GRADE_CLAMP))
    }
}

/// Half-width of the integration box in standardised units.
const GR_LIMIT: f64 = 8.5;
const GR_POINTS: usize = 10;

fn gauss_rank_mixture(rho: f64, eps: f64, a: f64, b: f64) -> f64 {
    let width = 0.5 * (1.0 - rho * rho).sqrt().min(1.0);
    let rx = PanelRule::new(-GR_LIMIT, GR_LIMIT, &[a], width, GR_POINTS);
    let ry = PanelRule::new(-GR_LIMIT, GR_LIMIT, &[b], width, GR_POINTS);
    let one_m = 1.0 - rho * rho;
    let norm = 1.0 / (2.0 * PI * one_m.sqrt());
    let sx: Vec<f64> = rx.nodes.iter().map(|&x| normal_score(x, eps, a)).collect();
    let sy: Vec<f64> = ry.nodes.iter().zip(&ry.weights).map(|(&y, &w)| w * normal_score(y, eps, b)).collect();
    let ey: Vec<f64> = ry.nodes.iter().map(|&y| (-y * y / (2.0 * one_m)).exp()).collect();
    let c = rho / one_m;
    let mut total = 0.0;
    for i in 0..rx.len() {
        let x = rx.nodes[i];
        let ex = (-x * x / (2.0 * one_m)).exp();
        if ex == 0.0 {
            continue;
        }
        let cx = c * x;
        let mut inner = 0.0;
        for j in 0..ry.len() {
            inner += sy[j] * ey[j] * (cx * ry.nodes[j]).exp();
        }
        total += rx.weights[i] * sx[i] * ex * inner;
    }
    let clean = norm * total;
    (1.0 - eps) * clean + eps * atom_score(eps, a) * atom_score(eps, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(rho: f64, atom: Option<(f64, [f64; 2])>) -> BivariateLaw {
        BivariateLaw { sigma: [1.0, 1.0], rho, atom }
    }

    #[test]
    fn qn_at_the_normal() {
        let std = qn_scale_functional(&MarginalLaw { sigma: 1.0, atom: None }).unwrap();
        assert!((std - 1.0).abs() < 1e-8);
        // the root solve path reproduces the closed form at a zero-mass atom
        let solved = qn_scale_functional(&MarginalLaw { sigma: 2.5, atom: Some((0.0, 3.0)) }).unwrap();
        assert!((solved - 2.5).abs() < 1e-12);
        // a tiny mass goes through the root solver and stays close
        let tiny = qn_scale_functional(&MarginalLaw { sigma: 2.5, atom: Some((1e-12, 0.3)) }).unwrap();
        assert!((tiny - 2.5).abs() < 1e-10);
    }

    #[test]
    fn qn_rejects_heavy_atoms() {
        assert!(matches!(qn_scale_functional(&MarginalLaw { sigma: 1.0, atom: Some((0.6, 0.0)) }), Err(Error::Numerical(_))));
        assert!(qn_scale_functional(&MarginalLaw { sigma: -1.0, atom: None }).is_err());
    }

    #[test]
    fn qn_grows_with_outlier_but_stays_bounded() {
        let near = qn_scale_functional(&MarginalLaw { sigma: 1.0, atom: Some((0.1, 0.0)) }).unwrap();
        let far = qn_scale_functional(&MarginalLaw { sigma: 1.0, atom: Some((0.1, 50.0)) }).unwrap();
        let farther = qn_scale_functional(&MarginalLaw { sigma: 1.0, atom: Some((0.1, 500.0)) }).unwrap();
        assert!(near < 1.0 && far > 1.0);
        assert!((far - farther).abs() < 1e-9);
    }

    #[test]
    fn clean_closed_forms() {
        for i in -9..=9 {
            let rho = i as f64 / 10.0;
            let k = correlation_functional(CorrelationKind::Kendall, &law(rho, None)).unwrap();
            assert!((k.raw - 2.0 / PI * rho.asin()).abs() < 1e-15);
            assert!((k.transformed - rho).abs() < 1e-12);
        }
        let g = correlation_functional(CorrelationKind::GaussRank, &law(0.5, None)).unwrap();
        assert!((g.raw - 0.5).abs() < 1e-15);
        let s = correlation_functional(CorrelationKind::Spearman, &law(0.0, None)).unwrap();
        assert!(s.raw.abs() < 1e-15);
    }

    #[test]
    fn mixture_paths_reduce_at_zero_mass() {
        for kind in CorrelationKind::ALL {
            for rho in [-0.8, -0.25, 0.0, 0.5, 0.9] {
                let clean = correlation_functional(kind, &law(rho, None)).unwrap();
                let degenerate = correlation_functional(kind, &law(rho, Some((0.0, [1.3, -0.4])))).unwrap();
                assert!((clean.raw - degenerate.raw).abs() < 1e-10, "{kind:?} rho={rho}: {} vs {}", clean.raw, degenerate.raw);
            }
        }
    }

    #[test]
    fn mixture_median_cases() {
        assert_eq!(mixture_median(0.0, 5.0), 0.0);
        // atom far above: median shifts up to solve (1 - eps) Phi(m) = 1/2
        let m = mixture_median(0.1, 5.0);
        assert!(((0.9 * norm_cdf(m)) - 0.5).abs() < 1e-14);
        let m = mixture_median(0.1, -5.0);
        assert!(((0.9 * norm_cdf(m) + 0.1) - 0.5).abs() < 1e-14);
        // atom at the centre absorbs the median
        assert_eq!(mixture_median(0.1, 0.01), 0.01);
    }

    #[test]
    fn gauss_rank_quadrature_recovers_rho() {
        // zero mass but breakpoints present: the clean quadrature reproduces rho
        for rho in [-0.6, 0.25, 0.5, 0.8] {
            let v = gauss_rank_mixture(rho, 0.0, 1.7, -2.2);
            assert!((v - rho).abs() < 1e-10, "rho={rho}: {v}");
        }
    }

    #[test]
    fn normal_scores_are_continuous_off_the_atom() {
        let eps = 1e-4;
        for x in [-7.9, -3.0, 0.2, 4.0, 8.0] {
            let s = normal_score(x, eps, 10.0);
            assert!((s - norm_ppf((1.0 - eps) * norm_cdf(x))).abs() < 1e-9 * s.abs().max(1.0));
        }
        assert!(normal_score(8.0, 0.0, 0.0) > 7.99);
    }
}
