use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rglasso::contamination::plugin_if;
use rglasso::linalg::{max_asymmetry, min_eigenvalue};
use rglasso::plugins::{correlation_functional, psd_repair, quadrant_correlation, BivariateLaw};
use rglasso::{glasso_solve, kkt_residual, support_permutation, CorrelationKind, GaussianModel, PenaltySpec};

fn spd_from_seed(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(p, p + 2, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    &b * b.transpose() / (p + 2) as f64 + DMatrix::identity(p, p) * 0.05
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn glasso_is_kkt_certified(seed in 0u64..10_000, p in 2usize..6, lambda in 0.0f64..0.4) {
        let s = spd_from_seed(p, seed);
        let est = glasso_solve(&s, &PenaltySpec::new(lambda).unwrap()).unwrap();
        prop_assert!(kkt_residual(&s, lambda, &est.omega).unwrap() < 1e-8);
        prop_assert!(max_asymmetry(&est.omega) == 0.0);
        prop_assert!(min_eigenvalue(&est.omega) > 0.0);
        let perm = support_permutation(&est, 1e-7).unwrap();
        let d = perm.matrix();
        prop_assert_eq!(&d * &d, DMatrix::identity(p * p, p * p));
        prop_assert_eq!(d.transpose(), d);
    }

    #[test]
    fn correlations_are_bounded_and_sign_equivariant(
        rho in -0.9f64..0.9,
        eps in 0.0f64..0.2,
        a in -6.0f64..6.0,
        b in -6.0f64..6.0,
    ) {
        for kind in CorrelationKind::ALL {
            let law = BivariateLaw { sigma: [1.0, 1.0], rho, atom: Some((eps, [a, b])) };
            let flipped = BivariateLaw { sigma: [1.0, 1.0], rho: -rho, atom: Some((eps, [a, -b])) };
            let r = correlation_functional(kind, &law).unwrap();
            let f = correlation_functional(kind, &flipped).unwrap();
            prop_assert!(r.raw.abs() <= 1.0 && r.transformed.abs() <= 1.0);
            prop_assert!((r.raw + f.raw).abs() < 1e-9, "{:?}: {} vs {}", kind, r.raw, f.raw);
        }
    }

    #[test]
    fn clean_functionals_are_fisher_consistent(rho in -0.95f64..0.95, s1 in 0.2f64..5.0, s2 in 0.2f64..5.0) {
        for kind in CorrelationKind::ALL {
            let v = correlation_functional(kind, &BivariateLaw { sigma: [s1, s2], rho, atom: None }).unwrap();
            prop_assert!((v.transformed - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_ifs_are_even(x in -5.0f64..5.0, y in -5.0f64..5.0, w in -5.0f64..5.0) {
        let model = GaussianModel::paper_toeplitz();
        let z = DVector::from_column_slice(&[x, y, w]);
        for kind in [rglasso::PluginKind::Spearman, rglasso::PluginKind::Kendall] {
            let a = plugin_if(&kind, &model, &z).unwrap().matrix;
            let b = plugin_if(&kind, &model, &(-&z)).unwrap().matrix;
            prop_assert!((&a - &b).norm() < 1e-6 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn quadrant_ignores_odd_monotone_maps(seed in 0u64..10_000, half in 2usize..40) {
        let n = 2 * half + 1;
        let data = GaussianModel::paper_toeplitz().sample(n, seed).unwrap();
        let x: Vec<f64> = data.column(0).iter().copied().collect();
        let y: Vec<f64> = data.column(2).iter().copied().collect();
        let cube = |v: &[f64]| v.iter().map(|t| t * t * t).collect::<Vec<f64>>();
        prop_assert_eq!(quadrant_correlation(&x, &y).unwrap(), quadrant_correlation(&cube(&x), &cube(&y)).unwrap());
    }

    #[test]
    fn psd_repair_floor_and_fixed_points(seed in 0u64..10_000, p in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(p, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let m: DMatrix<f64> = (&b + b.transpose()) * 0.5;
        let r = psd_repair(&m);
        prop_assert!(min_eigenvalue(&r) >= 1e-8 - 1e-12);
        prop_assert!((psd_repair(&r) - &r).norm() < 1e-12 * (1.0 + r.norm()));
        let spd = spd_from_seed(p, seed);
        prop_assert!((psd_repair(&spd) - &spd).norm() < 1e-12 * spd.norm());
    }
}
