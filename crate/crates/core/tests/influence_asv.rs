use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use rglasso::asv::{glasso_asv, plugin_asv};
use rglasso::contamination::{plugin_if, plugin_if_flagged};
use rglasso::glasso::SUPPORT_TOL;
use rglasso::influence::{glasso_if_fd, GlassoInfluence};
use rglasso::plugins::finite_sample_estimate;
use rglasso::{glasso_if, glasso_solve, sc_surface, support_permutation, GaussianModel, PenaltySpec, PluginKind, QuadratureSpec, SCExperiment};

#[test]
fn classical_glasso_asv_at_zero_penalty_is_the_wishart_form() {
    let model = GaussianModel::paper_toeplitz();
    let est = glasso_solve(model.sigma(), &PenaltySpec::new(0.0).unwrap()).unwrap();
    let perm = support_permutation(&est, SUPPORT_TOL).unwrap();
    let system = GlassoInfluence::new(&est, &perm).unwrap();
    let plug = plugin_asv(&PluginKind::Classical, &model, &QuadratureSpec::gauss_hermite(8).unwrap()).unwrap();
    let asv = glasso_asv(&system, &plug.matrix).unwrap();
    let o = model.omega();
    let idx = perm.support_indices();
    let mut worst = 0.0f64;
    for (r, &a) in idx.iter().enumerate() {
        for (c, &b) in idx.iter().enumerate() {
            let (i, j, k, l) = (a % 3, a / 3, b % 3, b / 3);
            let want = o[(i, k)] * o[(j, l)] + o[(i, l)] * o[(j, k)];
            worst = worst.max((asv[(r, c)] - want).abs());
        }
    }
    assert!(worst < 1e-9, "worst {worst:e}");
}

#[test]
fn closed_form_matches_solver_differences() {
    let model = GaussianModel::paper_toeplitz();
    let penalty = PenaltySpec::new(8e-4).unwrap();
    let points = [[1.0, -2.0, 0.0], [-3.0, 0.5, 2.5], [0.2, 0.1, -4.0]];
    for kind in [PluginKind::Classical, PluginKind::Kendall, PluginKind::Spearman] {
        let est = glasso_solve(&rglasso::plugins::plugin_cov(&kind, &model).unwrap(), &penalty).unwrap();
        let perm = support_permutation(&est, SUPPORT_TOL).unwrap();
        for z in points {
            let z = DVector::from_column_slice(&z);
            let fd = glasso_if_fd(&model, &kind, &penalty, &z, 1e-4).unwrap();
            let pif = plugin_if_flagged(&kind, &model, &z, fd.step).unwrap();
            let cf = glasso_if(&est, &perm, &pif).unwrap();
            let err = (&cf.glasso_if - &fd.matrix).abs().max();
            assert!(err < 1e-3, "{kind} at {z:?}: {err:e}");
            assert_eq!(cf.glasso_if[(0, 2)], 0.0);
        }
    }
}

#[test]
fn sensitivity_curve_approaches_influence() {
    let model = GaussianModel::paper_toeplitz();
    let penalty = PenaltySpec::new(0.0).unwrap();
    let z = DVector::from_column_slice(&[2.0, -1.0, 1.0]);
    let exp = SCExperiment { model: model.clone(), kind: PluginKind::Classical, penalty, n: 4000, replications: 20, grid: vec![z.clone()], seed: 3 };
    let sc = sc_surface(&exp).unwrap();
    let est = glasso_solve(model.sigma(), &penalty).unwrap();
    let perm = support_permutation(&est, SUPPORT_TOL).unwrap();
    let ifz = glasso_if(&est, &perm, &plugin_if(&PluginKind::Classical, &model, &z).unwrap()).unwrap();
    let rel = (&sc.points[0].mean - &ifz.glasso_if).norm() / ifz.norm;
    assert!(rel < 0.05, "relative gap {rel}");
}

// n Var over replications against the integrated asymptotic variance; the
// band is 5% with 6000 replications (standard error of a variance about 1.8%)
#[test]
fn gauss_rank_asv_matches_simulation_at_identity() {
    let model = GaussianModel::identity(2).unwrap();
    let plug = plugin_asv(&PluginKind::GaussRank, &model, &QuadratureSpec::gauss_hermite(24).unwrap()).unwrap();
    let (n, reps) = (600usize, 6000usize);
    let draws: Vec<DMatrix<f64>> =
        (0..reps).into_par_iter().map(|r| finite_sample_estimate(&PluginKind::GaussRank, &model.sample(n, 1000 + r as u64).unwrap()).unwrap()).collect();
    // vec indices: (0,0) -> 0, (1,0) -> 1
    for (a, (i, j)) in [(0usize, (0usize, 0usize)), (1, (1, 0))] {
        let vals: Vec<f64> = draws.iter().map(|m| m[(i, j)]).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let simulated = n as f64 * var;
        let asv = plug.matrix[(a, a)];
        assert!((simulated / asv - 1.0).abs() < 0.05, "({i},{j}): simulated {simulated}, asv {asv}");
    }
}
