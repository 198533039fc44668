use krr_core::anchors::SketchConfig;
use krr_core::kernel::dense_kernel;
use krr_core::operator::{Identity, LinearOperator};
use krr_core::pcg::{
    operator_matvec, pcg, solve_krr, DenseReference, KrrOperator, PreconditionerKind, SolveOptions,
};
use krr_core::{KernelConfig, PointSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, d: usize, rng: &mut ChaCha8Rng) -> PointSet {
    PointSet::new((0..n * d).map(|_| rng.random::<f64>()).collect(), d).unwrap()
}

fn dense_solution(x: &PointSet, cfg: KernelConfig, b: &[f64]) -> DVector<f64> {
    let n = x.len();
    let a = dense_kernel(x, cfg.epsilon).unwrap() + DMatrix::identity(n, n) * cfg.beta;
    a.cholesky().unwrap().solve(&DVector::from_column_slice(b))
}

#[test]
fn both_preconditioners_reach_the_dense_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = cloud(600, 2, &mut rng);
    let b: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
    let cfg = KernelConfig::new(0.3, 0.05).unwrap();
    let exact = dense_solution(&x, cfg, &b);
    for kind in [PreconditionerKind::Nystrom, PreconditionerKind::None] {
        let opts = SolveOptions {
            preconditioner: kind,
            rel_tol: 1e-10,
            ..SolveOptions::default()
        };
        let rep = solve_krr(&x, &b, cfg, 40, SketchConfig { l: 50, seed: 1 }, &opts).unwrap();
        assert!(rep.converged, "{kind}");
        let err = (DVector::from_vec(rep.alpha.clone()) - &exact).norm() / exact.norm();
        assert!(err < 1e-6, "{kind}: {err:e}");
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        assert_eq!(rep.cumulative_seconds.len(), rep.iterations + 1);
        assert!(rep.relative_residual() <= 1e-10);
    }
}

#[test]
fn preconditioning_cuts_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = cloud(1500, 2, &mut rng);
    let b: Vec<f64> = (0..1500).map(|_| rng.random::<f64>()).collect();
    let cfg = KernelConfig::new(0.4, 0.01).unwrap();
    let run = |kind| {
        let opts = SolveOptions {
            preconditioner: kind,
            ..SolveOptions::default()
        };
        solve_krr(&x, &b, cfg, 60, SketchConfig { l: 70, seed: 2 }, &opts).unwrap()
    };
    let plain = run(PreconditionerKind::None);
    let pre = run(PreconditionerKind::Nystrom);
    assert!(plain.converged && pre.converged);
    assert!(
        2 * pre.iterations <= plain.iterations,
        "{} vs {}",
        pre.iterations,
        plain.iterations
    );
}

#[test]
fn energy_error_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = cloud(500, 3, &mut rng);
    let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>() - 0.5).collect();
    let cfg = KernelConfig::new(0.5, 0.1).unwrap();
    for kind in [PreconditionerKind::Nystrom, PreconditionerKind::None] {
        let opts = SolveOptions {
            preconditioner: kind,
            track_energy_norm: true,
            rel_tol: 1e-9,
            ..SolveOptions::default()
        };
        let rep = solve_krr(&x, &b, cfg, 30, SketchConfig { l: 40, seed: 3 }, &opts).unwrap();
        let e = rep.energy_history.unwrap();
        assert_eq!(e.len(), rep.iterations + 1);
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * e[0], "{kind}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn condition_estimate_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = cloud(400, 2, &mut rng);
    let b = vec![1.0; 400];
    let cfg = KernelConfig::new(0.3, 0.1).unwrap();
    let opts = SolveOptions {
        condition_probes: 30,
        ..SolveOptions::default()
    };
    let rep = solve_krr(&x, &b, cfg, 30, SketchConfig { l: 40, seed: 4 }, &opts).unwrap();
    let c = rep.condition.unwrap();
    assert!(c.condition() >= 1.0 && c.lambda_min > 0.0);
    let plain = SolveOptions {
        preconditioner: PreconditionerKind::None,
        condition_probes: 30,
        ..SolveOptions::default()
    };
    let rep0 = solve_krr(&x, &b, cfg, 30, SketchConfig { l: 40, seed: 4 }, &plain).unwrap();
    assert!(rep0.condition.unwrap().condition() > c.condition());
}

#[test]
fn zero_right_hand_side() {
    let x = PointSet::new(vec![0.0, 0.5, 1.0], 1).unwrap();
    let cfg = KernelConfig::new(1.0, 1.0).unwrap();
    let rep = solve_krr(
        &x,
        &[0.0; 3],
        cfg,
        2,
        SketchConfig { l: 3, seed: 0 },
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(rep.iterations, 0);
    assert!(rep.converged);
    assert_eq!(rep.alpha, vec![0.0; 3]);
}

#[test]
fn dense_reference_cap_and_errors() {
    let x = PointSet::new(vec![0.0, 0.5, 1.0], 1).unwrap();
    let cfg = KernelConfig::new(1.0, 1.0).unwrap();
    assert!(DenseReference::new(&x, cfg, &[1.0; 3], 2).is_err());
    let r = DenseReference::new(&x, cfg, &[1.0; 3], 3).unwrap();
    assert_eq!(r.energy_error(r.solution()), 0.0);
    let opts = SolveOptions {
        max_iters: 0,
        ..SolveOptions::default()
    };
    assert!(solve_krr(&x, &[1.0; 3], cfg, 2, SketchConfig { l: 3, seed: 0 }, &opts).is_err());
    assert!(solve_krr(
        &x,
        &[1.0; 2],
        cfg,
        2,
        SketchConfig { l: 3, seed: 0 },
        &SolveOptions::default()
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operator_matches_dense(seed in 0u64..500, eps in 0.1f64..1.5, beta in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(150, 2, &mut rng);
        let v: Vec<f64> = (0..150).map(|_| rng.random::<f64>() - 0.5).collect();
        let cfg = KernelConfig::new(eps, beta).unwrap();
        let dense = (dense_kernel(&x, eps).unwrap() + DMatrix::identity(150, 150) * beta)
            * DVector::from_column_slice(&v);
        let got = operator_matvec(&x, cfg, &v).unwrap();
        for i in 0..150 {
            prop_assert!((got[i] - dense[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn plain_cg_residual_history_ends_below_tolerance(seed in 0u64..500, tol_exp in 2i32..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(100, 1, &mut rng);
        let b: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let op = KrrOperator::new(&x, KernelConfig::new(0.2, 0.5).unwrap(), 1e-12).unwrap();
        let tol = 10f64.powi(-tol_exp);
        let res = pcg(&op, &Identity(op.dim()), &b, tol, 500, |_, _| {}).unwrap();
        prop_assert!(res.converged);
        let h = &res.residual_history;
        prop_assert!(h.last().unwrap() <= &(tol * h[0]));
        prop_assert!(h[..h.len() - 1].iter().all(|&r| r > tol * h[0]));
    }
}
