use krr_core::anchors::{
    select_anchors, select_anchors_id, AnchorMethod, SketchConfig, SKETCH_DELTA,
};
use krr_core::kernel::kernel_submatrix;
use krr_core::precond::{inverse_sqrt, NystromPreconditioner};
use krr_core::PointSet;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, d: usize, rng: &mut ChaCha8Rng) -> PointSet {
    PointSet::new((0..n * d).map(|_| rng.random::<f64>()).collect(), d).unwrap()
}

fn build(n: usize, k: usize, seed: u64) -> (PointSet, NystromPreconditioner) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = cloud(n, 2, &mut rng);
    let anchors =
        select_anchors_id(&x, k, SketchConfig { l: k + 10, seed }, 0.3, SKETCH_DELTA).unwrap();
    let p = NystromPreconditioner::build(&x, &anchors, 0.5, 0.3).unwrap();
    (x, p)
}

/// Dense matrix of the preconditioner, one column per unit vector.
fn dense_of(p: &NystromPreconditioner, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        m.set_column(j, &DVector::from_vec(p.apply(&e).unwrap()));
    }
    m
}

#[test]
fn symmetric_positive_definite() {
    let n = 300;
    let (_, p) = build(n, 20, 11);
    let m = dense_of(&p, n);
    let asym = (&m - m.transpose()).amax();
    assert!(asym <= 1e-8 * m.amax(), "asymmetry {asym:e}");
    let ev = ((&m + m.transpose()) * 0.5).symmetric_eigenvalues();
    assert!(ev.min() > 0.0);
    // Eigenvalues of (K~ + beta I)^-1 lie in (0, 1/beta].
    assert!(ev.max() <= 1.0 / p.beta() * (1.0 + 1e-8));
}

#[test]
fn cholesky_factor_reconstructs_core() {
    let n = 300;
    let k = 20;
    let (x, p) = build(n, k, 12);
    let all: Vec<usize> = (0..n).collect();
    let c = kernel_submatrix(&x, &all, &p.anchors().indices, p.epsilon()).unwrap();
    let uh = p.u_half();
    let core = uh * c.transpose() * &c * uh + DMatrix::identity(k, k) * p.beta();
    let f = p.chol_factor();
    let rel = (f * f.transpose() - &core).amax() / core.amax();
    assert!(rel <= 1e-8, "{rel:e}");
    for i in 0..k {
        for j in i + 1..k {
            assert_eq!(f[(i, j)], 0.0);
        }
    }
}

#[test]
fn inverse_sqrt_of_spd_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = cloud(15, 2, &mut rng);
    let idx: Vec<usize> = (0..15).collect();
    let kss = kernel_submatrix(&x, &idx, &idx, 0.2).unwrap();
    let (uh, clipped) = inverse_sqrt(kss.clone()).unwrap();
    assert_eq!(clipped, 0);
    let prod = &uh * &kss * &uh;
    assert!((prod - DMatrix::<f64>::identity(15, 15)).amax() < 1e-8);
}

#[test]
fn every_sampler_yields_a_working_preconditioner() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = cloud(400, 3, &mut rng);
    for method in [AnchorMethod::Id, AnchorMethod::Random, AnchorMethod::Fps] {
        let anchors = select_anchors(&x, 30, method, SketchConfig { l: 40, seed: 5 }, 0.5).unwrap();
        assert_eq!(anchors.len(), 30);
        let mut sorted = anchors.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 30, "{method:?} repeated an anchor");
        let p = NystromPreconditioner::build(&x, &anchors, 0.1, 0.5).unwrap();
        let v: Vec<f64> = (0..400).map(|i| (i as f64).sin()).collect();
        let y = p.apply(&v).unwrap();
        assert!(y.iter().all(|t| t.is_finite()));
    }
}

#[test]
fn anchor_selection_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = cloud(300, 2, &mut rng);
    for method in [AnchorMethod::Id, AnchorMethod::Random, AnchorMethod::Fps] {
        let a = select_anchors(&x, 12, method, SketchConfig { l: 20, seed: 9 }, 0.4).unwrap();
        let b = select_anchors(&x, 12, method, SketchConfig { l: 20, seed: 9 }, 0.4).unwrap();
        assert_eq!(a.indices, b.indices);
    }
}

#[test]
fn rejects_invalid_builds() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = cloud(50, 2, &mut rng);
    assert!(select_anchors(
        &x,
        0,
        AnchorMethod::Fps,
        SketchConfig { l: 5, seed: 0 },
        0.5
    )
    .is_err());
    assert!(select_anchors(
        &x,
        51,
        AnchorMethod::Random,
        SketchConfig { l: 60, seed: 0 },
        0.5
    )
    .is_err());
    assert!(select_anchors(
        &x,
        10,
        AnchorMethod::Id,
        SketchConfig { l: 5, seed: 0 },
        0.5
    )
    .is_err());
    let anchors = select_anchors(
        &x,
        5,
        AnchorMethod::Fps,
        SketchConfig { l: 5, seed: 0 },
        0.5,
    )
    .unwrap();
    assert!(NystromPreconditioner::build(&x, &anchors, 0.0, 0.5).is_err());
    let p = NystromPreconditioner::build(&x, &anchors, 1.0, 0.5).unwrap();
    assert!(p.apply(&[1.0; 49]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn apply_is_linear_and_contracting(seed in 0u64..500, beta in 0.05f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(120, 2, &mut rng);
        let anchors = select_anchors(&x, 10, AnchorMethod::Fps, SketchConfig { l: 10, seed }, 0.3).unwrap();
        let p = NystromPreconditioner::build(&x, &anchors, beta, 0.3).unwrap();
        let u: Vec<f64> = (0..120).map(|_| rng.random::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..120).map(|_| rng.random::<f64>() - 0.5).collect();
        let pu = p.apply(&u).unwrap();
        let pv = p.apply(&v).unwrap();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let ps = p.apply(&sum).unwrap();
        let scale = pu.iter().chain(&pv).fold(0.0f64, |m, t| m.max(t.abs()));
        for i in 0..120 {
            prop_assert!((ps[i] - pu[i] - pv[i]).abs() <= 1e-6 * scale);
        }
        // <u, P u> lies in (0, |u|^2 / beta].
        let quad: f64 = u.iter().zip(&pu).map(|(a, b)| a * b).sum();
        let uu: f64 = u.iter().map(|a| a * a).sum();
        prop_assert!(quad > 0.0 && quad <= uu / beta * (1.0 + 1e-6));
    }
}
