use krr_core::fgt::{ApplyPolicy, FgtOptions, FgtPlan};
use krr_core::kernel::gauss_matvec_direct;
use krr_core::PointSet;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> PointSet {
    PointSet::new((0..n * d).map(|_| scale * rng.random::<f64>()).collect(), d).unwrap()
}

fn fast() -> FgtOptions {
    FgtOptions {
        policy: ApplyPolicy::Fast,
        ..FgtOptions::default()
    }
}

#[test]
fn fast_path_within_absolute_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=3 {
        for eps in [0.25, 0.5, 1.0] {
            let x = cloud(1500, d, 1.0, &mut rng);
            let y = cloud(700, d, 1.0, &mut rng);
            let q: Vec<f64> = (0..1500).map(|_| rng.random::<f64>()).collect();
            for delta in [1e-4, 1e-6, 1e-9] {
                let plan = FgtPlan::build(&x, eps, delta, fast()).unwrap();
                let got = plan.apply(&y, &q).unwrap();
                let want = gauss_matvec_direct(&x, &y, eps, &q).unwrap();
                let err = got
                    .iter()
                    .zip(&want)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err <= delta, "d={d} eps={eps} delta={delta}: {err:e}");
            }
        }
    }
}

#[test]
fn signed_weights_and_far_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = cloud(800, 2, 3.0, &mut rng);
    let mut y = cloud(200, 2, 3.0, &mut rng);
    let far = PointSet::new(vec![50.0, 50.0, -40.0, 7.0], 2).unwrap();
    let q: Vec<f64> = (0..800).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let plan = FgtPlan::build(&x, 0.4, 1e-8, fast()).unwrap();
    let want = gauss_matvec_direct(&x, &y, 0.4, &q).unwrap();
    for (a, b) in plan.apply(&y, &q).unwrap().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-8);
    }
    assert_eq!(plan.apply(&far, &q).unwrap(), vec![0.0, 0.0]);
    y = x.clone();
    let self_sum = plan.apply(&y, &vec![1.0; 800]).unwrap();
    assert!(self_sum.iter().all(|&s| s >= 1.0 - 1e-8));
}

#[test]
fn adjoint_matches_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = cloud(300, 3, 1.0, &mut rng);
    let y = cloud(120, 3, 1.0, &mut rng);
    let w: Vec<f64> = (0..120).map(|_| rng.random::<f64>()).collect();
    let plan = FgtPlan::build(&x, 0.5, 1e-10, FgtOptions::default()).unwrap();
    let got = plan.apply_adjoint(&y, &w).unwrap();
    let want = gauss_matvec_direct(&y, &x, 0.5, &w).unwrap();
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn block_apply_equals_columnwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = cloud(500, 2, 1.0, &mut rng);
    let y = cloud(300, 2, 1.0, &mut rng);
    let w = DMatrix::from_fn(500, 4, |_, _| rng.random::<f64>() - 0.5);
    let plan = FgtPlan::build(&x, 0.3, 1e-9, fast()).unwrap();
    let block = plan.apply_block(&y, &w).unwrap();
    assert_eq!(block.shape(), (300, 4));
    for c in 0..4 {
        let col: Vec<f64> = w.column(c).iter().copied().collect();
        let want = gauss_matvec_direct(&x, &y, 0.3, &col).unwrap();
        for (j, b) in want.iter().enumerate() {
            assert!((block[(j, c)] - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn rejects_bad_input() {
    let x = PointSet::new(vec![0.0, 1.0, 2.0], 1).unwrap();
    let y2 = PointSet::new(vec![0.0, 1.0], 2).unwrap();
    assert!(FgtPlan::build(&x, 0.0, 1e-6, FgtOptions::default()).is_err());
    assert!(FgtPlan::build(&x, 1.0, -1.0, FgtOptions::default()).is_err());
    let plan = FgtPlan::build(&x, 1.0, 1e-6, FgtOptions::default()).unwrap();
    assert!(plan.apply(&y2, &[1.0, 1.0, 1.0]).is_err());
    assert!(plan.apply(&x, &[1.0, 1.0]).is_err());
    assert!(plan.apply(&x, &[1.0, f64::NAN, 1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_in_weights(seed in 0u64..1000, a in -3.0f64..3.0, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(200, d, 2.0, &mut rng);
        let q1: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let q2: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let plan = FgtPlan::build(&x, 0.5, 1e-10, fast()).unwrap();
        let mix: Vec<f64> = q1.iter().zip(&q2).map(|(u, v)| a * u + v).collect();
        let lhs = plan.apply(&x, &mix).unwrap();
        let r1 = plan.apply(&x, &q1).unwrap();
        let r2 = plan.apply(&x, &q2).unwrap();
        for j in 0..200 {
            prop_assert!((lhs[j] - (a * r1[j] + r2[j])).abs() <= 1e-9 * (1.0 + a.abs()) * 4.0);
        }
    }

    #[test]
    fn error_bounded_by_requested_precision(seed in 0u64..1000, eps in 0.1f64..2.0, exp in 3i32..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cloud(250, 2, 1.5, &mut rng);
        let y = cloud(60, 2, 1.5, &mut rng);
        let q: Vec<f64> = (0..250).map(|_| rng.random::<f64>()).collect();
        let delta = 10f64.powi(-exp);
        let plan = FgtPlan::build(&x, eps, delta, fast()).unwrap();
        let want = gauss_matvec_direct(&x, &y, eps, &q).unwrap();
        for (a, b) in plan.apply(&y, &q).unwrap().iter().zip(&want) {
            prop_assert!((a - b).abs() <= delta);
        }
    }
}
