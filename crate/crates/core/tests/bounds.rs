use krr_core::bounds::{
    condition_bound, estimate_condition, gamma, id_error_factor, kernel_spectrum, numerical_rank,
    numerical_rank_bound, required_rank, RankBoundInputs, SpectralSummary,
};
use krr_core::kernel::dense_kernel;
use krr_core::operator::Identity;
use krr_core::PointSet;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_square_inputs(n: f64) -> RankBoundInputs {
    RankBoundInputs {
        box_lengths: vec![1.0, 1.0],
        epsilon: 1.0,
        beta: 1.0,
        xi: 2.0,
        m_bar: n / 2.0,
        n: n as usize,
    }
}

#[test]
fn gamma_reference_values() {
    // delta = beta (xi - 1) / (m_bar n) with m_bar = n / 2.
    assert!((gamma(1.0, 2.0 / 1e12).unwrap() - 3.3).abs() < 0.05);
    assert!((gamma(1.0, 2.0 / 1e16).unwrap() - 3.82).abs() < 0.05);
    assert_eq!(required_rank(&unit_square_inputs(1e6)).unwrap().rank, 16);
    assert_eq!(required_rank(&unit_square_inputs(1e8)).unwrap().rank, 16);
}

#[test]
fn closed_form_values() {
    assert_eq!(id_error_factor(10, 10).unwrap(), 1.0);
    assert_eq!(id_error_factor(5, 2).unwrap(), 7f64.sqrt());
    assert_eq!(condition_bound(0.5, 4.0, 2.0).unwrap(), 2.0);
    let g = gamma(0.25, (-4.0f64).exp()).unwrap();
    assert!((g - 4.0 * std::f64::consts::FRAC_2_PI).abs() < 1e-14);
    assert_eq!(
        numerical_rank_bound(&[1.0, 0.1], 0.25, (-4.0f64).exp()).unwrap(),
        3
    );
}

#[test]
fn argument_validation() {
    assert!(id_error_factor(5, 0).is_err());
    assert!(id_error_factor(5, 6).is_err());
    assert!(condition_bound(-1.0, 1.0, 1.0).is_err());
    assert!(condition_bound(1.0, 1.0, 0.0).is_err());
    assert!(gamma(1.0, 1.0).is_err());
    assert!(gamma(0.0, 0.5).is_err());
    let mut inp = unit_square_inputs(100.0);
    inp.xi = 1.0;
    assert!(required_rank(&inp).is_err());
    inp.xi = 1e9;
    assert!(required_rank(&inp).is_err());
    assert!(SpectralSummary::from_values(vec![]).is_err());
    assert!(SpectralSummary::from_values(vec![1.0, -0.5]).is_err());
}

#[test]
fn spectrum_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = PointSet::new((0..200).map(|_| rng.random::<f64>()).collect(), 2).unwrap();
    let s = kernel_spectrum(&x, 0.4).unwrap();
    let reference = SpectralSummary::from_symmetric(&dense_kernel(&x, 0.4).unwrap()).unwrap();
    for (a, b) in s.values().iter().zip(reference.values()) {
        assert!((a - b).abs() < 1e-10);
    }
    let trace: f64 = s.values().iter().sum();
    assert!((trace - 100.0).abs() < 1e-9);
    assert_eq!(numerical_rank(&s, 1.0).unwrap(), 1);
    assert_eq!(
        numerical_rank(&s, 1e-300).unwrap(),
        s.values().iter().filter(|&&v| v > 0.0).count()
    );
}

#[test]
fn lanczos_on_a_diagonal_operator() {
    let diag: Vec<f64> = (1..=50).map(|i| i as f64).collect();
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    let est = estimate_condition(&a, &Identity(50), 50, 50, 7).unwrap();
    assert!((est.condition() - 50.0).abs() < 1e-8, "{}", est.condition());
    let partial = estimate_condition(&a, &Identity(50), 50, 10, 7).unwrap();
    assert!(partial.condition() <= 50.0 + 1e-9);
    assert!(partial.condition() > 10.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gamma_monotone(eps in 0.05f64..5.0, d1 in 1e-12f64..0.5, f in 0.01f64..0.99) {
        let d2 = d1 * f;
        prop_assert!(gamma(eps, d2).unwrap() >= gamma(eps, d1).unwrap());
        prop_assert!(gamma(eps * 2.0, d1).unwrap() <= gamma(eps, d1).unwrap());
    }

    #[test]
    fn rank_bound_monotone_in_box(q in 0.0f64..10.0, extra in 0.0f64..5.0, eps in 0.1f64..3.0) {
        let small = numerical_rank_bound(&[q, q], eps, 1e-6).unwrap();
        let big = numerical_rank_bound(&[q + extra, q], eps, 1e-6).unwrap();
        prop_assert!(small >= 1 && big >= small);
    }

    #[test]
    fn condition_bound_at_least_one(l in 0.0f64..100.0, m in 1.0f64..1e4, beta in 1e-3f64..10.0) {
        let c = condition_bound(l, m, beta).unwrap();
        prop_assert!(c >= 1.0);
        prop_assert!(condition_bound(l * 2.0, m, beta).unwrap() >= c);
    }

    #[test]
    fn numerical_rank_monotone(seed in 0u64..200, a in 1e-12f64..1.0, f in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let s = SpectralSummary::from_values(values).unwrap();
        prop_assert!(numerical_rank(&s, a * f).unwrap() >= numerical_rank(&s, a).unwrap());
    }
}
