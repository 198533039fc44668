//! Times the fast Gauss transform against the double loop on uniform data.
//!
//! cargo run --release -p krr-core --example fgt_scaling -- [d] [epsilon] [delta]

use std::time::Instant;

use krr_core::fgt::{ApplyPolicy, FgtOptions, FgtPlan};
use krr_core::kernel::gauss_matvec_direct;
use krr_core::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d: usize = args.get(1).map_or(3, |s| s.parse().unwrap());
    let eps: f64 = args.get(2).map_or(0.5, |s| s.parse().unwrap());
    let delta: f64 = args.get(3).map_or(1e-6, |s| s.parse().unwrap());
    let max_clusters: usize = args.get(4).map_or(1024, |s| s.parse().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2000usize, 8000, 32000] {
        let x = PointSet::new((0..n * d).map(|_| rng.random::<f64>()).collect(), d).unwrap();
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let opts = FgtOptions {
            policy: ApplyPolicy::Fast,
            max_clusters,
            ..Default::default()
        };
        let t = Instant::now();
        let plan = FgtPlan::build(&x, eps, delta, opts).unwrap();
        let build = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let fast = plan.apply(&x, &q).unwrap();
        let tf = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let direct = gauss_matvec_direct(&x, &x, eps, &q).unwrap();
        let td = t.elapsed().as_secs_f64();
        let err = fast
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "n={n:6} clusters={:4} degrees={:?} build={build:.3}s fast={tf:.3}s direct={td:.3}s max_err={err:.2e}",
            plan.num_clusters(),
            plan.expansion_degrees().iter().flatten().max(),
        );
    }
}
