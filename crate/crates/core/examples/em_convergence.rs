//! Plain vs Nyström-preconditioned CG on the EM-field dataset.
//!
//! Usage: em_convergence [n] [epsilon] [beta] [k] [l]

use krr_core::anchors::SketchConfig;
use krr_core::datagen::gen_em_field;
use krr_core::pcg::{solve_krr, PreconditionerKind, SolveOptions};
use krr_core::KernelConfig;

fn main() -> krr_core::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let n = get(0, 10_000.0) as usize;
    let cfg = KernelConfig::new(get(1, 0.5), get(2, 0.1))?;
    let k = get(3, 50.0) as usize;
    let l = get(4, 60.0) as usize;
    let data = gen_em_field(n, 5, 1)?;
    for kind in [PreconditionerKind::None, PreconditionerKind::Nystrom] {
        let opts = SolveOptions {
            preconditioner: kind,
            max_iters: 2000,
            ..Default::default()
        };
        let rep = solve_krr(
            &data.positions,
            &data.potential,
            cfg,
            k,
            SketchConfig { l, seed: 2 },
            &opts,
        )?;
        println!(
            "{kind:>8}: iterations {:4} converged {} rel {:.2e} times {:?}",
            rep.iterations,
            rep.converged,
            rep.relative_residual(),
            rep.wall_times
        );
    }
    Ok(())
}
