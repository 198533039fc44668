//! Preconditioned conjugate gradient for `(K + beta I) alpha = b`.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Col, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::anchors::{select_anchors, AnchorMethod, AnchorSet, SketchConfig};
use crate::bounds::{estimate_condition, ConditionEstimate};
use crate::error::{check_len, check_positive, KrrError, Result};
use crate::fgt::{FgtOptions, FgtPlan};
use crate::kernel::gauss;
use crate::operator::{dot, max_abs, norm, Identity, LinearOperator};
use crate::points::{KernelConfig, PointSet};
use crate::precond::NystromPreconditioner;

/// Per-entry FGT precision of the solve-path matvec, relative to the
/// largest input entry.
pub const DEFAULT_FGT_DELTA: f64 = 1e-10;

/// Largest `n` for which a dense reference solution is formed.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    Nystrom,
    None,
}

impl std::fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PreconditionerKind::Nystrom => "nystrom",
            PreconditionerKind::None => "none",
        })
    }
}

impl std::str::FromStr for PreconditionerKind {
    type Err = KrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nystrom" => Ok(PreconditionerKind::Nystrom),
            "none" => Ok(PreconditionerKind::None),
            other => Err(KrrError::InvalidParameter(format!(
                "unknown preconditioner '{other}' (expected nystrom or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Records `|alpha* - alpha_i|_{K + beta I}` against a dense solve.
    pub track_energy_norm: bool,
    pub preconditioner: PreconditionerKind,
    pub record_timings: bool,
    pub sampler: AnchorMethod,
    /// Relative per-entry precision of the operator matvec.
    pub fgt_delta: f64,
    pub dense_cap: usize,
    /// Lanczos steps for a condition estimate after the solve; 0 skips it.
    pub condition_probes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            rel_tol: 1e-6,
            track_energy_norm: false,
            preconditioner: PreconditionerKind::Nystrom,
            record_timings: true,
            sampler: AnchorMethod::Id,
            fgt_delta: DEFAULT_FGT_DELTA,
            dense_cap: DEFAULT_DENSE_CAP,
            condition_probes: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(KrrError::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        check_positive("rel_tol", self.rel_tol)?;
        check_positive("fgt_delta", self.fgt_delta)
    }
}

/// Wall-clock seconds per phase. All zero when timings are not recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub anchor_selection: f64,
    pub build: f64,
    pub iterations: f64,
    /// Dense reference solve for energy tracking; not part of the method.
    pub reference: f64,
    /// Condition estimate after the solve; not part of the method.
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `|r_i|` for `i = 0..=iterations`, from the CG recurrence.
    pub residual_history: Vec<f64>,
    pub energy_history: Option<Vec<f64>>,
    pub wall_times: PhaseTimes,
    /// Seconds since the start of the solve (reference solve excluded) at
    /// which each residual in `residual_history` was available.
    pub cumulative_seconds: Vec<f64>,
    pub anchors: Option<AnchorSet>,
    pub clip_count: usize,
    /// Lanczos estimate for the preconditioned operator, when requested.
    pub condition: Option<ConditionEstimate>,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        let r0 = self.residual_history[0];
        let last = *self.residual_history.last().unwrap();
        if r0 == 0.0 {
            0.0
        } else {
            last / r0
        }
    }
}

/// `v -> (K + beta I) v` through a fast Gauss transform.
#[derive(Debug, Clone)]
pub struct KrrOperator {
    x: PointSet,
    beta: f64,
    delta: f64,
    plan: FgtPlan,
}

impl KrrOperator {
    pub fn new(x: &PointSet, cfg: KernelConfig, delta: f64) -> Result<Self> {
        check_positive("beta", cfg.beta)?;
        let plan = FgtPlan::build(x, cfg.epsilon, delta, FgtOptions::default())?;
        Ok(Self {
            x: x.clone(),
            beta: cfg.beta,
            delta,
            plan,
        })
    }

    pub fn plan(&self) -> &FgtPlan {
        &self.plan
    }
}

impl LinearOperator for KrrOperator {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("operator input", self.x.len(), v.len())?;
        let scale = max_abs(v);
        if scale == 0.0 {
            return Ok(vec![0.0; v.len()]);
        }
        let mut out = self
            .plan
            .apply_with_precision(&self.x, v, self.delta * scale)?;
        for (o, vi) in out.iter_mut().zip(v) {
            *o += self.beta * vi;
        }
        Ok(out)
    }
}

/// One-off `(K + beta I) v` at the default precision.
pub fn operator_matvec(x: &PointSet, cfg: KernelConfig, v: &[f64]) -> Result<Vec<f64>> {
    check_len("operator input", x.len(), v.len())?;
    KrrOperator::new(x, cfg, DEFAULT_FGT_DELTA)?.apply(v)
}

/// `sqrt(v^T (K + beta I) v)`, with small negative round-off clamped to 0.
pub fn energy_norm(x: &PointSet, cfg: KernelConfig, v: &[f64]) -> Result<f64> {
    let av = operator_matvec(x, cfg, v)?;
    Ok(dot(v, &av).max(0.0).sqrt())
}

/// `f(y) = sum_j k(x_j, y) alpha_j` for each query point `y`.
pub fn predict(
    x_train: &PointSet,
    alpha: &[f64],
    x_query: &PointSet,
    epsilon: f64,
) -> Result<Vec<f64>> {
    check_len("alpha", x_train.len(), alpha.len())?;
    check_len("query dimension", x_train.dim(), x_query.dim())?;
    let scale = max_abs(alpha);
    if scale == 0.0 {
        return Ok(vec![0.0; x_query.len()]);
    }
    let plan = FgtPlan::build(x_train, epsilon, DEFAULT_FGT_DELTA, FgtOptions::default())?;
    plan.apply_with_precision(x_query, alpha, DEFAULT_FGT_DELTA * scale)
}

/// Dense `A = K + beta I` with its exact solution, for error tracking.
pub struct DenseReference {
    a: Mat<f64>,
    alpha: Vec<f64>,
}

impl DenseReference {
    pub fn new(x: &PointSet, cfg: KernelConfig, b: &[f64], cap: usize) -> Result<Self> {
        let n = x.len();
        check_len("right-hand side", n, b.len())?;
        if n > cap {
            return Err(KrrError::DenseCapExceeded { n, cap });
        }
        let a = dense_system(x, cfg);
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| KrrError::NumericalBreakdown(format!("dense Cholesky failed: {e:?}")))?;
        let rhs = Col::<f64>::from_fn(n, |i| b[i]);
        let sol = llt.solve(&rhs);
        let alpha = (0..n).map(|i| sol[i]).collect();
        Ok(Self { a, alpha })
    }

    pub fn solution(&self) -> &[f64] {
        &self.alpha
    }

    /// `|alpha* - v|_A`.
    pub fn energy_error(&self, v: &[f64]) -> f64 {
        let n = self.alpha.len();
        let e = Col::<f64>::from_fn(n, |i| self.alpha[i] - v[i]);
        let ae = &self.a * &e;
        let q: f64 = (0..n).map(|i| e[i] * ae[i]).sum();
        q.max(0.0).sqrt()
    }
}

fn dense_system(x: &PointSet, cfg: KernelConfig) -> Mat<f64> {
    let n = x.len();
    let mut a = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        a[(j, j)] = 1.0 + cfg.beta;
        for i in j + 1..n {
            let v = gauss(x.point(i), x.point(j), cfg.epsilon);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Outcome of [`pcg`].
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

/// Preconditioned CG from a zero initial guess. `observe` is called with
/// the iterate after every step, including step 0.
pub fn pcg(
    a: &dyn LinearOperator,
    p: &dyn LinearOperator,
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<CgResult> {
    let n = a.dim();
    check_len("right-hand side", n, b.len())?;
    check_len("preconditioner dimension", n, p.dim())?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm(b);
    let mut history = vec![bnorm];
    observe(0, &x);
    if bnorm == 0.0 || bnorm <= rel_tol * bnorm {
        return Ok(CgResult {
            x,
            iterations: 0,
            converged: true,
            residual_history: history,
        });
    }
    let mut z = p.apply(&r)?;
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut converged = false;
    let mut it = 0;
    while it < max_iters {
        let q = a.apply(&dir)?;
        let curv = dot(&dir, &q);
        if !(curv > 0.0) || !(rz > 0.0) {
            return Err(KrrError::NumericalBreakdown(format!(
                "CG lost positive definiteness at iteration {it} (p^T A p = {curv:.3e}, r^T z = {rz:.3e})"
            )));
        }
        let step = rz / curv;
        for i in 0..n {
            x[i] += step * dir[i];
            r[i] -= step * q[i];
        }
        it += 1;
        let rn = norm(&r);
        history.push(rn);
        observe(it, &x);
        if rn <= rel_tol * bnorm {
            converged = true;
            break;
        }
        z = p.apply(&r)?;
        let rz_new = dot(&r, &z);
        let ratio = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + ratio * dir[i];
        }
    }
    Ok(CgResult {
        x,
        iterations: it,
        converged,
        residual_history: history,
    })
}

/// Selects anchors, builds the preconditioner and runs PCG.
///
/// With `PreconditionerKind::None` the same CG loop runs with the identity,
/// and `k` and `sketch` are ignored.
pub fn solve_krr(
    x: &PointSet,
    b: &[f64],
    cfg: KernelConfig,
    k: usize,
    sketch: SketchConfig,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let n = x.len();
    check_len("right-hand side", n, b.len())?;
    check_positive("epsilon", cfg.epsilon)?;
    check_positive("beta", cfg.beta)?;
    opts.validate()?;

    let mut times = PhaseTimes::default();
    let owned = if opts.track_energy_norm {
        let t = Instant::now();
        let r = DenseReference::new(x, cfg, b, opts.dense_cap)?;
        times.reference = t.elapsed().as_secs_f64();
        Some(r)
    } else {
        None
    };
    let mut report = solve_krr_with(x, b, cfg, k, sketch, opts, owned.as_ref())?;
    report.wall_times.reference = times.reference;
    Ok(report)
}

/// [`solve_krr`] with a caller-supplied dense reference, so several solves
/// of one system can share it. Energy errors are recorded whenever
/// `reference` is given; `opts.track_energy_norm` is not consulted.
pub fn solve_krr_with(
    x: &PointSet,
    b: &[f64],
    cfg: KernelConfig,
    k: usize,
    sketch: SketchConfig,
    opts: &SolveOptions,
    reference: Option<&DenseReference>,
) -> Result<SolveReport> {
    let n = x.len();
    check_len("right-hand side", n, b.len())?;
    check_positive("epsilon", cfg.epsilon)?;
    check_positive("beta", cfg.beta)?;
    opts.validate()?;
    if let Some(r) = reference {
        check_len("reference solution", n, r.solution().len())?;
    }
    let mut times = PhaseTimes::default();

    let start = Instant::now();
    let (anchors, precond) = match opts.preconditioner {
        PreconditionerKind::Nystrom => {
            let anchors = select_anchors(x, k, opts.sampler, sketch, cfg.epsilon)?;
            times.anchor_selection = start.elapsed().as_secs_f64();
            let t = Instant::now();
            let p = NystromPreconditioner::build(x, &anchors, cfg.beta, cfg.epsilon)?;
            times.build = t.elapsed().as_secs_f64();
            (Some(anchors), Some(p))
        }
        PreconditionerKind::None => (None, None),
    };
    let t = Instant::now();
    let op = KrrOperator::new(x, cfg, opts.fgt_delta)?;
    times.build += t.elapsed().as_secs_f64();

    let identity = Identity(n);
    let p: &dyn LinearOperator = match &precond {
        Some(p) => p,
        None => &identity,
    };
    let mut energy = reference.map(|_| Vec::new());
    let mut cumulative = Vec::new();
    let iter_start = Instant::now();
    let result = pcg(&op, p, b, opts.rel_tol, opts.max_iters, |_, xi| {
        cumulative.push(start.elapsed().as_secs_f64());
        if let (Some(r), Some(e)) = (reference, energy.as_mut()) {
            e.push(r.energy_error(xi));
        }
    })?;
    times.iterations = iter_start.elapsed().as_secs_f64();
    let condition = if opts.condition_probes > 0 {
        let t = Instant::now();
        let est = estimate_condition(&op, p, n, opts.condition_probes, sketch.seed)?;
        times.condition = t.elapsed().as_secs_f64();
        Some(est)
    } else {
        None
    };
    if !opts.record_timings {
        times = PhaseTimes::default();
        cumulative.iter_mut().for_each(|c| *c = 0.0);
    }
    if !result.converged {
        log::warn!(
            "CG stopped at max_iters = {} with relative residual {:.3e}",
            opts.max_iters,
            result.residual_history.last().unwrap() / result.residual_history[0]
        );
    }
    Ok(SolveReport {
        alpha: result.x,
        iterations: result.iterations,
        converged: result.converged,
        residual_history: result.residual_history,
        energy_history: energy,
        wall_times: times,
        cumulative_seconds: cumulative,
        clip_count: precond.as_ref().map_or(0, |p| p.clip_count()),
        condition,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scattered(n: usize, d: usize, seed: u64) -> PointSet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        PointSet::new((0..n * d).map(|_| rng.random::<f64>()).collect(), d).unwrap()
    }

    #[test]
    fn scalar_operator() {
        let x = PointSet::new(vec![0.3, -1.0], 2).unwrap();
        let cfg = KernelConfig::new(0.5, 0.25).unwrap();
        let out = operator_matvec(&x, cfg, &[2.0]).unwrap();
        assert!((out[0] - 2.5).abs() < 1e-12);
        assert!((energy_norm(&x, cfg, &[-3.0]).unwrap() - 3.0 * 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(operator_matvec(&x, cfg, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn recovers_constructed_solution() {
        let x = scattered(50, 2, 3);
        let cfg = KernelConfig::new(0.4, 0.1).unwrap();
        let ones = vec![1.0; 50];
        let b = crate::operator::LinearOperator::apply(
            &{
                let mut a = crate::kernel::dense_kernel(&x, cfg.epsilon).unwrap();
                for i in 0..50 {
                    a[(i, i)] += cfg.beta;
                }
                a
            },
            &ones,
        )
        .unwrap();
        for kind in [PreconditionerKind::None, PreconditionerKind::Nystrom] {
            let opts = SolveOptions {
                preconditioner: kind,
                rel_tol: 1e-10,
                ..Default::default()
            };
            let rep = solve_krr(&x, &b, cfg, 10, SketchConfig { l: 15, seed: 1 }, &opts).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.residual_history.len(), rep.iterations + 1);
            let err = rep
                .alpha
                .iter()
                .map(|a| (a - 1.0).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-6 * 50f64.sqrt(), "{kind}: err={err}");
        }
    }

    #[test]
    fn huge_ridge_converges_immediately() {
        let x = scattered(200, 3, 5);
        let cfg = KernelConfig::new(0.3, 1e6).unwrap();
        let b: Vec<f64> = (0..200).map(|i| (i as f64).cos()).collect();
        let opts = SolveOptions {
            preconditioner: PreconditionerKind::None,
            ..Default::default()
        };
        let rep = solve_krr(&x, &b, cfg, 1, SketchConfig { l: 1, seed: 0 }, &opts).unwrap();
        assert!(
            rep.converged && rep.iterations <= 3,
            "iterations={}",
            rep.iterations
        );
    }

    #[test]
    fn stops_at_max_iters_without_error() {
        let x = scattered(300, 2, 7);
        let cfg = KernelConfig::new(0.5, 1e-4).unwrap();
        let b = vec![1.0; 300];
        let opts = SolveOptions {
            preconditioner: PreconditionerKind::None,
            max_iters: 2,
            rel_tol: 1e-14,
            ..Default::default()
        };
        let rep = solve_krr(&x, &b, cfg, 1, SketchConfig { l: 1, seed: 0 }, &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert_eq!(rep.residual_history.len(), 3);
    }

    #[test]
    fn energy_tracking_respects_cap() {
        let x = scattered(40, 1, 1);
        let cfg = KernelConfig::new(0.3, 0.1).unwrap();
        let opts = SolveOptions {
            track_energy_norm: true,
            dense_cap: 39,
            ..Default::default()
        };
        let err = solve_krr(
            &x,
            &[1.0; 40],
            cfg,
            5,
            SketchConfig { l: 8, seed: 0 },
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, KrrError::DenseCapExceeded { n: 40, cap: 39 }));
    }

    #[test]
    fn predict_matches_dense_block() {
        let xt = scattered(200, 2, 11);
        let xq = scattered(50, 2, 12);
        let alpha: Vec<f64> = (0..200).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let f = predict(&xt, &alpha, &xq, 0.3).unwrap();
        let block: DMatrix<f64> = crate::kernel::kernel_block(&xt, &xq, 0.3).unwrap();
        let dense = block * nalgebra::DVector::from_vec(alpha);
        for (a, b) in f.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(predict(&xt, &[0.0; 200], &xq, 0.3).unwrap(), vec![0.0; 50]);
    }
}
