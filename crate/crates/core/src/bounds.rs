//! Rank and condition-number bounds for Nyström-preconditioned Gaussian
//! kernel systems.
//!
//! * `id_error_factor(n, k) = sqrt(1 + k (n - k))`, the deterministic
//!   interpolative-decomposition error factor.
//! * `condition_bound = 1 + M lambda_{k+1} / beta` bounds
//!   `cond[(K~ + beta I)^-1 (K + beta I)]` whenever `|K - K~| <= M sigma_{k+1}`.
//!   For anchors from an interpolative decomposition `M = 2 id_error_factor`.
//! * `gamma = (2/pi) sqrt(ln(1/delta) / epsilon)` and the box product
//!   `prod_i (floor(gamma q_i) + 1)` bound the numerical rank of a Gaussian
//!   kernel matrix over data inside a box with side lengths `q_i`.
//! * `required_rank` inverts the two for a target condition number `xi`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, KrrError, Result};
use crate::kernel::gauss;
use crate::operator::{dot, LinearOperator};
use crate::points::PointSet;

/// Spectrum of a symmetric positive semidefinite matrix, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    values: Vec<f64>,
}

impl SpectralSummary {
    /// Sorts the values in descending order. Negative values within
    /// `1e-10 * max` are clamped to zero; anything more negative is rejected.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(KrrError::EmptySpectrum);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KrrError::InvalidParameter(
                "non-finite spectral value".into(),
            ));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let top = values[0].max(0.0);
        for v in &mut values {
            if *v < 0.0 {
                if *v < -1e-10 * top {
                    return Err(KrrError::InvalidParameter(format!(
                        "spectral value {v} is negative beyond tolerance"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(Self { values })
    }

    /// Eigenvalues of a dense symmetric PSD matrix (dense eigensolver).
    pub fn from_symmetric(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(KrrError::EmptySpectrum);
        }
        Self::from_values(m.clone().symmetric_eigenvalues().iter().copied().collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `lambda_j`, one-based as in the usual notation.
    pub fn lambda(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }
}

/// Eigenvalues of the dense Gaussian kernel matrix on `x`.
pub fn kernel_spectrum(x: &PointSet, epsilon: f64) -> Result<SpectralSummary> {
    check_positive("epsilon", epsilon)?;
    let n = x.len();
    let mut k = faer::Mat::<f64>::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        for i in j + 1..n {
            k[(i, j)] = gauss(x.point(i), x.point(j), epsilon);
        }
    }
    let values = k
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| KrrError::NumericalBreakdown(format!("dense eigensolver failed: {e:?}")))?;
    SpectralSummary::from_values(values)
}

/// Inputs of the required-rank formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankBoundInputs {
    pub box_lengths: Vec<f64>,
    pub epsilon: f64,
    pub beta: f64,
    /// Target condition number, `> 1`.
    pub xi: f64,
    /// Supremum of the approximation error factor over the ranks considered.
    pub m_bar: f64,
    pub n: usize,
}

/// A rank given by a product formula, saturated to `usize`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEstimate {
    pub rank: usize,
    /// The bound exceeds `n`, so it carries no information.
    pub vacuous: bool,
}

/// `sqrt(1 + k (n - k))`.
pub fn id_error_factor(n: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(KrrError::InvalidParameter(format!(
            "rank k = {k} must satisfy 1 <= k <= n = {n}"
        )));
    }
    let (n, k) = (n as f64, k as f64);
    Ok((1.0 + k * (n - k)).sqrt())
}

/// `1 + m * lambda_k1 / beta`.
pub fn condition_bound(lambda_k1: f64, m: f64, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    check_positive("M", m)?;
    if !(lambda_k1 >= 0.0) || !lambda_k1.is_finite() {
        return Err(KrrError::InvalidParameter(format!(
            "lambda_(k+1) must be a nonnegative finite number, got {lambda_k1}"
        )));
    }
    Ok(1.0 + m * lambda_k1 / beta)
}

/// `(2/pi) sqrt(ln(1/delta) / epsilon)`.
pub fn gamma(epsilon: f64, delta: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(KrrError::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(std::f64::consts::FRAC_2_PI * ((1.0 / delta).ln() / epsilon).sqrt())
}

/// Number of singular values with `sigma_j / sigma_1 >= delta`.
pub fn numerical_rank(summary: &SpectralSummary, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(KrrError::InvalidParameter(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let values = summary.values();
    let top = values[0];
    Ok(values.iter().filter(|&&s| s >= delta * top).count())
}

fn box_product(rate: f64, box_lengths: &[f64]) -> Result<f64> {
    if box_lengths.is_empty() {
        return Err(KrrError::InvalidParameter("empty box".into()));
    }
    let mut prod = 1.0f64;
    for &q in box_lengths {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(KrrError::InvalidParameter(format!(
                "box length must be nonnegative and finite, got {q}"
            )));
        }
        prod *= (rate * q).floor() + 1.0;
    }
    Ok(prod)
}

fn saturate(x: f64) -> usize {
    if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        x as usize
    }
}

/// `prod_i (floor(gamma q_i) + 1)` with `gamma = gamma(epsilon, delta)`.
pub fn numerical_rank_bound(box_lengths: &[f64], epsilon: f64, delta: f64) -> Result<usize> {
    let g = gamma(epsilon, delta)?;
    box_product(g, box_lengths).map(saturate)
}

/// Smallest rank `k` for which the condition bound guarantees `cond <= xi`:
/// `prod_i (floor((2 q_i / pi) sqrt(ln(m_bar n / (beta (xi - 1))) / epsilon)) + 1)`.
pub fn required_rank(inp: &RankBoundInputs) -> Result<RankEstimate> {
    check_positive("epsilon", inp.epsilon)?;
    check_positive("beta", inp.beta)?;
    check_positive("m_bar", inp.m_bar)?;
    if !(inp.xi > 1.0) {
        return Err(KrrError::InvalidParameter(format!(
            "target condition number xi must exceed 1, got {}",
            inp.xi
        )));
    }
    if inp.n == 0 {
        return Err(KrrError::InvalidParameter("n must be >= 1".into()));
    }
    let argument = inp.m_bar * inp.n as f64 / (inp.beta * (inp.xi - 1.0));
    if !(argument > 1.0) {
        return Err(KrrError::TargetAlreadyMet { argument });
    }
    let rate = std::f64::consts::FRAC_2_PI * (argument.ln() / inp.epsilon).sqrt();
    let prod = box_product(rate, &inp.box_lengths)?;
    Ok(RankEstimate {
        rank: saturate(prod),
        vacuous: prod > inp.n as f64,
    })
}

/// Lanczos estimate of the spectrum of a preconditioned operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Lanczos steps actually taken.
    pub steps: usize,
    /// The Krylov space became invariant (or lost definiteness) early; the
    /// estimate comes from the steps completed before that.
    pub breakdown: bool,
}

impl ConditionEstimate {
    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Estimates `cond(P A)` for SPD `A` and SPD `P` with `probes` Lanczos steps.
///
/// The iteration runs on `P^{1/2} A P^{1/2}` without forming `P^{1/2}`: the
/// Lanczos vectors are kept in pairs `(v, u = P v)` and orthogonalized in
/// the `P` inner product, with full reorthogonalization. Extreme Ritz values
/// lie inside the true spectrum, so the ratio never overestimates.
pub fn estimate_condition(
    a: &dyn LinearOperator,
    p: &dyn LinearOperator,
    n: usize,
    probes: usize,
    seed: u64,
) -> Result<ConditionEstimate> {
    if probes == 0 {
        return Err(KrrError::InvalidParameter(
            "probes must be at least 1".into(),
        ));
    }
    if a.dim() != n || p.dim() != n {
        return Err(KrrError::DimensionMismatch {
            context: "condition estimate operators",
            expected: n,
            found: if a.dim() != n { a.dim() } else { p.dim() },
        });
    }
    let steps = probes.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut breakdown = false;
    let mut z = p.apply(&w)?;
    let mut wz = dot(&w, &z);
    if !(wz > 0.0) {
        return Err(KrrError::NumericalBreakdown(
            "preconditioner is not positive definite on the starting vector".into(),
        ));
    }
    for j in 0..steps {
        let b = wz.sqrt();
        if j > 0 {
            betas.push(b);
        }
        let v: Vec<f64> = w.iter().map(|t| t / b).collect();
        let u: Vec<f64> = z.iter().map(|t| t / b).collect();
        w = a.apply(&u)?;
        let alpha = dot(&u, &w);
        alphas.push(alpha);
        vs.push(v);
        us.push(u);
        // Two passes of Gram-Schmidt against every previous pair.
        for _ in 0..2 {
            for (vi, ui) in vs.iter().zip(&us) {
                let c = dot(&w, ui);
                for (wt, vt) in w.iter_mut().zip(vi) {
                    *wt -= c * vt;
                }
            }
        }
        if j + 1 == steps {
            break;
        }
        z = p.apply(&w)?;
        wz = dot(&w, &z);
        // Relative to the current Ritz scale, so a converged space stops.
        let ritz = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if !(wz > (1e-14 * ritz).powi(2)) {
            breakdown = true;
            break;
        }
    }
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        log::warn!("Lanczos produced a non-positive Ritz value {lo:.3e}; operator not SPD");
        breakdown = true;
    }
    Ok(ConditionEstimate {
        lambda_min: lo,
        lambda_max: hi,
        steps: m,
        breakdown,
    })
}
