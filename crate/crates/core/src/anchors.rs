//! Anchor point selection for the Nyström basis.
//!
//! The default is a randomized interpolative decomposition: sketch the kernel
//! matrix with `l` Gaussian test vectors, `Y = Omega K`, and keep the first `k`
//! pivots of a column-pivoted QR of the `l x n` sketch. Uniform sampling and
//! farthest-point sampling are provided for comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, KrrError, Result};
use crate::fgt::FgtOptions;
use crate::fgt::FgtPlan;
use crate::linalg::pivoted_qr;
use crate::points::{sq_dist, PointSet};

/// Per-entry FGT precision used for the sketch.
pub const SKETCH_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMethod {
    Id,
    Random,
    Fps,
}

impl fmt::Display for AnchorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorMethod::Id => "id",
            AnchorMethod::Random => "random",
            AnchorMethod::Fps => "fps",
        })
    }
}

impl FromStr for AnchorMethod {
    type Err = KrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "id" => Ok(AnchorMethod::Id),
            "random" => Ok(AnchorMethod::Random),
            "fps" => Ok(AnchorMethod::Fps),
            other => Err(KrrError::InvalidParameter(format!(
                "unknown sampler '{other}' (expected id, random or fps)"
            ))),
        }
    }
}

/// Ordered anchor indices into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub indices: Vec<usize>,
    pub method: AnchorMethod,
    pub seed: u64,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks that the indices are distinct and below `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in &self.indices {
            if i >= n {
                return Err(KrrError::IndexOutOfRange { index: i, len: n });
            }
            if seen[i] {
                return Err(KrrError::InvalidParameter(format!("anchor {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Sketch size and seed for [`select_anchors_id`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub l: usize,
    pub seed: u64,
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(KrrError::InvalidParameter(format!(
            "rank k = {k} must satisfy 1 <= k <= n = {n}"
        )));
    }
    Ok(())
}

/// Randomized interpolative decomposition.
///
/// `delta` is the per-entry FGT precision for the sketch, applied relative to
/// the largest test-vector entry; [`SKETCH_DELTA`] is the usual choice.
pub fn select_anchors_id(
    x: &PointSet,
    k: usize,
    cfg: SketchConfig,
    epsilon: f64,
    delta: f64,
) -> Result<AnchorSet> {
    let n = x.len();
    check_k(k, n)?;
    check_positive("epsilon", epsilon)?;
    check_positive("delta", delta)?;
    if cfg.l < k || cfg.l > n {
        return Err(KrrError::InvalidParameter(format!(
            "sketch size l = {} must satisfy k = {k} <= l <= n = {n}",
            cfg.l
        )));
    }
    let sketch = sketch_kernel(x, cfg, epsilon, delta)?;
    let qr = pivoted_qr(sketch, k)?;
    Ok(AnchorSet {
        indices: qr.pivots,
        method: AnchorMethod::Id,
        seed: cfg.seed,
    })
}

/// `Y = Omega K` with standard normal `Omega` (`l x n`). `K` is symmetric,
/// so `Y^T = K Omega^T`: one block Gauss transform with `l` weight columns.
pub fn sketch_kernel(
    x: &PointSet,
    cfg: SketchConfig,
    epsilon: f64,
    delta: f64,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut omega_t = DMatrix::<f64>::zeros(n, cfg.l);
    for i in 0..cfg.l {
        for j in 0..n {
            omega_t[(j, i)] = rng.sample(StandardNormal);
        }
    }
    let deltas: Vec<f64> = omega_t
        .column_iter()
        .map(|c| (delta * c.amax()).max(f64::MIN_POSITIVE))
        .collect();
    let plan = FgtPlan::build(x, epsilon, delta, FgtOptions::default())?;
    Ok(plan
        .apply_block_with_precision(x, &omega_t, &deltas)?
        .transpose())
}

/// `k` distinct indices drawn uniformly.
pub fn select_anchors_random(x: &PointSet, k: usize, seed: u64) -> Result<AnchorSet> {
    check_k(k, x.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, x.len(), k).into_vec();
    Ok(AnchorSet {
        indices,
        method: AnchorMethod::Random,
        seed,
    })
}

/// Greedy max-min traversal from a seeded random start. Ties go to the lowest
/// index; once only duplicates of chosen points remain, the lowest unchosen
/// index is taken.
pub fn select_anchors_fps(x: &PointSet, k: usize, seed: u64) -> Result<AnchorSet> {
    let n = x.len();
    check_k(k, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    let mut indices = Vec::with_capacity(k);
    // Chosen points are marked with -1 so they can never win again.
    let mut nearest = vec![f64::INFINITY; n];
    let mut next = start;
    for _ in 0..k {
        indices.push(next);
        nearest[next] = -1.0;
        let c = x.point(next);
        let mut best = (usize::MAX, -1.0);
        for (i, p) in x.iter().enumerate() {
            if nearest[i] < 0.0 {
                continue;
            }
            let d2 = sq_dist(p, c);
            if d2 < nearest[i] {
                nearest[i] = d2;
            }
            if nearest[i] > best.1 {
                best = (i, nearest[i]);
            }
        }
        next = best.0;
    }
    Ok(AnchorSet {
        indices,
        method: AnchorMethod::Fps,
        seed,
    })
}

/// Dispatches on `method`; `cfg.seed` seeds every method.
pub fn select_anchors(
    x: &PointSet,
    k: usize,
    method: AnchorMethod,
    cfg: SketchConfig,
    epsilon: f64,
) -> Result<AnchorSet> {
    match method {
        AnchorMethod::Id => select_anchors_id(x, k, cfg, epsilon, SKETCH_DELTA),
        AnchorMethod::Random => select_anchors_random(x, k, cfg.seed),
        AnchorMethod::Fps => select_anchors_fps(x, k, cfg.seed),
    }
}
