//! Direct evaluation of the Gaussian kernel `exp(-|x-y|^2 / epsilon^2)`.
//!
//! The direct O(MN) sum is the reference every fast path is checked against,
//! and it is what small dense blocks (the anchor-anchor block) use.

use nalgebra::DMatrix;

use crate::error::{check_len, check_positive, KrrError, Result};
use crate::points::{sq_dist, PointSet};

/// Exponents below this evaluate to exactly zero.
pub(crate) const LN_MIN_POSITIVE: f64 = -708.396_418_532_264_1;

/// `exp(-arg)` for `arg >= 0`, flushed to zero below the smallest normal.
#[inline]
pub(crate) fn exp_neg(arg: f64) -> f64 {
    if -arg < LN_MIN_POSITIVE {
        0.0
    } else {
        (-arg).exp()
    }
}

/// Kernel value between two points.
#[inline]
pub fn gauss(x: &[f64], y: &[f64], epsilon: f64) -> f64 {
    exp_neg(sq_dist(x, y) / (epsilon * epsilon))
}

fn check_dims(sources: &PointSet, targets: &PointSet) -> Result<()> {
    check_len("target dimension", sources.dim(), targets.dim())
}

/// Discrete Gauss transform by the double loop:
/// `out[j] = sum_i q[i] exp(-|y_j - x_i|^2 / epsilon^2)`.
pub fn gauss_matvec_direct(
    sources: &PointSet,
    targets: &PointSet,
    epsilon: f64,
    q: &[f64],
) -> Result<Vec<f64>> {
    check_positive("epsilon", epsilon)?;
    check_dims(sources, targets)?;
    check_len("weight vector", sources.len(), q.len())?;
    let inv = 1.0 / (epsilon * epsilon);
    Ok(targets
        .iter()
        .map(|y| direct_sum(sources.iter().zip(q), y, inv))
        .collect())
}

#[inline]
pub(crate) fn direct_sum<'a>(
    pairs: impl Iterator<Item = (&'a [f64], &'a f64)>,
    y: &[f64],
    inv_eps2: f64,
) -> f64 {
    let mut acc = 0.0;
    for (x, &w) in pairs {
        if w != 0.0 {
            acc += w * exp_neg(sq_dist(x, y) * inv_eps2);
        }
    }
    acc
}

/// Dense block `K[rows, cols]` of the kernel matrix on `x`.
///
/// When `rows == cols` the block is evaluated on the upper triangle and
/// mirrored, so it is exactly symmetric with an exact unit diagonal.
pub fn kernel_submatrix(
    x: &PointSet,
    rows: &[usize],
    cols: &[usize],
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    check_positive("epsilon", epsilon)?;
    for &i in rows.iter().chain(cols) {
        if i >= x.len() {
            return Err(KrrError::IndexOutOfRange {
                index: i,
                len: x.len(),
            });
        }
    }
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    if rows == cols {
        for (a, &i) in rows.iter().enumerate() {
            out[(a, a)] = 1.0;
            for (b, &j) in cols.iter().enumerate().skip(a + 1) {
                let v = gauss(x.point(i), x.point(j), epsilon);
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
    } else {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = gauss(x.point(i), x.point(j), epsilon);
            }
        }
    }
    Ok(out)
}

/// Dense kernel block between two point sets (`targets` rows, `sources` columns).
pub fn kernel_block(sources: &PointSet, targets: &PointSet, epsilon: f64) -> Result<DMatrix<f64>> {
    check_positive("epsilon", epsilon)?;
    check_dims(sources, targets)?;
    Ok(DMatrix::from_fn(targets.len(), sources.len(), |j, i| {
        gauss(targets.point(j), sources.point(i), epsilon)
    }))
}

/// Full dense kernel matrix; only for desk-scale reference computations.
pub fn dense_kernel(x: &PointSet, epsilon: f64) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..x.len()).collect();
    kernel_submatrix(x, &all, &all, epsilon)
}
