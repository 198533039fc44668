//! Column-pivoted Householder QR (Businger–Golub).

use nalgebra::DMatrix;

use crate::error::{KrrError, Result};

/// Result of a partial column-pivoted QR.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Column indices in pivot order, one per completed step.
    pub pivots: Vec<usize>,
    /// `|R_jj|` for each completed step; non-increasing up to rounding.
    pub r_diag: Vec<f64>,
}

/// Runs `steps` steps of column-pivoted QR on `a` (consumed as workspace).
///
/// At each step the remaining column with the largest residual norm is
/// chosen, ties going to the lowest original index. Residual norms are
/// downdated and recomputed when cancellation makes the downdate unreliable.
///
/// Fails with [`KrrError::SketchRankDeficient`] if the largest residual norm
/// falls to rounding level before `steps` pivots are found.
pub fn pivoted_qr(mut a: DMatrix<f64>, steps: usize) -> Result<PivotedQr> {
    let (m, n) = a.shape();
    if steps > m.min(n) {
        return Err(KrrError::InvalidParameter(format!(
            "{steps} pivots requested from a {m} x {n} matrix"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let mut reference = norms.clone();
    let top = norms.iter().cloned().fold(0.0, f64::max).sqrt();
    let floor = f64::EPSILON * (m as f64).sqrt() * top;

    let mut pivots = Vec::with_capacity(steps);
    let mut r_diag = Vec::with_capacity(steps);
    let mut v = vec![0.0; m];
    for j in 0..steps {
        let mut best = j;
        for c in j + 1..n {
            let better =
                norms[c] > norms[best] || (norms[c] == norms[best] && perm[c] < perm[best]);
            if better {
                best = c;
            }
        }
        if !(norms[best].sqrt() > floor) || top == 0.0 {
            return Err(KrrError::SketchRankDeficient {
                found: j,
                requested: steps,
            });
        }
        if best != j {
            a.swap_columns(j, best);
            perm.swap(j, best);
            norms.swap(j, best);
            reference.swap(j, best);
        }

        // Householder vector for column j, rows j..m.
        let x = a.view((j, j), (m - j, 1));
        let alpha = x.norm();
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let len = m - j;
        for (i, vi) in v[..len].iter_mut().enumerate() {
            *vi = x[i];
        }
        v[0] += sign * alpha;
        let vnorm2: f64 = v[..len].iter().map(|t| t * t).sum();
        a[(j, j)] = -sign * alpha;
        for i in j + 1..m {
            a[(i, j)] = 0.0;
        }
        if vnorm2 > 0.0 {
            let scale = 2.0 / vnorm2;
            for c in j + 1..n {
                let mut col = a.view_mut((j, c), (len, 1));
                let dot: f64 = (0..len).map(|i| v[i] * col[i]).sum();
                let f = scale * dot;
                for i in 0..len {
                    col[i] -= f * v[i];
                }
            }
        }
        pivots.push(perm[j]);
        r_diag.push(alpha);

        for c in j + 1..n {
            let r = a[(j, c)];
            norms[c] -= r * r;
            // Recompute when most of the norm has been removed, as the
            // downdate has lost its relative accuracy by then.
            if norms[c] < 1e-4 * reference[c] {
                norms[c] = a.view((j + 1, c), (m - j - 1, 1)).norm_squared();
                reference[c] = norms[c];
            }
        }
    }
    Ok(PivotedQr { pivots, r_diag })
}
