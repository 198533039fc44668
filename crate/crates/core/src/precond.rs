//! Nyström preconditioner `(K~ + beta I)^-1` with `K~ = C U C^T`,
//! `C = K[:, S]` and `U = K_SS^-1`, applied through the Woodbury identity.
//!
//! The `k x k` system is kept in the symmetric form
//! `M = beta I + U^{1/2} C^T C U^{1/2}`, factored as `M = F F^T` with `F`
//! lower triangular, so that
//!
//! ```text
//! (K~ + beta I)^-1 x = (x - C U^{1/2} M^-1 U^{1/2} C^T x) / beta.
//! ```

use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{check_len, check_positive, KrrError, Result};
use crate::fgt::{FgtOptions, FgtPlan};
use crate::kernel::kernel_submatrix;
use crate::operator::{max_abs, LinearOperator};
use crate::points::PointSet;

/// Per-entry FGT precision of the apply path, relative to the largest
/// input entry.
pub const APPLY_DELTA: f64 = 1e-8;

const FORMAT_NAME: &str = "krr-nystrom-preconditioner";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct NystromPreconditioner {
    anchors: AnchorSet,
    u_half: DMatrix<f64>,
    chol: DMatrix<f64>,
    beta: f64,
    epsilon: f64,
    delta: f64,
    clip_count: usize,
    data: PointSet,
    anchor_points: PointSet,
    /// Plan on the data, applied to the anchors: `C^T x`.
    plan_data: FgtPlan,
    /// Plan on the anchors, applied to the data: `C z`.
    plan_anchors: FgtPlan,
}

impl NystromPreconditioner {
    /// Builds the preconditioner with the default apply precision.
    pub fn build(x: &PointSet, anchors: &AnchorSet, beta: f64, epsilon: f64) -> Result<Self> {
        Self::build_with_precision(x, anchors, beta, epsilon, APPLY_DELTA)
    }

    pub fn build_with_precision(
        x: &PointSet,
        anchors: &AnchorSet,
        beta: f64,
        epsilon: f64,
        delta: f64,
    ) -> Result<Self> {
        check_positive("beta", beta)?;
        check_positive("epsilon", epsilon)?;
        check_positive("delta", delta)?;
        anchors.validate(x.len())?;
        if anchors.is_empty() {
            return Err(KrrError::InvalidParameter("empty anchor set".into()));
        }
        let k = anchors.len();
        let kss = kernel_submatrix(x, &anchors.indices, &anchors.indices, epsilon)?;
        let (u_half, clip_count) = inverse_sqrt(kss)?;
        if clip_count > k / 4 {
            return Err(KrrError::DegenerateAnchors {
                clipped: clip_count,
                k,
            });
        }
        if clip_count > 0 {
            log::warn!(
                "{clip_count} of {k} anchor-block eigenvalues clipped (near-duplicate anchors)"
            );
        }

        let anchor_points = x.select(&anchors.indices)?;
        let plan_data = FgtPlan::build(x, epsilon, delta, FgtOptions::default())?;
        let plan_anchors = FgtPlan::build(&anchor_points, epsilon, delta, FgtOptions::default())?;

        // Y = C U^{1/2} (n x k), then C^T Y (k x k).
        let y = plan_anchors.apply_block_with_precision(
            x,
            &u_half,
            &column_precision(&u_half, delta),
        )?;
        let cty = plan_data.apply_block_with_precision(
            &anchor_points,
            &y,
            &column_precision(&y, delta),
        )?;
        let mut m = &u_half * cty;
        symmetrize(&mut m);
        for i in 0..k {
            m[(i, i)] += beta;
        }
        let chol = match Cholesky::new(m.clone()) {
            Some(c) => c.l(),
            None => {
                let eig = m.symmetric_eigenvalues();
                return Err(KrrError::NumericalBreakdown(format!(
                    "Cholesky of the k x k Woodbury system failed (eigenvalue range {:.3e} .. {:.3e})",
                    eig.min(),
                    eig.max()
                )));
            }
        };

        Ok(Self {
            anchors: anchors.clone(),
            u_half,
            chol,
            beta,
            epsilon,
            delta,
            clip_count,
            data: x.clone(),
            anchor_points,
            plan_data,
            plan_anchors,
        })
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    /// `U^{1/2} = K_SS^{-1/2}`.
    pub fn u_half(&self) -> &DMatrix<f64> {
        &self.u_half
    }

    /// Lower-triangular `F` with `F F^T = beta I + U^{1/2} C^T C U^{1/2}`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn clip_count(&self) -> usize {
        self.clip_count
    }

    /// `(K~ + beta I)^-1 x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("preconditioner input", self.data.len(), x.len())?;
        let scale = max_abs(x);
        if scale == 0.0 {
            return Ok(vec![0.0; x.len()]);
        }
        let ctx =
            self.plan_data
                .apply_with_precision(&self.anchor_points, x, self.delta * scale)?;
        let y = &self.u_half * DVector::from_vec(ctx);
        let w = self.solve_m(y);
        let z = &self.u_half * w;
        let cz = self.plan_anchors.apply_with_precision(
            &self.data,
            z.as_slice(),
            self.delta * max_abs(z.as_slice()),
        )?;
        let inv_beta = 1.0 / self.beta;
        Ok(x.iter().zip(&cz).map(|(a, b)| (a - b) * inv_beta).collect())
    }

    /// Solves `F F^T w = y` by forward and back substitution.
    fn solve_m(&self, mut y: DVector<f64>) -> DVector<f64> {
        let f = &self.chol;
        let k = f.nrows();
        for i in 0..k {
            let mut s = y[i];
            for j in 0..i {
                s -= f[(i, j)] * y[j];
            }
            y[i] = s / f[(i, i)];
        }
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in i + 1..k {
                s -= f[(j, i)] * y[j];
            }
            y[i] = s / f[(i, i)];
        }
        y
    }

    /// Writes anchors, `U^{1/2}`, `F` and parameters as versioned JSON.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let k = self.anchors.len();
        let file = SavedPreconditioner {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            n: self.data.len(),
            d: self.data.dim(),
            beta: self.beta,
            epsilon: self.epsilon,
            delta: self.delta,
            clip_count: self.clip_count,
            anchors: self.anchors.clone(),
            u_half: row_major(&self.u_half),
            chol: row_major(&self.chol),
            k,
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    /// Restores a saved preconditioner for the dataset it was built on.
    /// The FGT plans are rebuilt; nothing else is recomputed.
    pub fn load<R: Read>(reader: R, x: &PointSet) -> Result<Self> {
        let file: SavedPreconditioner = serde_json::from_reader(reader)?;
        if file.format != FORMAT_NAME {
            return Err(KrrError::Format(format!(
                "unexpected format tag '{}'",
                file.format
            )));
        }
        if file.version != FORMAT_VERSION {
            return Err(KrrError::Format(format!(
                "unsupported preconditioner version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        check_len("saved dataset size", file.n, x.len())?;
        check_len("saved dataset dimension", file.d, x.dim())?;
        check_len("saved anchor count", file.k, file.anchors.len())?;
        check_len("saved U^{1/2} entries", file.k * file.k, file.u_half.len())?;
        check_len("saved factor entries", file.k * file.k, file.chol.len())?;
        file.anchors.validate(x.len())?;
        let anchor_points = x.select(&file.anchors.indices)?;
        let plan_data = FgtPlan::build(x, file.epsilon, file.delta, FgtOptions::default())?;
        let plan_anchors = FgtPlan::build(
            &anchor_points,
            file.epsilon,
            file.delta,
            FgtOptions::default(),
        )?;
        Ok(Self {
            u_half: DMatrix::from_row_slice(file.k, file.k, &file.u_half),
            chol: DMatrix::from_row_slice(file.k, file.k, &file.chol),
            anchors: file.anchors,
            beta: file.beta,
            epsilon: file.epsilon,
            delta: file.delta,
            clip_count: file.clip_count,
            data: x.clone(),
            anchor_points,
            plan_data,
            plan_anchors,
        })
    }
}

impl LinearOperator for NystromPreconditioner {
    fn dim(&self) -> usize {
        self.data.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        NystromPreconditioner::apply(self, v)
    }
}

#[derive(Serialize, Deserialize)]
struct SavedPreconditioner {
    format: String,
    version: u32,
    n: usize,
    d: usize,
    k: usize,
    beta: f64,
    epsilon: f64,
    delta: f64,
    clip_count: usize,
    anchors: AnchorSet,
    u_half: Vec<f64>,
    chol: Vec<f64>,
}

fn column_precision(m: &DMatrix<f64>, delta: f64) -> Vec<f64> {
    m.column_iter()
        .map(|c| (delta * c.amax()).max(f64::MIN_POSITIVE))
        .collect()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in i + 1..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `A^{-1/2}` for symmetric PSD `A`, with eigenvalues below
/// `tau = k * eps * lambda_max` raised to `tau`. Returns the count raised.
pub fn inverse_sqrt(a: DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let k = a.nrows();
    let eig = SymmetricEigen::new(a);
    let lambda_max = eig.eigenvalues.max();
    if !(lambda_max > 0.0) {
        return Err(KrrError::DegenerateAnchors { clipped: k, k });
    }
    let tau = k as f64 * f64::EPSILON * lambda_max;
    let mut clipped = 0;
    let scales: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < tau {
                clipped += 1;
                1.0 / tau.sqrt()
            } else {
                1.0 / l.sqrt()
            }
        })
        .collect();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let mut out = scaled * v.transpose();
    symmetrize(&mut out);
    Ok((out, clipped))
}
