//! Matrix-free symmetric operators.

use crate::error::{check_len, Result};

/// A square linear map applied to vectors. The solver and the condition
/// estimator only ever need products.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// The identity, used as the "no preconditioner" choice.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("vector", self.0, v.len())?;
        Ok(v.to_vec())
    }
}

impl LinearOperator for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("vector", self.ncols(), v.len())?;
        let x = nalgebra::DVector::from_column_slice(v);
        Ok((self * x).as_slice().to_vec())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
