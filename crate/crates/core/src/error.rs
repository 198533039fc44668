use thiserror::Error;

/// Errors produced by the solver stack.
#[derive(Debug, Error)]
pub enum KrrError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("precision unattainable: requested {requested:e}, best achievable {achievable:e}")]
    PrecisionUnattainable { requested: f64, achievable: f64 },

    #[error(
        "sketch rank deficient: only {found} of {requested} pivots above the noise floor; \
         try a larger oversampling l or a wider bandwidth epsilon"
    )]
    SketchRankDeficient { found: usize, requested: usize },

    #[error("anchor set degenerate: {clipped} of {k} eigenvalues of the anchor block clipped")]
    DegenerateAnchors { clipped: usize, k: usize },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("dense reference refused: n = {n} exceeds dense cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("target already met: log argument {argument} <= 1, any rank satisfies the bound")]
    TargetAlreadyMet { argument: f64 },

    #[error("empty spectrum")]
    EmptySpectrum,

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KrrError>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(KrrError::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(KrrError::InvalidParameter(format!(
            "{name} must be a positive finite number, got {value}"
        )));
    }
    Ok(())
}
