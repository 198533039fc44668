//! Truncation error bound for the Taylor expansion of the Gaussian about a
//! cluster center.
//!
//! With `a = |x - c| / h` and `b = |y - c| / h`, dropping all terms of total
//! degree `>= p` from `exp(2 (x-c).(y-c) / h^2)` and multiplying back the two
//! Gaussian factors leaves an error per unit source weight of at most
//! `(2ab)^p / p! * exp(-(a - b)^2)`. For `p = 0` nothing is kept and the bound
//! is the kernel itself, `exp(-(a - b)^2)` at best.

/// `ln(k!)` for `k < len`.
#[derive(Debug, Clone)]
pub struct LnFactorial(Vec<f64>);

impl LnFactorial {
    pub fn new(len: usize) -> Self {
        let mut t = vec![0.0; len.max(2)];
        for k in 2..t.len() {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        Self(t)
    }

    #[inline]
    fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// `ln[(2ab)^p / p! * exp(-(a-b)^2)]`.
#[inline]
fn ln_term(a: f64, b: f64, p: usize, lf: &LnFactorial) -> f64 {
    if p == 0 {
        return -(a - b) * (a - b);
    }
    if a <= 0.0 || b <= 0.0 {
        return f64::NEG_INFINITY;
    }
    p as f64 * (2.0 * a * b).ln() - lf.get(p) - (a - b) * (a - b)
}

/// Maximizer of the term over `b` at fixed `a` (the term is symmetric).
#[inline]
fn stationary(a: f64, p: usize) -> f64 {
    0.5 * (a + (a * a + 2.0 * p as f64).sqrt())
}

/// Worst case of the error term over the rectangle
/// `a in [0, a_max]`, `b in [b_lo, b_hi]`, as a natural log.
///
/// For `p >= 1` the term has no interior maximum (that would need both
/// `a > b` and `b > a`), so only the edges `a = a_max`, `b = b_lo`,
/// `b = b_hi` need checking.
pub fn ln_rect_bound(a_max: f64, b_lo: f64, b_hi: f64, p: usize, lf: &LnFactorial) -> f64 {
    if p == 0 {
        let gap = (b_lo - a_max).max(0.0);
        return -gap * gap;
    }
    let on_a = ln_term(a_max, stationary(a_max, p).clamp(b_lo, b_hi), p, lf);
    let on_lo = ln_term(stationary(b_lo, p).min(a_max), b_lo, p, lf);
    let on_hi = ln_term(stationary(b_hi, p).min(a_max), b_hi, p, lf);
    on_a.max(on_lo).max(on_hi)
}

/// Worst-case truncation error per unit weight over every source within `a_max`
/// and every target within `b_max` of the center (both in bandwidth units).
pub fn truncation_error(a_max: f64, b_max: f64, p: usize) -> f64 {
    let lf = LnFactorial::new(p + 1);
    ln_rect_bound(a_max, 0.0, b_max, p, &lf).exp()
}

/// Smallest `p` in `1..=p_max` whose truncation error is at most `tol`.
pub fn required_order(a_max: f64, b_max: f64, tol: f64, p_max: usize) -> Option<usize> {
    let lf = LnFactorial::new(p_max + 1);
    let ln_tol = tol.ln();
    (1..=p_max).find(|&p| ln_rect_bound(a_max, 0.0, b_max, p, &lf) <= ln_tol)
}
