//! Truncated Taylor coefficients of the Gaussian in nested layout.
//!
//! Multi-indices `a` with `|a| < p` are stored with the first coordinate's
//! exponent outermost: all terms with `a_1 = 0`, then `a_1 = 1`, and so on,
//! recursively. The block of terms with a given leading exponent `i` at a level
//! with `m` remaining coordinates starts at `T(m, r) - T(m, r - i)`, where `r`
//! is the remaining degree budget and `T = num_terms`. Evaluation is nested
//! Horner, so no monomial table is formed, and an expansion stored to order
//! `P` can be evaluated at any order `p <= P`.

/// Number of monomials of total degree `< p` in `d` variables: `C(p - 1 + d, d)`.
pub fn num_terms(d: usize, p: usize) -> usize {
    if p == 0 {
        return 0;
    }
    let mut c: u128 = 1;
    for i in 1..=d as u128 {
        c = c * (p as u128 - 1 + i) / i;
    }
    c as usize
}

/// Targets evaluated together.
pub const LANES: usize = 32;

/// Adds `w_l * 2^|a| / a! * x_l^a` for every `|a| < p` and every lane `l`
/// to `coef`. `x[k][l]` is coordinate `k` of point `l`; unused lanes carry
/// zero weight.
///
/// `scratch` must hold `x.len() * p` entries.
pub fn accumulate(
    x: &[[f64; LANES]],
    weights: [f64; LANES],
    p: usize,
    coef: &mut [f64],
    scratch: &mut [[f64; LANES]],
) {
    if p == 0 {
        return;
    }
    // Separable constants: 2^|a| / a! x^a = prod_k (2 x_k)^{a_k} / a_k!.
    for (k, xk) in x.iter().enumerate() {
        let g = &mut scratch[k * p..(k + 1) * p];
        g[0] = [1.0; LANES];
        for i in 1..p {
            let f = 2.0 / i as f64;
            for l in 0..LANES {
                g[i][l] = g[i - 1][l] * f * xk[l];
            }
        }
    }
    let mut off = 0;
    accumulate_level(scratch, p, x.len(), 0, p, weights, coef, &mut off);
}

#[allow(clippy::too_many_arguments)]
fn accumulate_level(
    g: &[[f64; LANES]],
    p: usize,
    d: usize,
    level: usize,
    r: usize,
    prod: [f64; LANES],
    coef: &mut [f64],
    off: &mut usize,
) {
    let gl = &g[level * p..level * p + r];
    if level + 1 == d {
        for (c, v) in coef[*off..*off + r].iter_mut().zip(gl) {
            let mut s = 0.0;
            for l in 0..LANES {
                s += prod[l] * v[l];
            }
            *c += s;
        }
        *off += r;
        return;
    }
    for (i, v) in gl.iter().enumerate() {
        let mut next = prod;
        for l in 0..LANES {
            next[l] *= v[l];
        }
        accumulate_level(g, p, d, level + 1, r - i, next, coef, off);
    }
}

fn fused_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Approximate cost of one term of [`evaluate`] per point, in nanoseconds.
pub fn term_cost() -> f64 {
    if fused_available() {
        0.13
    } else {
        0.33
    }
}

/// Evaluates `sum_{|a| < p} coef_a y^a` for `LANES` points at once, where
/// `coef` is stored to order `stored >= p`. `y[k][l]` is coordinate `k` of
/// point `l`.
pub fn evaluate(
    coef: &[f64],
    d: usize,
    stored: usize,
    p: usize,
    y: &[[f64; LANES]],
) -> [f64; LANES] {
    debug_assert!(p <= stored);
    if p == 0 {
        return [0.0; LANES];
    }
    #[cfg(target_arch = "x86_64")]
    if fused_available() {
        // SAFETY: the required CPU features were detected.
        return unsafe { evaluate_level_fma(coef, d, 0, stored, p, y) };
    }
    evaluate_level(coef, d, 0, stored, p, y)
}

#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    a * b + c
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn madd_fused(a: f64, b: f64, c: f64) -> f64 {
    a.mul_add(b, c)
}

macro_rules! evaluate_level_impl {
    ($(#[$attr:meta])* [$($kw:tt)*] $name:ident, $madd:ident) => {
        $(#[$attr])*
        $($kw)* $name(
            coef: &[f64],
            d: usize,
            level: usize,
            stored: usize,
            p: usize,
            y: &[[f64; LANES]],
        ) -> [f64; LANES] {
            let yl = &y[level];
            let mut acc = [0.0; LANES];
            if level + 1 == d {
                for &c in coef[..p].iter().rev() {
                    for l in 0..LANES {
                        acc[l] = $madd(acc[l], yl[l], c);
                    }
                }
                return acc;
            }
            let m = d - level;
            let total = num_terms(m, stored);
            for i in (0..p).rev() {
                let off = total - num_terms(m, stored - i);
                #[allow(unused_unsafe)]
                let inner = unsafe { $name(&coef[off..], d, level + 1, stored - i, p - i, y) };
                for l in 0..LANES {
                    acc[l] = $madd(acc[l], yl[l], inner[l]);
                }
            }
            acc
        }
    };
}

evaluate_level_impl!([fn] evaluate_level, madd);

#[cfg(target_arch = "x86_64")]
evaluate_level_impl!(
    #[target_feature(enable = "avx2,fma")]
    [unsafe fn] evaluate_level_fma,
    madd_fused
);
