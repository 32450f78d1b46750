//! Terminating Gauss hypergeometric polynomials
//! `2F1(-a, -b; -(a + b - k); -z) = Σ_h C(a,h) C(b,h) / C(a+b-k,h) z^h`
//! for integers `a, b >= 0`, `k <= 1` and real `z > -1`.
//!
//! As a function of `b` the polynomial satisfies
//!
//! ```text
//! (a+b+1-k)(a+b-k) y[b+1] - (a+b-k)(a+b+1-k+(a-b)z) y[b] - b(b-k) z y[b-1] = 0
//! ```
//!
//! Evaluation runs this recurrence forward over `min(a, b)` steps with the
//! larger parameter held fixed. With that orientation the forward direction
//! tracks the wanted solution for every `z > -1`. The iteration variable is
//! the ratio `R[b] = y[b] / y[b-1]`, and the running product is kept as a
//! mantissa plus a binary exponent so that `log |y|` is available when `y`
//! itself would overflow.

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperArgs {
    pub a: u64,
    pub b: u64,
    pub k: i64,
    pub z: f64,
}

impl HyperArgs {
    pub fn new(a: u64, b: u64, k: i64, z: f64) -> Result<Self> {
        let args = Self { a, b, k, z };
        args.validate()?;
        Ok(args)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 1 {
            return domain(format!("k must be <= 1, got {}", self.k));
        }
        if !self.z.is_finite() {
            return domain(format!("z must be finite, got {}", self.z));
        }
        if self.z <= -1.0 {
            return domain(format!("z must be > -1, got {}", self.z));
        }
        Ok(())
    }
}

/// A real number stored as `sign * exp(ln_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ONE: Self = Self {
        sign: 1.0,
        ln_abs: 0.0,
    };

    pub fn value(&self) -> f64 {
        self.sign * self.ln_abs.exp()
    }

    /// `self / other` as a plain float.
    pub fn ratio(&self, other: &Self) -> f64 {
        self.sign * other.sign * (self.ln_abs - other.ln_abs).exp()
    }
}

// Renormalise the running product once it leaves [2^-RESCALE, 2^RESCALE].
const RESCALE: i32 = 512;

#[derive(Debug, Clone, Copy)]
struct ScaledProduct {
    mant: f64,
    exp2: i64,
}

impl ScaledProduct {
    fn new(x: f64) -> Self {
        let mut p = Self { mant: x, exp2: 0 };
        p.normalise();
        p
    }

    fn mul(&mut self, x: f64) {
        self.mant *= x;
        self.normalise();
    }

    fn normalise(&mut self) {
        let m = self.mant.abs();
        if m == 0.0 || !m.is_finite() {
            return;
        }
        // multiplying by a power of two is exact
        if m > 2f64.powi(RESCALE) {
            self.mant *= 2f64.powi(-RESCALE);
            self.exp2 += RESCALE as i64;
        } else if m < 2f64.powi(-RESCALE) {
            self.mant *= 2f64.powi(RESCALE);
            self.exp2 -= RESCALE as i64;
        }
    }

    fn signed_log(&self) -> SignedLog {
        SignedLog {
            sign: self.mant.signum(),
            ln_abs: self.mant.abs().ln() + self.exp2 as f64 * std::f64::consts::LN_2,
        }
    }
}

/// Forward ratio recurrence with `a = M >= b = m` fixed. Calls `visit`
/// with each `R[n]`, `n = 1..=m`.
fn forward_ratios(
    big: u64,
    small: u64,
    k: i64,
    z: f64,
    mut visit: impl FnMut(u64, f64),
) -> Result<()> {
    let mf = big as f64;
    let kf = k as f64;
    let mut ratio = 1.0 + mf * z / (mf + 1.0 - kf);
    visit(1, ratio);
    for n in 2..=small {
        if ratio == 0.0 {
            return Err(Error::NumericDegeneracy(format!(
                "recurrence ratio vanished at step {} (a={big}, k={k}, z={z})",
                n - 1
            )));
        }
        let nf = n as f64;
        let inner = mf - nf + 1.0 + (nf - 1.0) * (nf - 1.0 - kf) / ((mf + nf - kf - 1.0) * ratio);
        ratio = 1.0 + z / (mf + nf - kf) * inner;
        visit(n, ratio);
    }
    Ok(())
}

/// `2F1(-a, -b; -(a+b-k); -z)` as `(sign, log |F|)`.
pub fn hyp2f1_ttrr_log(args: &HyperArgs) -> Result<SignedLog> {
    args.validate()?;
    let (small, big) = (args.a.min(args.b), args.a.max(args.b));
    if args.z == 0.0 || small == 0 {
        return Ok(SignedLog::ONE);
    }
    let mut prod: Option<ScaledProduct> = None;
    forward_ratios(big, small, args.k, args.z, |_, r| match prod.as_mut() {
        None => prod = Some(ScaledProduct::new(r)),
        Some(p) => p.mul(r),
    })?;
    let prod = prod.expect("at least one recurrence step");
    if prod.mant == 0.0 {
        return Ok(SignedLog {
            sign: 0.0,
            ln_abs: f64::NEG_INFINITY,
        });
    }
    Ok(prod.signed_log())
}

/// `2F1(-a, -b; -(a+b-k); -z)` in linear space.
pub fn hyp2f1_ttrr(args: &HyperArgs) -> Result<f64> {
    let v = hyp2f1_ttrr_log(args)?;
    Ok(if v.sign == 0.0 { 0.0 } else { v.value() })
}

/// Unscaled values `y[0..=m]` of the forward pass (with `a = max(a, b)`
/// held fixed). Overflows for large `m`; meant for checking the recurrence.
pub fn forward_pass(args: &HyperArgs) -> Result<Vec<f64>> {
    args.validate()?;
    let (small, big) = (args.a.min(args.b), args.a.max(args.b));
    let mut ys = vec![1.0];
    if args.z == 0.0 {
        ys.resize(small as usize + 1, 1.0);
        return Ok(ys);
    }
    forward_ratios(big, small, args.k, args.z, |_, r| {
        let last = *ys.last().unwrap();
        ys.push(r * last);
    })?;
    Ok(ys)
}

/// One step of the backward recurrence: `y[b]` from `y[b+1]` and `y[b+2]`,
/// with `args.a`, `args.k`, `args.z` fixed and `args.b` the target index.
pub fn backward_step(args: &HyperArgs, y_b1: f64, y_b2: f64) -> Result<f64> {
    args.validate()?;
    if args.z == 0.0 {
        return domain("backward recurrence divides by z; z must be non-zero");
    }
    let (a, b, k, z) = (args.a as f64, args.b as f64, args.k as f64, args.z);
    if b + 1.0 - k <= 0.0 {
        return domain(format!(
            "backward step needs b + 1 - k > 0, got b={b} k={k}"
        ));
    }
    let lead = (a + b + 2.0 - k) * (a + b + 1.0 - k) / ((b + 1.0) * (b + 1.0 - k) * z);
    Ok(lead * (y_b2 - (1.0 + (a - b - 1.0) * z / (a + b + 2.0 - k)) * y_b1))
}

/// The three terms of the recurrence at index `args.b`.
fn ttrr_terms(args: &HyperArgs, y_prev: f64, y_cur: f64, y_next: f64) -> [f64; 3] {
    let (a, b, k, z) = (args.a as f64, args.b as f64, args.k as f64, args.z);
    [
        (a + b + 1.0 - k) * (a + b - k) * y_next,
        -(a + b - k) * (a + b + 1.0 - k + (a - b) * z) * y_cur,
        -b * (b - k) * z * y_prev,
    ]
}

/// Left-hand side of the recurrence for `(y[b-1], y[b], y[b+1])`; zero for
/// exact solutions.
pub fn ttrr_residual(args: &HyperArgs, y_prev: f64, y_cur: f64, y_next: f64) -> f64 {
    ttrr_terms(args, y_prev, y_cur, y_next).iter().sum()
}

/// Sum of the magnitudes of the recurrence terms; the natural scale against
/// which [`ttrr_residual`] is judged.
pub fn ttrr_scale(args: &HyperArgs, y_prev: f64, y_cur: f64, y_next: f64) -> f64 {
    ttrr_terms(args, y_prev, y_cur, y_next)
        .iter()
        .map(|t| t.abs())
        .sum()
}
