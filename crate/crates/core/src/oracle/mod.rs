//! Slow reference evaluations used to certify the fast path: exact rational
//! hypergeometric sums, high-precision direct summation of the transition
//! probability, the plain double-precision sum, and relative-error scans.
//!
//! Nothing in the evaluation path depends on this module.

mod bigfloat;

pub use bigfloat::BigFloat;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::hypergeom::HyperArgs;
use crate::kernel::{self, Rates};
use crate::transition::{log_transition_prob, TransitionQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecisionConfig {
    /// Mantissa width for the high-precision sums; raised automatically
    /// when cancellation would eat into it.
    pub working_bits: u32,
    /// Upper summation index for normalization-type sums.
    pub truncation: u64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            working_bits: 256,
            truncation: 500,
        }
    }
}

impl PrecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.working_bits < 128 {
            return domain(format!(
                "working_bits must be >= 128, got {}",
                self.working_bits
            ));
        }
        Ok(())
    }
}

fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    let mut c = BigUint::one();
    for k in 1..=r {
        c = c * BigUint::from(n - r + k) / BigUint::from(k);
    }
    c
}

/// `2F1(-a, -b; -(a+b-k); -z)` as an exact rational.
pub fn hyp2f1_exact(args: &HyperArgs) -> Result<BigRational> {
    args.validate()?;
    let z = BigRational::from_float(args.z).expect("validated finite");
    let m = args.a.min(args.b);
    let c = (args.a + args.b) as i64 - args.k;
    let mut sum = BigRational::one();
    let mut zp = BigRational::one();
    for h in 1..=m {
        zp = &zp * &z;
        let num = BigInt::from(binomial(args.a, h) * binomial(args.b, h));
        let den = BigInt::from(binomial(c as u64, h));
        sum += BigRational::new(num, den) * &zp;
    }
    Ok(sum)
}

/// Exact sum rounded to the nearest double.
pub fn hyp2f1_reference(args: &HyperArgs) -> Result<f64> {
    let r = hyp2f1_exact(args)?;
    let prec = 128;
    let num = to_bigfloat(r.numer(), prec);
    let den = to_bigfloat(r.denom(), prec);
    Ok(num.div(&den).to_f64())
}

fn to_bigfloat(n: &BigInt, prec: u32) -> BigFloat {
    let v = BigFloat::from_biguint(n.magnitude().clone(), prec);
    if n.is_negative() {
        v.neg()
    } else {
        v
    }
}

fn check_interior(q: &TransitionQuery, rates: &Rates) -> Result<()> {
    rates.validate()?;
    if !(q.t.is_finite() && q.t > 0.0) || rates.lambda <= 0.0 || rates.mu <= 0.0 || q.i == 0 {
        return domain(format!(
            "reference evaluation needs t, lambda, mu > 0 and i >= 1, got i={} t={} lambda={} mu={}",
            q.i, q.t, rates.lambda, rates.mu
        ));
    }
    Ok(())
}

/// `(log p, bits lost to cancellation)` of the direct sum at `bits` precision.
fn direct_sum_log(q: &TransitionQuery, rates: &Rates, bits: u32) -> (BigFloat, i64) {
    let TransitionQuery { i, j, t } = *q;
    let wp = bits + 64;
    let l = BigFloat::from_f64(rates.lambda, wp);
    let m = BigFloat::from_f64(rates.mu, wp);
    let tt = BigFloat::from_f64(t, wp);
    let one = BigFloat::one(wp);
    let (alpha, beta, gamma) = if rates.lambda == rates.mu {
        let lt = l.mul(&tt);
        let den = one.add(&lt);
        let a = lt.div(&den);
        (a.clone(), a, one.sub(&lt).div(&den))
    } else {
        let x = l.sub(&m).mul(&tt).exp();
        let phi = x.sub(&one).div(&l.mul(&x).sub(&m));
        let a = m.mul(&phi);
        let b = l.mul(&phi);
        let g = one.sub(&a).sub(&b);
        (a, b, g)
    };

    let mut sum = BigFloat::zero(wp);
    let mut abs_sum = BigFloat::zero(wp);
    for h in 0..=i.min(j) {
        let c = binomial(i, h) * binomial(i + j - h - 1, i - 1);
        let term = BigFloat::from_biguint(c, wp)
            .mul(&alpha.powi(i - h))
            .mul(&beta.powi(j - h))
            .mul(&gamma.powi(h));
        abs_sum = abs_sum.add(&term.abs());
        sum = sum.add(&term);
    }
    let lost = match (abs_sum.log2_floor(), sum.log2_floor()) {
        (Some(a), Some(s)) => a - s + 1,
        _ => i64::MAX,
    };
    if sum.is_zero() || sum.is_negative() {
        return (BigFloat::zero(bits), i64::MAX);
    }
    (sum.ln().with_prec(bits), lost)
}

/// `log p(j | i, t, λ, μ)` by direct summation at `bits` or more bits,
/// doubling the width until cancellation leaves at least `bits - 64`
/// correct bits.
pub fn log_prob_reference_big(q: &TransitionQuery, rates: &Rates, bits: u32) -> Result<BigFloat> {
    check_interior(q, rates)?;
    let mut wp = bits;
    loop {
        let (v, lost) = direct_sum_log(q, rates, wp);
        if lost <= (wp - bits) as i64 + 64 {
            return Ok(v.with_prec(bits));
        }
        let need = (lost.min(1 << 20) as u32).saturating_add(bits);
        wp = need.max(2 * wp);
    }
}

/// High-precision `log p(j | i, t, λ, μ)` rounded to a double.
pub fn log_prob_reference(
    q: &TransitionQuery,
    rates: &Rates,
    cfg: &PrecisionConfig,
) -> Result<f64> {
    cfg.validate()?;
    Ok(log_prob_reference_big(q, rates, cfg.working_bits)?.to_f64())
}

/// Direct double-precision evaluation of the alternating sum; the unstable
/// baseline. Binomials are taken in log space, nothing else is stabilised.
pub fn naive_log_prob_double(q: &TransitionQuery, rates: &Rates) -> Result<f64> {
    check_interior(q, rates)?;
    let TransitionQuery { i, j, t } = *q;
    let Rates { lambda: l, mu: m } = *rates;
    let (alpha, beta, gamma) = if l == m {
        let lt = l * t;
        (lt / (1.0 + lt), lt / (1.0 + lt), (1.0 - lt) / (1.0 + lt))
    } else {
        let x = ((l - m) * t).exp();
        let phi = (x - 1.0) / (l * x - m);
        (m * phi, l * phi, 1.0 - (l + m) * phi)
    };
    let (la, lb, lg) = (alpha.ln(), beta.ln(), gamma.abs().ln());
    let mut sum = 0.0;
    for h in 0..=i.min(j) {
        let lc = kernel::ln_binomial(i, h) + kernel::ln_binomial(i + j - h - 1, i - 1);
        let hf = h as f64;
        let mag =
            (lc + (i as f64 - hf) * la + (j as f64 - hf) * lb + if h > 0 { hf * lg } else { 0.0 })
                .exp();
        let sign = if gamma < 0.0 && h % 2 == 1 { -1.0 } else { 1.0 };
        sum += sign * mag;
    }
    Ok(sum.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMethod {
    Naive,
    Ttrr,
}

/// Fixed `(i, j, t)` and a list of `(λ, μ)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub i: u64,
    pub j: u64,
    pub t: f64,
    pub points: Vec<Rates>,
}

impl ScanGrid {
    /// `i = 25, j = 35, t = 2, λ = 1`, `μ = 2.5 k / 500` for `k = 1..=500`.
    pub fn mu_sweep() -> Self {
        let points = (1..=500)
            .map(|k| Rates {
                lambda: 1.0,
                mu: 2.5 * k as f64 / 500.0,
            })
            .collect();
        Self {
            i: 25,
            j: 35,
            t: 2.0,
            points,
        }
    }

    /// `i = 200, j = 100, t = 1`, `λ, μ ∈ {0.1, 0.15, ..., 2}`.
    pub fn rate_plane() -> Self {
        let axis: Vec<f64> = (0..=38).map(|k| (10 + 5 * k) as f64 / 100.0).collect();
        let points = axis
            .iter()
            .flat_map(|&l| axis.iter().map(move |&m| Rates { lambda: l, mu: m }))
            .collect();
        Self {
            i: 200,
            j: 100,
            t: 1.0,
            points,
        }
    }

    /// Grid for the figure numbers understood by the CLI (1 and 3 share a grid).
    pub fn for_figure(fig: u32) -> Result<Self> {
        match fig {
            1 | 3 => Ok(Self::mu_sweep()),
            4 => Ok(Self::rate_plane()),
            _ => domain(format!("unknown figure {fig}; expected 1, 3 or 4")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub rates: Rates,
    pub log_p_ref: f64,
    pub log_p_method: f64,
    /// `|1 - log p̂ / log p|`; infinite when the method returned a
    /// non-finite value.
    pub rel_err: f64,
}

pub fn relative_error(approx: f64, exact: f64) -> f64 {
    if !approx.is_finite() {
        return f64::INFINITY;
    }
    (1.0 - approx / exact).abs()
}

pub fn relative_error_scan(
    grid: &ScanGrid,
    method: ScanMethod,
    cfg: &PrecisionConfig,
) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    let q = TransitionQuery::new(grid.i, grid.j, grid.t)?;
    grid.points
        .par_iter()
        .map(|rates| {
            let log_p_ref = log_prob_reference(&q, rates, cfg)?;
            let log_p_method = match method {
                ScanMethod::Naive => naive_log_prob_double(&q, rates)?,
                ScanMethod::Ttrr => log_transition_prob(&q, rates)?,
            };
            Ok(ScanRow {
                rates: *rates,
                log_p_ref,
                log_p_method,
                rel_err: relative_error(log_p_method, log_p_ref),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(a: u64, b: u64, k: i64, z: f64) -> HyperArgs {
        HyperArgs::new(a, b, k, z).unwrap()
    }

    #[test]
    fn exact_hypergeometric_values() {
        let v = hyp2f1_exact(&args(2, 2, 1, 1.0)).unwrap();
        assert_eq!(v, BigRational::new(BigInt::from(8), BigInt::from(3)));
        assert_eq!(hyp2f1_reference(&args(9, 0, -2, 4.5)).unwrap(), 1.0);
        assert_eq!(hyp2f1_reference(&args(3, 1, 1, 2.0)).unwrap(), 3.0);
    }

    #[test]
    fn reference_at_special_point() {
        let r = Rates::new(2.0, 0.5).unwrap();
        let xi = kernel::xi_threshold(&r).unwrap();
        let cfg = PrecisionConfig::default();
        let v = log_prob_reference(&TransitionQuery::new(1, 1, xi).unwrap(), &r, &cfg).unwrap();
        // the rounded ξ is within an ulp of the true point
        assert!((v - 0.16f64.ln()).abs() < 1e-14);
        let v = log_prob_reference(&TransitionQuery::new(3, 2, xi).unwrap(), &r, &cfg).unwrap();
        let closed =
            (binomial(4, 2).to_string().parse::<f64>().unwrap() * 0.2f64.powi(3) * 0.8f64.powi(2))
                .ln();
        assert!((v - closed).abs() < 1e-14 * closed.abs());
    }

    #[test]
    fn equal_rates_reference() {
        let cfg = PrecisionConfig::default();
        let v = log_prob_reference(
            &TransitionQuery::new(1, 1, 1.0).unwrap(),
            &Rates::new(1.0, 1.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(v, 0.25f64.ln());
    }

    #[test]
    fn rejects_low_precision_and_boundary() {
        let q = TransitionQuery::new(2, 3, 1.0).unwrap();
        let r = Rates::new(1.0, 0.5).unwrap();
        assert!(log_prob_reference(
            &q,
            &r,
            &PrecisionConfig {
                working_bits: 64,
                truncation: 10
            }
        )
        .is_err());
        assert!(log_prob_reference(
            &q,
            &Rates::new(1.0, 0.0).unwrap(),
            &PrecisionConfig::default()
        )
        .is_err());
    }

    #[test]
    fn grids() {
        let g = ScanGrid::mu_sweep();
        assert_eq!(g.points.len(), 500);
        assert_eq!(g.points[499].mu, 2.5);
        assert_eq!(g.points[199].mu, 1.0);
        let g = ScanGrid::rate_plane();
        assert_eq!(g.points.len(), 39 * 39);
        assert_eq!(g.points.last().unwrap().lambda, 2.0);
        assert!(ScanGrid::for_figure(2).is_err());
    }
}
