//! Transition and extinction probabilities of the linear birth-and-death
//! process, in log space.

use crate::error::{Error, Result};
use crate::hypergeom::{hyp2f1_ttrr_log, HyperArgs};
use crate::kernel::{self, check_time, Rates};

/// Start size `i`, end size `j`, elapsed time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionQuery {
    pub i: u64,
    pub j: u64,
    pub t: f64,
}

impl TransitionQuery {
    pub fn new(i: u64, j: u64, t: f64) -> Result<Self> {
        check_time(t)?;
        Ok(Self { i, j, t })
    }

    pub fn m(&self) -> u64 {
        self.i.min(self.j)
    }
}

/// Number of ulps of `ξ` within which `t` counts as the sign-change point
/// of `γ` and the single-term closed form is used.
const SPECIAL_POINT_ULPS: f64 = 4.0;

fn is_special_point(t: f64, rates: &Rates) -> bool {
    match kernel::xi_threshold(rates) {
        Ok(xi) => (t - xi).abs() <= SPECIAL_POINT_ULPS * ulp(xi),
        Err(_) => false,
    }
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    f64::from_bits(x.to_bits() + 1) - x
}

/// `log p(j | i, t, λ, μ)`; `-inf` for transitions that cannot happen.
pub fn log_transition_prob(q: &TransitionQuery, rates: &Rates) -> Result<f64> {
    check_time(q.t)?;
    rates.validate()?;
    let TransitionQuery { i, j, t } = *q;
    let Rates { lambda, mu } = *rates;

    if i == 0 {
        return Ok(if j == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if t == 0.0 || (lambda == 0.0 && mu == 0.0) {
        return Ok(if j == i { 0.0 } else { f64::NEG_INFINITY });
    }
    if j == 0 {
        return log_extinction_prob(i, t, rates);
    }
    if mu == 0.0 {
        // pure birth: C(j-1, i-1) e^{-iλt} (1 - e^{-λt})^{j-i}
        if j < i {
            return Ok(f64::NEG_INFINITY);
        }
        let lt = lambda * t;
        return Ok(kernel::ln_binomial(j - 1, i - 1) - i as f64 * lt
            + (j - i) as f64 * (-(-lt).exp_m1()).ln());
    }
    if lambda == 0.0 {
        // pure death: C(i, j) e^{-jμt} (1 - e^{-μt})^{i-j}
        if j > i {
            return Ok(f64::NEG_INFINITY);
        }
        let mt = mu * t;
        return Ok(
            kernel::ln_binomial(i, j) - j as f64 * mt + (i - j) as f64 * (-(-mt).exp_m1()).ln()
        );
    }
    if is_special_point(t, rates) {
        // γ = 0: only the h = 0 term survives
        let s = lambda + mu;
        return Ok(kernel::ln_binomial(i + j - 1, i - 1)
            + i as f64 * (mu / s).ln()
            + j as f64 * (lambda / s).ln());
    }

    let log_omega = kernel::log_omega_unchecked(i, j, t, rates);
    let z = kernel::z_unchecked(t, rates);
    let f = hyp2f1_ttrr_log(&HyperArgs::new(i, j, 1, z)?)?;
    if f.sign <= 0.0 {
        return Err(Error::NumericDegeneracy(format!(
            "hypergeometric factor is non-positive for i={i} j={j} t={t} lambda={lambda} mu={mu}"
        )));
    }
    Ok(log_omega + f.ln_abs)
}

/// `p(j | i, t, λ, μ)`.
pub fn transition_prob(q: &TransitionQuery, rates: &Rates) -> Result<f64> {
    Ok(log_transition_prob(q, rates)?.exp())
}

/// `log p(0 | i, t, λ, μ)`.
pub fn log_extinction_prob(i: u64, t: f64, rates: &Rates) -> Result<f64> {
    check_time(t)?;
    rates.validate()?;
    if i == 0 {
        return Ok(0.0);
    }
    let Rates { lambda, mu } = *rates;
    if t == 0.0 || mu == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let n = i as f64;
    if lambda == 0.0 {
        return Ok(n * (-(-mu * t).exp_m1()).ln());
    }
    if kernel::is_equal_rates(t, rates) {
        let lt = lambda * t;
        return Ok(-n * (1.0 / lt).ln_1p());
    }
    // p0 = α^i
    let (log_alpha, _) = kernel::log_alpha_beta(t, rates);
    Ok(n * log_alpha)
}

/// Expected size `i e^{(λ-μ)t}`.
pub fn mean_size(i: u64, t: f64, rates: &Rates) -> Result<f64> {
    check_time(t)?;
    rates.validate()?;
    Ok(i as f64 * (rates.theta() * t).exp())
}
