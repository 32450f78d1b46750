//! Scalar building blocks of the linear birth-and-death transition law.
//!
//! Everything here is expressed through the two positive quantities
//!
//! ```text
//! r+ = (λ - μ) / expm1((λ - μ) t)      r- = r+ + (λ - μ)
//! ```
//!
//! which are both `g(±s) / t` with `g(s) = s / expm1(s)` and `s = (λ - μ) t`.
//! In these terms `φ = 1 / (λ + r+) = 1 / (μ + r-)`, `α = μ φ`, `β = λ φ`,
//! `γ = (r+ - μ) φ` and `z = (r+ - μ)(λ + r+) / (λ μ)`. Sums of positive
//! terms only, so nothing cancels except where the true value is small
//! (`γ` near `t = ξ`). `g` is evaluated with its Bernoulli series near
//! zero, which makes the unequal-rates path continuous through `λ = μ`.

use crate::error::{domain, Result};

/// Per-capita birth (`lambda`) and death (`mu`) rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda: f64,
    pub mu: f64,
}

impl Rates {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let rates = Self { lambda, mu };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return domain(format!(
                "birth rate must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return domain(format!(
                "death rate must be finite and >= 0, got {}",
                self.mu
            ));
        }
        Ok(())
    }

    /// Growth rate `λ - μ`.
    pub fn theta(&self) -> f64 {
        self.lambda - self.mu
    }

    pub fn swapped(&self) -> Self {
        Self {
            lambda: self.mu,
            mu: self.lambda,
        }
    }
}

/// `φ, α, β, γ, z` at one `(t, λ, μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub phi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub z: f64,
}

/// Relative scale below which `λ ≠ μ` is treated as `λ = μ`.
const EQUAL_RATES_TOL: f64 = 1e-12;

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return domain(format!("time must be finite and >= 0, got {t}"));
    }
    Ok(())
}

/// True when the equal-rates limit formulas are used for `(t, λ, μ)`.
pub fn is_equal_rates(t: f64, rates: &Rates) -> bool {
    let Rates { lambda, mu } = *rates;
    (lambda - mu).abs() * t <= EQUAL_RATES_TOL * (1.0 + (lambda + mu) * t)
}

// Taylor coefficients B_2k / (2k)! of s / expm1(s), k = 1..8.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
];

const SERIES_RADIUS: f64 = 0.5;

/// `g(s) = s / expm1(s)` together with its first two derivatives.
pub(crate) fn bernoulli_fn(s: f64) -> (f64, f64, f64) {
    if s.abs() < SERIES_RADIUS {
        let s2 = s * s;
        let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for (k, &c) in BERNOULLI_EVEN.iter().enumerate().rev() {
            let n = 2.0 * (k as f64 + 1.0);
            g = g * s2 + c;
            g1 = g1 * s2 + n * c;
            g2 = g2 * s2 + n * (n - 1.0) * c;
        }
        // g collected Σ c s^(2k-2), shift by s^2; g1 by s; g2 needs no shift
        (1.0 - 0.5 * s + g * s2, -0.5 + g1 * s, g2)
    } else if s > 0.0 {
        let w = (-s).exp();
        let om = -(-s).exp_m1();
        (
            s * w / om,
            w * (om - s) / (om * om),
            w * (s * (1.0 + w) - 2.0 * om) / (om * om * om),
        )
    } else {
        let q = s.exp();
        let qm = s.exp_m1();
        (
            s / qm,
            (qm - s * q) / (qm * qm),
            q * (s * (q + 1.0) - 2.0 * qm) / (qm * qm * qm),
        )
    }
}

/// The pair `(r+, r-)` for `t > 0`.
pub(crate) fn split_rates(t: f64, rates: &Rates) -> (f64, f64) {
    if is_equal_rates(t, rates) {
        let r = 1.0 / t;
        return (r, r);
    }
    let s = rates.theta() * t;
    (bernoulli_fn(s).0 / t, bernoulli_fn(-s).0 / t)
}

pub fn phi(t: f64, rates: &Rates) -> Result<f64> {
    check_time(t)?;
    rates.validate()?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if is_equal_rates(t, rates) {
        return Ok(t / (1.0 + rates.lambda * t));
    }
    let (rp, _) = split_rates(t, rates);
    Ok(1.0 / (rates.lambda + rp))
}

/// `γ = 1 - (λ + μ) φ`.
pub fn gamma_coef(t: f64, rates: &Rates) -> Result<f64> {
    check_time(t)?;
    rates.validate()?;
    if t == 0.0 {
        return Ok(1.0);
    }
    if is_equal_rates(t, rates) {
        let lt = rates.lambda * t;
        return Ok((1.0 - lt) / (1.0 + lt));
    }
    let (rp, _) = split_rates(t, rates);
    Ok((rp - rates.mu) / (rates.lambda + rp))
}

fn check_positive_rates(rates: &Rates) -> Result<()> {
    rates.validate()?;
    if rates.lambda <= 0.0 || rates.mu <= 0.0 {
        return domain(format!(
            "both rates must be strictly positive, got lambda={} mu={}",
            rates.lambda, rates.mu
        ));
    }
    Ok(())
}

/// The time `ξ` at which `γ` changes sign.
pub fn xi_threshold(rates: &Rates) -> Result<f64> {
    check_positive_rates(rates)?;
    let Rates { lambda, mu } = *rates;
    let d = lambda - mu;
    if d.abs() <= EQUAL_RATES_TOL * (lambda + mu) {
        return Ok(2.0 / (lambda + mu));
    }
    Ok((d / mu).ln_1p() / d)
}

/// Argument `z = γ / (α β)` of the hypergeometric factor; always `> -1`.
pub fn z_arg(t: f64, rates: &Rates) -> Result<f64> {
    check_time(t)?;
    check_positive_rates(rates)?;
    if t == 0.0 {
        return domain("z is undefined at t = 0");
    }
    Ok(z_unchecked(t, rates))
}

pub(crate) fn z_unchecked(t: f64, rates: &Rates) -> f64 {
    let Rates { lambda, mu } = *rates;
    if is_equal_rates(t, rates) {
        let lt = lambda * t;
        return 1.0 / (lt * lt) - 1.0;
    }
    let (rp, _) = split_rates(t, rates);
    (rp - mu) * (lambda + rp) / (lambda * mu)
}

pub fn kernel_values(t: f64, rates: &Rates) -> Result<KernelValues> {
    let phi = phi(t, rates)?;
    let gamma = gamma_coef(t, rates)?;
    let z = if t > 0.0 && rates.lambda > 0.0 && rates.mu > 0.0 {
        z_unchecked(t, rates)
    } else {
        f64::NAN
    };
    Ok(KernelValues {
        phi,
        alpha: rates.mu * phi,
        beta: rates.lambda * phi,
        gamma,
        z,
    })
}

/// `(log α, log β)` for strictly positive `t, λ, μ`.
pub(crate) fn log_alpha_beta(t: f64, rates: &Rates) -> (f64, f64) {
    let (rp, rm) = split_rates(t, rates);
    (-(rm / rates.mu).ln_1p(), -(rp / rates.lambda).ln_1p())
}

/// `log ω = log C(i+j-1, i-1) + i log α + j log β`, never formed in linear space.
pub fn log_omega(i: u64, j: u64, t: f64, rates: &Rates) -> Result<f64> {
    if i == 0 || j == 0 {
        return domain(format!("log_omega needs i, j >= 1, got i={i} j={j}"));
    }
    check_time(t)?;
    check_positive_rates(rates)?;
    if t == 0.0 {
        return domain("log_omega needs t > 0");
    }
    Ok(log_omega_unchecked(i, j, t, rates))
}

pub(crate) fn log_omega_unchecked(i: u64, j: u64, t: f64, rates: &Rates) -> f64 {
    let (la, lb) = log_alpha_beta(t, rates);
    ln_binomial(i + j - 1, i - 1) + i as f64 * la + j as f64 * lb
}

/// `log C(n, r)`.
pub fn log_binomial(n: u64, r: u64) -> Result<f64> {
    if r > n {
        return domain(format!("binomial needs r <= n, got n={n} r={r}"));
    }
    Ok(ln_binomial(n, r))
}

// C(67, 33) is the largest central binomial below u64::MAX.
const EXACT_BINOMIAL_MAX_N: u64 = 67;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_406;

// ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi)
#[allow(clippy::excessive_precision)]
const STIRLING_ERROR: [f64; 31] = [
    0.0,
    0.08106146679532725821967,
    0.04134069595540929409382,
    0.02767792568499833914879,
    0.02079067210376509311152,
    0.01664469118982119216319,
    0.01387612882307074799875,
    0.01189670994589177009506,
    0.01041126526197209649748,
    0.009255462182712732917729,
    0.008330563433362871256469,
    0.007573675487951840794972,
    0.006942840107209529865664,
    0.00640899418800420706844,
    0.005951370112758847735624,
    0.005554733551962801371039,
    0.005207655919609640440718,
    0.004901395948434737860717,
    0.004629153749334028592427,
    0.004385560249232324268288,
    0.004166319691996922457463,
    0.003967954218640859617288,
    0.003787618068444434577867,
    0.003622960224683094707381,
    0.003472021382978766962945,
    0.003333155636728092875807,
    0.003204970228055038011184,
    0.003086278682608777063256,
    0.002976063983550408826021,
    0.002873449362352466387552,
    0.002777674929752693603595,
];

fn stirling_error(n: u64) -> f64 {
    if let Some(&v) = STIRLING_ERROR.get(n as usize) {
        return v;
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let x = n as f64;
    let x2 = x * x;
    (S0 - (S1 - (S2 - (S3 - S4 / x2) / x2) / x2) / x2) / x
}

/// Log-gamma based `log C(n, r)` written as a sum of same-signed pieces:
/// Stirling remainders plus `-r log(r/n) - (n-r) log(1 - r/n)`, which is
/// the part that would cancel in `lgamma(n+1) - lgamma(r+1) - lgamma(n-r+1)`.
pub(crate) fn ln_binomial(n: u64, r: u64) -> f64 {
    let r = r.min(n - r);
    if r == 0 {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_MAX_N {
        let mut c: u128 = 1;
        for k in 1..=r as u128 {
            c = c * (n as u128 - r as u128 + k) / k;
        }
        return (c as f64).ln();
    }
    let (nf, rf) = (n as f64, r as f64);
    let sf = nf - rf;
    let p = rf / nf;
    let entropy = -rf * p.ln() - sf * (-p).ln_1p();
    let remainder = stirling_error(n) - stirling_error(r) - stirling_error(n - r);
    entropy + remainder + 0.5 * (nf.ln() - rf.ln() - sf.ln()) - LN_SQRT_2PI
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(l: f64, m: f64) -> Rates {
        Rates::new(l, m).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(0.0, &rates(1.0, 2.0)).unwrap(), 0.0);
        assert_eq!(phi(1.0, &rates(1.0, 1.0)).unwrap(), 0.5);
        let s2 = 2f64.sqrt();
        let expected = (s2 - 1.0) / (s2 - 0.5);
        assert!(close(
            phi(2f64.ln(), &rates(1.0, 0.5)).unwrap(),
            expected,
            1e-15
        ));
    }

    #[test]
    fn phi_rejects_bad_input() {
        assert!(phi(-1.0, &rates(1.0, 1.0)).is_err());
        assert!(phi(f64::NAN, &rates(1.0, 1.0)).is_err());
        assert!(Rates::new(-0.1, 1.0).is_err());
        assert!(Rates::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_coef(1.0, &rates(1.0, 1.0)).unwrap(), 0.0);
        assert!(gamma_coef(0.5, &rates(2.0, 0.5)).unwrap() > 0.0);
        assert!(close(
            gamma_coef(2.0, &rates(1.0, 1.0)).unwrap(),
            -1.0 / 3.0,
            1e-15
        ));
    }

    #[test]
    fn xi_examples() {
        assert_eq!(xi_threshold(&rates(1.0, 1.0)).unwrap(), 1.0);
        let xi = 4f64.ln() / 1.5;
        assert!(close(xi_threshold(&rates(2.0, 0.5)).unwrap(), xi, 1e-15));
        assert!(close(xi_threshold(&rates(0.5, 2.0)).unwrap(), xi, 1e-15));
        assert!(xi_threshold(&rates(0.0, 1.0)).is_err());
    }

    #[test]
    fn z_examples() {
        assert_eq!(z_arg(1.0, &rates(1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(z_arg(2.0, &rates(1.0, 1.0)).unwrap(), -0.75);
        assert_eq!(z_arg(0.5, &rates(1.0, 1.0)).unwrap(), 3.0);
        assert!(z_arg(0.0, &rates(1.0, 1.0)).is_err());
        assert!(z_arg(1.0, &rates(0.0, 1.0)).is_err());
    }

    #[test]
    fn log_omega_examples() {
        let r = rates(1.0, 1.0);
        assert!(close(
            log_omega(1, 1, 1.0, &r).unwrap(),
            0.25f64.ln(),
            1e-15
        ));
        assert!(close(
            log_omega(2, 1, 1.0, &r).unwrap(),
            0.25f64.ln(),
            1e-15
        ));
        assert!(log_omega(0, 1, 1.0, &r).is_err());
    }

    #[test]
    fn log_binomial_small() {
        assert_eq!(log_binomial(5, 0).unwrap(), 0.0);
        assert!(close(log_binomial(5, 2).unwrap(), 10f64.ln(), 1e-15));
        assert!(log_binomial(3, 4).is_err());
        // C(60, 24) = 36_052_387_482_172_425 (exact big-integer value)
        let exact = 36_052_387_482_172_425u64 as f64;
        assert!(close(log_binomial(60, 24).unwrap(), exact.ln(), 1e-13));
    }

    #[test]
    fn log_binomial_large_branch_matches_exact_boundary() {
        // n = 68 is the first value on the Stirling path; C(68, 34) fits in u128
        let mut c: u128 = 1;
        for k in 1..=34u128 {
            c = c * (34 + k) / k;
        }
        let exact = (c as f64).ln();
        assert!(close(ln_binomial(68, 34), exact, 2e-15));
        let mut c: u128 = 1;
        for k in 1..=5u128 {
            c = c * (95 + k) / k;
        }
        assert!(close(ln_binomial(100, 5), (c as f64).ln(), 2e-15));
    }

    #[test]
    fn bernoulli_series_matches_closed_form_at_switch() {
        for &s in &[0.4999999, -0.4999999] {
            let (g, g1, g2) = bernoulli_fn(s);
            let q = s.exp();
            let qm = s.exp_m1();
            assert!(close(g, s / qm, 1e-15));
            assert!(close(g1, (qm - s * q) / (qm * qm), 1e-13));
            assert!(close(
                g2,
                q * (s * (q + 1.0) - 2.0 * qm) / (qm * qm * qm),
                1e-11
            ));
        }
        let (g, g1, g2) = bernoulli_fn(0.0);
        assert_eq!((g, g1, g2), (1.0, -0.5, 1.0 / 6.0));
    }

    #[test]
    fn equal_rates_continuity() {
        let eps = 1e-9;
        for &(t, l) in &[(0.3, 0.7), (1.0, 1.0), (2.5, 3.0)] {
            let near = rates(l, l * (1.0 + eps));
            let lt = l * t;
            assert!(close(phi(t, &near).unwrap(), t / (1.0 + lt), 1e-7));
            let g_eq = (1.0 - lt) / (1.0 + lt);
            assert!((gamma_coef(t, &near).unwrap() - g_eq).abs() <= 1e-7 * (1.0 + g_eq.abs()));
            let z_eq = 1.0 / (lt * lt) - 1.0;
            assert!((z_arg(t, &near).unwrap() - z_eq).abs() <= 1e-7 * (1.0 + z_eq.abs()));
        }
    }

    #[test]
    fn extreme_growth_does_not_overflow() {
        let kv = kernel_values(1e3, &rates(5.0, 0.1)).unwrap();
        assert!((kv.phi - 0.2).abs() < 1e-15);
        let kv = kernel_values(1e3, &rates(0.1, 5.0)).unwrap();
        assert!((kv.phi - 0.2).abs() < 1e-15);
        assert!(kv.z > -1.0);
    }
}
