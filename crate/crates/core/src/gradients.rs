//! Gradient and Hessian of `log p(j | i, t, λ, μ)` with respect to `(λ, μ)`.
//!
//! On the interior `log p = log ω + log F` with `F = 2F1(-i, -j; -(i+j-1); -z)`.
//! Derivatives of `log φ` and `z` are written through `r+ = g(s)/t`, whose
//! rate derivatives are `g'(s)` and `t g''(s)`, so the unequal-rates
//! formulas stay accurate up to `λ = μ`. The hypergeometric part needs
//!
//! ```text
//! u = 2F1(-(i-1), -(j-1); -(i+j-2); -z) / F
//! v = 2F1(-(i-2), -(j-2); -(i+j-3); -z) / F
//! ```
//!
//! both taken as ratios of log-space recurrence evaluations.

use crate::error::{Error, Result};
use crate::hypergeom::{hyp2f1_ttrr_log, HyperArgs};
use crate::kernel::{self, bernoulli_fn, check_time, Rates};
use crate::transition::TransitionQuery;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradLogP {
    pub d_lambda: f64,
    pub d_mu: f64,
}

/// Symmetric 2x2 Hessian; `d_lm` is the mixed partial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HessLogP {
    pub d_ll: f64,
    pub d_lm: f64,
    pub d_mm: f64,
}

impl GradLogP {
    pub fn swapped(&self) -> Self {
        Self {
            d_lambda: self.d_mu,
            d_mu: self.d_lambda,
        }
    }
}

impl HessLogP {
    pub fn swapped(&self) -> Self {
        Self {
            d_ll: self.d_mm,
            d_lm: self.d_lm,
            d_mm: self.d_ll,
        }
    }
}

/// A rate below this multiple of the other one is treated as zero when the
/// transition is still possible at the boundary.
const NEAR_ZERO_RATE: f64 = 1e-12;

pub fn log_prob_grad(q: &TransitionQuery, rates: &Rates) -> Result<GradLogP> {
    Ok(derivs(q, rates, false)?.0)
}

pub fn log_prob_hessian(q: &TransitionQuery, rates: &Rates) -> Result<HessLogP> {
    Ok(derivs(q, rates, true)?.1)
}

/// Gradient and Hessian from one set of hypergeometric evaluations.
pub fn log_prob_derivs(q: &TransitionQuery, rates: &Rates) -> Result<(GradLogP, HessLogP)> {
    derivs(q, rates, true)
}

fn derivs(q: &TransitionQuery, rates: &Rates, hess: bool) -> Result<(GradLogP, HessLogP)> {
    check_time(q.t)?;
    rates.validate()?;
    let TransitionQuery { i, j, t } = *q;
    let Rates { lambda, mu } = *rates;

    if t == 0.0 || i == 0 {
        return Ok(Default::default());
    }
    if lambda == 0.0 && mu == 0.0 {
        if j != i {
            return Err(Error::Undefined(format!(
                "derivatives at lambda = mu = 0 exist only for j = i, got i={i} j={j}"
            )));
        }
        let it = i as f64 * t;
        return Ok((
            GradLogP {
                d_lambda: -it,
                d_mu: -it,
            },
            HessLogP {
                d_ll: 0.0,
                d_lm: it * it,
                d_mm: 0.0,
            },
        ));
    }
    if mu == 0.0 || (mu < NEAR_ZERO_RATE * lambda && j >= i) {
        return zero_death(i, j, t, lambda, hess, ZERO_MU);
    }
    if lambda == 0.0 || (lambda < NEAR_ZERO_RATE * mu && j <= i) {
        // p(j | i; λ, μ) near λ = 0 mirrors p(i | j; μ, λ) near μ = 0
        let (g, h) = zero_death(j, i, t, mu, hess, ZERO_LAMBDA)?;
        return Ok((g.swapped(), h.swapped()));
    }
    if kernel::is_equal_rates(t, rates) {
        return equal_rates(i, j, t, lambda, hess);
    }
    interior(i, j, t, rates, hess)
}

/// First and second `z`-derivatives of `log F`: `c u` and
/// `c (i-1)(j-1)/(i+j-2) v - (c u)^2` with `c = ij/(i+j-1)`.
fn hyper_terms(i: u64, j: u64, z: f64, hess: bool) -> Result<(f64, f64)> {
    if i == 0 || j == 0 {
        return Ok((0.0, 0.0));
    }
    let (fi, fj) = (i as f64, j as f64);
    let c = fi * fj / (fi + fj - 1.0);
    let f = hyp2f1_ttrr_log(&HyperArgs::new(i, j, 1, z)?)?;
    if f.sign <= 0.0 {
        return Err(Error::NumericDegeneracy(format!(
            "hypergeometric factor is non-positive for i={i} j={j} z={z}"
        )));
    }
    let cu = c * hyp2f1_ttrr_log(&HyperArgs::new(i - 1, j - 1, 0, z)?)?.ratio(&f);
    if !hess {
        return Ok((cu, 0.0));
    }
    let second = if i >= 2 && j >= 2 {
        let v = hyp2f1_ttrr_log(&HyperArgs::new(i - 2, j - 2, -1, z)?)?.ratio(&f);
        c * (fi - 1.0) * (fj - 1.0) / (fi + fj - 2.0) * v
    } else {
        0.0
    };
    Ok((cu, second - cu * cu))
}

fn interior(i: u64, j: u64, t: f64, rates: &Rates, hess: bool) -> Result<(GradLogP, HessLogP)> {
    let Rates { lambda: l, mu: m } = *rates;
    let (fi, fj) = (i as f64, j as f64);
    let n = fi + fj;
    let s = rates.theta() * t;
    let (g0, g1, g2) = bernoulli_fn(s);
    let rp = g0 / t;
    let rm = bernoulli_fn(-s).0 / t;
    let den = l + rp;

    let lphi_l = -(1.0 + g1) / den;
    let lphi_m = g1 / den;

    // z = A / (λ μ) - 1 with A = r+ r-
    let lm = l * m;
    let a = rp * rm;
    let a_l = g1 * (rp + rm) + rp;
    let a_m = -g1 * (rp + rm) - rp;
    let z = a / lm - 1.0;
    let z_l = (a_l - a / l) / lm;
    let z_m = (a_m - a / m) / lm;

    let (cu, lzz) = hyper_terms(i, j, z, hess)?;
    let grad = GradLogP {
        d_lambda: fj / l + n * lphi_l + cu * z_l,
        d_mu: fi / m + n * lphi_m + cu * z_m,
    };
    if !hess {
        return Ok((grad, HessLogP::default()));
    }

    let tg2 = t * g2;
    let den2 = den * den;
    let lphi_ll = -tg2 / den + (1.0 + g1) * (1.0 + g1) / den2;
    let lphi_mm = -tg2 / den + g1 * g1 / den2;
    let lphi_lm = tg2 / den - (1.0 + g1) * g1 / den2;

    let a_ll = tg2 * (rp + rm) + 2.0 * g1 * (g1 + 1.0);
    let a_lm = -a_ll;
    let z_ll = (a_ll - 2.0 * a_l / l + 2.0 * a / (l * l)) / lm;
    let z_mm = (a_ll - 2.0 * a_m / m + 2.0 * a / (m * m)) / lm;
    let z_lm = (a_lm - a_l / m - a_m / l + a / lm) / lm;

    let h = HessLogP {
        d_ll: -fj / (l * l) + n * lphi_ll + cu * z_ll + lzz * z_l * z_l,
        d_lm: n * lphi_lm + cu * z_lm + lzz * z_l * z_m,
        d_mm: -fi / (m * m) + n * lphi_mm + cu * z_mm + lzz * z_m * z_m,
    };
    Ok((grad, h))
}

/// `λ = μ`, with `u, v` evaluated at `z = (λt)^-2 - 1`.
fn equal_rates(i: u64, j: u64, t: f64, l: f64, hess: bool) -> Result<(GradLogP, HessLogP)> {
    let (fi, fj) = (i as f64, j as f64);
    let n = fi + fj;
    let lt = l * t;
    let lt2 = lt * lt;
    let z = 1.0 / lt2 - 1.0;
    let (cu, lzz) = hyper_terms(i, j, z, hess)?;

    let lphi_1 = -t / (2.0 * (1.0 + lt));
    let lf_1 = -cu / (l * lt2);
    let grad = GradLogP {
        d_lambda: fj / l + n * lphi_1 + lf_1,
        d_mu: fi / l + n * lphi_1 + lf_1,
    };
    if !hess {
        return Ok((grad, HessLogP::default()));
    }

    let q = 12.0 * (1.0 + lt) * (1.0 + lt);
    let lphi_same = (1.0 - 2.0 * lt) * t * t / q;
    let lphi_cross = (5.0 + 2.0 * lt) * t * t / q;
    let tail = lzz / lt2;
    let pre = 1.0 / (l * l * lt2);
    let lf_same = pre * ((12.0 - lt2) * cu / 6.0 + tail);
    let lf_cross = pre * ((6.0 + lt2) * cu / 6.0 + tail);
    let l2 = l * l;
    let h = HessLogP {
        d_ll: -fj / l2 + n * lphi_same + lf_same,
        d_lm: n * lphi_cross + lf_cross,
        d_mm: -fi / l2 + n * lphi_same + lf_same,
    };
    Ok((grad, h))
}

struct BoundaryLabels {
    grad: &'static str,
    hess_second: &'static str,
}

const ZERO_MU: BoundaryLabels = BoundaryLabels {
    grad: "mu = 0 with j = i - 1",
    hess_second: "mu = 0 with j = i - 2",
};

const ZERO_LAMBDA: BoundaryLabels = BoundaryLabels {
    grad: "lambda = 0 with j = i + 1",
    hess_second: "lambda = 0 with j = i + 2",
};

/// Derivatives at `μ = 0`, `λ > 0`, `t > 0`, `i > 0`.
fn zero_death(
    i: u64,
    j: u64,
    t: f64,
    l: f64,
    hess: bool,
    labels: BoundaryLabels,
) -> Result<(GradLogP, HessLogP)> {
    if j + 1 == i {
        // p ~ μ near the boundary: log p ~ log μ
        let sign = if hess { -1.0 } else { 1.0 };
        return Err(Error::Discontinuity {
            boundary: labels.grad,
            sign,
        });
    }
    let (fi, fj) = (i as f64, j as f64);
    let lt = l * t;
    let em = lt.exp_m1();
    let em_neg = (-lt).exp_m1();
    let x = lt.exp();
    let d1 = fi - fj - 1.0;

    let q = fi + (fi - fj) / em;
    let bi = fi * (fi - 1.0);
    let bj = fj * (fj + 1.0);
    // i(i-1)x + j(j+1)/x - 2ij, regrouped around x = 1
    let n1 = bi * em + bj * em_neg + (fi - fj) * d1;
    let grad = GradLogP {
        d_lambda: -q * t,
        d_mu: q * t - n1 / (d1 * l),
    };
    if !hess {
        return Ok((grad, HessLogP::default()));
    }
    if j + 2 == i {
        return Err(Error::Discontinuity {
            boundary: labels.hess_second,
            sign: -1.0,
        });
    }

    let d2 = fi - fj - 2.0;
    let l2 = l * l;
    // x/(x-1)^2 = 1 / (expm1(λt) (1 - e^{-λt}))
    let emom = em * -em_neg;
    let d_ll = (fi - fj) * t * t / emom;
    let n2 = bi * (x - 2.0 * lt) * x + bj * (1.0 / x + 2.0 * lt) / x - 2.0 * fi * fj;
    let d_mm = d_ll + bi * bj * emom * emom / (d1 * d1 * d2 * l2) - n2 / (d1 * l2);
    let n3 = bi * (1.0 - lt) * x + bj * (1.0 + lt) / x - 2.0 * fi * fj;
    let d_lm = -d_ll + n3 / (d1 * l2);
    Ok((grad, HessLogP { d_ll, d_lm, d_mm }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::log_transition_prob;

    fn q(i: u64, j: u64, t: f64) -> TransitionQuery {
        TransitionQuery::new(i, j, t).unwrap()
    }

    fn r(l: f64, m: f64) -> Rates {
        Rates::new(l, m).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn zero_time_and_origin() {
        assert_eq!(
            log_prob_grad(&q(3, 7, 0.0), &r(1.0, 2.0)).unwrap(),
            GradLogP::default()
        );
        let g = log_prob_grad(&q(5, 5, 2.0), &r(0.0, 0.0)).unwrap();
        assert_eq!((g.d_lambda, g.d_mu), (-10.0, -10.0));
        let h = log_prob_hessian(&q(4, 4, 3.0), &r(0.0, 0.0)).unwrap();
        assert_eq!((h.d_ll, h.d_lm, h.d_mm), (0.0, 144.0, 0.0));
        assert!(matches!(
            log_prob_grad(&q(4, 5, 3.0), &r(0.0, 0.0)),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn pure_death_example() {
        let g = log_prob_grad(&q(2, 1, 2f64.ln()), &r(0.0, 1.0)).unwrap();
        assert!(g.d_mu.abs() < 1e-15);
        assert!((g.d_lambda + 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_discontinuities() {
        let e = log_prob_hessian(&q(3, 4, 1.0), &r(0.0, 1.0)).unwrap_err();
        assert!(matches!(e, Error::Discontinuity { .. }));
        assert!(log_prob_grad(&q(3, 4, 1.0), &r(0.0, 1.0)).is_err());
        assert!(log_prob_hessian(&q(3, 2, 1.0), &r(0.0, 1.0)).is_ok());
        assert!(log_prob_grad(&q(4, 2, 1.0), &r(1.0, 0.0)).is_ok());
        assert!(log_prob_hessian(&q(4, 2, 1.0), &r(1.0, 0.0)).is_err());
        assert!(log_prob_grad(&q(4, 3, 1.0), &r(1.0, 0.0)).is_err());
    }

    #[test]
    fn finite_differences_at_reference_point() {
        let (qq, rr) = (q(25, 35, 2.0), r(1.0, 0.5));
        let (g, h) = log_prob_derivs(&qq, &rr).unwrap();
        let f = |l: f64, m: f64| log_transition_prob(&qq, &r(l, m)).unwrap();
        let hl = 1e-6;
        let fd_l = (f(1.0 + hl, 0.5) - f(1.0 - hl, 0.5)) / (2.0 * hl);
        let hm = 0.5e-6;
        let fd_m = (f(1.0, 0.5 + hm) - f(1.0, 0.5 - hm)) / (2.0 * hm);
        assert!(rel(g.d_lambda, fd_l) < 1e-6, "{} {}", g.d_lambda, fd_l);
        assert!(rel(g.d_mu, fd_m) < 1e-6, "{} {}", g.d_mu, fd_m);

        let gr = |l: f64, m: f64| log_prob_grad(&qq, &r(l, m)).unwrap();
        let fd_ll = (gr(1.0 + hl, 0.5).d_lambda - gr(1.0 - hl, 0.5).d_lambda) / (2.0 * hl);
        let fd_lm = (gr(1.0, 0.5 + hm).d_lambda - gr(1.0, 0.5 - hm).d_lambda) / (2.0 * hm);
        let fd_mm = (gr(1.0, 0.5 + hm).d_mu - gr(1.0, 0.5 - hm).d_mu) / (2.0 * hm);
        assert!(rel(h.d_ll, fd_ll) < 1e-5, "{h:?} {fd_ll} {fd_lm} {fd_mm}");
        assert!(rel(h.d_lm, fd_lm) < 1e-5);
        assert!(rel(h.d_mm, fd_mm) < 1e-5);
    }

    #[test]
    fn equal_rates_branch_matches_neighbourhood() {
        for &(i, j, t, l) in &[
            (3u64, 5u64, 1.3, 0.8),
            (10, 4, 0.5, 2.0),
            (1, 1, 2.0, 0.3),
            (7, 0, 1.0, 1.0),
        ] {
            let (g0, h0) = log_prob_derivs(&q(i, j, t), &r(l, l)).unwrap();
            for eps in [1e-8, -1e-8] {
                let (g, h) = log_prob_derivs(&q(i, j, t), &r(l, l * (1.0 + eps))).unwrap();
                assert!(rel(g.d_lambda, g0.d_lambda) < 1e-5);
                assert!(rel(g.d_mu, g0.d_mu) < 1e-5);
                assert!(rel(h.d_ll, h0.d_ll) < 1e-5);
                assert!(rel(h.d_lm, h0.d_lm) < 1e-5);
                assert!(rel(h.d_mm, h0.d_mm) < 1e-5);
            }
            if i == j {
                assert!(rel(h0.d_ll, h0.d_mm) < 1e-14);
            }
        }
    }

    #[test]
    fn zero_death_branch_matches_interior_limit() {
        for &(i, j, t, l) in &[
            (1u64, 1u64, 1.0, 1.0),
            (2, 3, 0.7, 1.3),
            (3, 7, 1.5, 0.4),
            (5, 5, 2.0, 0.8),
        ] {
            let (g0, h0) = log_prob_derivs(&q(i, j, t), &r(l, 0.0)).unwrap();
            // the interior Hessian carries -i/μ² terms, so extrapolate
            // quadratically from three small μ instead of going very close to 0
            let at = |k: f64| log_prob_derivs(&q(i, j, t), &r(l, k * 1e-4 * l)).unwrap();
            let (p1, p2, p3) = (at(1.0), at(2.0), at(3.0));
            let ex =
                |f: &dyn Fn(&(GradLogP, HessLogP)) -> f64| 3.0 * f(&p1) - 3.0 * f(&p2) + f(&p3);
            let tol = |a: f64, b: f64| (a - b).abs() <= 1e-4 * (1.0 + b.abs());
            assert!(tol(ex(&|p| p.0.d_lambda), g0.d_lambda));
            assert!(tol(ex(&|p| p.0.d_mu), g0.d_mu));
            assert!(tol(ex(&|p| p.1.d_ll), h0.d_ll));
            assert!(tol(ex(&|p| p.1.d_lm), h0.d_lm));
            assert!(
                tol(ex(&|p| p.1.d_mm), h0.d_mm),
                "{} {}",
                ex(&|p| p.1.d_mm),
                h0.d_mm
            );
            // mirrored: λ = 0 with roles of i and j exchanged
            let (gm, hm) = log_prob_derivs(&q(j, i, t), &r(0.0, l)).unwrap();
            assert_eq!(gm, g0.swapped());
            assert_eq!(hm, h0.swapped());
        }
    }
}
