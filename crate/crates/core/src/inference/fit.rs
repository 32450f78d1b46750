//! Maximum likelihood fit of `(λ, μ)` to discretely observed series.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::newton::{maximize, NewtonOutcome, NewtonSettings, Objective};
use super::{loglik, loglik_derivs, theta_hat_pooled, ObservationSet};
use crate::error::{Error, Result};
use crate::gradients::{GradLogP, HessLogP};
use crate::kernel::Rates;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stationarity tolerance on the log-coordinate gradient, relative to
    /// `1 + |loglik|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Jittered starting points tried when the heuristic start does not
    /// converge.
    pub n_restarts: usize,
    /// Seed for the restart jitter.
    pub seed: u64,
    /// Drop series that are extinct at their first sampling time.
    pub condition_on_survival: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            n_restarts: 5,
            seed: 0,
            condition_on_survival: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub rates: Rates,
    pub theta: f64,
    pub se_lambda: Option<f64>,
    pub se_mu: Option<f64>,
    pub se_theta: Option<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Hessian of the log-likelihood in `(λ, μ)` at the estimate, with a
    /// vanishing rate set to exactly zero.
    pub hessian: HessLogP,
    /// A rate went to zero (less than 1e-6 expected events per individual
    /// over the longest interval).
    pub at_boundary: bool,
    /// Log-likelihood after each accepted step of the winning start.
    pub trace: Vec<f64>,
}

/// Smallest starting value for either rate.
const RATE_FLOOR: f64 = 1e-4;
/// Log-coordinates are confined to `[-LOG_BOUND, LOG_BOUND]`.
const LOG_BOUND: f64 = 100.0;
const MAX_LOG_STEP: f64 = 2.0;
const RESTART_JITTER: f64 = 1.0;
const BOUNDARY_EVENTS: f64 = 1e-6;

struct LogRates<'a> {
    data: &'a ObservationSet,
}

fn rates_at(x: &DVector<f64>) -> Rates {
    Rates {
        lambda: x[0].exp(),
        mu: x[1].exp(),
    }
}

impl Objective for LogRates<'_> {
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        loglik(&rates_at(x), self.data)
    }

    fn derivs(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let r = rates_at(x);
        let (v, g, h) = loglik_derivs(&r, self.data)?;
        let (grad, hess) = to_log_coords(&r, &g, &h);
        Ok((v, grad, hess))
    }
}

/// Gradient and Hessian with respect to `(log λ, log μ)`.
pub(super) fn to_log_coords(r: &Rates, g: &GradLogP, h: &HessLogP) -> (DVector<f64>, DMatrix<f64>) {
    let (l, m) = (r.lambda, r.mu);
    let grad = DVector::from_vec(vec![l * g.d_lambda, m * g.d_mu]);
    let hess = DMatrix::from_row_slice(
        2,
        2,
        &[
            l * l * h.d_ll + l * g.d_lambda,
            l * m * h.d_lm,
            l * m * h.d_lm,
            m * m * h.d_mm + m * g.d_mu,
        ],
    );
    (grad, hess)
}

/// Least-squares slope of `log n` on time, pooled across series with
/// per-series intercepts. Zero counts are skipped.
fn log_linear_slope(data: &ObservationSet) -> f64 {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for s in data.series() {
        let pts: Vec<(f64, f64)> = s
            .times()
            .iter()
            .zip(s.counts())
            .filter(|(_, &n)| n > 0)
            .map(|(&t, &n)| (t, (n as f64).ln()))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let k = pts.len() as f64;
        let tm = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
        for (t, y) in pts {
            sxy += (t - tm) * (y - ym);
            sxx += (t - tm) * (t - tm);
        }
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// `e^{θτ}(e^{θτ} - 1) / θ`, the variance of `n_τ` per starting individual
/// and unit of `λ + μ`.
fn variance_factor(theta: f64, tau: f64) -> f64 {
    let s = theta * tau;
    if s.abs() < 1e-12 {
        tau
    } else {
        s.exp() * s.exp_m1() / theta
    }
}

/// Heuristic starting point: the pooled equidistant growth estimate (or a
/// log-linear slope), split into `λ, μ` by matching the variance of the
/// one-step increments.
pub fn initial_rates(data: &ObservationSet) -> Rates {
    let theta = theta_hat_pooled(data.series())
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or_else(|| log_linear_slope(data));
    let (mut rss, mut scale) = (0.0, 0.0);
    for (i, j, tau) in data.transitions() {
        if i == 0 {
            continue;
        }
        let resid = j as f64 - i as f64 * (theta * tau).exp();
        rss += resid * resid;
        scale += i as f64 * variance_factor(theta, tau);
    }
    let sigma = if scale > 0.0 { rss / scale } else { 0.0 };
    let sigma = sigma.max(theta.abs());
    Rates {
        lambda: (0.5 * (sigma + theta)).max(RATE_FLOOR),
        mu: (0.5 * (sigma - theta)).max(RATE_FLOOR),
    }
}

fn standard_errors(h: &HessLogP) -> (Option<f64>, Option<f64>, Option<f64>) {
    let info = Matrix2::new(-h.d_ll, -h.d_lm, -h.d_lm, -h.d_mm);
    if !info.iter().all(|v| v.is_finite()) || info.cholesky().is_none() {
        return (None, None, None);
    }
    let Some(cov) = info.try_inverse() else {
        return (None, None, None);
    };
    let var_theta = cov[(0, 0)] + cov[(1, 1)] - 2.0 * cov[(0, 1)];
    let sd = |v: f64| (v >= 0.0 && v.is_finite()).then(|| v.sqrt());
    (sd(cov[(0, 0)]), sd(cov[(1, 1)]), sd(var_theta))
}

/// Maximum likelihood `(λ, μ)` by safeguarded Newton iterations in
/// `(log λ, log μ)` from several starting points.
pub fn fit_mle(data: &ObservationSet, opts: &FitOptions) -> Result<FitResult> {
    if data.series().iter().all(|s| s.extinct_at_first_sample()) {
        return Err(Error::Undefined(
            "every series is extinct at its first sampling time; the rates are not estimable"
                .into(),
        ));
    }
    let conditioned;
    let data = if opts.condition_on_survival {
        conditioned = data.conditioned_on_survival()?;
        &conditioned
    } else {
        data
    };
    if data.transitions().all(|(i, _, _)| i == 0) {
        return Err(Error::Undefined(
            "no transition starts from a positive count".into(),
        ));
    }

    let settings = NewtonSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
        max_step: MAX_LOG_STEP,
        bound: LOG_BOUND,
    };
    let obj = LogRates { data };
    let init = initial_rates(data);
    let x0 = DVector::from_vec(vec![init.lambda.ln(), init.mu.ln()]);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best: Option<NewtonOutcome> = None;
    let mut last_err = None;
    for k in 0..=opts.n_restarts {
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
        let start = if k == 0 {
            x0.clone()
        } else {
            x0.map(|v| v + rng.random_range(-RESTART_JITTER..RESTART_JITTER))
        };
        match maximize(&obj, start, &settings) {
            Ok(out) => {
                let better = match &best {
                    None => true,
                    Some(b) => (out.converged, out.value) > (b.converged, b.value),
                };
                if better {
                    best = Some(out);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(out) = best else {
        return Err(last_err
            .unwrap_or_else(|| Error::Undefined("no starting point could be evaluated".into())));
    };

    let rates = rates_at(&out.x);
    let tau_max = data.transitions().map(|(_, _, t)| t).fold(0.0, f64::max);
    let vanishing = |r: f64| r * tau_max < BOUNDARY_EVENTS;
    let at_boundary = vanishing(rates.lambda) || vanishing(rates.mu);
    // A tiny but positive rate puts the interior formulas in their
    // cancellation regime; the boundary formulas are exact there.
    let projected = Rates {
        lambda: if vanishing(rates.lambda) {
            0.0
        } else {
            rates.lambda
        },
        mu: if vanishing(rates.mu) { 0.0 } else { rates.mu },
    };
    let hessian = match loglik_derivs(&projected, data) {
        Ok((_, _, h)) if at_boundary => h,
        _ => loglik_derivs(&rates, data)?.2,
    };
    let (se_lambda, se_mu, se_theta) = standard_errors(&hessian);
    Ok(FitResult {
        rates,
        theta: rates.lambda - rates.mu,
        se_lambda,
        se_mu,
        se_theta,
        loglik: out.value,
        converged: out.converged,
        iterations: out.iterations,
        hessian,
        at_boundary,
        trace: out.trace,
    })
}
