//! Dose-response model: `log λ(c) = α_λ + β_λ log(1 + c)` and likewise for
//! `μ`, fitted to single-interval records.

use nalgebra::{DMatrix, DVector};

use super::fit::{initial_rates, to_log_coords};
use super::newton::{maximize, NewtonSettings, Objective};
use super::{ObservationSet, ObservedSeries};
use crate::error::{domain, Error, Result};
use crate::gradients::log_prob_derivs;
use crate::kernel::Rates;
use crate::transition::{log_transition_prob, TransitionQuery};

/// One culture: `n0` individuals at dose `dose`, `nt` of them after `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmRecord {
    pub dose: f64,
    pub time: f64,
    pub n0: u64,
    pub nt: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fit `β_λ, β_μ`; when false both are fixed at zero.
    pub slopes: bool,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            slopes: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseEstimate {
    pub dose: f64,
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
    pub se_lambda: Option<f64>,
    pub se_mu: Option<f64>,
    pub se_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub alpha_lambda: f64,
    pub beta_lambda: f64,
    pub alpha_mu: f64,
    pub beta_mu: f64,
    /// Covariance of `(α_λ, β_λ, α_μ, β_μ)` from the inverse observed
    /// information. Rows and columns of fixed slopes are zero.
    pub covariance: Option<[[f64; 4]; 4]>,
    /// One entry per distinct dose, in increasing dose order.
    pub per_dose: Vec<DoseEstimate>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub slopes: bool,
}

const LOG_BOUND: f64 = 100.0;
const MAX_STEP: f64 = 2.0;

struct DoseModel<'a> {
    records: &'a [GlmRecord],
    slopes: bool,
}

impl DoseModel<'_> {
    fn dim(&self) -> usize {
        if self.slopes {
            4
        } else {
            2
        }
    }

    /// Full `(α_λ, β_λ, α_μ, β_μ)` from the free parameters.
    fn full(&self, p: &DVector<f64>) -> [f64; 4] {
        if self.slopes {
            [p[0], p[1], p[2], p[3]]
        } else {
            [p[0], 0.0, p[1], 0.0]
        }
    }

    /// Derivatives of `(log λ, log μ)` with respect to the free parameters.
    fn jacobian(&self, x: f64) -> DMatrix<f64> {
        if self.slopes {
            DMatrix::from_row_slice(2, 4, &[1.0, x, 0.0, 0.0, 0.0, 0.0, 1.0, x])
        } else {
            DMatrix::identity(2, 2)
        }
    }
}

fn rates_for(c: &[f64; 4], dose: f64) -> Rates {
    let x = dose.ln_1p();
    Rates {
        lambda: (c[0] + c[1] * x).exp(),
        mu: (c[2] + c[3] * x).exp(),
    }
}

impl Objective for DoseModel<'_> {
    fn value(&self, p: &DVector<f64>) -> Result<f64> {
        let c = self.full(p);
        let mut total = 0.0;
        for r in self.records {
            let q = TransitionQuery::new(r.n0, r.nt, r.time)?;
            total += log_transition_prob(&q, &rates_for(&c, r.dose))?;
        }
        Ok(total)
    }

    fn derivs(&self, p: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let c = self.full(p);
        let n = self.dim();
        let mut v = 0.0;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for r in self.records {
            let q = TransitionQuery::new(r.n0, r.nt, r.time)?;
            let rates = rates_for(&c, r.dose);
            v += log_transition_prob(&q, &rates)?;
            let (g, h) = log_prob_derivs(&q, &rates)?;
            let (ge, he) = to_log_coords(&rates, &g, &h);
            let j = self.jacobian(r.dose.ln_1p());
            grad += j.transpose() * ge;
            hess += j.transpose() * he * &j;
        }
        Ok((v, grad, hess))
    }
}

fn validate(records: &[GlmRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidData("no dose records given".into()));
    }
    for r in records {
        if !(r.dose.is_finite() && r.dose >= 0.0) {
            return domain(format!("doses must be finite and >= 0, got {}", r.dose));
        }
        if !(r.time.is_finite() && r.time > 0.0) {
            return domain(format!(
                "record times must be finite and > 0, got {}",
                r.time
            ));
        }
        if r.n0 == 0 && r.nt != 0 {
            return Err(Error::InvalidData(format!(
                "extinction is absorbing, but 0 grew to {}",
                r.nt
            )));
        }
    }
    Ok(())
}

/// Maximum likelihood fit of the dose-response model with delta-method
/// standard errors for each dose level.
pub fn fit_glm(records: &[GlmRecord], opts: &GlmOptions) -> Result<GlmFit> {
    validate(records)?;
    let informative: Vec<GlmRecord> = records.iter().copied().filter(|r| r.n0 > 0).collect();
    if informative.is_empty() {
        return Err(Error::Undefined(
            "every record starts from 0 individuals".into(),
        ));
    }
    let mut doses: Vec<f64> = records.iter().map(|r| r.dose).collect();
    doses.sort_by(f64::total_cmp);
    doses.dedup();
    if opts.slopes {
        let mut seen: Vec<f64> = informative.iter().map(|r| r.dose.ln_1p()).collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        if seen.len() < 2 {
            return Err(Error::RankDeficient(
                "dose slopes need at least two distinct dose levels; refit without slopes".into(),
            ));
        }
    }

    let pooled = ObservationSet::new(
        informative
            .iter()
            .map(|r| ObservedSeries::new(vec![0.0, r.time], vec![r.n0, r.nt]))
            .collect::<Result<_>>()?,
    )?;
    let init = initial_rates(&pooled);
    let model = DoseModel {
        records: &informative,
        slopes: opts.slopes,
    };
    let x0 = if opts.slopes {
        DVector::from_vec(vec![init.lambda.ln(), 0.0, init.mu.ln(), 0.0])
    } else {
        DVector::from_vec(vec![init.lambda.ln(), init.mu.ln()])
    };
    let settings = NewtonSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
        max_step: MAX_STEP,
        bound: LOG_BOUND,
    };
    let out = maximize(&model, x0, &settings)?;
    let c = model.full(&out.x);

    let covariance = (-&out.hess).cholesky().map(|ch| {
        let inv = ch.inverse();
        let idx: &[usize] = if opts.slopes { &[0, 1, 2, 3] } else { &[0, 2] };
        let mut cov = [[0.0; 4]; 4];
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                cov[ia][ib] = 0.5 * (inv[(a, b)] + inv[(b, a)]);
            }
        }
        cov
    });

    let per_dose = doses
        .iter()
        .map(|&dose| {
            let r = rates_for(&c, dose);
            let x = dose.ln_1p();
            let (l, m) = (r.lambda, r.mu);
            let se = |g: [f64; 4]| {
                covariance.as_ref().and_then(|cov| {
                    let mut v = 0.0;
                    for a in 0..4 {
                        for b in 0..4 {
                            v += g[a] * cov[a][b] * g[b];
                        }
                    }
                    (v >= 0.0).then(|| v.sqrt())
                })
            };
            DoseEstimate {
                dose,
                lambda: l,
                mu: m,
                theta: l - m,
                se_lambda: se([l, l * x, 0.0, 0.0]),
                se_mu: se([0.0, 0.0, m, m * x]),
                se_theta: se([l, l * x, -m, -m * x]),
            }
        })
        .collect();

    Ok(GlmFit {
        alpha_lambda: c[0],
        beta_lambda: c[1],
        alpha_mu: c[2],
        beta_mu: c[3],
        covariance,
        per_dose,
        loglik: out.value,
        converged: out.converged,
        iterations: out.iterations,
        slopes: opts.slopes,
    })
}
