//! Monte Carlo bias and RMSE of the maximum likelihood estimators.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::inference::{fit_mle, FitOptions, ObservationSet, ObservedSeries};
use crate::kernel::Rates;
use crate::simulate::{equidistant_times, replicate_rng, simulate_counts};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub n0: u64,
    /// Sampling intervals `S` over the horizon.
    pub intervals: usize,
    pub horizon: f64,
    pub rates: Rates,
    /// Independent series fitted jointly per simulation.
    pub replicates: usize,
    pub n_sims: usize,
    pub seed: u64,
    /// Discard a simulation when any of its series is extinct at the first
    /// sampling time.
    pub condition_on_survival: bool,
    pub fit: FitOptions,
}

impl StudyConfig {
    pub fn new(
        n0: u64,
        intervals: usize,
        rates: Rates,
        replicates: usize,
        n_sims: usize,
        seed: u64,
    ) -> Self {
        Self {
            n0,
            intervals,
            horizon: 10.0,
            rates,
            replicates,
            n_sims,
            seed,
            condition_on_survival: true,
            fit: FitOptions {
                n_restarts: 2,
                ..FitOptions::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if self.n0 == 0 || self.intervals == 0 || self.replicates == 0 || self.n_sims == 0 {
            return domain("n0, intervals, replicates and n_sims must all be >= 1");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return domain(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            ));
        }
        if self.rates.lambda == 0.0 && self.rates.mu == 0.0 {
            return domain("both rates are zero: nothing to estimate");
        }
        Ok(())
    }
}

/// Error summary for one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_se: f64,
    /// Monte Carlo standard error of `rmse` (delta method on the mean
    /// squared error).
    pub rmse_se: f64,
}

impl EstimatorSummary {
    fn from_errors(truth: f64, errors: &[f64]) -> Self {
        let n = errors.len() as f64;
        let bias = errors.iter().sum::<f64>() / n;
        let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let mse = sq.iter().sum::<f64>() / n;
        let rmse = mse.sqrt();
        let sd = |xs: &[f64], mean: f64| {
            if xs.len() < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        };
        let bias_se = sd(errors, bias) / n.sqrt();
        let rmse_se = if rmse > 0.0 {
            sd(&sq, mse) / n.sqrt() / (2.0 * rmse)
        } else {
            0.0
        };
        Self {
            truth,
            bias,
            rmse,
            bias_se,
            rmse_se,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub config: StudyConfig,
    pub lambda: EstimatorSummary,
    pub mu: EstimatorSummary,
    pub theta: EstimatorSummary,
    /// Simulations whose fit entered the summary.
    pub n_used: usize,
    /// Simulations dropped by the survival conditioning.
    pub n_discarded: usize,
    /// Simulations whose fit failed or did not converge.
    pub n_failed: usize,
}

enum Outcome {
    Discarded,
    Failed,
    Fitted(Rates),
}

fn one_simulation(cfg: &StudyConfig, times: &[f64], sim: usize) -> Result<Outcome> {
    let mut series = Vec::with_capacity(cfg.replicates);
    for r in 0..cfg.replicates {
        let mut rng = replicate_rng(cfg.seed, (sim * cfg.replicates + r) as u64);
        let counts = simulate_counts(&mut rng, cfg.n0, times, &cfg.rates)?;
        series.push(ObservedSeries::new(times.to_vec(), counts)?);
    }
    if cfg.condition_on_survival && series.iter().any(|s| s.extinct_at_first_sample()) {
        return Ok(Outcome::Discarded);
    }
    let data = ObservationSet::new(series)?;
    Ok(match fit_mle(&data, &cfg.fit) {
        Ok(f) if f.converged => Outcome::Fitted(f.rates),
        _ => Outcome::Failed,
    })
}

/// Simulate `n_sims` data sets, fit each, and summarise the estimation
/// errors. Results do not depend on the number of worker threads.
pub fn run_study(cfg: &StudyConfig) -> Result<McSummary> {
    cfg.validate()?;
    let times = equidistant_times(cfg.horizon, cfg.intervals);
    let outcomes = (0..cfg.n_sims)
        .into_par_iter()
        .map(|k| one_simulation(cfg, &times, k))
        .collect::<Result<Vec<_>>>()?;

    let (mut n_discarded, mut n_failed) = (0, 0);
    let mut fits = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Discarded => n_discarded += 1,
            Outcome::Failed => n_failed += 1,
            Outcome::Fitted(r) => fits.push(r),
        }
    }
    if fits.is_empty() {
        return Err(Error::Undefined(format!(
            "no usable simulation ({n_discarded} discarded, {n_failed} failed)"
        )));
    }
    let truth = cfg.rates;
    let errs =
        |f: &dyn Fn(&Rates) -> f64| fits.iter().map(|r| f(r) - f(&truth)).collect::<Vec<_>>();
    Ok(McSummary {
        config: *cfg,
        lambda: EstimatorSummary::from_errors(truth.lambda, &errs(&|r| r.lambda)),
        mu: EstimatorSummary::from_errors(truth.mu, &errs(&|r| r.mu)),
        theta: EstimatorSummary::from_errors(truth.theta(), &errs(&|r| r.theta())),
        n_used: fits.len(),
        n_discarded,
        n_failed,
    })
}

/// Header matching [`csv_row`].
pub const CSV_HEADER: &str = "n0,S,k,lambda,bias_lambda,rmse_lambda,mu,bias_mu,rmse_mu,theta,bias_theta,rmse_theta,\
n_used,n_discarded,n_failed,se_bias_lambda,se_rmse_lambda,se_bias_mu,se_rmse_mu,se_bias_theta,se_rmse_theta";

pub fn csv_row(s: &McSummary) -> String {
    let c = &s.config;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.n0,
        c.intervals,
        c.replicates,
        s.lambda.truth,
        s.lambda.bias,
        s.lambda.rmse,
        s.mu.truth,
        s.mu.bias,
        s.mu.rmse,
        s.theta.truth,
        s.theta.bias,
        s.theta.rmse,
        s.n_used,
        s.n_discarded,
        s.n_failed,
        s.lambda.bias_se,
        s.lambda.rmse_se,
        s.mu.bias_se,
        s.mu.rmse_se,
        s.theta.bias_se,
        s.theta.rmse_se,
    )
}
