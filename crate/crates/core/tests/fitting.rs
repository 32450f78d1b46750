use bdproc_core::inference::{
    fit_glm, fit_mle, initial_rates, loglik, loglik_grad, FitOptions, GlmOptions, GlmRecord,
    ObservationSet, ObservedSeries,
};
use bdproc_core::simulate::{equidistant_times, replicate_rng, simulate_counts};
use bdproc_core::{Error, Rates};

fn series(times: &[f64], counts: &[u64]) -> ObservedSeries {
    ObservedSeries::new(times.to_vec(), counts.to_vec()).unwrap()
}

fn simulated(n0: u64, intervals: usize, horizon: f64, rates: Rates, seed: u64) -> ObservedSeries {
    let times = equidistant_times(horizon, intervals);
    let counts = simulate_counts(&mut replicate_rng(seed, 0), n0, &times, &rates).unwrap();
    ObservedSeries::new(times, counts).unwrap()
}

#[test]
fn large_population_round_trip() {
    let truth = Rates::new(0.305, 0.236).unwrap();
    let mut covered = 0;
    for seed in 0..20 {
        let data = ObservationSet::single(simulated(1000, 8, 10.0, truth, seed));
        let fit = fit_mle(&data, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let se = fit.se_theta.expect("information is positive definite");
        if (fit.theta - truth.theta()).abs() <= 3.0 * se {
            covered += 1;
        }
        let g = loglik_grad(&fit.rates, &data).unwrap();
        if !fit.at_boundary {
            assert!(g.d_lambda.abs().max(g.d_mu.abs()) < 1e-6 * (1.0 + fit.loglik.abs()));
        }
    }
    assert!(covered >= 19, "{covered} of 20 within 3 SE");
}

#[test]
fn accepted_steps_never_lower_the_likelihood() {
    let data = ObservationSet::new(vec![
        series(&[0.0, 1.0, 2.5, 3.0], &[12, 15, 21, 19]),
        series(&[0.0, 2.0, 4.0], &[5, 9, 7]),
    ])
    .unwrap();
    let fit = fit_mle(&data, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*fit.trace.last().unwrap(), fit.loglik);
    assert_eq!(loglik(&fit.rates, &data).unwrap(), fit.loglik);
    assert_eq!(fit.theta, fit.rates.lambda - fit.rates.mu);
}

#[test]
fn starting_point_does_not_change_the_estimate() {
    let data = ObservationSet::single(series(&[0.0, 1.0, 2.0, 3.0, 4.0], &[20, 26, 25, 33, 38]));
    let a = fit_mle(&data, &FitOptions::default()).unwrap();
    let b = fit_mle(
        &data,
        &FitOptions {
            seed: 99,
            n_restarts: 0,
            ..FitOptions::default()
        },
    )
    .unwrap();
    assert!((a.rates.lambda - b.rates.lambda).abs() < 1e-8 * a.rates.lambda);
    assert!((a.rates.mu - b.rates.mu).abs() < 1e-8 * a.rates.mu);
}

#[test]
fn pure_death_data_goes_to_the_boundary() {
    let data = ObservationSet::single(series(&[0.0, 1.0, 2.0, 3.0], &[20, 15, 11, 9]));
    let fit = fit_mle(&data, &FitOptions::default()).unwrap();
    assert!(fit.converged && fit.at_boundary);
    assert!(fit.rates.lambda < 1e-6 && fit.rates.mu > 0.1);
    // binomial survival: e^{-μ} = (15 + 11 + 9) / (20 + 15 + 11)
    let closed = -(35.0f64 / 46.0).ln();
    assert!(
        (fit.rates.mu - closed).abs() < 1e-6,
        "{} vs {closed}",
        fit.rates.mu
    );
}

#[test]
fn immediate_extinction_is_not_estimable() {
    let dead = ObservationSet::new(vec![
        series(&[0.0, 1.0], &[3, 0]),
        series(&[0.0, 1.0, 2.0], &[1, 0, 0]),
    ])
    .unwrap();
    assert!(matches!(
        fit_mle(&dead, &FitOptions::default()),
        Err(Error::Undefined(_))
    ));
}

#[test]
fn conditioning_drops_early_extinctions() {
    let data = ObservationSet::new(vec![
        series(&[0.0, 1.0, 2.0], &[2, 0, 0]),
        series(&[0.0, 1.0, 2.0], &[10, 14, 17]),
        series(&[0.0, 1.0, 2.0], &[10, 9, 13]),
    ])
    .unwrap();
    let opts = FitOptions {
        condition_on_survival: true,
        ..FitOptions::default()
    };
    let kept = ObservationSet::new(data.series()[1..].to_vec()).unwrap();
    let a = fit_mle(&data, &opts).unwrap();
    let b = fit_mle(&kept, &FitOptions::default()).unwrap();
    assert_eq!(a.rates, b.rates);
    let c = fit_mle(&data, &FitOptions::default()).unwrap();
    assert!(c.loglik < a.loglik);
}

#[test]
fn initial_rates_are_positive_and_finite() {
    for data in [
        ObservationSet::single(series(&[0.0, 1.0], &[5, 5])),
        ObservationSet::single(series(&[0.0, 0.5, 2.0], &[5, 50, 500])),
        ObservationSet::single(series(&[0.0, 1.0, 2.0], &[5, 1, 0])),
    ] {
        let r = initial_rates(&data);
        assert!(r.lambda >= 1e-4 && r.mu >= 1e-4 && r.lambda.is_finite() && r.mu.is_finite());
    }
}

fn dose_records(truth: [f64; 4], doses: &[f64], per_dose: usize, seed: u64) -> Vec<GlmRecord> {
    let mut out = Vec::new();
    for (k, &dose) in doses
        .iter()
        .flat_map(|d| std::iter::repeat_n(d, per_dose))
        .enumerate()
    {
        let x = dose.ln_1p();
        let r = Rates::new(
            (truth[0] + truth[1] * x).exp(),
            (truth[2] + truth[3] * x).exp(),
        )
        .unwrap();
        let c = simulate_counts(&mut replicate_rng(seed, k as u64), 23, &[0.0, 1.0], &r).unwrap();
        out.push(GlmRecord {
            dose,
            time: 1.0,
            n0: 23,
            nt: c[1],
        });
    }
    out
}

#[test]
fn single_dose_needs_a_slope_free_fit() {
    let records = dose_records([1.0, 0.0, 0.8, 0.0], &[2.0], 30, 1);
    match fit_glm(&records, &GlmOptions::default()) {
        Err(Error::RankDeficient(msg)) => assert!(msg.contains("without slopes")),
        other => panic!("expected a rank-deficiency error, got {other:?}"),
    }
    let fit = fit_glm(
        &records,
        &GlmOptions {
            slopes: false,
            ..GlmOptions::default()
        },
    )
    .unwrap();
    assert!(fit.converged);
    assert_eq!((fit.beta_lambda, fit.beta_mu), (0.0, 0.0));
    assert_eq!(fit.per_dose.len(), 1);
}

#[test]
fn zero_dose_reduces_to_the_rate_fit() {
    let records = dose_records([1.2, 0.0, 0.9, 0.0], &[0.0], 40, 2);
    let glm = fit_glm(
        &records,
        &GlmOptions {
            slopes: false,
            ..GlmOptions::default()
        },
    )
    .unwrap();
    let pooled = ObservationSet::new(
        records
            .iter()
            .map(|r| series(&[0.0, r.time], &[r.n0, r.nt]))
            .collect(),
    )
    .unwrap();
    let fit = fit_mle(&pooled, &FitOptions::default()).unwrap();
    assert!((glm.alpha_lambda.exp() - fit.rates.lambda).abs() < 1e-6 * fit.rates.lambda);
    assert!((glm.alpha_mu.exp() - fit.rates.mu).abs() < 1e-6 * fit.rates.mu);
    assert!((glm.loglik - fit.loglik).abs() < 1e-9 * fit.loglik.abs());
    let d = glm.per_dose[0];
    assert!((d.se_theta.unwrap() - fit.se_theta.unwrap()).abs() < 1e-4 * fit.se_theta.unwrap());
}

#[test]
fn dose_estimates_follow_the_covariance() {
    let records = dose_records([1.4, -0.2, 1.1, 0.05], &[0.0, 1.0, 2.5, 5.0, 10.0], 20, 3);
    let fit = fit_glm(&records, &GlmOptions::default()).unwrap();
    let cov = fit.covariance.unwrap();
    for (a, row) in cov.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            assert_eq!(v, cov[b][a]);
        }
        assert!(row[a] > 0.0);
    }
    assert_eq!(
        fit.per_dose.iter().map(|d| d.dose).collect::<Vec<_>>(),
        vec![0.0, 1.0, 2.5, 5.0, 10.0]
    );
    let zero = fit.per_dose[0];
    // at dose 0 only the intercepts matter
    let se = fit.alpha_lambda.exp() * cov[0][0].sqrt();
    assert!((zero.se_lambda.unwrap() - se).abs() < 1e-12 * se);
}

#[test]
fn dose_records_are_validated() {
    let ok = GlmRecord {
        dose: 1.0,
        time: 1.0,
        n0: 5,
        nt: 6,
    };
    assert!(fit_glm(&[], &GlmOptions::default()).is_err());
    assert!(fit_glm(
        &[GlmRecord { dose: -1.0, ..ok }, ok],
        &GlmOptions::default()
    )
    .is_err());
    assert!(fit_glm(&[GlmRecord { time: 0.0, ..ok }, ok], &GlmOptions::default()).is_err());
    assert!(fit_glm(
        &[GlmRecord { n0: 0, nt: 2, ..ok }, ok],
        &GlmOptions::default()
    )
    .is_err());
}
