use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use bdproc_core::inference::{
    fit_glm, fit_mle, mle_continuous, FitOptions, GlmOptions, ObservationSet,
};
use bdproc_core::mc::{csv_row, run_study, StudyConfig, CSV_HEADER};
use bdproc_core::oracle::{relative_error_scan, PrecisionConfig, ScanGrid, ScanMethod};
use bdproc_core::simulate::{replicate_rng, sample_at_times, simulate_with, sufficient_stats};
use bdproc_core::transition::{log_transition_prob, transition_prob};
use bdproc_core::{Rates, TransitionQuery};

use crate::io::{self, num};
use crate::{
    CliError, Command, ErrorScanArgs, FitArgs, FitGlmArgs, McArgs, ProbArgs, SimulateArgs,
    EXIT_NOT_CONVERGED, EXIT_OK,
};

type Outcome = Result<u8, CliError>;

pub(crate) fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Prob(a) => prob(&a, out),
        Command::Simulate(a) => simulate(&a, out, err),
        Command::Fit(a) => fit(&a, out),
        Command::FitGlm(a) => fit_dose(&a, out),
        Command::Mc(a) => mc(&a, out),
        Command::ErrorScan(a) => error_scan(&a, out),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))
}

fn se(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

fn prob(a: &ProbArgs, out: &mut dyn Write) -> Outcome {
    let q = TransitionQuery::new(a.i, a.j, a.t)?;
    let r = Rates::new(a.lambda, a.mu)?;
    let v = if a.log {
        log_transition_prob(&q, &r)?
    } else {
        transition_prob(&q, &r)?
    };
    writeln!(out, "{}", num(v))?;
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let r = Rates::new(a.lambda, a.mu)?;
    if a.replicates == 0 {
        return Err(CliError::input("--replicates must be at least 1"));
    }
    if a.events && a.replicates != 1 {
        return Err(CliError::input(
            "--events prints a single trajectory; drop --replicates",
        ));
    }
    let times = a.sample.clone().unwrap_or_else(|| vec![0.0, a.tend]);
    if times.first() != Some(&0.0) || times.iter().any(|&t| t > a.tend) {
        return Err(CliError::input(
            "sampling times must start at 0 and not exceed --tend",
        ));
    }

    let mut ids = Vec::new();
    let mut series = Vec::new();
    for k in 0..a.replicates {
        let h = simulate_with(&mut replicate_rng(a.seed, k), a.i0, a.tend, &r)?;
        if a.stats {
            let s = sufficient_stats(&h);
            writeln!(
                err,
                "replicate={} births={} deaths={} exposure={}",
                k + 1,
                s.births,
                s.deaths,
                num(s.exposure)
            )?;
        }
        if a.events {
            io::write_events(out, &h)?;
            return Ok(EXIT_OK);
        }
        ids.push((k + 1).to_string());
        series.push(sample_at_times(&h, &times)?);
    }
    io::write_series(out, &ids, &ObservationSet::new(series)?)?;
    Ok(EXIT_OK)
}

fn fit(a: &FitArgs, out: &mut dyn Write) -> Outcome {
    if a.continuous {
        let h = io::read_events(open(&a.file)?)?;
        let s = sufficient_stats(&h);
        let r = mle_continuous(&s)?;
        let x = s.exposure;
        writeln!(
            out,
            "lambda_hat={} se={}",
            num(r.lambda),
            num((s.births as f64).sqrt() / x)
        )?;
        writeln!(
            out,
            "mu_hat={} se={}",
            num(r.mu),
            num((s.deaths as f64).sqrt() / x)
        )?;
        writeln!(
            out,
            "theta_hat={} se={}",
            num(r.theta()),
            num(((s.births + s.deaths) as f64).sqrt() / x)
        )?;
        writeln!(
            out,
            "births={} deaths={} exposure={}",
            s.births,
            s.deaths,
            num(x)
        )?;
        writeln!(out, "loglik={}", num(s.loglik(&r)))?;
        return Ok(EXIT_OK);
    }

    let (_, data) = io::read_series(open(&a.file)?)?;
    let opts = FitOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        n_restarts: a.restarts,
        seed: a.seed,
        condition_on_survival: a.condition_on_survival,
    };
    let f = fit_mle(&data, &opts)?;
    writeln!(
        out,
        "lambda_hat={} se={}",
        num(f.rates.lambda),
        se(f.se_lambda)
    )?;
    writeln!(out, "mu_hat={} se={}", num(f.rates.mu), se(f.se_mu))?;
    writeln!(out, "theta_hat={} se={}", num(f.theta), se(f.se_theta))?;
    writeln!(out, "loglik={}", num(f.loglik))?;
    writeln!(out, "converged={}", f.converged)?;
    writeln!(out, "iterations={}", f.iterations)?;
    writeln!(out, "at_boundary={}", f.at_boundary)?;
    Ok(if f.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn fit_dose(a: &FitGlmArgs, out: &mut dyn Write) -> Outcome {
    let records = io::read_doses(open(&a.file)?)?;
    let opts = GlmOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        slopes: !a.no_slopes,
    };
    let f = fit_glm(&records, &opts)?;
    let coef_se = |k: usize| {
        se(f.covariance
            .and_then(|c| (c[k][k] > 0.0).then(|| c[k][k].sqrt())))
    };
    writeln!(
        out,
        "alpha_lambda={} se={}",
        num(f.alpha_lambda),
        coef_se(0)
    )?;
    writeln!(out, "beta_lambda={} se={}", num(f.beta_lambda), coef_se(1))?;
    writeln!(out, "alpha_mu={} se={}", num(f.alpha_mu), coef_se(2))?;
    writeln!(out, "beta_mu={} se={}", num(f.beta_mu), coef_se(3))?;
    writeln!(out, "loglik={}", num(f.loglik))?;
    writeln!(out, "converged={}", f.converged)?;
    writeln!(out, "iterations={}", f.iterations)?;
    writeln!(out)?;
    writeln!(out, "dose,lambda,se_lambda,mu,se_mu,theta,se_theta")?;
    for d in &f.per_dose {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(d.dose),
            num(d.lambda),
            se(d.se_lambda),
            num(d.mu),
            se(d.se_mu),
            num(d.theta),
            se(d.se_theta)
        )?;
    }
    Ok(if f.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn mc(a: &McArgs, out: &mut dyn Write) -> Outcome {
    let r = Rates::new(a.lambda, a.mu)?;
    let mut cfg = StudyConfig::new(a.n0, a.intervals, r, a.replicates, a.sims, a.seed);
    cfg.horizon = a.horizon;
    cfg.condition_on_survival = !a.no_conditioning;
    let s = run_study(&cfg)?;
    if !a.no_header {
        writeln!(out, "{CSV_HEADER}")?;
    }
    writeln!(out, "{}", csv_row(&s))?;
    Ok(EXIT_OK)
}

fn error_scan(a: &ErrorScanArgs, out: &mut dyn Write) -> Outcome {
    let grid = ScanGrid::for_figure(a.figure)?;
    let method = match (a.method.as_deref(), a.figure) {
        (Some("naive"), _) | (None, 1) => ScanMethod::Naive,
        _ => ScanMethod::Ttrr,
    };
    let cfg = PrecisionConfig {
        working_bits: a.bits,
        ..PrecisionConfig::default()
    };
    let rows = relative_error_scan(&grid, method, &cfg)?;
    let plane = a.figure == 4;
    writeln!(
        out,
        "{}log_p_ref,log_p_method,rel_err",
        if plane { "lambda,mu," } else { "mu," }
    )?;
    for row in rows {
        if plane {
            write!(out, "{},", num(row.rates.lambda))?;
        }
        writeln!(
            out,
            "{},{},{},{}",
            num(row.rates.mu),
            num(row.log_p_ref),
            num(row.log_p_method),
            num(row.rel_err)
        )?;
    }
    Ok(EXIT_OK)
}
