//! Dispatch from parsed arguments to the library, and serialization.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use cloudsre::cloud::{gen_drops, CloudParams};
use cloudsre::diagnostics::{
    check_stability_conditions, coupling_decay, estimate_lyapunov, stationarity_test, Check,
    CouplingSummary, DiagnosticsError, DiagnosticsReport, KS_ALPHA,
};
use cloudsre::sre::{iterate, series_solution, SreError, DIVERGENCE_THRESHOLD};
use cloudsre::{ACoeff, BCoeff, CoeffProcess, Form, NoiseStream, VERSION};

use crate::args::{
    Cli, Command, CoupleArgs, Format, GenerateArgs, LyapunovArgs, SeriesArgs, SimulateArgs,
    StationarityArgs,
};

/// Draws behind the stability verdict attached to a stationarity report.
const VERDICT_SAMPLES: usize = 100_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    CheckFailed = 1,
    Anomaly = 3,
}

/// Rendered output and the status it should exit with.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub status: Status,
    /// Short note for stderr.
    pub note: Option<String>,
}

#[derive(Serialize)]
struct Envelope<P, B> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    params: P,
    #[serde(flatten)]
    body: B,
}

fn envelope<P: Serialize, B: Serialize>(command: &'static str, seed: u64, params: P, body: B) -> String {
    let env = Envelope {
        command,
        version: VERSION,
        seed,
        params,
        body,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("plain data serializes");
    text.push('\n');
    text
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn require_json(format: Format, command: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!(
            "{command} only writes json; csv is available for generate and simulate"
        ))),
    }
}

/// Shortest decimal that round-trips to the same `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let seed = cli.global.seed;
    let format = cli.global.format;
    match &cli.command {
        Command::Generate(a) => generate(a, seed, format),
        Command::Simulate(a) => simulate(a, seed, format),
        Command::Series(a) => {
            require_json(format, "series")?;
            series(a, seed)
        }
        Command::Lyapunov(a) => {
            require_json(format, "lyapunov")?;
            lyapunov(a, seed)
        }
        Command::Couple(a) => {
            require_json(format, "couple")?;
            couple(a, seed)
        }
        Command::Stationarity(a) => {
            require_json(format, "stationarity")?;
            stationarity(a, seed)
        }
    }
}

fn generate(args: &GenerateArgs, seed: u64, format: Format) -> Result<Outcome, CliError> {
    let params = CloudParams::new(args.en.0.clone(), args.he).map_err(usage)?;
    let n = usize::try_from(args.n).map_err(usage)?;
    let batch =
        gen_drops(&params, n, &mut NoiseStream::new(seed), args.definition).map_err(usage)?;
    let text = match format {
        Format::Csv => {
            let mut s = String::with_capacity(24 * batch.values.len() + 8);
            s.push_str("drop\n");
            for v in &batch.values {
                writeln!(s, "{}", fmt_f64(*v)).unwrap();
            }
            s
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                definition: cloudsre::Definition,
                values: &'a [f64],
            }
            envelope(
                "generate",
                seed,
                &batch.params,
                Body {
                    definition: batch.definition,
                    values: &batch.values,
                },
            )
        }
    };
    Ok(Outcome {
        text,
        status: Status::Ok,
        note: None,
    })
}

#[derive(Serialize)]
struct SimParams<'a> {
    form: Form,
    a: &'a ACoeff,
    b: &'a BCoeff,
    x0: f64,
    steps: u64,
}

fn simulate(args: &SimulateArgs, seed: u64, format: Format) -> Result<Outcome, CliError> {
    let coeffs = CoeffProcess::new(args.a, args.b.clone()).map_err(usage)?;
    let form = Form::from(args.form);
    let steps = usize::try_from(args.steps).map_err(usage)?;
    let traj = iterate(form, &coeffs, args.x0, steps, NoiseStream::new(seed), seed)
        .map_err(usage)?;
    let anomaly = traj.diverged_at.map(|t| {
        format!(
            "divergence guard: |X| exceeded {DIVERGENCE_THRESHOLD:e} at t = {t}; trajectory truncated"
        )
    });
    let text = match format {
        Format::Csv => {
            let mut s = String::with_capacity(28 * traj.values.len() + 8);
            s.push_str("t,x\n");
            for (t, x) in traj.values.iter().enumerate() {
                writeln!(s, "{t},{}", fmt_f64(*x)).unwrap();
            }
            s
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                values: &'a [f64],
                diverged_at: Option<usize>,
                #[serde(skip_serializing_if = "Option::is_none")]
                anomaly: Option<&'a str>,
            }
            let params = SimParams {
                form,
                a: &args.a,
                b: &args.b,
                x0: args.x0,
                steps: args.steps,
            };
            let body = Body {
                values: &traj.values,
                diverged_at: traj.diverged_at,
                anomaly: anomaly.as_deref(),
            };
            envelope("simulate", seed, params, body)
        }
    };
    Ok(Outcome {
        text,
        status: if anomaly.is_some() {
            Status::Anomaly
        } else {
            Status::Ok
        },
        note: anomaly,
    })
}

fn series(args: &SeriesArgs, seed: u64) -> Result<Outcome, CliError> {
    #[derive(Serialize)]
    struct Params<'a> {
        a: &'a ACoeff,
        b: &'a BCoeff,
        kmax: u64,
        tol: f64,
    }
    #[derive(Serialize)]
    #[serde(untagged)]
    enum Body {
        Value(cloudsre::sre::SeriesApprox),
        Anomaly { anomaly: String },
    }
    let coeffs = CoeffProcess::new(args.a, args.b.clone()).map_err(usage)?;
    let kmax = usize::try_from(args.kmax).map_err(usage)?;
    let params = Params {
        a: &args.a,
        b: &args.b,
        kmax: args.kmax,
        tol: args.tol,
    };
    match series_solution(&coeffs, &mut NoiseStream::new(seed), kmax, args.tol) {
        Ok(approx) => Ok(Outcome {
            text: envelope("series", seed, params, Body::Value(approx)),
            status: Status::Ok,
            note: None,
        }),
        Err(e @ SreError::NonSummable { .. }) => {
            let anomaly = e.to_string();
            Ok(Outcome {
                text: envelope(
                    "series",
                    seed,
                    params,
                    Body::Anomaly {
                        anomaly: anomaly.clone(),
                    },
                ),
                status: Status::Anomaly,
                note: Some(anomaly),
            })
        }
        Err(e) => Err(usage(e)),
    }
}

/// Turns a diagnostics error into a report anomaly, or a usage error when it
/// is not numeric.
fn absorb(report: &mut DiagnosticsReport, e: DiagnosticsError) -> Result<(), CliError> {
    if e.is_numeric_anomaly() {
        report.anomaly = Some(e.to_string());
        Ok(())
    } else {
        Err(usage(e))
    }
}

fn report_outcome<P: Serialize>(
    command: &'static str,
    seed: u64,
    params: P,
    report: DiagnosticsReport,
) -> Outcome {
    let status = if report.anomaly.is_some() {
        Status::Anomaly
    } else if report.all_passed() {
        Status::Ok
    } else {
        Status::CheckFailed
    };
    let note = report.anomaly.clone().or_else(|| {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", ")))
    });
    Outcome {
        text: envelope(command, seed, params, report),
        status,
        note,
    }
}

fn lyapunov(args: &LyapunovArgs, seed: u64) -> Result<Outcome, CliError> {
    #[derive(Serialize)]
    struct Params {
        scale: f64,
        samples: usize,
    }
    let a = ACoeff::Gaussian { scale: args.scale };
    let mut report = DiagnosticsReport::default();
    match estimate_lyapunov(&a, args.samples, &mut NoiseStream::new(seed)) {
        Ok(est) => {
            let closed = est.closed_form.expect("Gaussian A has a closed form");
            report.checks.push(Check::new(
                "closed_form_agreement",
                est.agrees_with_closed_form(),
                format!(
                    "|{} - ({closed})| = {:e} vs 4 stderr = {:e}",
                    est.estimate,
                    (est.estimate - closed).abs(),
                    4.0 * est.stderr
                ),
            ));
            report.lyapunov = Some(est);
        }
        Err(e) => absorb(&mut report, e)?,
    }
    let params = Params {
        scale: args.scale,
        samples: args.samples,
    };
    Ok(report_outcome("lyapunov", seed, params, report))
}

fn couple(args: &CoupleArgs, seed: u64) -> Result<Outcome, CliError> {
    #[derive(Serialize)]
    struct Params<'a> {
        scale: f64,
        b: &'a BCoeff,
        x0: f64,
        x0_alt: f64,
        steps: usize,
    }
    let coeffs =
        CoeffProcess::new(ACoeff::Gaussian { scale: args.scale }, args.b.clone()).map_err(usage)?;
    let mut report = DiagnosticsReport::default();
    match coupling_decay(
        &coeffs,
        args.x0,
        args.x0_alt,
        args.steps,
        &mut NoiseStream::new(seed),
    ) {
        Ok(result) => {
            report.checks.push(Check::new(
                "pathwise_contraction",
                result.contraction_violations == 0,
                format!(
                    "{} violations of |D_t| <= |A_t||D_(t-1)| over {} steps",
                    result.contraction_violations, args.steps
                ),
            ));
            report.coupling = Some(CouplingSummary::from(&result));
        }
        Err(e) => absorb(&mut report, e)?,
    }
    let params = Params {
        scale: args.scale,
        b: &args.b,
        x0: args.x0,
        x0_alt: args.x0_alt,
        steps: args.steps,
    };
    Ok(report_outcome("couple", seed, params, report))
}

fn stationarity(args: &StationarityArgs, seed: u64) -> Result<Outcome, CliError> {
    #[derive(Serialize)]
    struct Params<'a> {
        scale: f64,
        b: &'a BCoeff,
        burn_in: usize,
        lags: &'a [usize],
        replicas: usize,
        x0: f64,
    }
    let coeffs =
        CoeffProcess::new(ACoeff::Gaussian { scale: args.scale }, args.b.clone()).map_err(usage)?;
    let base = NoiseStream::new(seed);
    let mut report = DiagnosticsReport::default();
    // Replica r runs on substream r; the verdict uses a substream no replica
    // index reaches.
    let mut verdict_stream = base.substream(u64::MAX);
    let stability = check_stability_conditions(&coeffs, VERDICT_SAMPLES, &mut verdict_stream)
        .map_err(usage)?;
    report.lyapunov = Some(stability.lyapunov);
    report.logplus_b = Some(stability.logplus_b);
    report.verdict = Some(stability.verdict);
    match stationarity_test(
        &coeffs,
        args.x0,
        args.burn_in,
        &args.lags.0,
        args.replicas,
        &base,
    ) {
        Ok(result) => {
            for k in &result.ks_stats {
                report.checks.push(Check::new(
                    format!("ks_lag_{}", k.lag),
                    k.p_value >= KS_ALPHA,
                    format!("D = {}, p = {:e} (reject below {KS_ALPHA})", k.statistic, k.p_value),
                ));
            }
            report.stationarity = Some(result);
        }
        Err(e) => absorb(&mut report, e)?,
    }
    let params = Params {
        scale: args.scale,
        b: &args.b,
        burn_in: args.burn_in,
        lags: &args.lags.0,
        replicas: args.replicas,
        x0: args.x0,
    };
    Ok(report_outcome("stationarity", seed, params, report))
}
