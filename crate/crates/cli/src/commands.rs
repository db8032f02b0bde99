use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use hawkes_watch::bench::{self, AccuracyOptions, CaseOptions};
use hawkes_watch::detector::{run_online, DetectorConfig, Method};
use hawkes_watch::em;
use hawkes_watch::io::{read_events, write_events, EventFormat, ReadOptions};
use hawkes_watch::simulate::{simulate_with_change, SimSeed};
use hawkes_watch::theory::{self, IntegrationConfig};
use hawkes_watch::{EventStream, HawkesParams, Setting, Window};
use serde::Serialize;

use crate::config::{matrix_rows, MethodName, ModelSpec, RunConfig, ThresholdSource};
use crate::{
    AccuracyArgs, ArlArgs, AucArgs, BenchCommand, CalibrateArgs, Command, DataError, DetectArgs, EddArgs, EstimateArgs,
    Format, MethodChoice, ModelArgs, SettingArg, SimulateArgs, ThresholdArgs, UsageError, ValidateArgs,
};

// Seed salts for thresholds computed outside the bench harness.
const SALT_CALIBRATE: u64 = 2;
const SALT_THEORY: u64 = 3;

pub fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Estimate(a) => estimate(a),
        Command::Threshold(a) => threshold(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Bench(BenchCommand::Edd(a)) => bench_edd(a),
        Command::Bench(BenchCommand::Arl(a)) => bench_arl(a),
        Command::Bench(BenchCommand::Auc(a)) => bench_auc(a),
        Command::Bench(BenchCommand::ThresholdAccuracy(a)) => bench_accuracy(a),
        Command::Validate(a) => validate(a),
    }
}

/// Prints a resolved configuration to stderr as TOML.
fn announce<T: Serialize>(what: &str, value: &T) {
    let body = toml::to_string(value).unwrap_or_else(|e| format!("# unprintable: {e}\n"));
    eprintln!("# resolved {what}\n{}", body.trim_end());
}

fn event_format(format: Option<Format>, path: &Path) -> EventFormat {
    match format {
        Some(Format::Csv) => EventFormat::Csv,
        Some(Format::Jsonl) => EventFormat::JsonLines,
        None => EventFormat::from_path(path),
    }
}

fn open_output(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(std::io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(open_output(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let (scenario, resolved) = match (&args.case, &args.config) {
        (Some(case), _) => {
            let preset = bench::case_preset(*case)?;
            let cfg = RunConfig {
                seed: Some(args.seed),
                setting: Some(preset.setting()),
                model: ModelSpec::from_params(&preset.scenario.pre),
                post: Some(ModelSpec::from_params(&preset.scenario.post)),
                scenario: Some(crate::config::ScenarioSpec {
                    kappa: preset.scenario.kappa,
                    horizon: preset.scenario.horizon,
                    carry_history: Some(preset.scenario.carries_history()),
                }),
                detector: Default::default(),
                threshold: Default::default(),
                em: Default::default(),
            };
            (preset.scenario, cfg)
        }
        (None, Some(path)) => {
            let mut cfg = RunConfig::load(path)?;
            cfg.seed = Some(args.seed);
            (cfg.scenario()?, cfg)
        }
        (None, None) => bail!(UsageError("simulate needs --case or --config".into())),
    };
    eprintln!("# resolved config\n{}", resolved.to_toml().trim_end());
    let sample = simulate_with_change(&scenario, SimSeed::new(args.seed))?;
    eprintln!("# {} events, change at {}", sample.stream.len(), sample.kappa);
    write_events(&sample.stream, &args.output, event_format(args.format, &args.output))?;
    Ok(())
}

fn read_input(path: &Path, format: Option<Format>, dim: usize, allow_unsorted: bool) -> anyhow::Result<EventStream> {
    let opts = ReadOptions {
        dim: Some(dim),
        horizon: None,
        allow_unsorted,
    };
    Ok(read_events(path, event_format(format, path), opts)?)
}

/// Threshold of a run config: explicit, analytic or Monte Carlo.
fn resolve_threshold(cfg: &RunConfig) -> anyhow::Result<f64> {
    let spec = &cfg.threshold;
    let seed = cfg.seed;
    match spec.source {
        ThresholdSource::Explicit => spec
            .value
            .ok_or_else(|| DataError("threshold.source = \"explicit\" needs threshold.value".into()).into()),
        ThresholdSource::Theory => {
            if cfg.detector.method != MethodName::Glr {
                bail!(DataError(
                    "analytic thresholds exist only for the glr method; use threshold.source = \"mc\"".into()
                ));
            }
            let integ_seed = SimSeed::new(seed.unwrap_or(0)).derive(SALT_THEORY).seed;
            Ok(theory::solve_threshold(
                spec.arl,
                cfg.detector.window,
                cfg.setting()?,
                &cfg.null_params()?,
                &spec.integration(integ_seed),
            )?)
        }
        ThresholdSource::Mc => {
            let Some(seed) = seed else {
                bail!(UsageError(
                    "Monte Carlo thresholds need a seed (--seed or `seed` in the config)".into()
                ));
            };
            let cal = bench::calibrate_mc(
                &cfg.detector_config(f64::INFINITY)?,
                &cfg.null_params()?,
                spec.arl,
                spec.replicates,
                spec.horizon,
                SimSeed::new(seed).derive(SALT_CALIBRATE),
            )?;
            eprintln!(
                "# calibrated threshold {} (ARL estimate {:.1})",
                cal.threshold, cal.arl.exp_mle
            );
            Ok(cal.threshold)
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    time: f64,
    statistic: f64,
    alarm: bool,
}

#[derive(Serialize)]
struct EstimateLine<'a> {
    time: f64,
    influence: &'a [Vec<f64>],
}

fn detect(args: DetectArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(x) = args.threshold {
        cfg.threshold.source = ThresholdSource::Explicit;
        cfg.threshold.value = Some(x);
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.estimates.is_some() {
        cfg.detector.record_estimates = true;
    }
    let x = resolve_threshold(&cfg)?;
    cfg.threshold.source = ThresholdSource::Explicit;
    cfg.threshold.value = Some(x);
    eprintln!("# resolved config\n{}", cfg.to_toml().trim_end());
    let det = cfg.detector_config(x)?;
    let stream = read_input(&args.input, args.format, det.null.dim(), args.allow_unsorted)?;
    let trace = run_online(&stream, &det)?;

    // Header written by hand so that an empty trace still has one.
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(open_output(&args.output)?);
    w.write_record(["time", "statistic", "alarm"])?;
    let mut est = match &args.estimates {
        Some(path) => Some(open_output(path)?),
        None => None,
    };
    for r in &trace.records {
        let row = TraceRow {
            time: r.time,
            statistic: r.statistic,
            alarm: r.statistic > x,
        };
        w.serialize(row)?;
        if let (Some(out), Some(m)) = (est.as_mut(), &r.estimate) {
            let rows = matrix_rows(m);
            writeln!(
                out,
                "{}",
                serde_json::to_string(&EstimateLine {
                    time: r.time,
                    influence: &rows
                })?
            )?;
        }
    }
    w.flush()?;
    if let Some(mut out) = est {
        out.flush()?;
    }
    match trace.stopping_time {
        Some(t) => eprintln!("# alarm at t={t}"),
        None => eprintln!("# no alarm over {} events", trace.events_processed),
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput {
    window: (f64, f64),
    events: usize,
    influence: Vec<Vec<f64>>,
    iterations: usize,
    converged: bool,
    loglik: f64,
}

fn estimate(args: EstimateArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    eprintln!("# resolved config\n{}", cfg.to_toml().trim_end());
    let null = cfg.null_params()?;
    let stream = read_input(&args.input, args.format, null.dim(), args.allow_unsorted)?;
    let t = args.to.unwrap_or(stream.horizon());
    let tau = args.from.unwrap_or((t - cfg.detector.window).max(0.0));
    let window = Window::new(tau, t)?;
    let em_cfg = cfg.em.config();
    let prior = null.with_influence(em_cfg.cold_start(&null.mask));
    let fit = em::fit(&stream, window, &prior, &em_cfg)?;
    let out = EstimateOutput {
        window: (tau, t),
        events: stream.window_events(&window).len(),
        influence: matrix_rows(&fit.influence),
        iterations: fit.iterations,
        converged: fit.converged,
        loglik: fit.final_loglik(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

/// Null model, setting and window length described by [`ModelArgs`].
#[derive(Serialize)]
struct ResolvedModel {
    setting: Setting,
    window: f64,
    model: ModelSpec,
}

fn resolve_model(args: &ModelArgs) -> anyhow::Result<(HawkesParams, Setting, f64)> {
    let one_d = |alpha: f64| -> anyhow::Result<HawkesParams> {
        let p = HawkesParams::scalar(args.mu.unwrap_or(1.0), alpha, args.beta.unwrap_or(1.0));
        p.ensure_valid()?;
        Ok(p)
    };
    let (null, setting, window) = match (&args.config, args.setting) {
        (Some(path), setting) => {
            let cfg = RunConfig::load(path)?;
            let setting = match setting {
                Some(SettingArg::Poi2Haw | SettingArg::Poi2Haw1d) => Setting::PoissonToHawkes,
                Some(SettingArg::Haw2Haw | SettingArg::Haw2Haw1d) => Setting::HawkesToHawkes,
                None => cfg.setting()?,
            };
            (cfg.null_params()?, setting, args.window.unwrap_or(cfg.detector.window))
        }
        (None, Some(SettingArg::Poi2Haw1d)) => {
            if args.alpha.is_some_and(|a| a != 0.0) {
                bail!(UsageError(
                    "--alpha is the Hawkes null of haw2haw1d; poi2haw1d has none".into()
                ));
            }
            (one_d(0.0)?, Setting::PoissonToHawkes, args.window.unwrap_or(10.0))
        }
        (None, Some(SettingArg::Haw2Haw1d)) => {
            let Some(alpha) = args.alpha else {
                bail!(UsageError("haw2haw1d needs --alpha".into()));
            };
            (one_d(alpha)?, Setting::HawkesToHawkes, args.window.unwrap_or(10.0))
        }
        (None, Some(_)) => bail!(UsageError(
            "multivariate settings read the null model from --config".into()
        )),
        (None, None) => bail!(UsageError("give --setting or --config".into())),
    };
    announce(
        "model",
        &ResolvedModel {
            setting,
            window,
            model: ModelSpec::from_params(&null),
        },
    );
    Ok((null, setting, window))
}

fn threshold(args: ThresholdArgs) -> anyhow::Result<()> {
    let (null, setting, window) = resolve_model(&args.model)?;
    announce("options", &args);
    let integ = IntegrationConfig {
        delta: args.delta,
        grid_points: args.grid_points,
        mc_samples: args.mc_samples,
        seed: args.integration_seed,
    };
    let x = theory::solve_threshold(args.arl, window, setting, &null, &integ)?;
    let check = theory::arl(x, window, setting, &null, &integ)?;
    eprintln!("# analytic ARL at threshold: {:.1}", check.arl());
    println!("{x}");
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    let (null, setting, window) = resolve_model(&args.model)?;
    announce("options", &args);
    let det = DetectorConfig::new(null.clone(), setting, window, f64::INFINITY)
        .with_method(args.method.method(args.bin_width));
    let cal = bench::calibrate_mc(
        &det,
        &null,
        args.arl,
        args.replicates,
        args.horizon,
        SimSeed::new(args.seed).derive(SALT_CALIBRATE),
    )?;
    eprintln!(
        "# ARL estimate {:.1} from {} alarms in {} runs ({:.0}% censored)",
        cal.arl.exp_mle,
        cal.arl.alarms,
        cal.arl.replicates,
        100.0 * cal.arl.censored_fraction
    );
    if cal.arl.censored {
        eprintln!("# warning: many runs never alarmed; raise --horizon for a tighter estimate");
    }
    println!("{}", cal.threshold);
    Ok(())
}

#[derive(Serialize)]
struct EddRow {
    case: u8,
    method: &'static str,
    threshold: f64,
    threshold_source: bench::ThresholdSource,
    arl_target: f64,
    replicates: usize,
    edd: f64,
    std_error: f64,
    detected: usize,
    discarded: usize,
    missed: usize,
    seed: u64,
}

fn bench_edd(args: EddArgs) -> anyhow::Result<()> {
    announce("options", &args);
    let opts = CaseOptions {
        arl_target: args.arl,
        replicates: args.replicates,
        calibration_replicates: args.calibration_replicates,
        calibration_horizon: args.calibration_horizon,
        primary_threshold: match args.primary_threshold {
            ThresholdSource::Theory => bench::ThresholdSource::Theory,
            ThresholdSource::Mc => bench::ThresholdSource::MonteCarlo,
            ThresholdSource::Explicit => bail!(UsageError("--primary-threshold is theory or mc".into())),
        },
        bin_width: args.bin_width,
        integration: IntegrationConfig::default(),
    };
    let methods: Vec<Method> = match args.method {
        MethodChoice::All => vec![
            Method::Glr,
            Method::BinnedPoisson {
                bin_width: args.bin_width,
            },
            Method::NodewiseGlr,
        ],
        MethodChoice::Glr => vec![Method::Glr],
        MethodChoice::Baseline1 => vec![Method::BinnedPoisson {
            bin_width: args.bin_width,
        }],
        MethodChoice::Baseline2 => vec![Method::NodewiseGlr],
    };
    let mut rows = Vec::new();
    for m in methods {
        let r = bench::run_case_preset(args.case, m, &opts, args.seed)?;
        rows.push(EddRow {
            case: r.case,
            method: r.method,
            threshold: r.threshold,
            threshold_source: r.threshold_source,
            arl_target: args.arl,
            replicates: r.edd.replicates,
            edd: r.edd.edd,
            std_error: r.edd.std_error,
            detected: r.edd.detected,
            discarded: r.edd.discarded,
            missed: r.edd.missed,
            seed: r.seed,
        });
    }
    write_csv(&args.output, &rows)
}

#[derive(Serialize)]
struct ArlRow {
    method: &'static str,
    threshold: f64,
    arl: f64,
    censored_mean: f64,
    std_error: f64,
    alarms: usize,
    replicates: usize,
    censored_fraction: f64,
    censored: bool,
    seed: u64,
}

fn bench_arl(args: ArlArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(x) = args.threshold {
        cfg.threshold.source = ThresholdSource::Explicit;
        cfg.threshold.value = Some(x);
    }
    cfg.seed = Some(args.seed);
    let x = resolve_threshold(&cfg)?;
    cfg.threshold.source = ThresholdSource::Explicit;
    cfg.threshold.value = Some(x);
    eprintln!("# resolved config\n{}", cfg.to_toml().trim_end());
    announce("options", &args);
    let det = cfg.detector_config(x)?;
    let arl = bench::estimate_arl_mc(
        &det,
        &cfg.null_params()?,
        args.replicates,
        args.horizon,
        SimSeed::new(args.seed).derive(1),
    )?;
    let row = ArlRow {
        method: det.method.name(),
        threshold: x,
        arl: arl.exp_mle,
        censored_mean: arl.mean,
        std_error: arl.std_error,
        alarms: arl.alarms,
        replicates: arl.replicates,
        censored_fraction: arl.censored_fraction,
        censored: arl.censored,
        seed: args.seed,
    };
    write_csv(&args.output, &[row])
}

#[derive(Serialize)]
struct AucRow {
    config: String,
    method: &'static str,
    auc: f64,
    n_sequences: usize,
    window: f64,
    seed: u64,
}

fn bench_auc(args: AucArgs) -> anyhow::Result<()> {
    announce("options", &args);
    let methods: Vec<Method> = args.methods.iter().map(|m| m.method(args.bin_width)).collect();
    let mut rows = Vec::new();
    for name in &args.presets {
        let mut cfg = bench::auc_preset(name)?;
        cfg.window_length = args.window;
        cfg.horizon = args.horizon;
        cfg.kappa = args.kappa;
        cfg.n_sequences = args.sequences;
        cfg.bin_width = args.bin_width;
        let mut configs = vec![cfg.clone()];
        if args.control {
            configs.push(cfg.control());
        }
        for c in configs {
            for r in bench::roc_auc(&c, &methods, args.seed)? {
                rows.push(AucRow {
                    config: r.config,
                    method: r.method,
                    auc: r.auc,
                    n_sequences: r.n_sequences,
                    window: c.window_length,
                    seed: args.seed,
                });
            }
        }
    }
    write_csv(&args.output, &rows)
}

fn bench_accuracy(args: AccuracyArgs) -> anyhow::Result<()> {
    announce("options", &args);
    let panels = args
        .panels
        .iter()
        .map(|&p| bench::threshold_panel(p))
        .collect::<hawkes_watch::Result<Vec<_>>>()?;
    let opts = AccuracyOptions {
        replicates: args.replicates,
        horizon: args.horizon,
        integration: IntegrationConfig::default(),
    };
    let rows = bench::threshold_accuracy(&panels, &args.arls, &opts, args.seed)?;
    write_csv(&args.output, &rows)
}

#[derive(Serialize)]
struct ValidationLine<'a> {
    model: &'a str,
    valid: bool,
    spectral_radius: f64,
    violations: Vec<String>,
}

fn validate(args: ValidateArgs) -> anyhow::Result<()> {
    let text =
        std::fs::read_to_string(&args.params).map_err(|e| DataError(format!("{}: {e}", args.params.display())))?;
    let raw: RunConfig = toml::from_str(&text).map_err(|e| DataError(format!("{}: {e}", args.params.display())))?;
    let mut models = vec![("model", raw.model.clone())];
    if let Some(post) = &raw.post {
        models.push(("post", post.clone()));
    }
    let mut all_valid = true;
    for (name, spec) in &models {
        let line = match spec.params() {
            Ok(p) => {
                let report = p.validate();
                ValidationLine {
                    model: name,
                    valid: report.is_valid(),
                    spectral_radius: report.spectral_radius,
                    violations: report.violations.iter().map(|v| v.to_string()).collect(),
                }
            }
            // Shape errors, caught before the invariants can be checked.
            Err(e) => ValidationLine {
                model: name,
                valid: false,
                spectral_radius: f64::NAN,
                violations: vec![format!("{e:#}")],
            },
        };
        all_valid &= line.valid;
        println!("{}", serde_json::to_string(&line)?);
    }
    if !all_valid {
        bail!(DataError(format!("{}: invalid parameters", args.params.display())));
    }
    Ok(())
}
