//! Monte Carlo harness: ARL and EDD estimation, threshold calibration, the
//! seven synthetic change scenarios, ROC/AUC comparisons and threshold
//! accuracy tables.
//!
//! Seeding: a master seed `s` is split into independent sub-studies with
//! [`SimSeed::derive`] (evaluation streams, calibration streams, theory
//! integration, AUC sequences), and replicate `r` of a sub-study uses
//! ChaCha stream `r`. Replicates run on the rayon pool and are collected in
//! replicate order, so every result is reproducible bit for bit.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{run_online, Detector, DetectorConfig, Method};
use crate::model::{spectral_radius, ChangeScenario, HawkesParams, Setting};
use crate::simulate::{simulate_hawkes, simulate_with_change, SimSeed};
use crate::theory::{solve_threshold, IntegrationConfig};
use crate::{Error, Result};

/// Sliding window of the synthetic EDD study.
pub const CASE_WINDOW: f64 = 10.0;
/// Kernel decay of the synthetic EDD study.
pub const CASE_BETA: f64 = 1.0;
/// Change time of the EDD presets.
pub const CASE_KAPPA: f64 = 200.0;
/// Horizon of the EDD presets.
pub const CASE_HORIZON: f64 = 500.0;
/// Seed of the fixed random graph of Cases 6 and 7.
pub const SPARSE_GRAPH_SEED: u64 = 6_100_020;
pub const SPARSE_NODES: usize = 100;
pub const SPARSE_EDGES: usize = 20;

const SALT_EVAL: u64 = 1;
const SALT_CALIBRATE: u64 = 2;
const SALT_THEORY: u64 = 3;
const SALT_AUC: u64 = 4;

/// Censoring share above which an ARL estimate is flagged.
pub const CENSOR_FLAG: f64 = 0.1;

/// Running maxima of a detector statistic over one null stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Records {
    /// `(refresh time, statistic)` at every new running maximum.
    pub points: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl Records {
    /// Stopping time of the detector at threshold `x`, if within the horizon.
    pub fn stopping_time(&self, x: f64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.1 <= x);
        self.points.get(idx).map(|p| p.0)
    }

    pub fn max_statistic(&self) -> f64 {
        self.points.last().map_or(f64::NEG_INFINITY, |p| p.1)
    }
}

/// Runs the detector without a threshold and keeps the running maxima.
pub fn null_records(
    config: &DetectorConfig,
    null_model: &HawkesParams,
    horizon: f64,
    seed: SimSeed,
) -> Result<Records> {
    let stream = simulate_hawkes(null_model, horizon, seed)?;
    let mut det = Detector::new(config.clone().with_threshold(f64::INFINITY))?;
    let mut points = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for &e in stream.events() {
        if let Some(r) = det.step(e)? {
            if r.statistic > best {
                best = r.statistic;
                points.push((r.time, r.statistic));
            }
        }
    }
    Ok(Records { points, horizon })
}

/// [`null_records`] for `replicates` independent streams.
pub fn sample_null_records(
    config: &DetectorConfig,
    null_model: &HawkesParams,
    replicates: usize,
    horizon: f64,
    seed: SimSeed,
) -> Result<Vec<Records>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| null_records(config, null_model, horizon, seed.replicate(r as u64)))
        .collect()
}

/// Monte Carlo ARL estimate at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArlMc {
    pub threshold: f64,
    /// Mean of `min(T, H)`; a lower bound when runs are censored.
    pub mean: f64,
    pub std_error: f64,
    /// Censored-exponential MLE `Σ min(T, H) / #alarms`.
    pub exp_mle: f64,
    pub alarms: usize,
    pub replicates: usize,
    pub censored_fraction: f64,
    /// More than [`CENSOR_FLAG`] of the runs never alarmed.
    pub censored: bool,
}

pub fn arl_from_records(records: &[Records], x: f64) -> ArlMc {
    let n = records.len();
    let times: Vec<f64> = records
        .iter()
        .map(|r| r.stopping_time(x).unwrap_or(r.horizon))
        .collect();
    let alarms = records.iter().filter(|r| r.stopping_time(x).is_some()).count();
    let total: f64 = times.iter().sum();
    let mean = total / n as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let censored_fraction = (n - alarms) as f64 / n as f64;
    ArlMc {
        threshold: x,
        mean,
        std_error: (var / n as f64).sqrt(),
        exp_mle: if alarms == 0 {
            f64::INFINITY
        } else {
            total / alarms as f64
        },
        alarms,
        replicates: n,
        censored_fraction,
        censored: censored_fraction > CENSOR_FLAG,
    }
}

/// ARL of `config` under `null_model`, from runs stopped at the first alarm
/// or at `max_horizon`.
pub fn estimate_arl_mc(
    config: &DetectorConfig,
    null_model: &HawkesParams,
    replicates: usize,
    max_horizon: f64,
    seed: SimSeed,
) -> Result<ArlMc> {
    if replicates < 10 {
        return Err(Error::InvalidInput(
            "ARL estimation needs at least 10 replicates".into(),
        ));
    }
    let records = sample_null_records(config, null_model, replicates, max_horizon, seed)?;
    Ok(arl_from_records(&records, config.threshold))
}

/// Threshold picked by Monte Carlo calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub threshold: f64,
    pub arl: ArlMc,
}

/// Smallest threshold whose censored-exponential ARL reaches `target`.
pub fn calibrate_from_records(records: &[Records], target: f64) -> Result<Calibration> {
    if records.is_empty() {
        return Err(Error::InvalidInput("calibration needs at least one replicate".into()));
    }
    let mut candidates: Vec<f64> = records.iter().flat_map(|r| r.points.iter().map(|p| p.1)).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let idx = candidates.partition_point(|&x| arl_from_records(records, x).exp_mle < target);
    let threshold = *candidates.get(idx).unwrap_or(candidates.last().expect("nonempty"));
    Ok(Calibration {
        threshold,
        arl: arl_from_records(records, threshold),
    })
}

pub fn calibrate_mc(
    config: &DetectorConfig,
    null_model: &HawkesParams,
    target: f64,
    replicates: usize,
    horizon: f64,
    seed: SimSeed,
) -> Result<Calibration> {
    let records = sample_null_records(config, null_model, replicates, horizon, seed)?;
    calibrate_from_records(&records, target)
}

/// Detection delay estimate over replicated change scenarios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EddEstimate {
    pub edd: f64,
    pub std_error: f64,
    pub replicates: usize,
    /// Runs alarming after the change.
    pub detected: usize,
    /// Runs alarming at or before the change (false alarms, discarded).
    pub discarded: usize,
    /// Runs never alarming within the horizon.
    pub missed: usize,
    #[serde(skip)]
    pub delays: Vec<f64>,
}

impl EddEstimate {
    pub fn discard_fraction(&self) -> f64 {
        self.discarded as f64 / self.replicates as f64
    }

    /// Share of runs that alarmed after the change.
    pub fn detection_rate(&self) -> f64 {
        self.detected as f64 / self.replicates as f64
    }
}

pub fn edd_from_stops(stops: &[Option<f64>], kappa: f64) -> Result<EddEstimate> {
    let delays: Vec<f64> = stops
        .iter()
        .flatten()
        .filter(|&&t| t > kappa)
        .map(|t| t - kappa)
        .collect();
    let discarded = stops.iter().flatten().filter(|&&t| t <= kappa).count();
    let missed = stops.iter().filter(|s| s.is_none()).count();
    let n = delays.len();
    let edd = if n == 0 {
        f64::NAN
    } else {
        delays.iter().sum::<f64>() / n as f64
    };
    let var = if n > 1 {
        delays.iter().map(|d| (d - edd).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(EddEstimate {
        edd,
        std_error: (var / n.max(1) as f64).sqrt(),
        replicates: stops.len(),
        detected: n,
        discarded,
        missed,
        delays,
    })
}

/// Stopping times of `config` on replicated draws of `scenario`.
pub fn stopping_times(
    scenario: &ChangeScenario,
    config: &DetectorConfig,
    replicates: usize,
    seed: SimSeed,
) -> Result<Vec<Option<f64>>> {
    scenario.validate()?;
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sample = simulate_with_change(scenario, seed.replicate(r as u64))?;
            Ok(run_online(&sample.stream, config)?.stopping_time)
        })
        .collect()
}

pub fn estimate_edd_mc(
    scenario: &ChangeScenario,
    config: &DetectorConfig,
    replicates: usize,
    seed: SimSeed,
) -> Result<EddEstimate> {
    let stops = stopping_times(scenario, config, replicates, seed)?;
    let est = edd_from_stops(&stops, scenario.kappa)?;
    if stops.iter().flatten().next().is_some() && est.detected == 0 {
        return Err(Error::Numeric(format!(
            "all {} alarms came before the change at {}; recalibrate the threshold",
            est.discarded, scenario.kappa
        )));
    }
    Ok(est)
}

/// Network shape of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Single,
    Star10,
    Chain10,
    Sparse100,
}

#[derive(Debug, Clone)]
pub struct CasePreset {
    pub id: u8,
    pub layout: Layout,
    pub scenario: ChangeScenario,
}

impl CasePreset {
    pub fn setting(&self) -> Setting {
        self.scenario.setting()
    }

    /// Null model handed to detectors (pre-change parameters, preset mask).
    pub fn null_model(&self) -> HawkesParams {
        self.scenario.pre.clone()
    }

    pub fn detector_config(&self, method: Method, threshold: f64) -> DetectorConfig {
        DetectorConfig::new(self.null_model(), self.setting(), CASE_WINDOW, threshold).with_method(method)
    }
}

fn masked(a: DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    a.zip_map(mask, |x, m| if m { x } else { 0.0 })
}

fn mask_of(pre: &DMatrix<f64>, post: &DMatrix<f64>) -> DMatrix<bool> {
    pre.zip_map(post, |a, b| a != 0.0 || b != 0.0)
}

fn scenario_with_mask(mu: Vec<f64>, pre: DMatrix<f64>, post: DMatrix<f64>) -> ChangeScenario {
    let d = mu.len();
    let mask = if pre.iter().all(|&a| a == 0.0) && d == 1 {
        DMatrix::from_element(1, 1, true)
    } else {
        mask_of(&pre, &post)
    };
    let pre = HawkesParams::new(mu.clone(), masked(pre, &mask), CASE_BETA).with_mask(mask.clone());
    let post = HawkesParams::new(mu, masked(post, &mask), CASE_BETA).with_mask(mask);
    ChangeScenario::new(pre, post, CASE_KAPPA, CASE_HORIZON)
}

/// Star with parent node 0: `A[(i, i)] = diag`, `A[(child, 0)] = edge`.
pub fn star(d: usize, diag: f64, edge: f64) -> DMatrix<f64> {
    let mut a = DMatrix::from_diagonal_element(d, d, diag);
    for c in 1..d {
        a[(c, 0)] = edge;
    }
    a
}

/// Chain: `A[(i, i)] = diag`, `A[(i, i + 1)] = edge`.
pub fn chain(d: usize, diag: f64, edge: f64) -> DMatrix<f64> {
    let mut a = DMatrix::from_diagonal_element(d, d, diag);
    for i in 0..d - 1 {
        a[(i, i + 1)] = edge;
    }
    a
}

/// The fixed off-diagonal edges `(target, source)` of the sparse preset.
/// Redrawn until the fully raised post-change matrix is stationary.
pub fn sparse_edges() -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SPARSE_GRAPH_SEED);
    let n = SPARSE_NODES;
    loop {
        let picks = sample(&mut rng, n * (n - 1), SPARSE_EDGES);
        let edges: Vec<(usize, usize)> = picks
            .iter()
            .map(|k| {
                let (i, j) = (k / (n - 1), k % (n - 1));
                (i, if j >= i { j + 1 } else { j })
            })
            .collect();
        let mut a = DMatrix::from_diagonal_element(n, n, 0.5);
        for &(i, j) in &edges {
            a[(i, j)] = 0.5;
        }
        if spectral_radius(&a) < 1.0 {
            return edges;
        }
    }
}

fn sparse_matrix(diag: f64, edge: f64) -> DMatrix<f64> {
    let mut a = DMatrix::from_diagonal_element(SPARSE_NODES, SPARSE_NODES, diag);
    for (i, j) in sparse_edges() {
        a[(i, j)] = edge;
    }
    a
}

/// Presets of the synthetic EDD study.
pub fn case_preset(id: u8) -> Result<CasePreset> {
    let (layout, scenario) = match id {
        1 => (
            Layout::Single,
            scenario_with_mask(vec![10.0], DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 0.5)),
        ),
        2 => (
            Layout::Single,
            scenario_with_mask(
                vec![10.0],
                DMatrix::from_element(1, 1, 0.3),
                DMatrix::from_element(1, 1, 0.5),
            ),
        ),
        3 => (
            Layout::Star10,
            scenario_with_mask(vec![1.0; 10], star(10, 0.3, 0.3), star(10, 0.5, 0.5)),
        ),
        4 => (
            Layout::Star10,
            scenario_with_mask(vec![1.0; 10], star(10, 0.3, 0.3), star(10, 0.01, 0.6)),
        ),
        5 => (
            Layout::Chain10,
            scenario_with_mask(vec![1.0; 10], chain(10, 0.3, 0.3), chain(10, 0.5, 0.5)),
        ),
        6 => (
            Layout::Sparse100,
            scenario_with_mask(
                vec![0.1; SPARSE_NODES],
                sparse_matrix(0.3, 0.3),
                sparse_matrix(0.5, 0.5),
            ),
        ),
        7 => {
            let pre = sparse_matrix(0.3, 0.3);
            let mut post = pre.clone();
            // Raise every other nonzero entry in row-major order.
            let mut k = 0;
            for i in 0..SPARSE_NODES {
                for j in 0..SPARSE_NODES {
                    if pre[(i, j)] != 0.0 {
                        if k % 2 == 0 {
                            post[(i, j)] = 0.5;
                        }
                        k += 1;
                    }
                }
            }
            (
                Layout::Sparse100,
                scenario_with_mask(vec![0.1; SPARSE_NODES], pre, post),
            )
        }
        _ => return Err(Error::InvalidInput(format!("unknown case {id}; expected 1..7"))),
    };
    Ok(CasePreset { id, layout, scenario })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Theory,
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct CaseOptions {
    pub arl_target: f64,
    pub replicates: usize,
    pub calibration_replicates: usize,
    pub calibration_horizon: f64,
    /// How the network GLR threshold is set; baselines always use Monte Carlo.
    pub primary_threshold: ThresholdSource,
    pub bin_width: f64,
    pub integration: IntegrationConfig,
}

impl Default for CaseOptions {
    fn default() -> Self {
        Self {
            arl_target: 1e4,
            replicates: 100,
            calibration_replicates: 200,
            calibration_horizon: 2000.0,
            primary_threshold: ThresholdSource::Theory,
            bin_width: 1.0,
            integration: IntegrationConfig::default(),
        }
    }
}

/// One row of the EDD table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub case: u8,
    pub method: &'static str,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
    pub seed: u64,
    #[serde(flatten)]
    pub edd: EddEstimate,
    #[serde(skip)]
    pub calibration: Option<Calibration>,
}

/// Threshold of `method` on a preset, by theory or Monte Carlo.
pub fn preset_threshold(
    preset: &CasePreset,
    method: Method,
    opts: &CaseOptions,
    seed: u64,
) -> Result<(f64, ThresholdSource, Option<Calibration>)> {
    let master = SimSeed::new(seed);
    if method == Method::Glr && opts.primary_threshold == ThresholdSource::Theory {
        let integration = IntegrationConfig {
            seed: master.derive(SALT_THEORY).seed,
            ..opts.integration
        };
        let x = solve_threshold(
            opts.arl_target,
            CASE_WINDOW,
            preset.setting(),
            &preset.null_model(),
            &integration,
        )?;
        return Ok((x, ThresholdSource::Theory, None));
    }
    let cal = calibrate_mc(
        &preset.detector_config(method, f64::INFINITY),
        &preset.scenario.pre,
        opts.arl_target,
        opts.calibration_replicates,
        opts.calibration_horizon,
        master.derive(SALT_CALIBRATE),
    )?;
    Ok((cal.threshold, ThresholdSource::MonteCarlo, Some(cal)))
}

/// Calibrates `method` on preset `case` and estimates its EDD. Every method
/// sees the same evaluation streams for a given seed.
pub fn run_case_preset(case: u8, method: Method, opts: &CaseOptions, seed: u64) -> Result<BenchRow> {
    let preset = case_preset(case)?;
    let method = match method {
        Method::BinnedPoisson { .. } => Method::BinnedPoisson {
            bin_width: opts.bin_width,
        },
        m => m,
    };
    let (threshold, source, calibration) = preset_threshold(&preset, method, opts, seed)?;
    let mut row = evaluate_case(&preset, method, threshold, opts, seed)?;
    row.threshold_source = source;
    row.calibration = calibration;
    Ok(row)
}

/// EDD of `method` on a preset at a given threshold. Presets sharing a null
/// model can reuse one calibration this way.
pub fn evaluate_case(
    preset: &CasePreset,
    method: Method,
    threshold: f64,
    opts: &CaseOptions,
    seed: u64,
) -> Result<BenchRow> {
    let config = preset.detector_config(method, threshold);
    let stops = stopping_times(
        &preset.scenario,
        &config,
        opts.replicates,
        SimSeed::new(seed).derive(SALT_EVAL),
    )?;
    Ok(BenchRow {
        case: preset.id,
        method: method.name(),
        threshold,
        threshold_source: ThresholdSource::MonteCarlo,
        seed,
        edd: edd_from_stops(&stops, preset.scenario.kappa)?,
        calibration: None,
    })
}

/// Area under the ROC curve of scores (positives vs negatives), with ties
/// counted as one half; equals the trapezoid-rule area.
pub fn auc_from_scores(positives: &[f64], negatives: &[f64]) -> f64 {
    if positives.is_empty() || negatives.is_empty() {
        return f64::NAN;
    }
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in positives {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// A sequence-classification experiment: half the sequences change at
/// `kappa`, half stay on the pre-change model.
#[derive(Debug, Clone)]
pub struct AucConfig {
    pub name: String,
    pub pre: HawkesParams,
    pub post: HawkesParams,
    pub window_length: f64,
    pub horizon: f64,
    pub kappa: f64,
    pub n_sequences: usize,
    pub bin_width: f64,
}

pub const AUC_WINDOW: f64 = 10.0;
pub const AUC_HORIZON: f64 = 200.0;
pub const AUC_KAPPA: f64 = 100.0;

impl AucConfig {
    pub fn new(name: &str, pre: HawkesParams, post: HawkesParams) -> Self {
        Self {
            name: name.to_string(),
            pre,
            post,
            window_length: AUC_WINDOW,
            horizon: AUC_HORIZON,
            kappa: AUC_KAPPA,
            n_sequences: 500,
            bin_width: 1.0,
        }
    }

    pub fn setting(&self) -> Setting {
        if self.pre.is_poisson() {
            Setting::PoissonToHawkes
        } else {
            Setting::HawkesToHawkes
        }
    }

    /// The no-signal control: post-change model equal to the pre-change one.
    pub fn control(&self) -> Self {
        Self {
            name: format!("{}-control", self.name),
            post: self.pre.clone(),
            ..self.clone()
        }
    }
}

/// Sensitivity presets `A.1`–`D.3`.
pub fn auc_preset(name: &str) -> Result<AucConfig> {
    let one = |mu: f64, a: f64, beta: f64| HawkesParams::scalar(mu, a, beta);
    let with_full = |p: HawkesParams| {
        let d = p.dim();
        p.with_mask(DMatrix::from_element(d, d, true))
    };
    let star_only = |edge: f64, beta: f64| {
        let a = star(10, 0.0, edge);
        let mask = a.map(|x| x != 0.0);
        HawkesParams::new(vec![0.1; 10], a, beta).with_mask(mask)
    };
    let (pre, post) = match name {
        "A.1" | "A.2" | "A.3" | "A.4" => {
            let (alpha, beta) = match name {
                "A.1" => (0.2, 1.0),
                "A.2" => (0.2, 10.0),
                "A.3" => (0.2, 100.0),
                _ => (0.3, 10.0),
            };
            (with_full(HawkesParams::poisson(vec![1.0], beta)), one(1.0, alpha, beta))
        }
        "B.1" | "B.2" | "B.3" => {
            let beta = match name {
                "B.1" => 1.0,
                "B.2" => 10.0,
                _ => 100.0,
            };
            (one(1.0, 0.3, beta), one(1.0, 0.5, beta))
        }
        "C.1" | "C.2" => {
            let beta = if name == "C.1" { 1.0 } else { 10.0 };
            (
                with_full(HawkesParams::poisson(vec![0.2, 0.2], beta)),
                HawkesParams::new(vec![0.2, 0.2], DMatrix::from_element(2, 2, 0.1), beta),
            )
        }
        "D.1" => (star_only(0.3, 1.0), star_only(0.4, 1.0)),
        "D.2" => (star_only(0.3, 1.0), star_only(0.5, 1.0)),
        "D.3" => (star_only(0.3, 10.0), star_only(0.5, 10.0)),
        _ => return Err(Error::InvalidInput(format!("unknown AUC preset {name:?}"))),
    };
    Ok(AucConfig::new(name, pre, post))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucResult {
    pub config: String,
    pub method: &'static str,
    pub auc: f64,
    pub n_sequences: usize,
}

/// Max-over-run score of every method on every sequence; odd-indexed
/// sequences carry a change.
pub fn auc_scores(cfg: &AucConfig, methods: &[Method], seed: u64) -> Result<Vec<Vec<f64>>> {
    if cfg.n_sequences == 0 || !cfg.n_sequences.is_multiple_of(2) {
        return Err(Error::InvalidInput(
            "number of sequences must be even and positive".into(),
        ));
    }
    let master = SimSeed::new(seed).derive(SALT_AUC);
    let mut null = cfg.pre.clone();
    // Detectors need the topology of both models.
    null.mask = null.mask.zip_map(&cfg.post.mask, |a, b| a || b);
    let scenario = ChangeScenario::new(cfg.pre.clone(), cfg.post.clone(), cfg.kappa, cfg.horizon);
    scenario.validate()?;
    let setting = cfg.setting();
    (0..cfg.n_sequences)
        .into_par_iter()
        .map(|i| {
            let s = master.replicate(i as u64);
            let stream = if i % 2 == 1 {
                simulate_with_change(&scenario, s)?.stream
            } else {
                simulate_hawkes(&cfg.pre, cfg.horizon, s)?
            };
            methods
                .iter()
                .map(|&m| {
                    let m = match m {
                        Method::BinnedPoisson { .. } => Method::BinnedPoisson {
                            bin_width: cfg.bin_width,
                        },
                        m => m,
                    };
                    let det =
                        DetectorConfig::new(null.clone(), setting, cfg.window_length, f64::INFINITY).with_method(m);
                    let trace = run_online(&stream, &det)?;
                    Ok(trace.records.iter().map(|r| r.statistic).fold(0.0, f64::max))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

pub fn roc_auc(cfg: &AucConfig, methods: &[Method], seed: u64) -> Result<Vec<AucResult>> {
    let scores = auc_scores(cfg, methods, seed)?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let pos: Vec<f64> = scores.iter().skip(1).step_by(2).map(|s| s[k]).collect();
            let neg: Vec<f64> = scores.iter().step_by(2).map(|s| s[k]).collect();
            AucResult {
                config: cfg.name.clone(),
                method: m.name(),
                auc: auc_from_scores(&pos, &neg),
                n_sequences: cfg.n_sequences,
            }
        })
        .collect())
}

/// A null model and window of the threshold-accuracy study.
#[derive(Debug, Clone)]
pub struct ThresholdPanel {
    pub name: char,
    pub setting: Setting,
    pub null: HawkesParams,
    pub window_length: f64,
}

pub fn threshold_panel(name: char) -> Result<ThresholdPanel> {
    let poisson1 = |beta: f64| HawkesParams::poisson(vec![1.0], beta);
    let (setting, null, window_length) = match name {
        'a' => (Setting::PoissonToHawkes, poisson1(1.0), 10.0),
        'b' => (Setting::PoissonToHawkes, poisson1(1.0), 50.0),
        'c' => (Setting::PoissonToHawkes, poisson1(1.0), 100.0),
        'd' => (Setting::PoissonToHawkes, poisson1(10.0), 50.0),
        'e' => (Setting::HawkesToHawkes, HawkesParams::scalar(1.0, 0.3, 10.0), 100.0),
        'f' => (Setting::HawkesToHawkes, HawkesParams::scalar(1.0, 0.3, 10.0), 150.0),
        'g' => (
            Setting::PoissonToHawkes,
            HawkesParams::poisson(vec![0.5, 0.5], 1.0),
            300.0,
        ),
        'h' => (
            Setting::PoissonToHawkes,
            HawkesParams::poisson(vec![0.5, 0.5], 1.0),
            400.0,
        ),
        _ => {
            return Err(Error::InvalidInput(format!(
                "unknown threshold panel {name:?}; expected a..h"
            )))
        }
    };
    Ok(ThresholdPanel {
        name,
        setting,
        null,
        window_length,
    })
}

/// One point of a threshold-accuracy curve.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyRow {
    pub panel: char,
    pub window_length: f64,
    pub target_arl: f64,
    pub theory_threshold: f64,
    /// Monte Carlo ARL at the theory threshold.
    pub mc_arl: f64,
    pub mc_arl_se: f64,
    pub mc_censored: bool,
    /// Threshold calibrated directly by Monte Carlo.
    pub mc_threshold: f64,
}

pub struct AccuracyOptions {
    pub replicates: usize,
    pub horizon: f64,
    pub integration: IntegrationConfig,
}

impl Default for AccuracyOptions {
    fn default() -> Self {
        Self {
            replicates: 200,
            horizon: 10_000.0,
            integration: IntegrationConfig::default(),
        }
    }
}

pub fn threshold_accuracy(
    panels: &[ThresholdPanel],
    targets: &[f64],
    opts: &AccuracyOptions,
    seed: u64,
) -> Result<Vec<AccuracyRow>> {
    let master = SimSeed::new(seed);
    let mut rows = Vec::new();
    for (k, panel) in panels.iter().enumerate() {
        let config = DetectorConfig::new(panel.null.clone(), panel.setting, panel.window_length, f64::INFINITY);
        let records = sample_null_records(
            &config,
            &panel.null,
            opts.replicates,
            opts.horizon,
            master.derive(SALT_CALIBRATE).derive(k as u64),
        )?;
        let integration = IntegrationConfig {
            seed: master.derive(SALT_THEORY).seed,
            ..opts.integration
        };
        for &target in targets {
            let x = solve_threshold(target, panel.window_length, panel.setting, &panel.null, &integration)?;
            let arl = arl_from_records(&records, x);
            rows.push(AccuracyRow {
                panel: panel.name,
                window_length: panel.window_length,
                target_arl: target,
                theory_threshold: x,
                mc_arl: arl.mean,
                mc_arl_se: arl.std_error,
                mc_censored: arl.censored,
                mc_threshold: calibrate_from_records(&records, target)?.threshold,
            });
        }
    }
    Ok(rows)
}
