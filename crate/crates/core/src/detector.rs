//! Sliding-window GLR change-point detector.
//!
//! Events are fed one at a time. Every `update_every` events the detector
//! refits the post-change influence on the trailing window `(t − L, t]`,
//! warm-starting from the previous fit, and raises an alarm as soon as the
//! log-likelihood ratio strictly exceeds the threshold. The same machinery
//! drives the two baseline statistics so that all methods see identical
//! refresh instants.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, bin_events};
use crate::em::{self, EmConfig};
use crate::likelihood::ExcitationTable;
use crate::model::{window_range, Event, EventStream, HawkesParams, Setting, Topology, Window};
use crate::theory::stationary_intensity;
use crate::{Error, Result};

/// Which statistic a detector evaluates at each refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    /// Network GLR with a fitted influence matrix.
    Glr,
    /// Binned Poisson GLR on per-node counts.
    BinnedPoisson { bin_width: f64 },
    /// Sum of per-node one-dimensional GLRs.
    NodewiseGlr,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Glr => "glr",
            Method::BinnedPoisson { .. } => "baseline1",
            Method::NodewiseGlr => "baseline2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub window_length: f64,
    /// Events between statistic refreshes.
    pub update_every: usize,
    pub threshold: f64,
    pub setting: Setting,
    /// Base rates, decay, topology and (for Hawkes→Hawkes) the pre-change
    /// influence matrix.
    pub null: HawkesParams,
    pub em: EmConfig,
    pub method: Method,
    /// Tolerated lateness of out-of-order events.
    pub slack: f64,
    /// Warm starts are raised to at least this value on allowed entries, so
    /// that an estimate that collapsed towards zero can recover.
    pub warm_floor: f64,
    /// Restart EM from the cold initializer at every refresh.
    pub cold_restart: bool,
    /// Keep a copy of the fitted matrix at every refresh.
    pub record_estimates: bool,
}

impl DetectorConfig {
    pub fn new(null: HawkesParams, setting: Setting, window_length: f64, threshold: f64) -> Self {
        Self {
            window_length,
            update_every: 1,
            threshold,
            setting,
            null,
            em: EmConfig::default(),
            method: Method::Glr,
            slack: 0.0,
            warm_floor: 1e-3,
            cold_restart: false,
            record_estimates: false,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_length > 0.0) {
            return Err(Error::InvalidInput("window length must be positive".into()));
        }
        if self.update_every == 0 {
            return Err(Error::InvalidInput("update_every must be at least 1".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::InvalidInput("threshold is NaN".into()));
        }
        if !(self.slack >= 0.0) {
            return Err(Error::InvalidInput("slack must be nonnegative".into()));
        }
        if let Method::BinnedPoisson { bin_width } = self.method {
            if !(bin_width > 0.0) {
                return Err(Error::InvalidInput("bin width must be positive".into()));
            }
        }
        self.em.validate()?;
        self.null.ensure_valid()?;
        if self.null.mu.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidParams("null base rates must be positive".into()));
        }
        Ok(())
    }

    fn null_influence(&self) -> Option<&DMatrix<f64>> {
        (self.setting == Setting::HawkesToHawkes).then_some(&self.null.influence)
    }
}

/// Statistic evaluation with warm-start state, shared by the online
/// detector and the offline scan.
#[derive(Debug, Clone)]
struct Evaluator {
    config: DetectorConfig,
    topology: Topology,
    mu: Vec<f64>,
    /// Rates used by the binned baseline (stationary null intensity).
    bin_rates: Vec<f64>,
    estimate: DMatrix<f64>,
    node_warm: Vec<f64>,
}

struct Evaluation {
    statistic: f64,
    iterations: usize,
}

impl Evaluator {
    fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let mu: Vec<f64> = config.null.mu.iter().copied().collect();
        let bin_rates = match config.setting {
            Setting::PoissonToHawkes => mu.clone(),
            Setting::HawkesToHawkes => stationary_intensity(&config.null)?.iter().copied().collect(),
        };
        let estimate = Self::initial(&config);
        let node_warm = (0..config.null.dim())
            .map(|j| match config.setting {
                Setting::PoissonToHawkes => config.em.init_alpha,
                Setting::HawkesToHawkes => config.null.influence[(j, j)],
            })
            .collect();
        Ok(Self {
            topology: config.null.topology(),
            mu,
            bin_rates,
            estimate,
            node_warm,
            config,
        })
    }

    fn initial(config: &DetectorConfig) -> DMatrix<f64> {
        match config.setting {
            Setting::PoissonToHawkes => config.em.cold_start(&config.null.mask),
            Setting::HawkesToHawkes => config.null.influence.clone(),
        }
    }

    fn warm_start(&self) -> DMatrix<f64> {
        let cfg = &self.config;
        if cfg.cold_restart {
            return cfg.em.cold_start(&cfg.null.mask);
        }
        let floor = cfg.warm_floor;
        DMatrix::from_fn(self.estimate.nrows(), self.estimate.ncols(), |u, v| {
            if cfg.null.mask[(u, v)] {
                self.estimate[(u, v)].max(floor)
            } else {
                0.0
            }
        })
    }

    fn evaluate(&mut self, events: &[Event], window: Window) -> Result<Evaluation> {
        let cfg = &self.config;
        match cfg.method {
            Method::Glr => {
                let table = ExcitationTable::build(events, cfg.null.beta, &self.topology, window);
                let start = self.warm_start();
                let fit = em::fit_table(&table, &self.mu, &start, &cfg.null.mask, &cfg.em)?;
                // The null matrix is itself a candidate, so the GLR is never negative.
                let statistic = table.llr(&self.mu, &fit.influence, cfg.null_influence())?.max(0.0);
                self.estimate = fit.influence;
                Ok(Evaluation {
                    statistic,
                    iterations: fit.iterations,
                })
            }
            Method::BinnedPoisson { bin_width } => {
                let counts = bin_events(events, cfg.null.dim(), bin_width, window)?;
                Ok(Evaluation {
                    statistic: baselines::baseline1_stat(&counts, &self.bin_rates)?,
                    iterations: 0,
                })
            }
            Method::NodewiseGlr => {
                if cfg.cold_restart {
                    self.node_warm.fill(cfg.em.init_alpha);
                } else {
                    let floor = cfg.warm_floor;
                    self.node_warm.iter_mut().for_each(|a| *a = a.max(floor));
                }
                let statistic = baselines::baseline2_events(
                    events,
                    &cfg.null,
                    cfg.setting,
                    window,
                    &cfg.em,
                    Some(&mut self.node_warm),
                )?;
                Ok(Evaluation {
                    statistic,
                    iterations: 0,
                })
            }
        }
    }
}

/// Outcome of a statistic refresh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refresh {
    pub time: f64,
    pub statistic: f64,
    pub alarm: bool,
    /// EM rounds spent on this refresh (0 for the binned baseline).
    pub iterations: usize,
}

/// Online detector state. Feed events in time order through [`Detector::step`].
#[derive(Debug, Clone)]
pub struct Detector {
    eval: Evaluator,
    buffer: VecDeque<Event>,
    since_refresh: usize,
    now: f64,
    last: Option<f64>,
    alarmed: bool,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        Ok(Self {
            eval: Evaluator::new(config)?,
            buffer: VecDeque::new(),
            since_refresh: 0,
            now: 0.0,
            last: None,
            alarmed: false,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.eval.config
    }

    /// Events currently held, i.e. those in `(t − L, t]`.
    pub fn buffered(&self) -> impl Iterator<Item = &Event> {
        self.buffer.iter()
    }

    /// Latest fitted influence matrix.
    pub fn estimate(&self) -> &DMatrix<f64> {
        &self.eval.estimate
    }

    pub fn last_statistic(&self) -> Option<f64> {
        self.last
    }

    pub fn current_time(&self) -> f64 {
        self.now
    }

    pub fn has_alarmed(&self) -> bool {
        self.alarmed
    }

    /// Adds one event; returns the refreshed statistic on refresh events.
    pub fn step(&mut self, event: Event) -> Result<Option<Refresh>> {
        let cfg = &self.eval.config;
        if event.node >= cfg.null.dim() {
            return Err(Error::InvalidInput(format!(
                "node index {} out of range for dimension {}",
                event.node,
                cfg.null.dim()
            )));
        }
        if !event.time.is_finite() || event.time < 0.0 {
            return Err(Error::InvalidInput(format!("invalid event time {}", event.time)));
        }
        if event.time < self.now - cfg.slack {
            return Err(Error::OutOfOrder {
                time: event.time,
                current: self.now,
            });
        }
        if event.time >= self.now {
            self.now = event.time;
            self.buffer.push_back(event);
        } else {
            // Late but within slack: insert in order, after equal times.
            let pos = self.buffer.partition_point(|e| e.time <= event.time);
            self.buffer.insert(pos, event);
        }
        let cutoff = self.now - cfg.window_length;
        while self.buffer.front().is_some_and(|e| e.time <= cutoff) {
            self.buffer.pop_front();
        }
        self.since_refresh += 1;
        if self.since_refresh < cfg.update_every {
            return Ok(None);
        }
        self.since_refresh = 0;
        let tau = cutoff.max(0.0);
        if tau >= self.now {
            return Ok(None);
        }
        let window = Window { tau, t: self.now };
        let threshold = cfg.threshold;
        let events = self.buffer.make_contiguous();
        let eval = self.eval.evaluate(events, window)?;
        let alarm = eval.statistic > threshold;
        self.alarmed |= alarm;
        self.last = Some(eval.statistic);
        Ok(Some(Refresh {
            time: self.now,
            statistic: eval.statistic,
            alarm,
            iterations: eval.iterations,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub statistic: f64,
    pub estimate: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionTrace {
    pub records: Vec<TraceRecord>,
    pub stopping_time: Option<f64>,
    pub events_processed: usize,
}

impl DetectionTrace {
    pub fn alarm(&self) -> bool {
        self.stopping_time.is_some()
    }

    /// First refresh time whose statistic exceeds `x` in this trace.
    pub fn first_crossing(&self, x: f64) -> Option<f64> {
        self.records.iter().find(|r| r.statistic > x).map(|r| r.time)
    }
}

/// Runs the detector over a stream, halting at the first alarm.
pub fn run_online(stream: &EventStream, config: &DetectorConfig) -> Result<DetectionTrace> {
    if stream.dim() != config.null.dim() {
        return Err(Error::InvalidInput(format!(
            "stream has {} nodes, model has {}",
            stream.dim(),
            config.null.dim()
        )));
    }
    let record = config.record_estimates;
    let mut det = Detector::new(config.clone())?;
    let mut trace = DetectionTrace::default();
    for &e in stream.events() {
        trace.events_processed += 1;
        if let Some(r) = det.step(e)? {
            trace.records.push(TraceRecord {
                time: r.time,
                statistic: r.statistic,
                estimate: record.then(|| det.estimate().clone()),
            });
            if r.alarm {
                trace.stopping_time = Some(r.time);
                break;
            }
        }
    }
    Ok(trace)
}

/// Result of an offline change-point scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub max_statistic: f64,
    pub tau_star: f64,
    pub estimate: DMatrix<f64>,
    /// `(τ, statistic)` over the grid.
    pub profile: Vec<(f64, f64)>,
}

/// Evaluates the GLR on `(τ, horizon]` for every `τ` in the grid and returns
/// the maximizer. `config.window_length` is ignored.
pub fn scan_offline(stream: &EventStream, config: &DetectorConfig, tau_grid: &[f64]) -> Result<ScanResult> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidInput("empty change-time grid".into()));
    }
    let horizon = stream.horizon();
    if !horizon.is_finite() {
        return Err(Error::InvalidInput("offline scan needs a finite horizon".into()));
    }
    let mut eval = Evaluator::new(config.clone())?;
    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    let mut profile = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        if !(tau >= 0.0 && tau < horizon) {
            return Err(Error::InvalidInput(format!("grid point {tau} outside [0, {horizon})")));
        }
        let window = Window { tau, t: horizon };
        let events = window_range(stream.events(), &window);
        let stat = eval.evaluate(events, window)?.statistic;
        profile.push((tau, stat));
        if best.as_ref().is_none_or(|b| stat > b.0) {
            best = Some((stat, tau, eval.estimate.clone()));
        }
    }
    let (max_statistic, tau_star, estimate) = best.expect("grid is nonempty");
    Ok(ScanResult {
        max_statistic,
        tau_star,
        estimate,
        profile,
    })
}
