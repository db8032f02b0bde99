//! Core domain types: events, streams, Hawkes parameters, windows and
//! change scenarios.
//!
//! Node indices are 0-based everywhere in this crate; the 1-based convention
//! of external files is handled in [`crate::io`].

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A single event `(t_i, u_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub node: usize,
}

impl Event {
    pub fn new(time: f64, node: usize) -> Self {
        Self { time, node }
    }
}

/// A time-ordered sequence of events on `dim` nodes observed over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    dim: usize,
    events: Vec<Event>,
    horizon: f64,
}

impl EventStream {
    /// Builds a stream, checking ordering, node range and horizon.
    pub fn new(dim: usize, events: Vec<Event>, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("stream dimension must be positive".into()));
        }
        if !horizon.is_finite() && horizon != f64::INFINITY {
            return Err(Error::InvalidInput(format!("horizon {horizon} is not a number")));
        }
        let mut prev = 0.0_f64;
        for (i, e) in events.iter().enumerate() {
            if !(e.time.is_finite() && e.time >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "event {i}: time {} must be finite and nonnegative",
                    e.time
                )));
            }
            if e.node >= dim {
                return Err(Error::InvalidInput(format!(
                    "event {i}: node index {} out of range for dimension {dim}",
                    e.node
                )));
            }
            if e.time < prev {
                return Err(Error::InvalidInput(format!(
                    "event {i}: time {} precedes previous event at {prev}",
                    e.time
                )));
            }
            if e.time > horizon {
                return Err(Error::InvalidInput(format!(
                    "event {i}: time {} beyond horizon {horizon}",
                    e.time
                )));
            }
            prev = e.time;
        }
        Ok(Self { dim, events, horizon })
    }

    /// An empty stream of the given dimension.
    pub fn empty(dim: usize, horizon: f64) -> Self {
        Self {
            dim: dim.max(1),
            events: Vec::new(),
            horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Counting measure `N_t`: number of events with time `<= t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    /// Per-node event counts.
    pub fn node_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.dim];
        for e in &self.events {
            counts[e.node] += 1;
        }
        counts
    }

    /// Events inside the half-open window `(tau, t]`, as a borrowed slice.
    pub fn window_events(&self, w: &Window) -> &[Event] {
        window_range(&self.events, w)
    }

    /// Returns the events with `tau < time <= t` as a new stream whose
    /// horizon is the window's right endpoint (clamped to this stream's).
    pub fn window_slice(&self, w: &Window) -> EventStream {
        EventStream {
            dim: self.dim,
            events: self.window_events(w).to_vec(),
            horizon: w.t.min(self.horizon),
        }
    }

    /// The one-dimensional sub-stream of a single node.
    pub fn node_stream(&self, node: usize) -> EventStream {
        EventStream {
            dim: 1,
            events: self
                .events
                .iter()
                .filter(|e| e.node == node)
                .map(|e| Event::new(e.time, 0))
                .collect(),
            horizon: self.horizon,
        }
    }
}

/// Binary-search the sub-slice of time-ordered `events` in `(tau, t]`.
pub fn window_range<'a>(events: &'a [Event], w: &Window) -> &'a [Event] {
    let lo = events.partition_point(|e| e.time <= w.tau);
    let hi = events.partition_point(|e| e.time <= w.t);
    if lo >= hi {
        &events[0..0]
    } else {
        &events[lo..hi]
    }
}

/// Half-open observation window `(tau, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub tau: f64,
    pub t: f64,
}

impl Window {
    pub fn new(tau: f64, t: f64) -> Result<Self> {
        if tau.is_nan() || t.is_nan() || tau >= t {
            return Err(Error::InvalidInput(format!(
                "window requires tau < t, got ({tau}, {t}]"
            )));
        }
        Ok(Self { tau, t })
    }

    /// The window `(t - length, t]`.
    pub fn trailing(t: f64, length: f64) -> Self {
        Self { tau: t - length, t }
    }

    pub fn length(&self) -> f64 {
        self.t - self.tau
    }
}

/// Which pair of hypotheses a detector or theory computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Independent Poisson processes before the change, Hawkes after.
    PoissonToHawkes,
    /// Hawkes with known influence matrix before, unknown matrix after.
    HawkesToHawkes,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::PoissonToHawkes => write!(f, "poisson_to_hawkes"),
            Setting::HawkesToHawkes => write!(f, "hawkes_to_hawkes"),
        }
    }
}

/// Parameters of a multivariate Hawkes process with exponential kernel.
///
/// `influence[(i, j)]` is the influence of node `j` on node `i`. Entries where
/// `mask` is false must be zero; the mask is the known network topology.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    pub mu: DVector<f64>,
    pub influence: DMatrix<f64>,
    pub beta: f64,
    pub mask: DMatrix<bool>,
}

impl HawkesParams {
    /// Full topology (every entry allowed).
    pub fn new(mu: Vec<f64>, influence: DMatrix<f64>, beta: f64) -> Self {
        let d = mu.len();
        Self {
            mu: DVector::from_vec(mu),
            influence,
            beta,
            mask: DMatrix::from_element(d, d, true),
        }
    }

    pub fn with_mask(mut self, mask: DMatrix<bool>) -> Self {
        self.mask = mask;
        self
    }

    /// Independent Poisson processes: zero influence with a full mask.
    pub fn poisson(mu: Vec<f64>, beta: f64) -> Self {
        let d = mu.len();
        Self::new(mu, DMatrix::zeros(d, d), beta)
    }

    /// One-dimensional Hawkes process.
    pub fn scalar(mu: f64, alpha: f64, beta: f64) -> Self {
        Self::new(vec![mu], DMatrix::from_element(1, 1, alpha), beta)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// True when the influence matrix is identically zero.
    pub fn is_poisson(&self) -> bool {
        self.influence.iter().all(|&a| a == 0.0)
    }

    /// Same base rates, decay and mask with a different influence matrix.
    pub fn with_influence(&self, influence: DMatrix<f64>) -> Self {
        Self {
            mu: self.mu.clone(),
            influence,
            beta: self.beta,
            mask: self.mask.clone(),
        }
    }

    /// Number of mask-allowed entries.
    pub fn edge_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn topology(&self) -> Topology {
        Topology::from_mask(&self.mask)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> ValidationReport {
        let d = self.mu.len();
        let mut violations = Vec::new();
        if self.influence.nrows() != d
            || self.influence.ncols() != d
            || self.mask.nrows() != d
            || self.mask.ncols() != d
        {
            violations.push(Violation::DimensionMismatch {
                mu: d,
                influence: (self.influence.nrows(), self.influence.ncols()),
                mask: (self.mask.nrows(), self.mask.ncols()),
            });
            return ValidationReport {
                violations,
                spectral_radius: f64::NAN,
            };
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if !(m.is_finite() && m >= 0.0) {
                violations.push(Violation::BaseRate { node: i, value: m });
            }
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            violations.push(Violation::Beta(self.beta));
        }
        for j in 0..d {
            for i in 0..d {
                let a = self.influence[(i, j)];
                if !(a.is_finite() && a >= 0.0) {
                    violations.push(Violation::NegativeInfluence {
                        row: i,
                        col: j,
                        value: a,
                    });
                } else if a != 0.0 && !self.mask[(i, j)] {
                    violations.push(Violation::OutsideMask {
                        row: i,
                        col: j,
                        value: a,
                    });
                }
            }
        }
        let spectral_radius = spectral_radius(&self.influence.map(|a| a.abs()));
        if !(spectral_radius < 1.0) {
            violations.push(Violation::NonStationary(spectral_radius));
        }
        ValidationReport {
            violations,
            spectral_radius,
        }
    }

    /// [`validate`](Self::validate), converted into an error on any violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report.to_string()))
        }
    }
}

/// One failed invariant of [`HawkesParams`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DimensionMismatch {
        mu: usize,
        influence: (usize, usize),
        mask: (usize, usize),
    },
    BaseRate {
        node: usize,
        value: f64,
    },
    Beta(f64),
    NegativeInfluence {
        row: usize,
        col: usize,
        value: f64,
    },
    OutsideMask {
        row: usize,
        col: usize,
        value: f64,
    },
    NonStationary(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { mu, influence, mask } => write!(
                f,
                "dimension mismatch: mu has {mu} entries, influence is {}x{}, mask is {}x{}",
                influence.0, influence.1, mask.0, mask.1
            ),
            Violation::BaseRate { node, value } => {
                write!(f, "base rate of node {node} is {value}, expected finite >= 0")
            }
            Violation::Beta(b) => write!(f, "beta is {b}, expected finite > 0"),
            Violation::NegativeInfluence { row, col, value } => {
                write!(f, "influence[{row},{col}] = {value}, expected finite >= 0")
            }
            Violation::OutsideMask { row, col, value } => {
                write!(f, "influence[{row},{col}] = {value} outside the topology mask")
            }
            Violation::NonStationary(r) => {
                write!(f, "spectral radius {r} >= 1 (non-stationary)")
            }
        }
    }
}

/// Result of [`HawkesParams::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub spectral_radius: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid (spectral radius {})", self.spectral_radius);
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

const RADIUS_REL_TOL: f64 = 1e-12;
const RADIUS_NEG_TOL: f64 = 1e-12;

/// Spectral radius of a nonnegative square matrix.
///
/// Largest eigenvalue modulus.
///
/// Nonnegative matrices (every influence matrix) use the M-matrix
/// criterion: `ρ(A) < s` exactly when `(sI - A)⁻¹` exists and is
/// nonnegative, bisected on `s`. Unlike eigenvalue solvers this stays
/// accurate on long Jordan chains, whose computed eigenvalues move by
/// `eps^(1/size)`. Other matrices go through a Schur sweep.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    if d == 0 || a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    if a.iter().any(|&x| x < 0.0) {
        return a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let row_max = a.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let col_max = a.column_iter().map(|c| c.sum()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, row_max.min(col_max));
    let above = |s: f64| -> bool {
        let m = DMatrix::from_diagonal_element(d, d, s) - a;
        match m.lu().try_inverse() {
            Some(inv) => {
                let scale = inv.amax();
                scale.is_finite() && inv.iter().all(|&x| x >= -RADIUS_NEG_TOL * scale)
            }
            None => false,
        }
    };
    // The bound is attained for constant row or column sums.
    if !above(hi * (1.0 + RADIUS_REL_TOL)) {
        return hi;
    }
    while hi - lo > RADIUS_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sparse adjacency view of a topology mask.
///
/// `sources[i]` lists every `j` with `mask[(i, j)]` (nodes that may excite
/// `i`); `targets[j]` lists every `i` that node `j` may excite.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub sources: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl Topology {
    pub fn from_mask(mask: &DMatrix<bool>) -> Self {
        let d = mask.nrows();
        let mut sources = vec![Vec::new(); d];
        let mut targets = vec![Vec::new(); d];
        for i in 0..d {
            for j in 0..mask.ncols() {
                if mask[(i, j)] {
                    sources[i].push(j);
                    targets[j].push(i);
                }
            }
        }
        Self { sources, targets }
    }

    pub fn dim(&self) -> usize {
        self.sources.len()
    }

    pub fn edge_count(&self) -> usize {
        self.sources.iter().map(Vec::len).sum()
    }
}

/// A stream that switches from `pre` to `post` parameters at time `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeScenario {
    pub pre: HawkesParams,
    pub post: HawkesParams,
    pub kappa: f64,
    pub horizon: f64,
    /// Whether pre-change events keep exciting the post-change intensity.
    /// `None` resolves to `false` for a Poisson pre-change model and `true`
    /// otherwise; see [`ChangeScenario::carries_history`].
    pub carry_history: Option<bool>,
}

impl ChangeScenario {
    pub fn new(pre: HawkesParams, post: HawkesParams, kappa: f64, horizon: f64) -> Self {
        Self {
            pre,
            post,
            kappa,
            horizon,
            carry_history: None,
        }
    }

    /// Resolved history flag.
    pub fn carries_history(&self) -> bool {
        self.carry_history.unwrap_or(!self.pre.is_poisson())
    }

    /// The hypothesis pair this scenario exercises.
    pub fn setting(&self) -> Setting {
        if self.pre.is_poisson() {
            Setting::PoissonToHawkes
        } else {
            Setting::HawkesToHawkes
        }
    }

    /// The scenario with no change at all (pre model until the horizon).
    pub fn null(&self) -> Self {
        Self {
            post: self.pre.clone(),
            kappa: self.horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scenario horizon {} must be positive and finite",
                self.horizon
            )));
        }
        if !(0.0 <= self.kappa && self.kappa <= self.horizon) {
            return Err(Error::InvalidInput(format!(
                "change time {} outside [0, {}]",
                self.kappa, self.horizon
            )));
        }
        if self.pre.dim() != self.post.dim() {
            return Err(Error::InvalidParams(format!(
                "pre-change dimension {} differs from post-change dimension {}",
                self.pre.dim(),
                self.post.dim()
            )));
        }
        self.pre.ensure_valid()?;
        self.post.ensure_valid()
    }
}
