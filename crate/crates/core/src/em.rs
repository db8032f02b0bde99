//! EM-style maximization of the window likelihood over the influence matrix.
//!
//! The E-step splits every in-window event `i` between its background rate
//! and the earlier in-window events `j` that may excite it:
//!
//! ```text
//! p_ij = α_{u_i,u_j} β e^{-β(t_i - t_j)} / (μ_{u_i} + β Σ_m α_{u_i,u_m} e^{-β(t_i - t_m)})
//! p_ii = μ_{u_i} / (same denominator)
//! ```
//!
//! and the M-step has the closed form
//!
//! ```text
//! α_{u,v} = Σ_{i: u_i = u} Σ_{j: u_j = v} p_ij / Σ_{j: u_j = v} [1 - e^{-β(t - t_j)}]
//! ```
//!
//! [`fit`] never materializes the pairwise `p_ij`: the inner sum over `j`
//! with `u_j = v` equals `α_{u,v} β R_{i,v} / den_i`, with `R_{i,v}` taken
//! from an [`ExcitationTable`]. [`e_step`] and [`m_step`] keep the explicit
//! pairwise form for inspection and testing.
//!
//! Each target row of the M-step only reads the events of that row's
//! neighbors, so rows could be updated by independent workers.

use nalgebra::DMatrix;

use crate::likelihood::{ExcitationTable, KahanSum};
use crate::model::{window_range, EventStream, HawkesParams, Window};
use crate::{Error, Result};

/// Stopping rule and safeguards of the EM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Stop once the max-abs change of the matrix drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Value of every allowed entry for a cold start.
    pub init_alpha: f64,
    /// Upper clamp of every entry.
    pub clamp_max: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 50,
            init_alpha: 0.1,
            clamp_max: 1.0 - 1e-6,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("EM tolerance must be positive".into()));
        }
        if !(self.init_alpha > 0.0 && self.init_alpha < 1.0) {
            return Err(Error::InvalidInput("EM init_alpha must lie in (0, 1)".into()));
        }
        if !(self.clamp_max > 0.0) {
            return Err(Error::InvalidInput("EM clamp_max must be positive".into()));
        }
        Ok(())
    }

    /// Cold-start matrix: `init_alpha` on every allowed entry.
    pub fn cold_start(&self, mask: &DMatrix<bool>) -> DMatrix<f64> {
        mask.map(|m| if m { self.init_alpha } else { 0.0 })
    }
}

/// Responsibilities of one event.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityRow {
    /// `p_ii`: probability that the event is a background event.
    pub background: f64,
    /// `(j, p_ij)` for earlier in-window events `j` allowed by the mask.
    /// `j` indexes the window's events.
    pub parents: Vec<(usize, f64)>,
}

/// Pairwise branching probabilities of every in-window event.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub window: Window,
    pub rows: Vec<ResponsibilityRow>,
}

/// Explicit E-step (`O(n²)` pairs) for the events of `stream` in `window`.
pub fn e_step(stream: &EventStream, window: Window, params: &HawkesParams) -> Result<Responsibilities> {
    let events = window_range(stream.events(), &window);
    let beta = params.beta;
    let mut rows = Vec::with_capacity(events.len());
    for (i, ei) in events.iter().enumerate() {
        let u = ei.node;
        let mut parents = Vec::new();
        let mut den = KahanSum::new();
        let mu = params.mu[u];
        den.add(mu);
        for (j, ej) in events[..i].iter().enumerate() {
            if params.mask[(u, ej.node)] {
                let w = params.influence[(u, ej.node)] * beta * (-beta * (ei.time - ej.time)).exp();
                parents.push((j, w));
                den.add(w);
            }
        }
        let den = den.value();
        if !(den > 0.0) {
            return Err(Error::Degenerate { node: u, time: ei.time });
        }
        parents.iter_mut().for_each(|(_, w)| *w /= den);
        rows.push(ResponsibilityRow {
            background: mu / den,
            parents,
        });
    }
    Ok(Responsibilities { window, rows })
}

/// Explicit M-step. Entries whose source node has no in-window events keep
/// their value from `previous`; everything is clamped to `[0, clamp_max]`
/// and zeroed outside the mask.
pub fn m_step(resp: &Responsibilities, stream: &EventStream, previous: &HawkesParams, clamp_max: f64) -> DMatrix<f64> {
    let events = window_range(stream.events(), &resp.window);
    let d = previous.dim();
    let beta = previous.beta;
    let mut numer = DMatrix::<f64>::zeros(d, d);
    for (row, ei) in resp.rows.iter().zip(events) {
        for &(j, p) in &row.parents {
            numer[(ei.node, events[j].node)] += p;
        }
    }
    let mut tails = vec![0.0; d];
    for e in events {
        tails[e.node] += -(-beta * (resp.window.t - e.time)).exp_m1();
    }
    DMatrix::from_fn(d, d, |u, v| {
        if !previous.mask[(u, v)] {
            0.0
        } else if tails[v] > 0.0 {
            (numer[(u, v)] / tails[v]).clamp(0.0, clamp_max)
        } else {
            previous.influence[(u, v)]
        }
    })
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub influence: DMatrix<f64>,
    /// Number of E/M rounds performed.
    pub iterations: usize,
    pub converged: bool,
    /// Jensen lower bound at the final estimate, using the responsibilities
    /// of the last E-step.
    pub lower_bound: f64,
    /// Window log-likelihood at the warm start and after every round.
    pub loglik_trace: Vec<f64>,
}

impl EmFit {
    pub fn final_loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Fits the influence matrix on `window` starting from `prior.influence`.
pub fn fit(stream: &EventStream, window: Window, prior: &HawkesParams, config: &EmConfig) -> Result<EmFit> {
    config.validate()?;
    let table = ExcitationTable::for_stream(stream, prior, window);
    let mu: Vec<f64> = prior.mu.iter().copied().collect();
    fit_table(&table, &mu, &prior.influence, &prior.mask, config)
}

/// [`fit`] on a prebuilt excitation table.
pub fn fit_table(
    table: &ExcitationTable,
    mu: &[f64],
    warm_start: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    config: &EmConfig,
) -> Result<EmFit> {
    let d = mu.len();
    let beta = table.beta();
    let mut current = DMatrix::from_fn(d, d, |u, v| {
        if mask[(u, v)] {
            warm_start[(u, v)].clamp(0.0, config.clamp_max)
        } else {
            0.0
        }
    });
    let base = mu.iter().sum::<f64>() * table.window().length();
    if table.is_empty() {
        return Ok(EmFit {
            influence: current,
            iterations: 0,
            converged: true,
            lower_bound: -base,
            loglik_trace: vec![-base],
        });
    }
    let tails = table.tails();
    let mut trace = Vec::new();
    let mut numer = DMatrix::<f64>::zeros(d, d);
    let mut iterations = 0;
    let mut converged = false;
    let mut lower_bound = f64::NAN;
    while iterations < config.max_iterations {
        // E-step, aggregated by source node.
        numer.fill(0.0);
        let mut log_den = KahanSum::new();
        for i in 0..table.len() {
            let u = table.events()[i].node;
            let mut den = mu[u];
            for (v, r) in table.entries(i) {
                den += beta * current[(u, v)] * r;
            }
            if !(den > 0.0) {
                return Err(Error::Degenerate {
                    node: u,
                    time: table.events()[i].time,
                });
            }
            log_den.add(den.ln());
            for (v, r) in table.entries(i) {
                let a = current[(u, v)];
                if a > 0.0 {
                    numer[(u, v)] += beta * a * r / den;
                }
            }
        }
        trace.push(log_den.value() - base - table.compensator_excess(&current));

        // M-step.
        let next = DMatrix::from_fn(d, d, |u, v| {
            if !mask[(u, v)] {
                0.0
            } else if tails[v] > 0.0 {
                (numer[(u, v)] / tails[v]).clamp(0.0, config.clamp_max)
            } else {
                current[(u, v)]
            }
        });

        // Jensen bound at `next` with the responsibilities computed at `current`.
        let mut gain = KahanSum::new();
        for u in 0..d {
            for v in 0..d {
                let q = numer[(u, v)];
                if q > 0.0 {
                    gain.add(q * (next[(u, v)] / current[(u, v)]).ln());
                }
            }
        }
        lower_bound = log_den.value() + gain.value() - base - table.compensator_excess(&next);

        let change = (&next - &current).amax();
        current = next;
        iterations += 1;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    let final_ll = table.loglik_hawkes(mu, &current)?;
    trace.push(final_ll);
    Ok(EmFit {
        influence: current,
        iterations,
        converged,
        lower_bound,
        loglik_trace: trace,
    })
}
