//! Comparison detectors: a binned Poisson GLR that ignores timing inside
//! bins (Baseline 1), and a sum of per-node one-dimensional GLRs that
//! ignores cross-node excitation (Baseline 2).

use nalgebra::DMatrix;

use crate::em::{self, EmConfig};
use crate::likelihood::ExcitationTable;
use crate::model::{window_range, Event, EventStream, HawkesParams, Setting, Topology, Window};
use crate::{Error, Result};

/// Floor applied to the fitted post-change rate of a bin series.
pub const RATE_FLOOR: f64 = 1e-12;

/// Per-node event counts on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSeries {
    pub bin_width: f64,
    /// `counts[node][bin]`.
    pub counts: Vec<Vec<u64>>,
}

impl CountSeries {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn bins(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Number of whole bins of width `w` fitting in `length`.
fn whole_bins(length: f64, w: f64) -> usize {
    // Tolerate rounding when `length` is an exact multiple of `w`.
    (length / w + 1e-9).floor() as usize
}

/// Counts events into bins `(τ + kw, τ + (k+1)w]`; the trailing partial bin
/// is dropped.
pub fn bin_counts(stream: &EventStream, w: f64, window: Window) -> Result<CountSeries> {
    bin_events(window_range(stream.events(), &window), stream.dim(), w, window)
}

/// [`bin_counts`] over a time-sorted slice of events.
pub fn bin_events(events: &[Event], dim: usize, w: f64, window: Window) -> Result<CountSeries> {
    if !(w > 0.0) {
        return Err(Error::InvalidInput(format!("bin width {w} must be positive")));
    }
    let c = whole_bins(window.length(), w);
    let mut counts = vec![vec![0u64; c]; dim];
    for e in window_range(events, &window) {
        let k = ((e.time - window.tau) / w).ceil() as usize;
        if k >= 1 && k <= c {
            counts[e.node][k - 1] += 1;
        }
    }
    Ok(CountSeries { bin_width: w, counts })
}

/// Binned Poisson GLR, maximized over the change bin `k` and the post-change
/// rates in closed form.
pub fn baseline1_stat(counts: &CountSeries, mu: &[f64]) -> Result<f64> {
    if mu.len() != counts.dim() {
        return Err(Error::InvalidInput(format!(
            "{} base rates for {} count series",
            mu.len(),
            counts.dim()
        )));
    }
    if mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParams("baseline rates must be positive".into()));
    }
    let c = counts.bins();
    let w = counts.bin_width;
    // Post-k totals, accumulated from the last bin backwards.
    let mut tails = vec![0u64; counts.dim()];
    let mut best = f64::NEG_INFINITY;
    for k in (0..c).rev() {
        let span = (c - k) as f64 * w;
        let mut stat = 0.0;
        for (j, series) in counts.counts.iter().enumerate() {
            tails[j] += series[k];
            let n = tails[j] as f64;
            let rate = (n / span).max(RATE_FLOOR);
            stat -= span * (rate - mu[j]);
            if n > 0.0 {
                stat += n * (rate / mu[j]).ln();
            }
        }
        best = best.max(stat);
    }
    Ok(if c == 0 { 0.0 } else { best })
}

/// Null model of one node seen in isolation.
fn node_null(null: &HawkesParams, setting: Setting, node: usize) -> HawkesParams {
    let alpha = match setting {
        Setting::PoissonToHawkes => 0.0,
        Setting::HawkesToHawkes => null.influence[(node, node)],
    };
    HawkesParams::scalar(null.mu[node], alpha, null.beta).with_mask(DMatrix::from_element(1, 1, true))
}

/// Per-node one-dimensional GLR statistics summed over nodes.
///
/// `warm` holds one warm-start excitation per node and is updated with the
/// fitted values; pass `None` for cold starts.
pub fn baseline2_stat(
    stream: &EventStream,
    null: &HawkesParams,
    setting: Setting,
    window: Window,
    em_config: &EmConfig,
    warm: Option<&mut [f64]>,
) -> Result<f64> {
    baseline2_events(
        window_range(stream.events(), &window),
        null,
        setting,
        window,
        em_config,
        warm,
    )
}

/// [`baseline2_stat`] over a time-sorted slice of events.
pub fn baseline2_events(
    events: &[Event],
    null: &HawkesParams,
    setting: Setting,
    window: Window,
    em_config: &EmConfig,
    warm: Option<&mut [f64]>,
) -> Result<f64> {
    let d = null.dim();
    let mut cold = vec![em_config.init_alpha; d];
    let warm = warm.unwrap_or(&mut cold);
    if warm.len() != d {
        return Err(Error::InvalidInput(format!("{} warm starts for {d} nodes", warm.len())));
    }
    let topo = Topology::from_mask(&DMatrix::from_element(1, 1, true));
    let events = window_range(events, &window);
    let mut own = Vec::new();
    let mut total = 0.0;
    for (node, w) in warm.iter_mut().enumerate() {
        own.clear();
        own.extend(events.iter().filter(|e| e.node == node).map(|e| Event::new(e.time, 0)));
        let p = node_null(null, setting, node);
        let table = ExcitationTable::build(&own, null.beta, &topo, window);
        let start = DMatrix::from_element(1, 1, *w);
        let mu = [p.mu[0]];
        let fit = em::fit_table(&table, &mu, &start, &p.mask, em_config)?;
        let alt = &fit.influence;
        let llr = match setting {
            Setting::PoissonToHawkes => table.llr(&mu, alt, None)?,
            Setting::HawkesToHawkes => table.llr(&mu, alt, Some(&p.influence))?,
        };
        total += llr.max(0.0);
        *w = alt[(0, 0)];
    }
    Ok(total)
}
