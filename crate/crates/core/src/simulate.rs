//! Poisson and multivariate Hawkes simulation by thinning.
//!
//! With an exponential kernel the total intensity only decays between
//! events, so the intensity right after the last accepted point bounds the
//! intensity until the next one. Each node keeps its excitation
//! `S_j = Σ β e^{-β(t - t_k)}` over its own past events; the intensity of
//! node `i` is `μ_i + Σ_j A_ij S_j` and the total is `Σ μ + Σ_j colsum_j S_j`.
//!
//! Randomness comes from ChaCha8 seeded with [`SimSeed::seed`]; replicate
//! `k` of a Monte Carlo study uses ChaCha stream `k` of the same seed, so
//! replicates never share state and results are identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ChangeScenario, Event, EventStream, HawkesParams};
use crate::{Error, Result};

/// Seed of a reproducible simulation: master seed plus replicate stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimSeed {
    pub seed: u64,
    pub stream: u64,
}

impl SimSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Seed for replicate `index`: same master seed, ChaCha stream `index`.
    pub fn replicate(self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: index,
        }
    }

    /// A seed for an independent sub-study (e.g. calibration vs evaluation).
    pub fn derive(self, salt: u64) -> Self {
        // splitmix64 finalizer
        let mut z = self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self {
            seed: z ^ (z >> 31),
            stream: self.stream,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for SimSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed)
    }
}

/// Knobs shared by all simulation entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Abort when more than this many events have been generated.
    pub max_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events: 100_000_000,
        }
    }
}

/// A simulated change scenario together with its change time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSample {
    pub stream: EventStream,
    pub kappa: f64,
}

/// Independent homogeneous Poisson processes with rates `mu`.
pub fn simulate_poisson(mu: &[f64], horizon: f64, seed: SimSeed) -> Result<EventStream> {
    if mu.is_empty() {
        return Err(Error::InvalidInput("rate vector is empty".into()));
    }
    if let Some(r) = mu.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidParams(format!(
            "Poisson rate {r} must be finite and >= 0"
        )));
    }
    check_horizon(horizon)?;
    let params = HawkesParams::poisson(mu.to_vec(), 1.0);
    let mut rng = seed.rng();
    let mut sampler = Sampler::new(&params);
    let mut events = Vec::new();
    sampler.run_until(horizon, &mut rng, &mut events, SimOptions::default().max_events)?;
    EventStream::new(mu.len(), events, horizon)
}

/// Exact sample of a stationary multivariate Hawkes process on `[0, horizon]`.
pub fn simulate_hawkes(params: &HawkesParams, horizon: f64, seed: SimSeed) -> Result<EventStream> {
    simulate_hawkes_with(params, horizon, seed, &SimOptions::default())
}

pub fn simulate_hawkes_with(
    params: &HawkesParams,
    horizon: f64,
    seed: SimSeed,
    options: &SimOptions,
) -> Result<EventStream> {
    params.ensure_valid()?;
    check_horizon(horizon)?;
    let mut rng = seed.rng();
    let mut sampler = Sampler::new(params);
    let mut events = Vec::new();
    sampler.run_until(horizon, &mut rng, &mut events, options.max_events)?;
    EventStream::new(params.dim(), events, horizon)
}

/// Pre-change model on `[0, κ)`, post-change model on `[κ, horizon]`.
///
/// Unless the scenario carries history, the excitation state is reset at
/// `κ`, so pre-change events do not excite post-change intensity.
pub fn simulate_with_change(scenario: &ChangeScenario, seed: SimSeed) -> Result<ChangeSample> {
    simulate_with_change_opts(scenario, seed, &SimOptions::default())
}

pub fn simulate_with_change_opts(
    scenario: &ChangeScenario,
    seed: SimSeed,
    options: &SimOptions,
) -> Result<ChangeSample> {
    scenario.validate()?;
    let mut rng = seed.rng();
    let mut events = Vec::new();
    let mut sampler = Sampler::new(&scenario.pre);
    if scenario.kappa > 0.0 {
        sampler.run_until(scenario.kappa, &mut rng, &mut events, options.max_events)?;
    }
    if scenario.kappa < scenario.horizon {
        sampler.switch_params(&scenario.post, scenario.carries_history());
        sampler.run_until(scenario.horizon, &mut rng, &mut events, options.max_events)?;
    }
    let stream = EventStream::new(scenario.pre.dim(), events, scenario.horizon)?;
    Ok(ChangeSample {
        stream,
        kappa: scenario.kappa,
    })
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "horizon {horizon} must be positive and finite"
        )))
    }
}

fn unit_exponential<R: Rng>(rng: &mut R) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

/// Thinning state for one parameter set.
struct Sampler {
    beta: f64,
    mu: Vec<f64>,
    mu_total: f64,
    /// Per source: (target, weight) pairs and their sum.
    out_edges: Vec<Vec<(usize, f64)>>,
    col_sum: Vec<f64>,
    excitation: Vec<f64>,
    now: f64,
    generated: u64,
}

impl Sampler {
    fn new(params: &HawkesParams) -> Self {
        let d = params.dim();
        let mut s = Self {
            beta: params.beta,
            mu: Vec::new(),
            mu_total: 0.0,
            out_edges: Vec::new(),
            col_sum: Vec::new(),
            excitation: vec![0.0; d],
            now: 0.0,
            generated: 0,
        };
        s.load(params);
        s
    }

    fn load(&mut self, params: &HawkesParams) {
        let d = params.dim();
        self.beta = params.beta;
        self.mu = params.mu.iter().copied().collect();
        self.mu_total = self.mu.iter().sum();
        self.out_edges = (0..d)
            .map(|j| {
                (0..d)
                    .filter_map(|i| {
                        let a = params.influence[(i, j)];
                        (a > 0.0).then_some((i, a))
                    })
                    .collect()
            })
            .collect();
        self.col_sum = self
            .out_edges
            .iter()
            .map(|edges| edges.iter().map(|&(_, a)| a).sum())
            .collect();
    }

    fn switch_params(&mut self, params: &HawkesParams, carry_history: bool) {
        self.load(params);
        if !carry_history {
            self.excitation.iter_mut().for_each(|s| *s = 0.0);
        }
    }

    fn total_intensity(&self) -> f64 {
        self.mu_total
            + self
                .col_sum
                .iter()
                .zip(&self.excitation)
                .map(|(c, s)| c * s)
                .sum::<f64>()
    }

    fn decay(&mut self, dt: f64) {
        let f = (-self.beta * dt).exp();
        self.excitation.iter_mut().for_each(|s| *s *= f);
    }

    /// Picks the node of an accepted point given `r` uniform on `[0, total)`.
    fn pick_node(&self, mut r: f64) -> usize {
        if r < self.mu_total {
            for (i, &m) in self.mu.iter().enumerate() {
                if r < m {
                    return i;
                }
                r -= m;
            }
        } else {
            r -= self.mu_total;
            for (j, edges) in self.out_edges.iter().enumerate() {
                let mass = self.col_sum[j] * self.excitation[j];
                if r < mass && self.excitation[j] > 0.0 {
                    let mut q = r / self.excitation[j];
                    for &(i, a) in edges {
                        if q < a {
                            return i;
                        }
                        q -= a;
                    }
                    return edges.last().map(|&(i, _)| i).unwrap_or(j);
                }
                r -= mass;
            }
        }
        // Rounding left `r` just past the last bucket.
        self.last_positive_node()
    }

    fn last_positive_node(&self) -> usize {
        for j in (0..self.out_edges.len()).rev() {
            if self.col_sum[j] * self.excitation[j] > 0.0 {
                return self.out_edges[j].last().map(|&(i, _)| i).unwrap_or(j);
            }
        }
        self.mu.iter().rposition(|&m| m > 0.0).unwrap_or(0)
    }

    fn run_until<R: Rng>(&mut self, end: f64, rng: &mut R, out: &mut Vec<Event>, max_events: u64) -> Result<()> {
        loop {
            let bound = self.total_intensity();
            if bound <= 0.0 {
                self.now = end;
                return Ok(());
            }
            let wait = unit_exponential(rng) / bound;
            if self.now + wait > end {
                self.decay(end - self.now);
                self.now = end;
                return Ok(());
            }
            self.now += wait;
            self.decay(wait);
            let lambda = self.total_intensity();
            let u: f64 = rng.gen();
            if u * bound <= lambda {
                let r = rng.gen::<f64>() * lambda;
                let node = self.pick_node(r);
                out.push(Event::new(self.now, node));
                self.excitation[node] += self.beta;
                self.generated += 1;
                if self.generated > max_events {
                    return Err(Error::Numeric(format!(
                        "simulation exceeded {max_events} events by t={:.6}; \
                         parameters may be near-critical",
                        self.now
                    )));
                }
            }
        }
    }
}
