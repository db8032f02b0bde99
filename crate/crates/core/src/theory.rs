//! Stationary moments of Hawkes processes, the mean-field information
//! quantities of the log-likelihood ratio, and the analytic ARL
//! approximation used to pick detection thresholds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::model::{spectral_radius, HawkesParams, Setting};
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn check_stationary(a: &DMatrix<f64>) -> Result<()> {
    let rho = spectral_radius(a);
    if rho >= 1.0 || !rho.is_finite() {
        return Err(Error::InvalidParams(format!(
            "spectral radius {rho:.6} >= 1: no stationary regime"
        )));
    }
    Ok(())
}

fn resolvent(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    (DMatrix::identity(d, d) - a)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("I - A is singular".into()))
}

/// `λ̄ = (I − A)⁻¹ μ`.
pub fn stationary_intensity(params: &HawkesParams) -> Result<DVector<f64>> {
    stationary_of(&params.mu, &params.influence)
}

fn stationary_of(mu: &DVector<f64>, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_stationary(a)?;
    let d = a.nrows();
    (DMatrix::identity(d, d) - a)
        .lu()
        .solve(mu)
        .ok_or_else(|| Error::Numeric("I - A is singular".into()))
}

/// Continuous part of the stationary cross-covariance density of the
/// counting increments, `Cov(dN_s, dN_{s+τ}) / (ds dτ)` for `τ ≠ 0`:
///
/// ```text
/// c(τ) = β exp(−β(I − A)τ) A (I + ½(I − A)⁻¹A) diag(λ̄),   τ > 0
/// c(−τ) = c(τ)ᵀ
/// ```
///
/// At `τ = 0` this returns the right limit; the atom `diag(λ̄) δ(τ)` is
/// available from [`covariance_atom`].
pub fn covariance_intensity(params: &HawkesParams, tau: f64) -> Result<DMatrix<f64>> {
    let a = &params.influence;
    let d = a.nrows();
    let lambda = stationary_intensity(params)?;
    let inv = resolvent(a)?;
    let core = a * (DMatrix::identity(d, d) + inv * a * 0.5) * DMatrix::from_diagonal(&lambda);
    let decay = ((DMatrix::identity(d, d) - a) * (-params.beta * tau.abs())).exp();
    let c = decay * core * params.beta;
    Ok(if tau < 0.0 { c.transpose() } else { c })
}

/// Weight of the Dirac component of the covariance density at `τ = 0`.
pub fn covariance_atom(params: &HawkesParams) -> Result<DVector<f64>> {
    stationary_intensity(params)
}

/// Per-unit-time integrated covariance used by the variance formulas:
/// `(I − A)⁻¹A(2I + (I − A)⁻¹A) diag(λ̄) + diag(λ̄)`.
///
/// Only its symmetric part enters the quadratic forms below.
pub fn integrated_covariance(mu: &DVector<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let lambda = stationary_of(mu, a)?;
    let inv = resolvent(a)?;
    let diag = DMatrix::from_diagonal(&lambda);
    let ia = &inv * a;
    Ok(&ia * (DMatrix::identity(d, d) * 2.0 + &ia) * &diag + diag)
}

/// Mean and variance per unit time of the log-likelihood ratio under the
/// alternative (`i`, `sigma2`) and the null (`i0`, `sigma02`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoQuantities {
    pub i: f64,
    pub i0: f64,
    pub sigma2: f64,
    pub sigma02: f64,
}

impl InfoQuantities {
    pub fn xi(&self) -> f64 {
        self.i - self.i0
    }

    pub fn eta2(&self) -> f64 {
        self.sigma2 + self.sigma02
    }
}

/// Intermediate matrices of the multi-dimensional formulas.
#[derive(Debug, Clone)]
pub struct TheoryMatrices {
    pub lambda_bar: DVector<f64>,
    pub lambda_bar_star: DVector<f64>,
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_star: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl TheoryMatrices {
    pub fn new(mu: &DVector<f64>, null: &DMatrix<f64>, alt: &DMatrix<f64>) -> Result<Self> {
        let lambda_bar = stationary_of(mu, null)?;
        let lambda_bar_star = stationary_of(mu, alt)?;
        let outer = |v: DVector<f64>| &v * v.transpose();
        let h = outer(lambda_bar_star.zip_map(mu, |s, m| s.ln() - m.ln()));
        let g = outer(lambda_bar_star.zip_map(&lambda_bar, |s, l| (s / l).ln()));
        let f = outer(lambda_bar_star.zip_map(&lambda_bar, |s, l| 1.0 - s / l));
        let r = outer(lambda_bar_star.zip_map(&lambda_bar, |s, l| l / s - 1.0));
        Ok(Self {
            c: integrated_covariance(mu, null)?,
            c_star: integrated_covariance(mu, alt)?,
            lambda_bar,
            lambda_bar_star,
            h,
            g,
            f,
            r,
        })
    }
}

/// `eᵀ (X ∘ Y) e`.
fn hadamard_sum(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.component_mul(y).sum()
}

/// Mean-field information quantities for a null model and an alternative
/// influence matrix. For Poisson→Hawkes the null influence is ignored.
pub fn info_quantities(setting: Setting, null: &HawkesParams, alt: &DMatrix<f64>) -> Result<InfoQuantities> {
    let d = null.dim();
    if alt.nrows() != d || alt.ncols() != d {
        return Err(Error::InvalidParams(format!(
            "alternative influence is {}x{}, expected {d}x{d}",
            alt.nrows(),
            alt.ncols()
        )));
    }
    if null.mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidParams("base rates must be positive".into()));
    }
    let mu = &null.mu;
    let ones = |v: &DVector<f64>| v.sum();
    match setting {
        Setting::PoissonToHawkes => {
            let m = TheoryMatrices::new(mu, &DMatrix::zeros(d, d), alt)?;
            let log_ratio = m.lambda_bar_star.zip_map(mu, |s, u| s.ln() - u.ln());
            let excess = ones(&(&m.lambda_bar_star - mu));
            Ok(InfoQuantities {
                i: m.lambda_bar_star.dot(&log_ratio) - excess,
                i0: mu.dot(&log_ratio) - excess,
                sigma2: hadamard_sum(&m.h, &m.c_star),
                sigma02: mu.dot(&log_ratio.component_mul(&log_ratio)),
            })
        }
        Setting::HawkesToHawkes => {
            let m = TheoryMatrices::new(mu, &null.influence, alt)?;
            let log_ratio = m.lambda_bar_star.zip_map(&m.lambda_bar, |s, l| (s / l).ln());
            let excess = ones(&(&m.lambda_bar_star - &m.lambda_bar));
            Ok(InfoQuantities {
                i: m.lambda_bar_star.dot(&log_ratio) - excess,
                i0: m.lambda_bar.dot(&log_ratio) - excess,
                sigma2: hadamard_sum(&m.g, &m.c_star) + hadamard_sum(&m.f, &m.c),
                sigma02: hadamard_sum(&m.r, &m.c_star) + hadamard_sum(&m.g, &m.c),
            })
        }
    }
}

/// Scalar Poisson(μ) → Hawkes(μ, α) row.
pub fn info_poisson_to_hawkes_1d(mu: f64, alpha: f64) -> InfoQuantities {
    let l = (1.0 / (1.0 - alpha)).ln();
    let lam = mu / (1.0 - alpha);
    let c = lam + alpha * (2.0 - alpha) * mu / (1.0 - alpha).powi(3);
    InfoQuantities {
        i: lam * l - alpha / (1.0 - alpha) * mu,
        i0: mu * l - alpha / (1.0 - alpha) * mu,
        sigma2: l * l * c,
        sigma02: mu * l * l,
    }
}

/// Scalar Hawkes(μ, α) → Hawkes(μ, α*) row.
pub fn info_hawkes_to_hawkes_1d(mu: f64, alpha: f64, alpha_star: f64) -> InfoQuantities {
    let l = ((1.0 - alpha) / (1.0 - alpha_star)).ln();
    let lam = mu / (1.0 - alpha);
    let lam_star = mu / (1.0 - alpha_star);
    let c = lam + alpha * (2.0 - alpha) * mu / (1.0 - alpha).powi(3);
    let c_star = lam_star + alpha_star * (2.0 - alpha_star) * mu / (1.0 - alpha_star).powi(3);
    let f = (1.0 - (1.0 - alpha) / (1.0 - alpha_star)).powi(2);
    let r = (1.0 - (1.0 - alpha_star) / (1.0 - alpha)).powi(2);
    InfoQuantities {
        i: lam_star * l - lam_star + lam,
        i0: lam * l - lam_star + lam,
        sigma2: l * l * c_star + f * c,
        sigma02: r * c_star + l * l * c,
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Overshoot correction
/// `ν(x) = (2/x)(Φ(x/2) − ½) / ((x/2)Φ(x/2) + φ(x/2))`, with `ν(0) = 1`.
pub fn nu(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidInput(format!("nu argument {x} must be nonnegative")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let h = 0.5 * x;
    // Φ(h) − ½ via erf keeps full relative precision for tiny h.
    let num = 0.5 * erf(h / std::f64::consts::SQRT_2) / h;
    let den = h * std_normal_cdf(h) + (-0.5 * h * h - LN_SQRT_2PI).exp();
    Ok(num / den)
}

/// Numerical integration settings for the ARL formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    /// Influence entries range over `(delta, 1 − delta)`.
    pub delta: f64,
    /// Midpoint-rule nodes for one free entry.
    pub grid_points: usize,
    /// Monte Carlo draws for several free entries.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            grid_points: 401,
            mc_samples: 10_000,
            seed: 0x5eed,
        }
    }
}

/// An ARL value with its Monte Carlo standard error when applicable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArlEstimate {
    pub log_arl: f64,
    pub std_error: Option<f64>,
}

impl ArlEstimate {
    pub fn arl(&self) -> f64 {
        self.log_arl.exp()
    }

    /// True when the integrand vanished everywhere.
    pub fn is_infinite(&self) -> bool {
        self.log_arl == f64::INFINITY
    }
}

/// One integration node: the threshold-free parts of the integrand.
#[derive(Debug, Clone, Copy)]
struct Node {
    log_weight: f64,
    li: f64,
    l_sigma2: f64,
}

/// The ARL integral with its nodes frozen, so that evaluations at different
/// thresholds share the same quadrature or random draws.
#[derive(Debug, Clone)]
pub struct ArlIntegral {
    nodes: Vec<Node>,
    /// Number of draws for Monte Carlo, `None` for quadrature.
    draws: Option<usize>,
}

impl ArlIntegral {
    pub fn new(window_length: f64, setting: Setting, null: &HawkesParams, cfg: &IntegrationConfig) -> Result<Self> {
        if !(window_length > 0.0) {
            return Err(Error::InvalidInput("window length must be positive".into()));
        }
        if !(cfg.delta > 0.0 && cfg.delta < 0.5) {
            return Err(Error::InvalidInput("integration delta must lie in (0, 0.5)".into()));
        }
        let entries: Vec<(usize, usize)> = (0..null.dim())
            .flat_map(|v| (0..null.dim()).map(move |u| (u, v)))
            .filter(|&(u, v)| null.mask[(u, v)])
            .collect();
        if entries.is_empty() {
            return Err(Error::InvalidParams("mask allows no influence entries".into()));
        }
        let (lo, hi) = (cfg.delta, 1.0 - cfg.delta);
        let node_at = |a: &DMatrix<f64>, log_weight: f64| -> Result<Option<Node>> {
            let q = info_quantities(setting, null, a)?;
            if !(q.sigma2 > 0.0) {
                return Ok(None);
            }
            let eta2 = q.eta2();
            let nu_arg = if eta2 > 0.0 {
                (2.0 * q.xi() / eta2).max(0.0)
            } else {
                0.0
            };
            Ok(Some(Node {
                log_weight: log_weight + nu(nu_arg)?.ln(),
                li: window_length * q.i,
                l_sigma2: window_length * q.sigma2,
            }))
        };
        if entries.len() == 1 {
            let n = cfg.grid_points.max(1);
            let h = (hi - lo) / n as f64;
            let (u, v) = entries[0];
            let mut nodes = Vec::with_capacity(n);
            for k in 0..n {
                let mut a = null.influence.clone();
                a[(u, v)] = lo + (k as f64 + 0.5) * h;
                if spectral_radius(&a) >= 1.0 - cfg.delta {
                    continue;
                }
                if let Some(node) = node_at(&a, h.ln())? {
                    nodes.push(node);
                }
            }
            return Ok(Self { nodes, draws: None });
        }
        let n = cfg.mc_samples.max(2);
        let log_volume = entries.len() as f64 * (hi - lo).ln();
        let nodes: Vec<Option<Node>> = (0..n)
            .into_par_iter()
            .map(|k| -> Result<Option<Node>> {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(k as u64);
                let mut a = null.influence.clone();
                for &(u, v) in &entries {
                    a[(u, v)] = rng.gen_range(lo..hi);
                }
                if spectral_radius(&a) >= 1.0 - cfg.delta {
                    return Ok(None);
                }
                node_at(&a, log_volume)
            })
            .collect::<Result<_>>()?;
        let nodes: Vec<Node> = nodes.into_iter().flatten().collect();
        if nodes.is_empty() {
            return Err(Error::Numeric(
                "no sampled influence matrix satisfied the stationarity cutoff".into(),
            ));
        }
        Ok(Self { nodes, draws: Some(n) })
    }

    fn log_terms(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(move |n| {
            let z = (n.li - x) / n.l_sigma2.sqrt();
            n.log_weight - 0.5 * z * z - LN_SQRT_2PI - 0.5 * n.l_sigma2.ln()
        })
    }

    pub fn evaluate(&self, x: f64) -> ArlEstimate {
        let max = self.log_terms(x).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return ArlEstimate {
                log_arl: f64::INFINITY,
                std_error: None,
            };
        }
        let scaled: Vec<f64> = self.log_terms(x).map(|t| (t - max).exp()).collect();
        let total: f64 = scaled.iter().sum();
        match self.draws {
            None => ArlEstimate {
                log_arl: x - max - total.ln(),
                std_error: None,
            },
            Some(n) => {
                let nf = n as f64;
                let mean = total / nf;
                let sq: f64 = scaled.iter().map(|s| s * s).sum::<f64>() / nf;
                let var = (sq - mean * mean).max(0.0) / (nf - 1.0);
                let log_arl = x - max - mean.ln();
                ArlEstimate {
                    log_arl,
                    std_error: Some(log_arl.exp() * var.sqrt() / mean),
                }
            }
        }
    }
}

/// ARL of the windowed GLR procedure at threshold `x`.
pub fn arl(
    x: f64,
    window_length: f64,
    setting: Setting,
    null: &HawkesParams,
    cfg: &IntegrationConfig,
) -> Result<ArlEstimate> {
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!("threshold {x} must be positive")));
    }
    Ok(ArlIntegral::new(window_length, setting, null, cfg)?.evaluate(x))
}

pub const THRESHOLD_BRACKET: (f64, f64) = (0.1, 500.0);

/// Threshold whose ARL matches `target_arl` to relative tolerance 1e-3.
pub fn solve_threshold(
    target_arl: f64,
    window_length: f64,
    setting: Setting,
    null: &HawkesParams,
    cfg: &IntegrationConfig,
) -> Result<f64> {
    if !(target_arl > 1.0) {
        return Err(Error::InvalidInput(format!("target ARL {target_arl} must exceed 1")));
    }
    let integral = ArlIntegral::new(window_length, setting, null, cfg)?;
    solve_frozen(&integral, target_arl)
}

/// Bisection on a frozen integral.
pub fn solve_frozen(integral: &ArlIntegral, target_arl: f64) -> Result<f64> {
    let goal = target_arl.ln();
    let tol = 1e-3_f64.ln_1p();
    let f = |x: f64| integral.evaluate(x).log_arl - goal;
    let (mut lo, mut hi) = THRESHOLD_BRACKET;
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo < 0.0 && fhi > 0.0) {
        let curve: Vec<String> = (0..=20)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / 20.0;
                format!("  x={x:.2} log_arl={:.4}", integral.evaluate(x).log_arl)
            })
            .collect();
        return Err(Error::Numeric(format!(
            "target ARL {target_arl} not bracketed by thresholds [{lo}, {hi}]\n{}",
            curve.join("\n")
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol {
            return Ok(mid);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn stationary_examples() {
        let p = HawkesParams::scalar(1.0, 0.3, 1.0);
        assert!(close(stationary_intensity(&p).unwrap()[0], 1.0 / 0.7, 1e-12));
        let p = HawkesParams::poisson(vec![0.4, 2.0], 1.0);
        assert_eq!(stationary_intensity(&p).unwrap().as_slice(), &[0.4, 2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, 0.2]);
        let p = HawkesParams::new(vec![0.5, 0.5], a, 1.0);
        let l = stationary_intensity(&p).unwrap();
        assert!(close(l[0], 0.714_285_714, 1e-8) && close(l[1], 0.714_285_714, 1e-8));
        assert!(stationary_intensity(&HawkesParams::scalar(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn covariance_scalar_form() {
        let p = HawkesParams::scalar(1.0, 0.3, 1.0);
        let c0 = covariance_intensity(&p, 0.0).unwrap()[(0, 0)];
        assert!(close(c0, 0.3 * 1.7 / (2.0 * 0.49), 1e-12));
        assert!(close(c0, 0.52041, 1e-5));
        for tau in [0.5, 1.0, 3.0] {
            let c = covariance_intensity(&p, tau).unwrap()[(0, 0)];
            assert!(close(c, c0 * (-0.7 * tau).exp(), 1e-12));
        }
        let p0 = HawkesParams::poisson(vec![1.0, 2.0], 1.0);
        assert_eq!(covariance_intensity(&p0, 0.7).unwrap().amax(), 0.0);
        assert!(covariance_intensity(&HawkesParams::scalar(1.0, 1.2, 1.0), 1.0).is_err());
    }

    #[test]
    fn covariance_reflection() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.3, 0.0, 0.0, 0.2, 0.1, 0.2, 0.0, 0.1]);
        let p = HawkesParams::new(vec![0.5, 1.0, 0.2], a, 2.0);
        let c = covariance_intensity(&p, 0.8).unwrap();
        assert_eq!(covariance_intensity(&p, -0.8).unwrap(), c.transpose());
    }

    #[test]
    fn covariance_integrates_to_variance_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.1, 0.25]);
        let p = HawkesParams::new(vec![0.5, 1.0], a.clone(), 1.5);
        let upper = 20.0 / p.beta;
        let n = 4000;
        let h = upper / n as f64;
        let mut integral = DMatrix::<f64>::zeros(2, 2);
        for k in 0..n {
            integral += covariance_intensity(&p, (k as f64 + 0.5) * h).unwrap() * h;
        }
        let atom = DMatrix::from_diagonal(&covariance_atom(&p).unwrap());
        let c = integrated_covariance(&p.mu, &a).unwrap();
        let got = integral * 2.0 + atom;
        assert!((&got - &c).amax() / c.amax() < 1e-2);
        // Symmetrized counterpart is a covariance matrix.
        let sym = (&c + c.transpose()) * 0.5;
        assert!(sym.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn poisson_to_hawkes_scalar_row() {
        let q = info_poisson_to_hawkes_1d(10.0, 0.5);
        assert!(close(q.i, 20.0 * LN_2 - 10.0, 1e-12));
        assert!(close(q.i0, 10.0 * LN_2 - 10.0, 1e-12));
        assert!(close(q.sigma2, LN_2 * LN_2 * 80.0, 1e-12));
        assert!(close(q.sigma02, 4.80453, 1e-5));
        assert!(q.i > 0.0 && q.i0 < 0.0 && q.xi() > 0.0);
        let z = info_poisson_to_hawkes_1d(10.0, 1e-9);
        assert!(z.i.abs() < 1e-6 && z.i0.abs() < 1e-6 && z.sigma2 < 1e-12 && z.sigma02 < 1e-12);
    }

    #[test]
    fn hawkes_to_hawkes_scalar_row() {
        let q = info_hawkes_to_hawkes_1d(1.0, 0.3, 0.3);
        assert_eq!((q.i, q.i0, q.sigma2, q.sigma02), (0.0, 0.0, 0.0, 0.0));
        let q = info_hawkes_to_hawkes_1d(1.0, 0.3, 0.5);
        assert!(q.i > 0.0 && q.i0 < 0.0 && q.sigma2 > 0.0 && q.sigma02 > 0.0);
    }

    #[test]
    fn matrix_rows_specialize_to_scalar_rows() {
        for &(mu, alpha) in &[(10.0, 0.5), (1.0, 0.3), (0.2, 0.9), (3.0, 0.01)] {
            let null = HawkesParams::poisson(vec![mu], 1.0).with_mask(DMatrix::from_element(1, 1, true));
            let m = info_quantities(Setting::PoissonToHawkes, &null, &DMatrix::from_element(1, 1, alpha)).unwrap();
            let s = info_poisson_to_hawkes_1d(mu, alpha);
            for (x, y) in [(m.i, s.i), (m.i0, s.i0), (m.sigma2, s.sigma2), (m.sigma02, s.sigma02)] {
                assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
        for &(mu, a, b) in &[(1.0, 0.3, 0.5), (2.0, 0.6, 0.1), (0.5, 0.2, 0.95)] {
            let null = HawkesParams::scalar(mu, a, 1.0);
            let m = info_quantities(Setting::HawkesToHawkes, &null, &DMatrix::from_element(1, 1, b)).unwrap();
            let s = info_hawkes_to_hawkes_1d(mu, a, b);
            for (x, y) in [(m.i, s.i), (m.i0, s.i0), (m.sigma2, s.sigma2), (m.sigma02, s.sigma02)] {
                assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn multi_dim_rows_sign_pattern() {
        let mask = DMatrix::from_row_slice(2, 2, &[true, true, false, true]);
        let null = HawkesParams::poisson(vec![0.5, 0.5], 1.0).with_mask(mask);
        let alt = DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.0, 0.4]);
        let q = info_quantities(Setting::PoissonToHawkes, &null, &alt).unwrap();
        assert!(q.i > 0.0 && q.i0 < 0.0 && q.sigma2 > 0.0 && q.sigma02 > 0.0);
        let null = null.with_influence(DMatrix::from_row_slice(2, 2, &[0.1, 0.1, 0.0, 0.1]));
        let q = info_quantities(Setting::HawkesToHawkes, &null, &alt).unwrap();
        assert!(q.i > 0.0 && q.i0 < 0.0 && q.xi() > 0.0 && q.eta2() > 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.0, 1.1]);
        assert!(info_quantities(Setting::HawkesToHawkes, &null, &bad).is_err());
    }

    #[test]
    fn nu_values() {
        assert!(close(nu(1e-4).unwrap(), 1.0, 1e-3));
        assert_eq!(nu(0.0).unwrap(), 1.0);
        // Φ(1) and φ(1) to 12 digits.
        let (cdf1, pdf1) = (0.841_344_746_069, 0.241_970_724_519);
        assert!(close(nu(2.0).unwrap(), (cdf1 - 0.5) / (cdf1 + pdf1), 1e-10));
        assert!(close(nu(2.0).unwrap(), 0.315, 1e-3));
        let grid: Vec<f64> = (0..1000).map(|k| nu(10.0 * k as f64 / 999.0).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
        assert!(nu(-1.0).is_err());
    }

    fn poisson_null(mu: f64) -> HawkesParams {
        HawkesParams::poisson(vec![mu], 1.0).with_mask(DMatrix::from_element(1, 1, true))
    }

    #[test]
    fn arl_increases_with_threshold() {
        let null = poisson_null(1.0);
        let cfg = IntegrationConfig::default();
        let integral = ArlIntegral::new(10.0, Setting::PoissonToHawkes, &null, &cfg).unwrap();
        let vals: Vec<f64> = (1..200).map(|k| integral.evaluate(0.25 * k as f64).log_arl).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        let direct = arl(5.0, 10.0, Setting::PoissonToHawkes, &null, &cfg).unwrap();
        assert_eq!(direct, integral.evaluate(5.0));
        assert!(direct.std_error.is_none());
    }

    #[test]
    fn threshold_round_trip_and_monotone() {
        let null = poisson_null(1.0);
        let cfg = IntegrationConfig::default();
        let integral = ArlIntegral::new(10.0, Setting::PoissonToHawkes, &null, &cfg).unwrap();
        let mut prev = 0.0;
        for target in [1e2, 1e3, 1e4, 1e5] {
            let x = solve_frozen(&integral, target).unwrap();
            let back = integral.evaluate(x).arl();
            assert!(back >= 0.999 * target && back <= 1.001 * target, "{back}");
            assert!(x > prev);
            prev = x;
        }
        let x1 = solve_frozen(&integral, 1e8).unwrap();
        let x2 = solve_frozen(&integral, 2e8).unwrap();
        assert!(((x2 - x1) - LN_2).abs() < 0.1 * LN_2, "{}", x2 - x1);
    }

    #[test]
    fn threshold_family_over_window_lengths() {
        let null = poisson_null(1.0);
        let cfg = IntegrationConfig::default();
        let xs: Vec<f64> = [10.0, 50.0, 100.0]
            .iter()
            .map(|&l| solve_threshold(1e4, l, Setting::PoissonToHawkes, &null, &cfg).unwrap())
            .collect();
        for x in &xs {
            assert!((xs[0] - x).abs() < 0.5 * xs[0], "{xs:?}");
        }
    }

    #[test]
    fn bracket_failure_reports_curve() {
        let null = poisson_null(1.0);
        let err = solve_threshold(
            1e300,
            10.0,
            Setting::PoissonToHawkes,
            &null,
            &IntegrationConfig::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("log_arl="), "{err}");
    }

    #[test]
    fn monte_carlo_integral_is_deterministic() {
        let mask = DMatrix::from_row_slice(2, 2, &[true, true, false, true]);
        let null = HawkesParams::poisson(vec![1.0, 1.0], 1.0).with_mask(mask);
        let cfg = IntegrationConfig {
            mc_samples: 2000,
            ..IntegrationConfig::default()
        };
        let a = arl(8.0, 10.0, Setting::PoissonToHawkes, &null, &cfg).unwrap();
        let b = arl(8.0, 10.0, Setting::PoissonToHawkes, &null, &cfg).unwrap();
        assert_eq!(a, b);
        let se = a.std_error.unwrap();
        assert!(se > 0.0 && se < a.arl());
        let x = solve_threshold(1e3, 10.0, Setting::PoissonToHawkes, &null, &cfg).unwrap();
        assert!(x > 0.1 && x < 500.0);
    }
}
