//! TOML run configuration. Unknown keys are rejected; every default is
//! materialized by [`RunConfig::resolved`] so a printed config reruns the
//! exact same computation.

use std::path::Path;

use anyhow::bail;
use hawkes_watch::detector::{DetectorConfig, Method};
use hawkes_watch::em::EmConfig;
use hawkes_watch::theory::IntegrationConfig;
use hawkes_watch::{ChangeScenario, HawkesParams, Setting};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::DataError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Inferred from `model` when absent: zero influence means Poisson.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    pub model: ModelSpec,
    /// Post-change model for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub em: EmSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub mu: Vec<f64>,
    pub beta: f64,
    /// Row `i` holds the influence of every node on node `i`. Zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence: Option<Vec<Vec<f64>>>,
    /// Allowed entries; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<bool>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kappa: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carry_history: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Glr,
    Baseline1,
    Baseline2,
}

impl MethodName {
    pub fn method(self, bin_width: f64) -> Method {
        match self {
            MethodName::Glr => Method::Glr,
            MethodName::Baseline1 => Method::BinnedPoisson { bin_width },
            MethodName::Baseline2 => Method::NodewiseGlr,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    pub window: f64,
    pub update_every: usize,
    pub method: MethodName,
    /// Baseline 1 bin width.
    pub bin_width: f64,
    pub slack: f64,
    pub warm_floor: f64,
    pub cold_restart: bool,
    pub record_estimates: bool,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            window: 10.0,
            update_every: 1,
            method: MethodName::Glr,
            bin_width: 1.0,
            slack: 0.0,
            warm_floor: 1e-3,
            cold_restart: false,
            record_estimates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Explicit,
    Theory,
    Mc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSpec {
    pub source: ThresholdSource,
    /// Used when `source = "explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Target ARL for `theory` and `mc`.
    pub arl: f64,
    /// Monte Carlo replicates and horizon for `mc`.
    pub replicates: usize,
    pub horizon: f64,
    pub delta: f64,
    pub grid_points: usize,
    pub mc_samples: usize,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        let integ = IntegrationConfig::default();
        Self {
            source: ThresholdSource::Theory,
            value: None,
            arl: 1e4,
            replicates: 200,
            horizon: 2000.0,
            delta: integ.delta,
            grid_points: integ.grid_points,
            mc_samples: integ.mc_samples,
        }
    }
}

impl ThresholdSpec {
    pub fn integration(&self, seed: u64) -> IntegrationConfig {
        IntegrationConfig {
            delta: self.delta,
            grid_points: self.grid_points,
            mc_samples: self.mc_samples,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmSpec {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init_alpha: f64,
}

impl Default for EmSpec {
    fn default() -> Self {
        let em = EmConfig::default();
        Self {
            tolerance: em.tolerance,
            max_iterations: em.max_iterations,
            init_alpha: em.init_alpha,
        }
    }
}

impl EmSpec {
    pub fn config(&self) -> EmConfig {
        EmConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            init_alpha: self.init_alpha,
            ..EmConfig::default()
        }
    }
}

fn rows_to_matrix<T: Copy + PartialEq + std::fmt::Debug + 'static>(
    rows: &[Vec<T>],
    d: usize,
    what: &str,
) -> anyhow::Result<DMatrix<T>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        bail!(DataError(format!("{what} must be a {d}x{d} array of rows")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelSpec {
    pub fn from_params(p: &HawkesParams) -> Self {
        Self {
            mu: p.mu.iter().copied().collect(),
            beta: p.beta,
            influence: Some(matrix_rows(&p.influence)),
            mask: Some(p.mask.row_iter().map(|r| r.iter().copied().collect()).collect()),
        }
    }

    pub fn params(&self) -> anyhow::Result<HawkesParams> {
        let d = self.mu.len();
        if d == 0 {
            bail!(DataError("model.mu is empty".into()));
        }
        let influence = match &self.influence {
            Some(rows) => rows_to_matrix(rows, d, "influence")?,
            None => DMatrix::zeros(d, d),
        };
        let mask = match &self.mask {
            Some(rows) => rows_to_matrix(rows, d, "mask")?,
            None => DMatrix::from_element(d, d, true),
        };
        let p = HawkesParams::new(self.mu.clone(), influence, self.beta).with_mask(mask);
        p.ensure_valid()?;
        Ok(p)
    }

    fn resolved(&self) -> anyhow::Result<Self> {
        Ok(Self::from_params(&self.params()?))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| DataError(format!("{}: {e}", path.display())))?;
        cfg.resolved()
    }

    /// Copy with every optional model field and the setting filled in.
    pub fn resolved(&self) -> anyhow::Result<Self> {
        let mut out = self.clone();
        out.model = self.model.resolved()?;
        if let Some(post) = &self.post {
            out.post = Some(post.resolved()?);
        }
        out.setting = Some(self.setting()?);
        Ok(out)
    }

    pub fn null_params(&self) -> anyhow::Result<HawkesParams> {
        self.model.params()
    }

    pub fn setting(&self) -> anyhow::Result<Setting> {
        if let Some(s) = self.setting {
            return Ok(s);
        }
        Ok(if self.null_params()?.is_poisson() {
            Setting::PoissonToHawkes
        } else {
            Setting::HawkesToHawkes
        })
    }

    pub fn method(&self) -> Method {
        self.detector.method.method(self.detector.bin_width)
    }

    pub fn detector_config(&self, threshold: f64) -> anyhow::Result<DetectorConfig> {
        let d = &self.detector;
        let mut cfg =
            DetectorConfig::new(self.null_params()?, self.setting()?, d.window, threshold).with_method(self.method());
        cfg.update_every = d.update_every;
        cfg.slack = d.slack;
        cfg.warm_floor = d.warm_floor;
        cfg.cold_restart = d.cold_restart;
        cfg.record_estimates = d.record_estimates;
        cfg.em = self.em.config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> anyhow::Result<ChangeScenario> {
        let Some(spec) = &self.scenario else {
            bail!(DataError("config has no [scenario] table".into()));
        };
        let pre = self.null_params()?;
        let post = match &self.post {
            Some(p) => p.params()?,
            None => pre.clone(),
        };
        let mut s = ChangeScenario::new(pre, post, spec.kappa, spec.horizon);
        s.carry_history = spec.carry_history;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unprintable config: {e}\n"))
    }
}

/// Parses a config from text.
#[cfg(test)]
pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| DataError(e.to_string()))?;
    cfg.resolved()
}
