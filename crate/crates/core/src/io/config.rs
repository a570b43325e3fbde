//! TOML configuration mirroring [`ShapingConfig`] and [`TrainConfig`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::TrainConfig;
use crate::model::ExecutionCase;
use crate::profiling::BandThresholds;
use crate::shaping::{BandBudget, ShapingConfig};

pub const DEFAULT_BUDGET_PERCENTILE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Explicit budgets. When absent they are derived from a case base.
    pub shaping: Option<ShapingConfig>,
    /// Percentile of successful lengths used as `l_target` when deriving budgets.
    pub budget_percentile: f64,
    /// Warm-up used when deriving budgets; defaults to half the training steps.
    pub t_warmup: Option<u64>,
    pub band_thresholds: BandThresholds,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            shaping: None,
            budget_percentile: DEFAULT_BUDGET_PERCENTILE,
            t_warmup: None,
            band_thresholds: BandThresholds::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.budget_percentile) {
            return Err(Error::Config(format!(
                "budget_percentile must lie in [0, 1], got {}",
                self.budget_percentile
            )));
        }
        if let Some(s) = &self.shaping {
            s.check()?;
            if s.bands.len() != self.band_thresholds.band_count() {
                return Err(Error::Config(format!(
                    "{} band budgets for {} bands",
                    s.bands.len(),
                    self.band_thresholds.band_count()
                )));
            }
        }
        self.train.check()
    }

    pub fn warmup(&self) -> u64 {
        self.t_warmup.unwrap_or(self.train.steps / 2).max(1)
    }

    /// Explicit budgets, or budgets derived from profiled `cases`.
    pub fn shaping_for(&self, cases: &[ExecutionCase]) -> Result<ShapingConfig> {
        match &self.shaping {
            Some(s) => Ok(s.clone()),
            None => ShapingConfig::from_cases(
                cases,
                self.band_thresholds.band_count(),
                self.budget_percentile,
                self.warmup(),
                1.0,
            ),
        }
    }

    /// Explicit budgets, or fixed fallbacks for when no case base is at hand.
    pub fn shaping_or_fallback(&self) -> Result<ShapingConfig> {
        match &self.shaping {
            Some(s) => Ok(s.clone()),
            None => fallback_shaping(self.band_thresholds.band_count(), self.warmup()),
        }
    }
}

/// Budgets doubling per band, starting at 128 target / 256 max tokens.
pub fn fallback_shaping(bands: usize, t_warmup: u64) -> Result<ShapingConfig> {
    let budgets = (0..bands)
        .map(|d| {
            let target = 128.0 * 2f64.powi(d as i32);
            BandBudget {
                l_max: 2.0 * target,
                l_target: target,
            }
        })
        .collect();
    ShapingConfig::new(budgets, t_warmup, 1.0)
}
