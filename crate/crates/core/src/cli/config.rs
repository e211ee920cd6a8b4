use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::SamplerConfig;
use crate::mixture::{Component, MixtureDensity};
use crate::model::{OutcomeKernel, Scoring};

pub const SEED_ENV: &str = "BTDP_SEED";
pub const OUT_ENV: &str = "BTDP_OUT";

/// One run, read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_n_observations")]
    pub n_observations: usize,
    pub kernel: OutcomeKernel,
    /// Ground-truth strength law for `simulate`; reference for alignment in `estimate`.
    #[serde(default)]
    pub truth: Option<MixtureDensity>,
    #[serde(default = "default_true")]
    pub write_strengths: bool,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub championship: ChampionshipConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

fn default_n_observations() -> usize {
    3000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub n_nodes: usize,
    /// Half-width of the node range in posterior standard deviations.
    pub width: f64,
    pub lower_quantile: f64,
    pub upper_quantile: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig { n_nodes: 801, width: 8.0, lower_quantile: 0.1, upper_quantile: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChampionshipConfig {
    pub n_teams: usize,
    pub n_replicates: usize,
    pub scoring: Scoring,
}

impl Default for ChampionshipConfig {
    fn default() -> Self {
        ChampionshipConfig { n_teams: 20, n_replicates: 1000, scoring: Scoring::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Random grid models per bound.
    pub instances: usize,
    pub grid_nodes: usize,
    /// Strength range of the random grids.
    pub strength_range: f64,
    /// Longest forgetting horizon and largest truncation index.
    pub horizon: usize,
    pub chain_states: usize,
    pub chain_nu: f64,
    pub chain_length: usize,
    pub tail_replicates: usize,
    pub t_points: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            instances: 200,
            grid_nodes: 6,
            strength_range: 2.0,
            horizon: 30,
            chain_states: 2,
            chain_nu: 0.5,
            chain_length: 100,
            tail_replicates: 20_000,
            t_points: 20,
        }
    }
}

impl RunConfig {
    /// A complete configuration with the documented defaults.
    pub fn example() -> Self {
        RunConfig {
            seed: 20_240_601,
            output_dir: None,
            n_observations: default_n_observations(),
            kernel: OutcomeKernel::HomeTies { alpha: 1.3, theta: 1.5 },
            truth: Some(
                MixtureDensity::new(vec![
                    Component { weight: 0.6, mean: -0.8, variance: 0.16 },
                    Component { weight: 0.4, mean: 1.0, variance: 0.36 },
                ])
                .expect("valid example mixture"),
            ),
            write_strengths: true,
            sampler: SamplerConfig { n_sweeps: 6500, burn_in: 5000, ..SamplerConfig::default() },
            estimate: EstimateConfig::default(),
            championship: ChampionshipConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.kernel.validate().map_err(cfg)?;
        self.sampler.validate()?;
        if self.n_observations == 0 {
            return Err(Error::Config("n_observations must be positive".into()));
        }
        let e = &self.estimate;
        if e.n_nodes < 2 || !(e.width > 0.0) {
            return Err(Error::Config("estimate needs at least 2 nodes and a positive width".into()));
        }
        if !(0.0 <= e.lower_quantile && e.lower_quantile <= e.upper_quantile && e.upper_quantile <= 1.0) {
            return Err(Error::Config("estimate quantiles must satisfy 0 <= lower <= upper <= 1".into()));
        }
        let c = &self.championship;
        if c.n_teams < 2 || c.n_replicates == 0 {
            return Err(Error::Config("championship needs at least 2 teams and 1 replicate".into()));
        }
        let d = &self.diagnose;
        if d.grid_nodes < 2 || d.horizon == 0 || d.chain_states < 2 || d.chain_length == 0 || d.t_points == 0 {
            return Err(Error::Config("diagnose sizes must be positive (grids and chains need 2 states)".into()));
        }
        if !(d.chain_nu > 0.0 && d.chain_nu <= 1.0) || !(d.strength_range > 0.0) {
            return Err(Error::Config("diagnose chain_nu must lie in (0, 1] and strength_range be positive".into()));
        }
        if d.tail_replicates < 1000 {
            return Err(Error::Config("diagnose tail_replicates must be at least 1000".into()));
        }
        Ok(())
    }
}

/// Seed and output directory after applying overrides:
/// config value, then environment, then command-line flag.
pub fn resolve_seed(config: &RunConfig, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(config.seed),
    }
}

pub fn resolve_out(config: &RunConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os(OUT_ENV) {
        return PathBuf::from(v);
    }
    config.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips() {
        let cfg = RunConfig::example();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 3, "kernel": {"type": "bradley_terry"}}"#).unwrap();
        assert_eq!(cfg.n_observations, 3000);
        assert_eq!(cfg.sampler.n_particles, 100);
        assert_eq!(cfg.championship.n_teams, 20);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"kernel": {"type": "bradley_terry"}}"#,
            r#"{"seed": 1, "kernel": {"type": "home_ties", "alpha": 1.0, "theta": 0.5}}"#,
            r#"{"seed": 1, "kernel": {"type": "bradley_terry"}, "sampler": {"n_sweeps": 10, "burn_in": 10}}"#,
            r#"{"seed": 1, "kernel": {"type": "bradley_terry"}, "bogus": 1}"#,
            r#"{"seed": 1, "kernel": {"type": "bradley_terry"}, "truth": {"components": [{"weight": 0.5, "mean": 0, "variance": 1}]}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }
}
