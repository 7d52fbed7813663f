//! Versioned JSON run configurations.
//!
//! Every file must carry `"version": 1`; any other key that the subcommand
//! does not know is an error. A run manifest is also accepted in place of a
//! config, in which case its `config` member is used.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ssc_core::bench::BenchConfig;
use ssc_core::lowrank::RankPolicy;
use ssc_core::simgen::{DgpConfig, Model};
use ssc_core::ssc::{BootstrapConfig, EstimateOptions};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

mod rank_policy {
    use serde::{Deserialize, Deserializer, Serializer};
    use ssc_core::lowrank::RankPolicy;

    pub fn serialize<S: Serializer>(policy: &RankPolicy, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(policy)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RankPolicy, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse(&text, command).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str, command: &str) -> Result<T, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    if let Some(recorded) = value.get("command") {
        if recorded != command {
            return Err(format!("manifest was written by `{recorded}`, not `{command}`"));
        }
        value = value.get("config").cloned().ok_or("manifest has no `config` member")?;
    }
    match value.get("version") {
        None => return Err("missing `version` field".into()),
        Some(v) if v.as_u64() != Some(u64::from(CONFIG_VERSION)) => {
            return Err(format!("unsupported config version {v} (expected {CONFIG_VERSION})"));
        }
        Some(_) => {}
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub version: u32,
    pub model: Model,
    pub n_units: usize,
    pub rank: usize,
    pub k: usize,
    pub lambda: f64,
    pub target_censoring: f64,
    pub seed: u64,
    /// Points of the grid the truth CSV is written on.
    pub grid_points: usize,
    pub horizon_quantile: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let dgp = DgpConfig::new(Model::Cox, 100, 0);
        Self {
            version: CONFIG_VERSION,
            model: dgp.model,
            n_units: dgp.n_units,
            rank: dgp.rank,
            k: dgp.k,
            lambda: dgp.lambda,
            target_censoring: dgp.target_censoring,
            seed: dgp.seed,
            grid_points: 100,
            horizon_quantile: 0.9,
        }
    }
}

impl SimulateConfig {
    pub fn dgp(&self) -> DgpConfig {
        DgpConfig {
            model: self.model,
            n_units: self.n_units,
            rank: self.rank,
            k: self.k,
            lambda: self.lambda,
            target_censoring: self.target_censoring,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub version: u32,
    pub input: Option<PathBuf>,
    pub target_unit: Option<String>,
    #[serde(with = "rank_policy")]
    pub rank: RankPolicy,
    /// Number of grid points.
    pub t0: usize,
    /// Pooled-time quantile giving the grid horizon.
    pub quantile: f64,
    pub clip: bool,
    pub isotonic: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let opts = EstimateOptions::default();
        Self {
            version: CONFIG_VERSION,
            input: None,
            target_unit: None,
            rank: opts.rank_policy,
            t0: 100,
            quantile: 0.9,
            clip: opts.clip,
            isotonic: opts.isotonic,
        }
    }
}

impl EstimateConfig {
    pub fn options(&self) -> EstimateOptions {
        EstimateOptions {
            rank_policy: self.rank,
            clip: self.clip,
            isotonic: self.isotonic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapRunConfig {
    pub version: u32,
    pub input: Option<PathBuf>,
    pub target_unit: Option<String>,
    #[serde(with = "rank_policy")]
    pub rank: RankPolicy,
    pub t0: usize,
    pub quantile: f64,
    pub clip: bool,
    pub isotonic: bool,
    pub b: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapRunConfig {
    fn default() -> Self {
        let e = EstimateConfig::default();
        let b = BootstrapConfig::default();
        Self {
            version: CONFIG_VERSION,
            input: e.input,
            target_unit: e.target_unit,
            rank: e.rank,
            t0: e.t0,
            quantile: e.quantile,
            clip: e.clip,
            isotonic: e.isotonic,
            b: b.replicates,
            level: b.level,
            seed: b.seed,
        }
    }
}

impl BootstrapRunConfig {
    pub fn estimate(&self) -> EstimateConfig {
        EstimateConfig {
            version: self.version,
            input: self.input.clone(),
            target_unit: self.target_unit.clone(),
            rank: self.rank,
            t0: self.t0,
            quantile: self.quantile,
            clip: self.clip,
            isotonic: self.isotonic,
        }
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.b,
            level: self.level,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxConfig {
    pub version: u32,
    pub input: Option<PathBuf>,
    pub target_unit: Option<String>,
    pub marginal: bool,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            input: None,
            target_unit: None,
            marginal: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmConfig {
    pub version: u32,
    pub input: Option<PathBuf>,
    /// Restrict to one unit; every unit when absent.
    pub unit: Option<String>,
    /// Restrict to one period code (0 or 1).
    pub period: Option<u8>,
}

impl Default for KmConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            input: None,
            unit: None,
            period: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchRunConfig {
    pub version: u32,
    pub models: Vec<Model>,
    pub ks: Vec<usize>,
    /// Seeds `1..=replications` unless `seeds` is given.
    pub replications: usize,
    pub seeds: Option<Vec<u64>>,
    pub n_units: usize,
    pub rank: usize,
    pub lambda: f64,
    pub target_censoring: f64,
    pub grid_points: usize,
    pub horizon_quantile: f64,
    #[serde(with = "rank_policy")]
    pub rank_policy: RankPolicy,
    pub clip: bool,
    pub isotonic: bool,
}

impl Default for BenchRunConfig {
    fn default() -> Self {
        let b = BenchConfig::default();
        Self {
            version: CONFIG_VERSION,
            models: b.models,
            ks: b.ks,
            replications: b.seeds.len(),
            seeds: None,
            n_units: b.n_units,
            rank: b.rank,
            lambda: b.lambda,
            target_censoring: b.target_censoring,
            grid_points: b.grid_points,
            horizon_quantile: b.horizon_quantile,
            rank_policy: b.options.rank_policy,
            clip: b.options.clip,
            isotonic: b.options.isotonic,
        }
    }
}

impl BenchRunConfig {
    pub fn seeds(&self) -> CliResult<Vec<u64>> {
        match &self.seeds {
            Some(list) if list.len() != self.replications => Err(CliError::Usage(format!(
                "`seeds` lists {} values but `replications` is {}",
                list.len(),
                self.replications
            ))),
            Some(list) => Ok(list.clone()),
            None => Ok((1..=self.replications as u64).collect()),
        }
    }

    pub fn bench(&self) -> CliResult<BenchConfig> {
        if self.models.is_empty() || self.ks.is_empty() || self.replications == 0 {
            return Err(CliError::Usage("bench needs at least one model, one K and one replication".into()));
        }
        Ok(BenchConfig {
            models: self.models.clone(),
            ks: self.ks.clone(),
            seeds: self.seeds()?,
            n_units: self.n_units,
            rank: self.rank,
            lambda: self.lambda,
            target_censoring: self.target_censoring,
            grid_points: self.grid_points,
            horizon_quantile: self.horizon_quantile,
            options: EstimateOptions {
                rank_policy: self.rank_policy,
                clip: self.clip,
                isotonic: self.isotonic,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_required() {
        let err = parse::<EstimateConfig>("{}", "estimate").unwrap_err();
        assert!(err.contains("version"), "{err}");
        assert!(parse::<EstimateConfig>(r#"{"version": 2}"#, "estimate").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse::<EstimateConfig>(r#"{"version": 1, "rnak": "gap"}"#, "estimate").unwrap_err();
        assert!(err.contains("rnak"), "{err}");
    }

    #[test]
    fn rank_policy_round_trips() {
        let cfg: EstimateConfig = parse(r#"{"version": 1, "rank": "fixed:3"}"#, "estimate").unwrap();
        assert_eq!(cfg.rank, RankPolicy::Fixed(3));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse::<EstimateConfig>(&text, "estimate").unwrap(), cfg);
        assert!(parse::<EstimateConfig>(r#"{"version": 1, "rank": "elbow"}"#, "estimate").is_err());
    }

    #[test]
    fn manifests_are_accepted_for_their_own_command() {
        let manifest = r#"{"command": "km", "config": {"version": 1, "unit": "3"}}"#;
        let cfg: KmConfig = parse(manifest, "km").unwrap();
        assert_eq!(cfg.unit.as_deref(), Some("3"));
        assert!(parse::<CoxConfig>(manifest, "cox").is_err());
    }

    #[test]
    fn bench_seed_list_must_match_replications() {
        let cfg = BenchRunConfig {
            replications: 3,
            seeds: Some(vec![4, 5]),
            ..Default::default()
        };
        assert!(cfg.seeds().is_err());
        let cfg = BenchRunConfig { replications: 2, ..cfg };
        assert_eq!(cfg.seeds().unwrap(), vec![4, 5]);
    }
}
