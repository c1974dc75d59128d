use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gridad::dataset::Task;
use gridad::detection::DetectionConfig;
use gridad::grid::{standard_topology, MeasurementPlan, NetworkTopology, StateRef, DEFAULT_SIGMA};
use gridad::sim::catalog::{CatalogConfig, CatalogKind};
use gridad::sim::{AnomalySpec, LoadProfile, ProfileConfig, Scenario};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Invalid invocation or configuration; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses a JSON config; errors name the offending field path.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        usage(format!("{}: invalid config at '{field}': {}", path.display(), e.inner()))
    })
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let digest = Sha256::digest(value.to_string().as_bytes());
    hex::encode(digest)[..16].to_string()
}

/// A config may carry its own seed, but it must agree with `--seed`.
pub fn reconcile_seed(config_seed: Option<u64>, flag: u64) -> Result<u64> {
    match config_seed {
        Some(s) if s != flag => Err(usage(format!("config seed {s} differs from --seed {flag}"))),
        _ => Ok(flag),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    Standard(usize),
    File(PathBuf),
}

impl Default for TopologySource {
    fn default() -> Self {
        TopologySource::Standard(0)
    }
}

impl TopologySource {
    /// Relative file paths resolve against `base` (the config's directory).
    pub fn resolve(&self, base: &Path) -> Result<NetworkTopology> {
        match self {
            TopologySource::Standard(id) => Ok(standard_topology(*id)?),
            TopologySource::File(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                Ok(NetworkTopology::from_json(&text)?)
            }
        }
    }

    pub fn id(&self) -> usize {
        match self {
            TopologySource::Standard(id) => *id,
            TopologySource::File(_) => 0,
        }
    }
}

/// One explicitly scheduled scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub topology: TopologySource,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub allow_concurrent: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn build(&self, base: &Path, seed: u64) -> Result<Scenario> {
        let topology = self.topology.resolve(base)?;
        let profile = LoadProfile::from_config(&self.profile, topology.bus_count())?;
        let mut scenario = Scenario::new(self.topology.id(), topology, profile, self.anomalies.clone(), seed);
        scenario.plan = MeasurementPlan::full(&scenario.topology, self.sigma.unwrap_or(DEFAULT_SIGMA));
        scenario.allow_concurrent = self.allow_concurrent;
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlcGrid {
    pub buses: Vec<usize>,
    pub fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdiaGrid {
    pub states: Vec<StateRef>,
    pub offsets: Vec<f64>,
}

/// Batch of scenarios over buses × shed fractions × topologies and
/// states × offsets × topologies. With neither grid, one normal-operation
/// trace per topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub topologies: Vec<usize>,
    pub profile: ProfileConfig,
    pub onset: usize,
    pub slc: Option<SlcGrid>,
    pub fdia: Option<FdiaGrid>,
    pub seed: Option<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            topologies: vec![0, 1, 2, 3, 4],
            profile: ProfileConfig::default(),
            onset: 20,
            slc: None,
            fdia: None,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitConfig {
    Stratified { train_fraction: f64 },
    TopologyHoldout { train_topologies: Vec<usize> },
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig::Stratified { train_fraction: 0.8 }
    }
}

/// Dataset construction: traces come from catalogs (generated here) and/or
/// trace files written by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub task: Task,
    pub catalogs: Vec<CatalogConfig>,
    pub traces: Vec<PathBuf>,
    pub detection: DetectionConfig,
    /// Downsample every class to the rarest class's count.
    pub balance: bool,
    /// Classes with fewer samples are dropped before splitting.
    pub min_class_count: usize,
    pub split: SplitConfig,
    pub seed: Option<u64>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            task: Task::Classify,
            catalogs: Vec::new(),
            traces: Vec::new(),
            detection: DetectionConfig::default(),
            balance: false,
            min_class_count: 2,
            split: SplitConfig::default(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub clean_traces: usize,
    pub clean_steps: usize,
    pub topologies: Vec<usize>,
    pub anomalous: Vec<CatalogConfig>,
    pub gammas: Vec<f64>,
    pub detection: DetectionConfig,
    pub seed: Option<u64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let catalog = |kind| CatalogConfig {
            kind,
            count: 40,
            ..CatalogConfig::default()
        };
        Self {
            clean_traces: 40,
            clean_steps: 30,
            topologies: vec![0, 1, 2, 3, 4],
            anomalous: vec![catalog(CatalogKind::SingleSlc), catalog(CatalogKind::SingleFdia)],
            gammas: (0..=14).map(|i| 3.0 + 0.5 * i as f64).collect(),
            detection: DetectionConfig::default(),
            seed: None,
        }
    }
}

/// Catalog seeds are derived from the master seed; a catalog entry that sets
/// its own seed would silently disagree, so it is rejected.
pub fn reject_catalog_seeds(path: &Path, key: &str) -> Result<()> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if let Some(list) = value.get(key).and_then(|v| v.as_array()) {
        if let Some(i) = list.iter().position(|c| c.get("seed").is_some()) {
            return Err(usage(format!(
                "{}: {key}[{i}].seed is derived from --seed and must not be set",
                path.display()
            )));
        }
    }
    Ok(())
}
