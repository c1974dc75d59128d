//! Bus-only feature vectors for ADI-flagged steps and labeled datasets built
//! from them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{run_detection_pipeline, DetectionConfig, DetectionReport, StepRecord, Verdict};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::grid::{MeasurementKind, MeasurementPlan, NetworkTopology, StateLayout};
use crate::sim::{AnomalyKind, Scenario, ScenarioTrace};

pub const FEATURES_PER_BUS: usize = 16;
pub const SLACK_FEATURES: usize = 6;
pub const DATASET_FORMAT_VERSION: u32 = 1;

const NODAL: [(MeasurementKind, &str); 3] = [
    (MeasurementKind::V, "V"),
    (MeasurementKind::Pinj, "Pinj"),
    (MeasurementKind::Qinj, "Qinj"),
];

/// 16 per non-slack bus plus 6 at the slack bus.
pub fn feature_count(n_bus: usize) -> usize {
    FEATURES_PER_BUS * n_bus - (FEATURES_PER_BUS - SLACK_FEATURES)
}

/// Bus-major feature names; a function of the bus count and slack position only.
pub fn feature_names(n_bus: usize, slack: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(feature_count(n_bus));
    for k in 0..n_bus {
        let id = k + 1;
        for (_, q) in NODAL {
            names.push(format!("bus{id}.z_{q}"));
        }
        for (_, q) in NODAL {
            names.push(format!("bus{id}.nu_{q}"));
        }
        if k == slack {
            continue;
        }
        for prefix in ["est", "pred"] {
            for q in ["V", "theta", "Pinj", "Qinj"] {
                names.push(format!("bus{id}.{prefix}_{q}"));
            }
        }
        names.push(format!("bus{id}.adi_V"));
        names.push(format!("bus{id}.adi_theta"));
    }
    names
}

/// Feature vector of one detection step, ordered as [`feature_names`].
pub fn extract_bus_features(record: &StepRecord, plan: &MeasurementPlan, topology: &NetworkTopology) -> Result<Vec<f64>> {
    let n_bus = topology.bus_count();
    let slack = topology.slack_index();
    let layout = StateLayout::new(n_bus, slack);
    if record.adi.len() != layout.dim() || record.observed.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            actual: record.adi.len(),
        });
    }
    let mut out = Vec::with_capacity(feature_count(n_bus));
    for k in 0..n_bus {
        let rows = NODAL
            .iter()
            .map(|&(kind, name)| {
                plan.nodal_index(kind, k + 1)
                    .ok_or_else(|| Error::Dataset(format!("plan has no {name} meter at bus {}", k + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(rows.iter().map(|&r| record.observed[r]));
        out.extend(rows.iter().map(|&r| record.normalized_innovations[r]));
        if k == slack {
            continue;
        }
        let (p, q) = (rows[1], rows[2]);
        let est = &record.wls_estimate;
        out.extend([est.v(k), est.theta(k), record.wls_fitted[p], record.wls_fitted[q]]);
        let pred = &record.prediction;
        out.extend([
            pred.v(k),
            pred.theta(k),
            record.predicted_measurements[p],
            record.predicted_measurements[q],
        ]);
        out.push(record.adi[layout.mag_col(k)]);
        out.push(record.adi[layout.angle_col(k).expect("non-slack bus has an angle")]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// SLC versus FDIA.
    Classify,
    /// Which buses shed load.
    IdentifySlc,
    /// Which states were attacked.
    IdentifyFdia,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::IdentifySlc => "identify-slc",
            Task::IdentifyFdia => "identify-fdia",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Task::Classify, Task::IdentifySlc, Task::IdentifyFdia]
            .into_iter()
            .find(|t| t.as_str() == s)
    }

    /// Names of the label space for a network of `n_bus` buses.
    pub fn targets(self, n_bus: usize, slack: usize) -> Vec<String> {
        match self {
            Task::Classify => vec!["slc".into(), "fdia".into()],
            Task::IdentifySlc => (1..=n_bus).map(|b| format!("bus{b}")).collect(),
            Task::IdentifyFdia => {
                let layout = StateLayout::new(n_bus, slack);
                (0..layout.dim()).map(|c| layout.state_ref(c).to_string()).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Indices into `Dataset::targets`; one entry except for multi-origin tasks.
    pub labels: Vec<usize>,
    pub topology_id: usize,
    /// Trace seed and step, for traceability.
    pub trace_seed: u64,
    pub t: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub traces: usize,
    pub flagged_steps: usize,
    /// Flagged steps with no (or a mismatched) anomaly active; not sampled.
    pub skipped_steps: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub topology_counts: BTreeMap<usize, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub feature_names: Vec<String>,
    pub targets: Vec<String>,
    pub samples: Vec<Sample>,
    /// Empty until a split is assigned.
    pub split: Vec<Split>,
    pub metadata: DatasetMetadata,
}

/// Samples of one trace: every step with the anomaly verdict whose active
/// anomaly matches the task. Returns the samples and the skipped count.
pub fn trace_samples(trace: &ScenarioTrace, report: &DetectionReport, task: Task) -> Result<(Vec<Sample>, usize)> {
    let slack = trace.topology.slack_index();
    let names = task.targets(trace.topology.bus_count(), slack);
    let mut samples = Vec::new();
    let mut skipped = 0;
    for record in report.steps.iter().filter(|r| r.verdict == Verdict::Anomaly) {
        let active = &trace.steps[record.t].active;
        let kinds: BTreeSet<AnomalyKind> = active.iter().map(|&i| trace.anomalies[i].kind()).collect();
        let kind = match (kinds.len(), kinds.first()) {
            (1, Some(&k)) if k != AnomalyKind::BadData => k,
            _ => {
                skipped += 1;
                continue;
            }
        };
        let labels = match task {
            Task::Classify => vec![usize::from(kind == AnomalyKind::Fdia)],
            Task::IdentifySlc | Task::IdentifyFdia => {
                let wanted = if task == Task::IdentifySlc { AnomalyKind::Slc } else { AnomalyKind::Fdia };
                if kind != wanted {
                    skipped += 1;
                    continue;
                }
                let mut labels = BTreeSet::new();
                for &i in active {
                    for target in trace.anomalies[i].target_names() {
                        let j = names
                            .iter()
                            .position(|n| *n == target)
                            .ok_or_else(|| Error::Dataset(format!("unknown target {target}")))?;
                        labels.insert(j);
                    }
                }
                labels.into_iter().collect()
            }
        };
        samples.push(Sample {
            features: extract_bus_features(record, &trace.plan, &trace.topology)?,
            labels,
            topology_id: trace.topology_id,
            trace_seed: trace.seed,
            t: record.t,
        });
    }
    Ok((samples, skipped))
}

/// Builds a dataset from traces and their detection reports.
pub fn assemble_dataset(traces: &[(ScenarioTrace, DetectionReport)], task: Task) -> Result<Dataset> {
    let parts = traces
        .iter()
        .map(|(trace, report)| {
            let flagged = report.steps.iter().filter(|r| r.verdict == Verdict::Anomaly).count();
            trace_samples(trace, report, task).map(|(s, k)| (s, k, flagged, &trace.topology))
        })
        .collect::<Result<Vec<_>>>()?;
    let topology = parts
        .first()
        .map(|p| p.3)
        .ok_or_else(|| Error::Dataset("no traces".into()))?;
    let (n_bus, slack) = (topology.bus_count(), topology.slack_index());
    let mut data = Dataset::empty(task, n_bus, slack);
    for (samples, skipped, flagged, _) in parts {
        data.metadata.traces += 1;
        data.metadata.flagged_steps += flagged;
        data.metadata.skipped_steps += skipped;
        data.samples.extend(samples);
    }
    data.finish()
}

/// Generates, detects and extracts in parallel, keeping only the samples.
pub fn build_dataset(scenarios: &[Scenario], config: &DetectionConfig, task: Task) -> Result<Dataset> {
    let first = scenarios.first().ok_or_else(|| Error::Dataset("no scenarios".into()))?;
    let (n_bus, slack) = (first.topology.bus_count(), first.topology.slack_index());
    let parts = scenarios
        .par_iter()
        .map(|s| {
            let trace = s.generate()?;
            let report = run_detection_pipeline(&trace, config)?;
            let flagged = report.steps.iter().filter(|r| r.verdict == Verdict::Anomaly).count();
            let (samples, skipped) = trace_samples(&trace, &report, task)?;
            Ok((samples, skipped, flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Dataset::empty(task, n_bus, slack);
    for (samples, skipped, flagged) in parts {
        data.metadata.traces += 1;
        data.metadata.flagged_steps += flagged;
        data.metadata.skipped_steps += skipped;
        data.samples.extend(samples);
    }
    data.finish()
}

impl Dataset {
    fn empty(task: Task, n_bus: usize, slack: usize) -> Self {
        Self {
            task,
            feature_names: feature_names(n_bus, slack),
            targets: task.targets(n_bus, slack),
            samples: Vec::new(),
            split: Vec::new(),
            metadata: DatasetMetadata::default(),
        }
    }

    fn finish(mut self) -> Result<Self> {
        if self.samples.is_empty() {
            return Err(Error::Dataset("no ADI-flagged anomaly steps".into()));
        }
        self.recount();
        Ok(self)
    }

    fn recount(&mut self) {
        self.metadata.class_counts.clear();
        self.metadata.topology_counts.clear();
        for s in &self.samples {
            for &l in &s.labels {
                *self.metadata.class_counts.entry(self.targets[l].clone()).or_default() += 1;
            }
            *self.metadata.topology_counts.entry(s.topology_id).or_default() += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_multi_label(&self) -> bool {
        self.samples.iter().any(|s| s.labels.len() != 1)
    }

    /// Single-label class per sample; fails on multi-origin data.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        self.samples
            .iter()
            .map(|s| match s.labels.as_slice() {
                [l] => Ok(*l),
                _ => Err(Error::Dataset("multi-origin sample has no single class".into())),
            })
            .collect()
    }

    /// 0/1 indicator of target `j` per sample.
    pub fn indicator(&self, j: usize) -> Vec<usize> {
        self.samples.iter().map(|s| usize::from(s.labels.contains(&j))).collect()
    }

    /// Stratification key: the sorted label set.
    fn strata(&self) -> BTreeMap<Vec<usize>, Vec<usize>> {
        let mut strata: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            strata.entry(s.labels.clone()).or_default().push(i);
        }
        strata
    }

    /// Drops samples whose label set occurs fewer than `min` times.
    pub fn drop_rare(mut self, min: usize) -> Result<Self> {
        let strata = self.strata();
        let keep: BTreeSet<usize> = strata.values().filter(|v| v.len() >= min).flatten().copied().collect();
        self.samples = self
            .samples
            .into_iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(i))
            .map(|(_, s)| s)
            .collect();
        self.split.clear();
        self.finish()
    }

    /// Downsamples every label set to the size of the smallest one.
    pub fn balance(mut self, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strata = self.strata();
        let n = strata.values().map(Vec::len).min().unwrap_or(0);
        let mut keep = Vec::new();
        for mut idx in strata.into_values() {
            idx.shuffle(&mut rng);
            keep.extend_from_slice(&idx[..n]);
        }
        keep.sort_unstable();
        let mut samples: Vec<Option<Sample>> = self.samples.into_iter().map(Some).collect();
        self.samples = keep.into_iter().map(|i| samples[i].take().expect("index kept once")).collect();
        self.split.clear();
        self.finish()
    }

    /// Per label set, round(fraction·count) samples go to train.
    pub fn stratified_split(mut self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Dataset(format!("train fraction {fraction} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = vec![Split::Test; self.samples.len()];
        for (key, mut idx) in self.strata() {
            if idx.len() < 2 {
                let names: Vec<_> = key.iter().map(|&l| self.targets[l].as_str()).collect();
                return Err(Error::Dataset(format!(
                    "class {} has a single sample; cannot stratify",
                    names.join("+")
                )));
            }
            idx.shuffle(&mut rng);
            let n_train = (fraction * idx.len() as f64).round() as usize;
            for &i in &idx[..n_train] {
                split[i] = Split::Train;
            }
        }
        self.split = split;
        self.metadata.split_seed = Some(seed);
        Ok(self)
    }

    /// Train on the listed topologies, test on every other one.
    pub fn topology_split(mut self, train_topologies: &[usize]) -> Result<Self> {
        self.split = self
            .samples
            .iter()
            .map(|s| if train_topologies.contains(&s.topology_id) { Split::Train } else { Split::Test })
            .collect();
        if !self.split.contains(&Split::Train) || !self.split.contains(&Split::Test) {
            return Err(Error::Dataset("topology split leaves one side empty".into()));
        }
        self.metadata.split_seed = None;
        Ok(self)
    }

    /// Indices of samples on one side of the split.
    pub fn indices(&self, side: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.split.get(i) == Some(&side)).collect()
    }

    /// Row-major feature matrix of the given samples.
    pub fn features_of(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter().map(|&i| self.samples[i].features.clone()).collect()
    }

    pub fn concat(mut self, other: Dataset) -> Result<Self> {
        if self.task != other.task || self.feature_names != other.feature_names {
            return Err(Error::Dataset("datasets differ in task or schema".into()));
        }
        self.samples.extend(other.samples);
        self.metadata.traces += other.metadata.traces;
        self.metadata.flagged_steps += other.metadata.flagged_steps;
        self.metadata.skipped_steps += other.metadata.skipped_steps;
        self.split.clear();
        self.finish()
    }

    /// Writes `<path>` (CSV with feature columns `f_0..`) and `<path>.json`
    /// (schema, feature index map and metadata).
    pub fn write(&self, path: &Path, config_hash: &str, seed: u64) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "# config_hash={config_hash} seed={seed}")?;
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["topology_id".to_string(), "trace_seed".into(), "t".into(), "labels".into(), "split".into()];
        header.extend((0..self.feature_count()).map(|j| format!("f_{j}")));
        w.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let labels: Vec<&str> = s.labels.iter().map(|&l| self.targets[l].as_str()).collect();
            let split = match self.split.get(i) {
                Some(Split::Train) => "train",
                Some(Split::Test) => "test",
                None => "",
            };
            let mut row = vec![
                s.topology_id.to_string(),
                s.trace_seed.to_string(),
                s.t.to_string(),
                labels.join(";"),
                split.to_string(),
            ];
            row.extend(s.features.iter().map(|&v| fmt_num(v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        drop(w);
        std::fs::write(path, out)?;
        let schema = DatasetSchema {
            format_version: DATASET_FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            seed,
            task: self.task,
            feature_names: self.feature_names.clone(),
            targets: self.targets.clone(),
            metadata: self.metadata.clone(),
        };
        std::fs::write(schema_path(path), serde_json::to_string_pretty(&schema)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<(Self, DatasetSchema)> {
        let schema: DatasetSchema = serde_json::from_str(&std::fs::read_to_string(schema_path(path))?)?;
        if schema.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported dataset format {}", schema.format_version)));
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let n_feat = schema.feature_names.len();
        if r.headers()?.len() != 5 + n_feat {
            return Err(Error::DimensionMismatch {
                expected: 5 + n_feat,
                actual: r.headers()?.len(),
            });
        }
        let mut samples = Vec::new();
        let mut split = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse(format!("{}: row {}: bad {what}", path.display(), line + 2));
            let labels = if rec[3].is_empty() {
                Vec::new()
            } else {
                rec[3]
                    .split(';')
                    .map(|n| schema.targets.iter().position(|t| t == n).ok_or_else(|| bad("label")))
                    .collect::<Result<Vec<_>>>()?
            };
            match &rec[4] {
                "train" => split.push(Split::Train),
                "test" => split.push(Split::Test),
                "" => {}
                _ => return Err(bad("split")),
            }
            samples.push(Sample {
                topology_id: rec[0].parse().map_err(|_| bad("topology id"))?,
                trace_seed: rec[1].parse().map_err(|_| bad("seed"))?,
                t: rec[2].parse().map_err(|_| bad("step"))?,
                labels,
                features: (5..5 + n_feat)
                    .map(|j| rec[j].parse().map_err(|_| bad("feature")))
                    .collect::<Result<Vec<f64>>>()?,
            });
        }
        if !split.is_empty() && split.len() != samples.len() {
            return Err(Error::Parse("split column partially filled".into()));
        }
        let data = Dataset {
            task: schema.task,
            feature_names: schema.feature_names.clone(),
            targets: schema.targets.clone(),
            samples,
            split,
            metadata: schema.metadata.clone(),
        };
        Ok((data, schema))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub targets: Vec<String>,
    pub metadata: DatasetMetadata,
}

fn schema_path(csv: &Path) -> std::path::PathBuf {
    let mut p = csv.as_os_str().to_owned();
    p.push(".json");
    p.into()
}
