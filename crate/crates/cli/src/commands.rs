use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use gridad::dataset::{assemble_dataset, build_dataset, Dataset, DatasetSchema, Split, Task};
use gridad::detection::{run_detection_pipeline, DetectionConfig, DetectionReport, Verdict};
use gridad::fmt_num;
use gridad::grid::standard_topology;
use gridad::sim::catalog::{fdia_grid, generate_all, slc_grid, CatalogConfig, CatalogKind};
use gridad::sim::{derive_seed, read_trace, write_trace, LoadProfile, Scenario, ScenarioTrace, TraceSidecar};
use gridad_ml::metrics::{ClassScores, ConfusionCounts};
use gridad_ml::mrmr::mrmr_select;
use gridad_ml::tuning::{tune_hyperparameters, TuneResult};
use gridad_ml::{FeatureMatrix, Labels, ModelKind, ModelParams, TrainedModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{
    config_hash, load_config, reconcile_seed, reject_catalog_seeds, usage, BuildConfig, CalibrationConfig,
    GridConfig, ScenarioConfig, SplitConfig,
};

// Stream indices for seeds derived from a command's master seed.
const BALANCE_STREAM: u64 = u64::MAX;
const SPLIT_STREAM: u64 = u64::MAX - 1;

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned())
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn raw_seed(path: &Path) -> Result<Option<u64>> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    match value.get("seed") {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| usage(format!("{}: seed must be a non-negative integer", path.display()))),
    }
}

pub enum SimulateSource<'a> {
    Scenario(&'a Path),
    Grid(&'a Path),
    Catalog(&'a Path),
}

pub fn simulate(source: SimulateSource<'_>, seed: u64, out: &Path) -> Result<()> {
    let (scenarios, names, hash) = match source {
        SimulateSource::Scenario(path) => {
            let mut cfg: ScenarioConfig = load_config(path)?;
            let seed = reconcile_seed(cfg.seed, seed)?;
            cfg.seed = Some(seed);
            let scenario = cfg.build(parent_dir(path), seed)?;
            let hash = config_hash(&json!({"command": "simulate", "scenario": cfg}));
            (vec![scenario], vec![stem(path)], hash)
        }
        SimulateSource::Grid(path) => {
            let mut cfg: GridConfig = load_config(path)?;
            let seed = reconcile_seed(cfg.seed, seed)?;
            cfg.seed = Some(seed);
            let scenarios = grid_scenarios(&cfg, seed)?;
            let names = (0..scenarios.len()).map(|i| format!("trace_{i:05}")).collect();
            (scenarios, names, config_hash(&json!({"command": "simulate", "grid": cfg})))
        }
        SimulateSource::Catalog(path) => {
            let mut cfg: CatalogConfig = load_config(path)?;
            cfg.seed = reconcile_seed(raw_seed(path)?, seed)?;
            cfg.validate()?;
            let scenarios = cfg.scenarios()?;
            let names = (0..scenarios.len()).map(|i| format!("trace_{i:05}")).collect();
            (scenarios, names, config_hash(&json!({"command": "simulate", "catalog": cfg})))
        }
    };
    let traces = generate_all(&scenarios)?;
    fs::create_dir_all(out)?;
    traces
        .par_iter()
        .zip(names.par_iter())
        .try_for_each(|(trace, name)| write_trace(trace, &out.join(format!("{name}.csv")), &hash))?;
    println!("wrote {} trace(s) to {} (config_hash={hash})", traces.len(), out.display());
    Ok(())
}

fn grid_scenarios(cfg: &GridConfig, seed: u64) -> Result<Vec<Scenario>> {
    if cfg.topologies.is_empty() {
        bail!(usage("grid: no topologies"));
    }
    let n_bus = standard_topology(cfg.topologies[0])?.bus_count();
    let profile = LoadProfile::from_config(&cfg.profile, n_bus)?;
    let mut scenarios = Vec::new();
    if let Some(g) = &cfg.slc {
        scenarios.extend(slc_grid(&g.buses, &g.fractions, &cfg.topologies, &profile, cfg.onset, derive_seed(seed, 0))?);
    }
    if let Some(g) = &cfg.fdia {
        scenarios.extend(fdia_grid(&g.states, &g.offsets, &cfg.topologies, &profile, cfg.onset, derive_seed(seed, 1))?);
    }
    if cfg.slc.is_none() && cfg.fdia.is_none() {
        let master = derive_seed(seed, 2);
        for (i, &id) in cfg.topologies.iter().enumerate() {
            let scenario = Scenario::new(id, standard_topology(id)?, profile.clone(), Vec::new(), derive_seed(master, i as u64));
            scenario.validate()?;
            scenarios.push(scenario);
        }
    }
    Ok(scenarios)
}

/// Detection thresholds given on the command line override the config file.
#[derive(Clone, Copy, Debug, Default)]
pub struct DetectionOverrides {
    pub gamma: Option<f64>,
    pub chi2_probability: Option<f64>,
    pub lnr_tau: Option<f64>,
}

impl DetectionOverrides {
    fn apply(&self, config: &mut DetectionConfig) {
        if let Some(g) = self.gamma {
            config.gamma = g;
        }
        if let Some(p) = self.chi2_probability {
            config.chi2_probability = p;
        }
        if let Some(t) = self.lnr_tau {
            config.lnr_tau = t;
        }
    }
}

fn verdict_runs(report: &DetectionReport) -> String {
    let mut runs: Vec<(Verdict, usize, usize)> = Vec::new();
    for s in &report.steps {
        match runs.last_mut() {
            Some((v, _, end)) if *v == s.verdict => *end = s.t,
            _ => runs.push((s.verdict, s.t, s.t)),
        }
    }
    runs.iter()
        .map(|(v, a, b)| if a == b { format!("{}@{a}", v.as_str()) } else { format!("{}@{a}..{b}", v.as_str()) })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn detect(traces: &[PathBuf], config: Option<&Path>, overrides: DetectionOverrides, out: &Path) -> Result<()> {
    if traces.is_empty() {
        bail!(usage("no trace files given"));
    }
    let mut detection: DetectionConfig = match config {
        Some(p) => load_config(p)?,
        None => DetectionConfig::default(),
    };
    overrides.apply(&mut detection);
    // Every input is read before anything is written.
    let loaded = traces
        .iter()
        .map(|p| read_trace(p).with_context(|| format!("reading trace {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let reports = loaded
        .par_iter()
        .map(|(trace, _)| run_detection_pipeline(trace, &detection))
        .collect::<gridad::Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    for ((path, (trace, sidecar)), report) in traces.iter().zip(&loaded).zip(&reports) {
        let hash = config_hash(&json!({"command": "detect", "detection": detection, "trace": sidecar.config_hash}));
        let name = stem(path);
        report.write_csv(&out.join(format!("{name}.report.csv")), &hash, trace.seed)?;
        let summary = report.summarize(trace);
        let delays: Vec<String> = summary
            .delays
            .iter()
            .map(|d| d.map_or_else(|| "-".into(), |d| d.to_string()))
            .collect();
        println!(
            "{name}: delays [{}] false-alarm rate {:.2}% ({}/{}) verdicts {}",
            delays.join(", "),
            100.0 * summary.false_alarm_rate(),
            summary.false_alarms,
            summary.normal_steps,
            verdict_runs(report)
        );
    }
    Ok(())
}

pub fn build(config: Option<&Path>, extra_traces: &[PathBuf], task: Option<Task>, seed: u64, out: &Path) -> Result<()> {
    let mut cfg: BuildConfig = match config {
        Some(p) => {
            reject_catalog_seeds(p, "catalogs")?;
            let mut cfg: BuildConfig = load_config(p)?;
            let base = parent_dir(p);
            cfg.traces = cfg.traces.iter().map(|t| base.join(t)).collect();
            cfg
        }
        None => BuildConfig::default(),
    };
    let seed = reconcile_seed(cfg.seed, seed)?;
    cfg.seed = Some(seed);
    cfg.traces.extend(extra_traces.iter().cloned());
    if let Some(t) = task {
        cfg.task = t;
    }
    if cfg.catalogs.is_empty() && cfg.traces.is_empty() {
        bail!(usage("build-dataset needs catalogs in the config or trace files"));
    }
    for (i, c) in cfg.catalogs.iter_mut().enumerate() {
        c.seed = derive_seed(seed, i as u64);
        c.validate()?;
    }

    let loaded = cfg
        .traces
        .iter()
        .map(|p| read_trace(p).with_context(|| format!("reading trace {}", p.display())))
        .collect::<Result<Vec<(ScenarioTrace, TraceSidecar)>>>()?;
    let trace_hashes: Vec<&str> = loaded.iter().map(|(_, s)| s.config_hash.as_str()).collect();
    let hash = config_hash(&json!({"command": "build-dataset", "config": cfg, "trace_hashes": trace_hashes}));

    let mut parts = Vec::new();
    let scenarios = cfg
        .catalogs
        .iter()
        .map(|c| c.scenarios())
        .collect::<gridad::Result<Vec<_>>>()?
        .concat();
    if !scenarios.is_empty() {
        parts.push(build_dataset(&scenarios, &cfg.detection, cfg.task)?);
    }
    if !loaded.is_empty() {
        let pairs = loaded
            .into_par_iter()
            .map(|(trace, _)| run_detection_pipeline(&trace, &cfg.detection).map(|r| (trace, r)))
            .collect::<gridad::Result<Vec<_>>>()?;
        parts.push(assemble_dataset(&pairs, cfg.task)?);
    }
    let mut parts = parts.into_iter();
    let mut data = parts.next().expect("at least one source");
    for p in parts {
        data = data.concat(p)?;
    }
    if cfg.min_class_count > 0 {
        data = data.drop_rare(cfg.min_class_count)?;
    }
    if cfg.balance {
        data = data.balance(derive_seed(seed, BALANCE_STREAM))?;
    }
    data = match &cfg.split {
        SplitConfig::Stratified { train_fraction } => data.stratified_split(*train_fraction, derive_seed(seed, SPLIT_STREAM))?,
        SplitConfig::TopologyHoldout { train_topologies } => data.topology_split(train_topologies)?,
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    data.write(out, &hash, seed)?;
    let classes: Vec<String> = data.metadata.class_counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{} samples ({} train / {} test) from {} traces; {} flagged steps, {} skipped; classes {}",
        data.len(),
        data.indices(Split::Train).len(),
        data.indices(Split::Test).len(),
        data.metadata.traces,
        data.metadata.flagged_steps,
        data.metadata.skipped_steps,
        classes.join(" ")
    );
    Ok(())
}

/// Rows used for fitting: the train split when one is assigned.
fn train_rows(data: &Dataset) -> Vec<usize> {
    if data.split.is_empty() {
        (0..data.len()).collect()
    } else {
        data.indices(Split::Train)
    }
}

/// One class per sample; multi-origin samples use their label set as the class.
fn relevance_labels(data: &Dataset, rows: &[usize]) -> Vec<usize> {
    let mut ids: BTreeMap<&[usize], usize> = BTreeMap::new();
    for &i in rows {
        let n = ids.len();
        ids.entry(data.samples[i].labels.as_slice()).or_insert(n);
    }
    rows.iter().map(|&i| ids[data.samples[i].labels.as_slice()]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub k: usize,
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub names: Vec<String>,
    /// Config hash of the dataset the selection was computed on.
    pub dataset_hash: String,
    pub config_hash: String,
}

pub fn select_features(dataset: &Path, k: usize, out: &Path) -> Result<()> {
    let (data, schema) = Dataset::read(dataset)?;
    let rows = train_rows(&data);
    let x = FeatureMatrix::from_rows(&data.features_of(&rows))?;
    let y = relevance_labels(&data, &rows);
    if k == 0 || k > data.feature_count() {
        bail!(usage(format!("k must lie in 1..={}", data.feature_count())));
    }
    let selection = mrmr_select(&x, &y, k)?;
    let selection = SelectionFile {
        k,
        names: selection.indices.iter().map(|&j| data.feature_names[j].clone()).collect(),
        indices: selection.indices,
        scores: selection.scores,
        config_hash: config_hash(&json!({"command": "select-features", "dataset": schema.config_hash, "k": k})),
        dataset_hash: schema.config_hash,
    };
    write_json(out, &selection)?;
    println!("selected {k} of {} features: {}", data.feature_count(), selection.names[..k.min(5)].join(", "));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: String,
    pub k_features: usize,
    /// Percent.
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub dataset_hash: String,
    pub samples: usize,
    /// Macro-F1 after a majority vote over each trace's samples (single-label tasks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_macro_f1: Option<f64>,
    pub per_class: Vec<(String, ClassScores)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneResult>,
}

fn params_seed(params: &ModelParams) -> Option<u64> {
    match params {
        ModelParams::Rf(p) => Some(p.seed),
        ModelParams::Gbt(p) => Some(p.seed),
        ModelParams::Lr(_) | ModelParams::Knn(_) => None,
    }
}

fn trace_vote_f1(model: &TrainedModel, data: &Dataset, x: &FeatureMatrix, rows: &[usize]) -> Result<f64> {
    let mut groups: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
    for (r, &i) in rows.iter().enumerate() {
        let s = &data.samples[i];
        groups.entry((s.topology_id, s.trace_seed)).or_default().push(r);
    }
    let n = model.targets.len();
    let mut truth = Vec::with_capacity(groups.len());
    let mut pred = Vec::with_capacity(groups.len());
    for members in groups.values() {
        let mut votes = vec![0usize; n];
        for &r in members {
            votes[model.predict_full(&x.row(r))?[0]] += 1;
        }
        let best = votes.iter().enumerate().fold(0, |b, (c, &v)| if v > votes[b] { c } else { b });
        truth.push(data.samples[rows[members[0]]].labels[0]);
        pred.push(best);
    }
    Ok(ConfusionCounts::from_predictions(&truth, &pred, n).macro_f1())
}

fn score(model: &TrainedModel, data: &Dataset, schema: &DatasetSchema, rows: &[usize], hash: String) -> Result<Metrics> {
    if model.source_features != data.feature_count() || model.targets != data.targets {
        bail!("model schema does not match dataset {} (features or targets differ)", schema.config_hash);
    }
    if rows.is_empty() {
        bail!("dataset has no test samples to evaluate");
    }
    let x = FeatureMatrix::from_rows(&data.features_of(rows))?;
    let sets: Vec<Vec<usize>> = rows.iter().map(|&i| data.samples[i].labels.clone()).collect();
    let (evaluation, trace_macro_f1) = if model.multi_label {
        (model.evaluate(&x, Labels::Multi(&sets))?, None)
    } else {
        let y: Vec<usize> = sets.iter().map(|s| s[0]).collect();
        let e = model.evaluate(&x, Labels::Single(&y))?;
        (e, Some(trace_vote_f1(model, data, &x, rows)?))
    };
    Ok(Metrics {
        model: model.params.kind().as_str().into(),
        k_features: model.feature_indices.len(),
        macro_f1: evaluation.macro_f1,
        train_seconds: None,
        seed: params_seed(&model.params),
        config_hash: hash,
        dataset_hash: schema.config_hash.clone(),
        samples: evaluation.samples,
        trace_macro_f1,
        per_class: evaluation.per_class,
        tuning: None,
    })
}

pub struct TrainOptions<'a> {
    pub dataset: &'a Path,
    pub kind: ModelKind,
    pub seed: u64,
    pub selection: Option<&'a Path>,
    pub params: Option<&'a Path>,
    pub tune_budget: Option<usize>,
    pub out: &'a Path,
    pub metrics: Option<&'a Path>,
}

pub fn metrics_path(model: &Path) -> PathBuf {
    model.with_file_name(format!("{}.metrics.json", stem(model)))
}

pub fn train(opts: TrainOptions<'_>) -> Result<()> {
    let (data, schema) = Dataset::read(opts.dataset)?;
    if data.split.is_empty() {
        bail!("dataset {} has no train/test split", opts.dataset.display());
    }
    let feature_indices = match opts.selection {
        Some(p) => {
            let sel: SelectionFile = serde_json::from_str(&fs::read_to_string(p)?)?;
            let consistent = sel.dataset_hash == schema.config_hash
                && sel.indices.iter().zip(&sel.names).all(|(&j, n)| data.feature_names.get(j) == Some(n));
            if !consistent {
                bail!("selection {} was computed on a different dataset schema", p.display());
            }
            sel.indices
        }
        None => (0..data.feature_count()).collect(),
    };
    let mut params = match opts.params {
        Some(p) => {
            let params: ModelParams = load_config(p)?;
            if params.kind() != opts.kind {
                bail!(usage(format!("{} holds {} parameters, not {}", p.display(), params.kind().as_str(), opts.kind.as_str())));
            }
            params
        }
        None => opts.kind.default_params(),
    }
    .with_seed(opts.seed);

    let train = data.indices(Split::Train);
    let x_train = FeatureMatrix::from_rows(&data.features_of(&train))?;
    let multi = data.is_multi_label();
    let tuning = match opts.tune_budget {
        Some(budget) => {
            if multi {
                bail!(usage("hyperparameter tuning supports single-label tasks only"));
            }
            let y: Vec<usize> = train.iter().map(|&i| data.samples[i].labels[0]).collect();
            let xs = x_train.select_columns(&feature_indices)?;
            let result = tune_hyperparameters(&xs, &y, data.targets.len(), opts.kind, budget, opts.seed)?;
            params = result.best;
            Some(result)
        }
        None => None,
    };

    let sets: Vec<Vec<usize>> = train.iter().map(|&i| data.samples[i].labels.clone()).collect();
    let y: Vec<usize> = sets.iter().map(|s| s[0]).collect();
    let labels = if multi { Labels::Multi(&sets) } else { Labels::Single(&y) };
    let started = Instant::now();
    let mut model = TrainedModel::fit(&x_train, labels, data.targets.clone(), feature_indices, &params)?;
    let train_seconds = started.elapsed().as_secs_f64();

    let hash = config_hash(&json!({
        "command": "train",
        "dataset": schema.config_hash,
        "params": params,
        "features": model.feature_indices,
        "tune_budget": opts.tune_budget,
        "seed": opts.seed,
    }));
    model.config_hash = hash.clone();
    if let Some(dir) = opts.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(opts.out)?;

    let mut metrics = score(&model, &data, &schema, &data.indices(Split::Test), hash)?;
    metrics.train_seconds = Some(train_seconds);
    metrics.seed = Some(opts.seed);
    metrics.tuning = tuning;
    let metrics_file = opts.metrics.map_or_else(|| metrics_path(opts.out), Path::to_path_buf);
    write_json(&metrics_file, &metrics)?;
    println!(
        "{}: macro-F1 {:.2}% on {} test samples (k={}, trained in {:.3} s)",
        metrics.model, metrics.macro_f1, metrics.samples, metrics.k_features, train_seconds
    );
    Ok(())
}

pub fn evaluate(dataset: &Path, models: &[PathBuf], all_rows: bool, out: &Path) -> Result<()> {
    if models.is_empty() {
        bail!(usage("no model files given"));
    }
    let (data, schema) = Dataset::read(dataset)?;
    let rows = if all_rows || data.split.is_empty() { (0..data.len()).collect() } else { data.indices(Split::Test) };
    let loaded = models
        .iter()
        .map(|p| TrainedModel::load(p).with_context(|| format!("loading model {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let results = loaded
        .par_iter()
        .map(|m| score(m, &data, &schema, &rows, m.config_hash.clone()))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    for (path, metrics) in models.iter().zip(&results) {
        write_json(&out.join(format!("{}.metrics.json", stem(path))), metrics)?;
        let vote = metrics.trace_macro_f1.map_or_else(String::new, |v| format!(", per-trace vote {v:.2}%"));
        println!("{} ({}): macro-F1 {:.2}% on {} samples{vote}", stem(path), metrics.model, metrics.macro_f1, metrics.samples);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaPoint {
    pub gamma: f64,
    pub false_alarm_rate: f64,
    pub detection_rate: f64,
    pub mean_delay: Option<f64>,
    /// γ minus the largest ADI seen on clean traces.
    pub margin: f64,
}

pub fn sweep_gamma(clean: &[(ScenarioTrace, DetectionReport)], anomalous: &[(ScenarioTrace, DetectionReport)], gammas: &[f64]) -> Vec<GammaPoint> {
    let clean_peak = clean
        .iter()
        .flat_map(|(_, r)| r.steps.iter().skip(1).map(|s| s.max_adi))
        .fold(0.0, f64::max);
    gammas
        .iter()
        .map(|&gamma| {
            let (mut alarms, mut normal) = (0, 0);
            for (trace, report) in clean {
                let s = report.with_gamma(gamma).summarize(trace);
                alarms += s.false_alarms;
                normal += s.normal_steps;
            }
            let delays: Vec<Option<usize>> = anomalous
                .iter()
                .flat_map(|(trace, report)| report.with_gamma(gamma).summarize(trace).delays)
                .collect();
            let hit: Vec<usize> = delays.iter().flatten().copied().collect();
            GammaPoint {
                gamma,
                false_alarm_rate: if normal == 0 { 0.0 } else { alarms as f64 / normal as f64 },
                detection_rate: if delays.is_empty() { 0.0 } else { hit.len() as f64 / delays.len() as f64 },
                mean_delay: (!hit.is_empty()).then(|| hit.iter().sum::<usize>() as f64 / hit.len() as f64),
                margin: gamma - clean_peak,
            }
        })
        .collect()
}

pub fn calibrate_gamma(config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let mut cfg: CalibrationConfig = match config {
        Some(p) => {
            reject_catalog_seeds(p, "anomalous")?;
            load_config(p)?
        }
        None => CalibrationConfig::default(),
    };
    let seed = reconcile_seed(cfg.seed, seed)?;
    cfg.seed = Some(seed);
    if cfg.gammas.is_empty() || cfg.clean_traces == 0 {
        bail!(usage("calibration needs at least one gamma and one clean trace"));
    }
    let clean_catalog = CatalogConfig {
        kind: CatalogKind::SingleSlc,
        count: cfg.clean_traces,
        topologies: cfg.topologies.clone(),
        steps: cfg.clean_steps,
        onset: (1, 1),
        seed: derive_seed(seed, 0),
        ..CatalogConfig::default()
    };
    clean_catalog.validate()?;
    let mut clean = clean_catalog.scenarios()?;
    for s in &mut clean {
        s.anomalies.clear();
    }
    let mut anomalous = Vec::new();
    for (i, c) in cfg.anomalous.iter_mut().enumerate() {
        c.seed = derive_seed(seed, i as u64 + 1);
        c.validate()?;
        anomalous.extend(c.scenarios()?);
    }
    let run = |scenarios: &[Scenario]| -> Result<Vec<(ScenarioTrace, DetectionReport)>> {
        let out = scenarios
            .par_iter()
            .map(|s| {
                let trace = s.generate()?;
                let report = run_detection_pipeline(&trace, &cfg.detection)?;
                Ok((trace, report))
            })
            .collect::<gridad::Result<Vec<_>>>()?;
        Ok(out)
    };
    let points = sweep_gamma(&run(&clean)?, &run(&anomalous)?, &cfg.gammas);
    let hash = config_hash(&json!({"command": "calibrate-gamma", "config": cfg}));

    let mut text = format!("# config_hash={hash} seed={seed}\ngamma,false_alarm_rate,detection_rate,mean_delay,margin\n");
    for p in &points {
        text += &format!(
            "{},{},{},{},{}\n",
            fmt_num(p.gamma),
            fmt_num(p.false_alarm_rate),
            fmt_num(p.detection_rate),
            p.mean_delay.map_or_else(String::new, fmt_num),
            fmt_num(p.margin)
        );
    }
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, text)?;
    println!("{:>6} {:>12} {:>10} {:>8} {:>8}", "gamma", "false-alarm", "detected", "delay", "margin");
    for p in &points {
        println!(
            "{:>6.2} {:>11.2}% {:>9.1}% {:>8} {:>8.3}",
            p.gamma,
            100.0 * p.false_alarm_rate,
            100.0 * p.detection_rate,
            p.mean_delay.map_or_else(|| "-".into(), |d| format!("{d:.2}")),
            p.margin
        );
    }
    Ok(())
}

pub fn parse_task(s: &str) -> Result<Task> {
    Task::parse(s).ok_or_else(|| anyhow!(usage(format!("unknown task '{s}' (classify, identify-slc, identify-fdia)"))))
}

pub fn parse_model(s: &str) -> Result<ModelKind> {
    ModelKind::parse(s).ok_or_else(|| anyhow!(usage(format!("unknown model '{s}' (rf, gbt, lr, knn)"))))
}
