use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::anomaly::AnomalySpec;
use super::trajectory::{step_label, ScenarioTrace, TraceStep};
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::grid::{MeasurementPlan, NetworkTopology, StateLayout, StateVector};

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// JSON written next to every trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub topology_id: usize,
    pub profile: String,
    pub steps: usize,
    pub anomalies: Vec<AnomalySpec>,
    pub plan: MeasurementPlan,
    pub topology: NetworkTopology,
}

/// `<trace>.csv.json`, so a sidecar never replaces a same-stem scenario file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut p = csv.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes `<path>` (CSV) and its JSON sidecar.
pub fn write_trace(trace: &ScenarioTrace, path: &Path, config_hash: &str) -> Result<()> {
    let m = trace.plan.len();
    let n = trace.steps.first().map_or(0, |s| s.true_state.dim());
    let mut out = Vec::new();
    writeln!(out, "# config_hash={config_hash} seed={}", trace.seed)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["t".to_string(), "label".into(), "label_targets".into()];
        header.extend((1..=m).map(|i| format!("z_{i}")));
        header.extend((1..=m).map(|i| format!("z_clean_{i}")));
        header.extend((1..=n).map(|i| format!("x_true_{i}")));
        w.write_record(&header)?;
        for step in &trace.steps {
            let mut row = vec![step.t.to_string(), trace.label(step.t), trace.label_targets(step.t)];
            row.extend(step.observed.iter().map(|v| fmt_num(*v)));
            row.extend(step.clean.iter().map(|v| fmt_num(*v)));
            row.extend(step.true_state.to_vector().iter().map(|v| fmt_num(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let sidecar = TraceSidecar {
        format_version: TRACE_FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        seed: trace.seed,
        topology_id: trace.topology_id,
        profile: trace.profile_tag.clone(),
        steps: trace.len(),
        anomalies: trace.anomalies.clone(),
        plan: trace.plan.clone(),
        topology: trace.topology.clone(),
    };
    fs::write(path, out)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a trace CSV and its sidecar. Errors name the offending line.
pub fn read_trace(path: &Path) -> Result<(ScenarioTrace, TraceSidecar)> {
    let side_path = sidecar_path(path);
    let sidecar: TraceSidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", side_path.display())))?;
    sidecar.plan.validate(&sidecar.topology)?;
    let m = sidecar.plan.len();
    let layout = StateLayout::new(sidecar.topology.bus_count(), sidecar.topology.slack_index());
    let n = layout.dim();

    let text = fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header_len = rdr.headers()?.len();
    let expected = 3 + 2 * m + n;
    if header_len != expected {
        return Err(Error::Parse(format!(
            "{}: header has {header_len} columns, expected {expected}",
            path.display()
        )));
    }
    let mut steps = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse(format!("{}: line {line}: {what}", path.display()));
        if record.len() != expected {
            return Err(bad("wrong number of fields"));
        }
        let t: usize = record[0].parse().map_err(|_| bad("bad step index"))?;
        if t != steps.len() {
            return Err(bad("steps out of order"));
        }
        let nums = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
            range
                .map(|k| record[k].parse::<f64>().map_err(|_| bad(&format!("bad number in column {}", k + 1))))
                .collect()
        };
        let observed = DVector::from_vec(nums(3..3 + m)?);
        let clean = DVector::from_vec(nums(3 + m..3 + 2 * m)?);
        let x = DVector::from_vec(nums(3 + 2 * m..expected)?);
        let active: Vec<usize> = (0..sidecar.anomalies.len())
            .filter(|&i| sidecar.anomalies[i].is_active(t))
            .collect();
        let label = &record[1];
        if step_label(&sidecar.anomalies, &active) != label {
            return Err(bad(&format!("label '{label}' disagrees with the anomaly windows")));
        }
        steps.push(TraceStep {
            t,
            true_state: StateVector::from_vector(layout, &x)?,
            clean,
            observed,
            active,
        });
    }
    if steps.len() != sidecar.steps {
        return Err(Error::Parse(format!(
            "{}: {} rows but sidecar declares {} steps",
            path.display(),
            steps.len(),
            sidecar.steps
        )));
    }
    let trace = ScenarioTrace {
        topology_id: sidecar.topology_id,
        topology: sidecar.topology.clone(),
        plan: sidecar.plan.clone(),
        profile_tag: sidecar.profile.clone(),
        anomalies: sidecar.anomalies.clone(),
        seed: sidecar.seed,
        steps,
    };
    Ok((trace, sidecar))
}
