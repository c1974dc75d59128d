//! Maximum-relevance minimum-redundancy selection: mutual information with
//! the labels over mean absolute Spearman correlation with the picks so far.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::FeatureMatrix;

pub const MI_BINS: usize = 10;
pub const REDUNDANCY_FLOOR: f64 = 1e-6;

/// Average (1-based) ranks; tied values share their mean rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Equal-frequency bin of each value; ties always share a bin.
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len() as f64;
    mid_ranks(values)
        .into_iter()
        .map(|r| (((r - 0.5) * bins as f64 / n) as usize).min(bins - 1))
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Pearson correlation of mid-ranks; 0 when either input is constant.
pub fn spearman_rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(MlError::InvalidParams("spearman needs two equal-length vectors of length ≥ 2".into()));
    }
    Ok(pearson(&mid_ranks(a), &mid_ranks(b)))
}

/// MI in nats between a feature (10 equal-frequency bins) and class labels.
pub fn mutual_information(feature: &[f64], labels: &[usize]) -> Result<f64> {
    if feature.len() != labels.len() || feature.len() < 2 {
        return Err(MlError::InvalidParams("mutual information needs ≥ 2 paired samples".into()));
    }
    if feature.iter().all(|&v| v == feature[0]) {
        return Ok(0.0);
    }
    Ok(binned_mutual_information(&quantile_bins(feature, MI_BINS), labels))
}

fn binned_mutual_information(bins: &[usize], labels: &[usize]) -> f64 {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let n = bins.len() as f64;
    let mut joint = vec![0.0; MI_BINS * n_classes];
    let (mut pb, mut pc) = (vec![0.0; MI_BINS], vec![0.0; n_classes]);
    for (&b, &c) in bins.iter().zip(labels) {
        joint[b * n_classes + c] += 1.0;
        pb[b] += 1.0;
        pc[c] += 1.0;
    }
    let mut mi = 0.0;
    for b in 0..MI_BINS {
        for c in 0..n_classes {
            let j = joint[b * n_classes + c];
            if j > 0.0 {
                mi += j / n * (j * n / (pb[b] * pc[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub k: usize,
    /// Selected feature indices in pick order.
    pub indices: Vec<usize>,
    /// Score of each pick when it was made.
    pub scores: Vec<f64>,
}

pub fn mrmr_select(x: &FeatureMatrix, labels: &[usize], k: usize) -> Result<SelectionResult> {
    let f = x.ncols();
    if k > f {
        return Err(MlError::InvalidParams(format!("k = {k} exceeds {f} features")));
    }
    if labels.len() != x.nrows() {
        return Err(MlError::DimensionMismatch {
            expected: x.nrows(),
            actual: labels.len(),
        });
    }
    let relevance: Vec<f64> = (0..f)
        .into_par_iter()
        .map(|j| mutual_information(x.column(j), labels))
        .collect::<Result<_>>()?;
    let ranks: Vec<Vec<f64>> = (0..f).into_par_iter().map(|j| mid_ranks(x.column(j))).collect();

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    let mut taken = vec![false; f];
    // Running Σ|ρ(candidate, picked)|
    let mut redundancy_sum = vec![0.0; f];
    for step in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..f).filter(|&j| !taken[j]) {
            let denominator = if step == 0 {
                1.0
            } else {
                (redundancy_sum[j] / step as f64).max(REDUNDANCY_FLOOR)
            };
            let score = relevance[j] / denominator;
            if best.is_none_or(|b| score > b.0) {
                best = Some((score, j));
            }
        }
        let (score, pick) = best.expect("k ≤ feature count leaves a candidate");
        taken[pick] = true;
        selected.push(pick);
        scores.push(score);
        let pick_ranks = &ranks[pick];
        let updates: Vec<(usize, f64)> = (0..f)
            .into_par_iter()
            .filter(|&j| !taken[j])
            .map(|j| (j, pearson(&ranks[j], pick_ranks).abs()))
            .collect();
        for (j, r) in updates {
            redundancy_sum[j] += r;
        }
    }
    Ok(SelectionResult {
        k,
        indices: selected,
        scores,
    })
}
