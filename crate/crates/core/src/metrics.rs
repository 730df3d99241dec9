//! Detection metrics: ROC AUC, balanced accuracy at fixed and optimal
//! thresholds, score histograms, and residual retention between two
//! versions of an image.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ClassLabel, ImageBuffer};
use crate::spectral::{extract_residual, Denoiser};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub score: f64,
    pub is_positive: bool,
    pub id: String,
}

impl ScoredItem {
    pub fn new(score: f64, is_positive: bool, id: impl Into<String>) -> Self {
        Self {
            score,
            is_positive,
            id: id.into(),
        }
    }
}

/// One column of a detection table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub auc: f64,
    #[serde(rename = "b_acc_max")]
    pub ba_max: f64,
    /// Threshold achieving `ba_max`; `None` stands for ±∞ (trivial rule).
    #[serde(rename = "b_acc_max_threshold")]
    pub ba_max_threshold: Option<f64>,
    #[serde(rename = "b_acc_at_0")]
    pub ba_at_0: f64,
    pub tpr_at_0: f64,
    pub fpr_at_0: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confusion {
    pub tpr: f64,
    pub fpr: f64,
    pub ba: f64,
}

fn class_counts(items: &[ScoredItem]) -> Result<(usize, usize)> {
    let p = items.iter().filter(|i| i.is_positive).count();
    let n = items.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    if items.iter().any(|i| i.score.is_nan()) {
        return Err(Error::NonFiniteScore);
    }
    Ok((p, n))
}

/// Mann–Whitney AUC: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn roc_auc(items: &[ScoredItem]) -> Result<f64> {
    let (p, n) = class_counts(items)?;
    let mut sorted: Vec<&ScoredItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // walk tie groups in ascending order
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let group = &sorted[i..j];
        let gp = group.iter().filter(|x| x.is_positive).count();
        let gn = group.len() - gp;
        wins += gp as f64 * neg_below as f64 + 0.5 * gp as f64 * gn as f64;
        neg_below += gn;
        i = j;
    }
    Ok(wins / (p as f64 * n as f64))
}

/// Rates with the rule `score >= threshold` ⇒ positive.
pub fn confusion_at(items: &[ScoredItem], threshold: f64) -> Result<Confusion> {
    let (p, n) = class_counts(items)?;
    let tp = items.iter().filter(|i| i.is_positive && i.score >= threshold).count();
    let fp = items.iter().filter(|i| !i.is_positive && i.score >= threshold).count();
    let tpr = tp as f64 / p as f64;
    let fpr = fp as f64 / n as f64;
    Ok(Confusion {
        tpr,
        fpr,
        ba: 0.5 * (tpr + 1.0 - fpr),
    })
}

/// Best balanced accuracy over thresholds at −∞, +∞ and the midpoints of
/// consecutive distinct scores. Ties go to the smallest threshold; the
/// returned threshold is `None` when that is −∞ or +∞.
pub fn ba_max(items: &[ScoredItem]) -> Result<(f64, Option<f64>)> {
    let (p, n) = class_counts(items)?;
    let mut sorted: Vec<&ScoredItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // threshold −∞: everything positive
    let mut tp = p;
    let mut fp = n;
    let ba_of = |tp: usize, fp: usize| 0.5 * (tp as f64 / p as f64 + 1.0 - fp as f64 / n as f64);
    let mut best = ba_of(tp, fp);
    let mut best_thr: Option<f64> = None;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        let mut j = i;
        while j < sorted.len() && sorted[j].score == s {
            if sorted[j].is_positive {
                tp -= 1;
            } else {
                fp -= 1;
            }
            j += 1;
        }
        // threshold just above s: midpoint to the next distinct score, or +∞
        let thr = if j < sorted.len() {
            let next = sorted[j].score;
            let mid = s + (next - s) / 2.0;
            Some(if mid > s { mid } else { next })
        } else {
            None
        };
        let ba = ba_of(tp, fp);
        if ba > best {
            best = ba;
            best_thr = thr;
        }
        i = j;
    }
    Ok((best, best_thr))
}

/// All metric columns, with the fixed operating point at `threshold`.
pub fn metric_row(items: &[ScoredItem], threshold: f64) -> Result<MetricRow> {
    let (p, n) = class_counts(items)?;
    let auc = roc_auc(items)?;
    let (ba, thr) = ba_max(items)?;
    let c = confusion_at(items, threshold)?;
    Ok(MetricRow {
        auc,
        ba_max: ba,
        ba_max_threshold: thr,
        ba_at_0: c.ba,
        tpr_at_0: c.tpr,
        fpr_at_0: c.fpr,
        n_positive: p,
        n_negative: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: BTreeMap<ClassLabel, Vec<usize>>,
}

/// Equal-width bins over `[min, max]` of the scores; a zero span collapses
/// to a single bin.
pub fn histogram(items: &[(f64, ClassLabel)], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    if items.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFiniteScore);
    }
    let lo = items.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let hi = items.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let bins = if hi > lo { n_bins } else { 1 };
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for &(s, label) in items {
        let idx = if hi > lo {
            (((s - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts.entry(label).or_insert_with(|| vec![0; bins])[idx] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

/// Pearson correlation between the noise residuals of two same-sized
/// images.
pub fn residual_retention(a: &ImageBuffer, b: &ImageBuffer, denoiser: &Denoiser) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let ra = extract_residual(a, denoiser)?;
    let rb = extract_residual(b, denoiser)?;
    pearson(&ra.data, &rb.data)
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 1e-300 || syy <= 1e-300 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
