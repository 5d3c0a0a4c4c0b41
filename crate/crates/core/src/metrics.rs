//! Accuracy, macro precision/recall/F1 and macro one-vs-rest AUC.

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the class lacks positives or negatives in the evaluation set.
    pub auc: Option<f64>,
    /// True when the corresponding ratio had a zero denominator and was set to 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_auc: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Confusion-matrix metrics. Macro values are unweighted means over all `C`
/// classes; undefined per-class ratios count as 0 and are flagged.
pub fn confusion_metrics(golds: &[usize], preds: &[usize], classes: usize) -> Result<MetricsReport> {
    if golds.len() != preds.len() {
        return Err(Error::Usage(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Evaluation("no examples to evaluate".into()));
    }
    if let Some(&bad) = golds.iter().chain(preds).find(|&&c| c >= classes) {
        return Err(Error::Index {
            op: "confusion_metrics",
            index: bad,
            len: classes,
        });
    }
    let (mut tp, mut fp, mut fneg, mut support) =
        (vec![0usize; classes], vec![0usize; classes], vec![0usize; classes], vec![0usize; classes]);
    for (&g, &p) in golds.iter().zip(preds) {
        support[g] += 1;
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fneg[g] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|c| {
            let (precision, precision_undefined) = ratio(tp[c], tp[c] + fp[c]);
            let (recall, recall_undefined) = ratio(tp[c], tp[c] + fneg[c]);
            let (f1, f1_undefined) = if precision + recall > 0.0 {
                (2.0 * precision * recall / (precision + recall), false)
            } else {
                (0.0, true)
            };
            ClassMetrics {
                support: support[c],
                precision,
                recall,
                f1,
                auc: None,
                precision_undefined,
                recall_undefined,
                f1_undefined,
            }
        })
        .collect();
    let correct: usize = tp.iter().sum();
    Ok(MetricsReport {
        accuracy: correct as f64 / golds.len() as f64,
        macro_precision: mean(per_class.iter().map(|m| m.precision)),
        macro_recall: mean(per_class.iter().map(|m| m.recall)),
        macro_f1: mean(per_class.iter().map(|m| m.f1)),
        macro_auc: None,
        per_class,
    })
}

/// Per-class one-vs-rest AUCs and their mean over defined classes.
#[derive(Debug, Clone, PartialEq)]
pub struct AucReport {
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: f64,
}

/// One-vs-rest AUC of `scores` for the positives marked in `positive`:
/// the fraction of (positive, negative) pairs where the positive scores
/// higher, ties counting one half. `None` without both kinds of example.
///
/// Sorts once and counts in half-pair units, so the result is exact.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut half_pairs: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_here, mut neg_here) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        half_pairs += 2 * pos_here * neg_below + pos_here * neg_here;
        neg_below += neg_here;
        i = j;
    }
    Some(half_pairs as f64 / (2 * n_pos as u64 * n_neg as u64) as f64)
}

/// Macro one-vs-rest AUC over the columns of `probs` (N×C).
pub fn macro_auc(golds: &[usize], probs: &Matrix) -> Result<AucReport> {
    if golds.len() != probs.rows() {
        return Err(Error::Usage(format!(
            "{} gold labels but {} probability rows",
            golds.len(),
            probs.rows()
        )));
    }
    let classes = probs.cols();
    if let Some(&bad) = golds.iter().find(|&&g| g >= classes) {
        return Err(Error::Index {
            op: "macro_auc",
            index: bad,
            len: classes,
        });
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, c)).collect();
            let positive: Vec<bool> = golds.iter().map(|&g| g == c).collect();
            binary_auc(&scores, &positive)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Evaluation("AUC undefined for every class".into()));
    }
    Ok(AucReport {
        macro_auc: mean(defined.into_iter()),
        per_class,
    })
}

/// Full report from gold labels and probability rows; predictions are the
/// row-wise argmax.
pub fn evaluate(golds: &[usize], probs: &Matrix) -> Result<MetricsReport> {
    if golds.is_empty() {
        return Err(Error::Evaluation("no examples to evaluate".into()));
    }
    let preds: Vec<usize> = (0..probs.rows()).map(|r| probs.argmax_row(r)).collect();
    let mut report = confusion_metrics(golds, &preds, probs.cols())?;
    let auc = macro_auc(golds, probs)?;
    for (m, a) in report.per_class.iter_mut().zip(&auc.per_class) {
        m.auc = *a;
    }
    report.macro_auc = Some(auc.macro_auc);
    Ok(report)
}
