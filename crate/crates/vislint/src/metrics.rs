//! Classification and regression metrics for scoring parsed verdicts against
//! ground truth.
//!
//! Classification reports carry macro-averaged precision/recall/F1, accuracy,
//! balanced accuracy, and the no-information rate (the accuracy of always
//! predicting the majority ground-truth class). Regression reports carry
//! RMSE, MAE, and Pearson's R.
//!
//! Invalid predictions are handled explicitly. For classification the default
//! policy scores them as a distinct wrong class: they count against accuracy
//! and against the true class's recall, and the synthetic "invalid" class
//! never enters the macro average (which runs over ground-truth classes
//! only). The alternative policy drops invalid pairs. For regression, invalid
//! predictions are always dropped pairwise; both report their count.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::DiagramType;
use crate::parse::ParsedAnswer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ: {preds} vs {truths}")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("no scorable pairs")]
    EmptyInput,
}

/// A ground-truth class for a classification question: yes/no for the
/// boolean questions, a diagram type for the type question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    YesNo(bool),
    Type(DiagramType),
}

impl ClassLabel {
    fn as_class(self) -> String {
        match self {
            ClassLabel::YesNo(true) => "yes".to_string(),
            ClassLabel::YesNo(false) => "no".to_string(),
            ClassLabel::Type(t) => t.name().to_string(),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_class())
    }
}

/// How invalid predictions are scored in classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Score invalid predictions as a distinct wrong class (default).
    #[default]
    Penalize,
    /// Drop pairs with invalid predictions before scoring.
    Drop,
}

/// Name of the synthetic prediction class for invalid answers.
pub const INVALID_CLASS: &str = "invalid";

/// Cross-table of ground truth (rows) against predictions (columns).
///
/// The class list covers every label present in truths or predictions; when
/// any prediction is invalid a synthetic "invalid" class is appended. That
/// class can receive prediction counts but never truth counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    fn build(preds: &[Option<String>], truths: &[String]) -> ConfusionMatrix {
        let mut classes: Vec<String> = truths
            .iter()
            .chain(preds.iter().flatten())
            .cloned()
            .collect();
        classes.sort();
        classes.dedup();
        let has_invalid = preds.iter().any(|p| p.is_none());
        if has_invalid {
            classes.push(INVALID_CLASS.to_string());
        }
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (pred, truth) in preds.iter().zip(truths) {
            let row = index[truth.as_str()];
            let col = match pred {
                Some(p) => index[p.as_str()],
                None => index[INVALID_CLASS],
            };
            counts[row][col] += 1;
        }
        ConfusionMatrix { classes, counts }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Total number of scored pairs.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correctly classified pairs (the diagonal).
    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }
}

/// The classification metric bundle. All rates are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub no_information_rate: f64,
    pub n: usize,
    pub invalid_count: usize,
    pub invalid_policy: InvalidPolicy,
}

/// The regression metric bundle. Pearson's R is absent when either vector is
/// constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rmse: f64,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
    pub n: usize,
    pub invalid_count: usize,
}

/// Accuracy of always predicting the majority ground-truth class.
pub fn no_information_rate(truths: &[ClassLabel]) -> f64 {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in truths {
        *counts.entry(t.as_class()).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    if truths.is_empty() {
        0.0
    } else {
        max as f64 / truths.len() as f64
    }
}

fn pred_class(p: &ParsedAnswer) -> Option<String> {
    match p {
        ParsedAnswer::YesNo(b) => Some(ClassLabel::YesNo(*b).as_class()),
        ParsedAnswer::TypeChoice(t) => Some(ClassLabel::Type(*t).as_class()),
        // a count where a class was expected is as unusable as no answer
        ParsedAnswer::Number(_) | ParsedAnswer::Invalid => None,
    }
}

/// Build the confusion matrix for a set of (prediction, truth) pairs under
/// the penalizing policy.
pub fn confusion_matrix(
    preds: &[ParsedAnswer],
    truths: &[ClassLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    check_lengths(preds.len(), truths.len())?;
    let pred_strings: Vec<Option<String>> = preds.iter().map(pred_class).collect();
    let truth_strings: Vec<String> = truths.iter().map(|t| t.as_class()).collect();
    Ok(ConfusionMatrix::build(&pred_strings, &truth_strings))
}

fn check_lengths(preds: usize, truths: usize) -> Result<(), MetricsError> {
    if preds != truths {
        return Err(MetricsError::LengthMismatch { preds, truths });
    }
    if preds == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Score classification predictions with the default (penalizing) invalid
/// policy.
pub fn classification_report(
    preds: &[ParsedAnswer],
    truths: &[ClassLabel],
) -> Result<ClassificationReport, MetricsError> {
    classification_report_with_policy(preds, truths, InvalidPolicy::Penalize)
}

/// Score classification predictions under an explicit invalid policy.
///
/// Macro averages run over the classes present in the ground truth, never
/// over absent classes or the synthetic invalid class. Per-class precision
/// with zero predicted positives is defined as 0.
pub fn classification_report_with_policy(
    preds: &[ParsedAnswer],
    truths: &[ClassLabel],
    policy: InvalidPolicy,
) -> Result<ClassificationReport, MetricsError> {
    check_lengths(preds.len(), truths.len())?;
    let invalid_count = preds.iter().filter(|p| pred_class(p).is_none()).count();

    let (pred_strings, truth_strings): (Vec<Option<String>>, Vec<String>) = match policy {
        InvalidPolicy::Penalize => (
            preds.iter().map(pred_class).collect(),
            truths.iter().map(|t| t.as_class()).collect(),
        ),
        InvalidPolicy::Drop => preds
            .iter()
            .zip(truths)
            .filter_map(|(p, t)| pred_class(p).map(|c| (Some(c), t.as_class())))
            .unzip(),
    };
    if truth_strings.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let cm = ConfusionMatrix::build(&pred_strings, &truth_strings);
    let n = truth_strings.len();

    let truth_classes: Vec<usize> = (0..cm.classes.len())
        .filter(|&i| cm.row_sum(i) > 0)
        .collect();
    let mut sum_p = 0.0;
    let mut sum_r = 0.0;
    let mut sum_f1 = 0.0;
    let mut max_truth = 0u64;
    for &i in &truth_classes {
        let tp = cm.counts[i][i] as f64;
        let col = cm.col_sum(i) as f64;
        let row = cm.row_sum(i) as f64;
        let p = if col > 0.0 { tp / col } else { 0.0 };
        let r = tp / row;
        let f1 = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        sum_p += p;
        sum_r += r;
        sum_f1 += f1;
        max_truth = max_truth.max(cm.row_sum(i));
    }
    let k = truth_classes.len() as f64;

    Ok(ClassificationReport {
        macro_precision: sum_p / k,
        macro_recall: sum_r / k,
        macro_f1: sum_f1 / k,
        accuracy: cm.trace() as f64 / n as f64,
        balanced_accuracy: sum_r / k,
        no_information_rate: max_truth as f64 / n as f64,
        n,
        invalid_count,
        invalid_policy: policy,
    })
}

/// Score count predictions against integer ground truth.
///
/// Pairs whose prediction is not a number are dropped and counted. Pearson's
/// R is reported as absent when either remaining vector is constant.
pub fn regression_report(
    preds: &[ParsedAnswer],
    truths: &[u32],
) -> Result<RegressionReport, MetricsError> {
    check_lengths(preds.len(), truths.len())?;
    let pairs: Vec<(f64, f64)> = preds
        .iter()
        .zip(truths)
        .filter_map(|(p, t)| match p {
            ParsedAnswer::Number(v) => Some((*v as f64, *t as f64)),
            _ => None,
        })
        .collect();
    let invalid_count = preds.len() - pairs.len();
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let n = pairs.len() as f64;
    let mse = pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mae = pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / n;

    let mean_p = pairs.iter().map(|(p, _)| p).sum::<f64>() / n;
    let mean_t = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
    let var_p = pairs
        .iter()
        .map(|(p, _)| (p - mean_p) * (p - mean_p))
        .sum::<f64>();
    let var_t = pairs
        .iter()
        .map(|(_, t)| (t - mean_t) * (t - mean_t))
        .sum::<f64>();
    let pearson_r = if var_p > 0.0 && var_t > 0.0 {
        let cov = pairs
            .iter()
            .map(|(p, t)| (p - mean_p) * (t - mean_t))
            .sum::<f64>();
        Some(cov / (var_p.sqrt() * var_t.sqrt()))
    } else {
        None
    };

    Ok(RegressionReport {
        rmse: mse.sqrt(),
        mae,
        pearson_r,
        n: pairs.len(),
        invalid_count,
    })
}
