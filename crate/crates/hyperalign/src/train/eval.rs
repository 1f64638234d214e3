//! Accuracy metrics: overall accuracy, per-class accuracies, confusion
//! matrices, and the `mean ± std` formatting used in result tables.

use crate::cube::PatchSet;
use crate::error::{Error, Result};

use super::TrainedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    /// Per-class accuracy indexed by class id - 1; NaN for absent classes.
    pub per_class: Vec<f64>,
    /// confusion[truth - 1][pred - 1] counts.
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

/// Evaluate a trained model on a labeled test set.
pub fn evaluate(model: &TrainedModel, test: &PatchSet) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::argument("the test set is empty"));
    }
    if test.labels.iter().any(|&l| l == 0) {
        return Err(Error::argument("the test set must be fully labeled"));
    }
    let preds = model.predict(test)?;
    let classes = model_classes(model);
    let confusion = confusion_matrix(&preds, &test.labels, classes)?;
    Ok(report_from_confusion(confusion))
}

fn model_classes(model: &TrainedModel) -> usize {
    match &model.arch {
        super::ModelArch::Single { spec, .. } => spec.softmax_classes().unwrap_or(0),
        super::ModelArch::Fann { spec, .. } => spec.head_classes(),
    }
}

/// Count (truth, prediction) pairs into a classes x classes matrix.
pub fn confusion_matrix(preds: &[u32], truth: &[u32], classes: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != truth.len() {
        return Err(Error::argument(format!(
            "{} predictions for {} truths",
            preds.len(),
            truth.len()
        )));
    }
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        if p == 0 || t == 0 || p as usize > classes || t as usize > classes {
            return Err(Error::argument(format!(
                "labels must be in 1..={classes}, got pred {p}, truth {t}"
            )));
        }
        m[t as usize - 1][p as usize - 1] += 1;
    }
    Ok(m)
}

/// Overall accuracy is exactly the confusion-matrix trace over its total.
pub fn overall_accuracy(confusion: &[Vec<usize>]) -> f64 {
    let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
    if total == 0 {
        return f64::NAN;
    }
    let trace: usize = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    trace as f64 / total as f64
}

pub(crate) fn report_from_confusion(confusion: Vec<Vec<usize>>) -> EvalReport {
    let n: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
    let per_class: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                f64::NAN
            } else {
                row[i] as f64 / total as f64
            }
        })
        .collect();
    EvalReport {
        overall_accuracy: overall_accuracy(&confusion),
        per_class,
        confusion,
        n,
    }
}

/// Mean and sample standard deviation; std is None for fewer than two runs.
pub fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}

/// Accuracy-table formatting: percentages to one decimal, `95.8 ± 1.1` for
/// multi-seed runs, bare `95.8` for a single run.
pub fn format_mean_std(accuracies: &[f64]) -> String {
    let (mean, std) = mean_std(accuracies);
    match std {
        Some(s) => format!("{:.1} ± {:.1}", mean * 100.0, s * 100.0),
        None => format!("{:.1}", mean * 100.0),
    }
}
