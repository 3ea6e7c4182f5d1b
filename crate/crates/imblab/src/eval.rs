//! Balanced-accuracy metrics and minority/majority diagnostics.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{vs_loss, VSParams};
use crate::matrix::Matrix;
use crate::model::ScoreModel;

/// Argmax with ties broken toward the lowest class index.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = j;
        }
    }
    best
}

/// Unweighted mean of per-class top-1 accuracies, plus the per-class
/// vector itself. Every class must appear in `labels`.
pub fn balanced_accuracy(scores: &Matrix, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    if scores.rows() != labels.len() || labels.is_empty() {
        return Err(Error::invalid(
            "scores and labels must align and be nonempty",
        ));
    }
    let c = scores.cols();
    if c < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let mut hits = vec![0usize; c];
    let mut totals = vec![0usize; c];
    for (row, &y) in scores.iter_rows().zip(labels) {
        if y >= c {
            return Err(Error::invalid(format!(
                "label {y} out of range for {c} classes"
            )));
        }
        totals[y] += 1;
        if predict(row) == y {
            hits[y] += 1;
        }
    }
    if let Some(y) = totals.iter().position(|&t| t == 0) {
        return Err(Error::invalid(format!("class {y} absent from labels")));
    }
    let per_class: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    let mean = per_class.iter().sum::<f64>() / c as f64;
    Ok((mean, per_class))
}

/// Mean loss on the training set and the class-averaged mean loss on
/// the (balanced) test set.
pub fn surrogate_risks(
    model: &ScoreModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    params: &VSParams,
) -> Result<(f64, f64)> {
    if train.n() == 0 || test.n() == 0 {
        return Err(Error::invalid("datasets must be nonempty"));
    }
    let mut total = 0.0;
    for i in 0..train.n() {
        let s = model.forward(train.feature(i))?;
        total += vs_loss(&s, train.labels()[i], params)?;
    }
    let empirical = total / train.n() as f64;

    let c = test.num_classes();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for i in 0..test.n() {
        let y = test.labels()[i];
        let s = model.forward(test.feature(i))?;
        sums[y] += vs_loss(&s, y, params)?;
        counts[y] += 1;
    }
    let balanced = sums
        .iter()
        .zip(&counts)
        .map(|(s, &k)| s / k as f64)
        .sum::<f64>()
        / c as f64;
    Ok((empirical, balanced))
}

/// How classes are split into majority and minority groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSplit {
    /// The `ceil(C/2)` largest classes form the majority group.
    TopHalf,
    /// Explicit mask, `true` = majority member.
    Custom(Vec<bool>),
}

/// Minority-to-majority accuracy ratio. When the majority group has
/// zero accuracy the value is `+inf` and `majority_zero` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMajRatio {
    pub value: f64,
    pub majority_zero: bool,
}

/// Ratio of mean minority accuracy to mean majority accuracy.
pub fn min_maj_ratio(
    per_class_accuracy: &[f64],
    counts: &[usize],
    split: &GroupSplit,
) -> Result<MinMajRatio> {
    let c = per_class_accuracy.len();
    if c < 2 || counts.len() != c {
        return Err(Error::invalid(
            "need matching per-class accuracies and counts",
        ));
    }
    let majority_mask: Vec<bool> = match split {
        GroupSplit::TopHalf => {
            // Classes are canonically ordered by count, so the head
            // ceil(C/2) indices are the largest classes.
            let head = c.div_ceil(2);
            if counts.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::invalid(
                    "counts must be nonincreasing for the top-half split",
                ));
            }
            (0..c).map(|y| y < head).collect()
        }
        GroupSplit::Custom(mask) => {
            if mask.len() != c {
                return Err(Error::invalid("custom split mask length mismatch"));
            }
            mask.clone()
        }
    };
    let (mut maj_sum, mut maj_n, mut min_sum, mut min_n) = (0.0, 0usize, 0.0, 0usize);
    for (y, &is_maj) in majority_mask.iter().enumerate() {
        if is_maj {
            maj_sum += per_class_accuracy[y];
            maj_n += 1;
        } else {
            min_sum += per_class_accuracy[y];
            min_n += 1;
        }
    }
    if maj_n == 0 || min_n == 0 {
        return Err(Error::invalid("both groups must be nonempty"));
    }
    let maj = maj_sum / maj_n as f64;
    let min = min_sum / min_n as f64;
    if maj == 0.0 {
        return Ok(MinMajRatio {
            value: f64::INFINITY,
            majority_zero: true,
        });
    }
    Ok(MinMajRatio {
        value: min / maj,
        majority_zero: false,
    })
}

/// Metrics bundle for one model/dataset pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub balanced_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub balanced_surrogate_risk: f64,
    pub empirical_risk: f64,
    pub acc_ratio_min_maj: Option<f64>,
    pub acc_ratio_flagged: bool,
}

/// Evaluate a model: balanced accuracy on the test set, surrogate
/// risks, and the minority/majority ratio of the test per-class
/// accuracies under the top-half split.
pub fn evaluate(
    model: &ScoreModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    params: &VSParams,
) -> Result<EvalReport> {
    let scores = model.score_dataset(test)?;
    let (bal_acc, per_class) = balanced_accuracy(&scores, test.labels())?;
    let (empirical, balanced_risk) = surrogate_risks(model, train, test, params)?;
    let ratio = min_maj_ratio(&per_class, test.class_counts(), &GroupSplit::TopHalf)?;
    Ok(EvalReport {
        balanced_accuracy: bal_acc,
        per_class_accuracy: per_class,
        balanced_surrogate_risk: balanced_risk,
        empirical_risk: empirical,
        acc_ratio_min_maj: if ratio.majority_zero {
            None
        } else {
            Some(ratio.value)
        },
        acc_ratio_flagged: ratio.majority_zero,
    })
}
