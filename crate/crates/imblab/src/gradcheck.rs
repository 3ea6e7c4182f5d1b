//! Finite-difference audits of the analytic gradients.
//!
//! Two suites: loss-level (the gradient of the loss with respect to
//! the scores, central differences with step 1e-6) and model-level
//! (the gradient of a batch mean with respect to every parameter,
//! step 1e-5). Relative error is `|a - n| / max(1, |a|, |n|)`, so
//! near-zero components are judged absolutely.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::losses::{vs_loss, vs_loss_grad, VSParams};
use crate::matrix::Matrix;
use crate::model::{loss_and_grads, Gradients, ModelKind, ScoreModel};
use crate::seed;

pub const LOSS_LEVEL_STEP: f64 = 1e-6;
pub const LOSS_LEVEL_TOLERANCE: f64 = 1e-5;
pub const MODEL_LEVEL_STEP: f64 = 1e-5;
pub const MODEL_LEVEL_TOLERANCE: f64 = 1e-4;

/// The worst case seen by a suite.
#[derive(Debug, Clone, Serialize)]
pub struct WorstCase {
    pub trial: usize,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst: Option<WorstCase>,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

fn track(report: &mut GradCheckReport, trial: usize, component: usize, a: f64, n: f64) {
    let rel = relative_error(a, n);
    if rel > report.max_relative_error {
        report.max_relative_error = rel;
        report.worst = Some(WorstCase {
            trial,
            component,
            analytic: a,
            numeric: n,
            relative_error: rel,
        });
    }
}

/// Central differences on [`vs_loss`] against [`vs_loss_grad`].
pub fn check_loss_gradients(trials: usize, seed_value: u64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed_value, "gradcheck-loss", 0);
    let mut report = GradCheckReport {
        trials,
        max_relative_error: 0.0,
        tolerance: LOSS_LEVEL_TOLERANCE,
        passed: false,
        worst: None,
    };
    for trial in 0..trials {
        let c = rng.random_range(2..10);
        let params = VSParams::new(
            (0..c).map(|_| rng.random_range(0.2..3.0)).collect(),
            (0..c).map(|_| rng.random_range(0.2..3.0)).collect(),
            (0..c).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )?;
        let scores: Vec<f64> = (0..c).map(|_| rng.random_range(-5.0..5.0)).collect();
        let label = rng.random_range(0..c);
        let analytic = vs_loss_grad(&scores, label, &params)?;
        for j in 0..c {
            let mut plus = scores.clone();
            let mut minus = scores.clone();
            plus[j] += LOSS_LEVEL_STEP;
            minus[j] -= LOSS_LEVEL_STEP;
            let numeric = (vs_loss(&plus, label, &params)? - vs_loss(&minus, label, &params)?)
                / (2.0 * LOSS_LEVEL_STEP);
            track(&mut report, trial, j, analytic[j], numeric);
        }
    }
    report.passed = report.max_relative_error <= report.tolerance;
    Ok(report)
}

fn flatten(grads: &Gradients) -> Vec<f64> {
    match grads {
        Gradients::Linear { w, b } => w.data().iter().chain(b).copied().collect(),
        Gradients::OneHidden { w1, b1, w2, b2 } => w1
            .data()
            .iter()
            .chain(b1)
            .chain(w2.data())
            .chain(b2)
            .copied()
            .collect(),
    }
}

fn param_count(model: &ScoreModel) -> usize {
    match model {
        ScoreModel::Linear { w, b } => w.data().len() + b.len(),
        ScoreModel::OneHidden { w1, b1, w2, b2 } => {
            w1.data().len() + b1.len() + w2.data().len() + b2.len()
        }
    }
}

fn param_mut(model: &mut ScoreModel, idx: usize) -> &mut f64 {
    match model {
        ScoreModel::Linear { w, b } => {
            let nw = w.data().len();
            if idx < nw {
                &mut w.data_mut()[idx]
            } else {
                &mut b[idx - nw]
            }
        }
        ScoreModel::OneHidden { w1, b1, w2, b2 } => {
            let (n1, nb1, n2) = (w1.data().len(), b1.len(), w2.data().len());
            if idx < n1 {
                &mut w1.data_mut()[idx]
            } else if idx < n1 + nb1 {
                &mut b1[idx - n1]
            } else if idx < n1 + nb1 + n2 {
                &mut w2.data_mut()[idx - n1 - nb1]
            } else {
                &mut b2[idx - n1 - nb1 - n2]
            }
        }
    }
}

/// Central differences over every model parameter against the
/// backpropagated batch gradient.
pub fn check_model_gradients(trials: usize, seed_value: u64) -> Result<GradCheckReport> {
    let mut rng = seed::rng(seed_value, "gradcheck-model", 0);
    let mut report = GradCheckReport {
        trials,
        max_relative_error: 0.0,
        tolerance: MODEL_LEVEL_TOLERANCE,
        passed: false,
        worst: None,
    };
    for trial in 0..trials {
        let d = rng.random_range(2..6);
        let c = rng.random_range(2..5);
        let kind = if trial % 2 == 0 {
            ModelKind::Linear
        } else {
            ModelKind::OneHidden {
                width: rng.random_range(2..7),
            }
        };
        let model = ScoreModel::init(kind, d, c, rng.random_range(0..1u64 << 32))?;
        let batch = rng.random_range(1..8);
        let rows: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let features = Matrix::from_rows(&rows);
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..c)).collect();
        let indices: Vec<usize> = (0..batch).collect();
        let params = VSParams::new(
            (0..c).map(|_| rng.random_range(0.3..2.0)).collect(),
            (0..c).map(|_| rng.random_range(0.3..2.0)).collect(),
            (0..c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;

        let (_, grads) = loss_and_grads(&model, &features, &labels, &indices, &params)?;
        let analytic = flatten(&grads);
        debug_assert_eq!(analytic.len(), param_count(&model));
        for (idx, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            *param_mut(&mut plus, idx) += MODEL_LEVEL_STEP;
            let mut minus = model.clone();
            *param_mut(&mut minus, idx) -= MODEL_LEVEL_STEP;
            let (lp, _) = loss_and_grads(&plus, &features, &labels, &indices, &params)?;
            let (lm, _) = loss_and_grads(&minus, &features, &labels, &indices, &params)?;
            let numeric = (lp - lm) / (2.0 * MODEL_LEVEL_STEP);
            track(&mut report, trial, idx, a, numeric);
        }
    }
    report.passed = report.max_relative_error <= report.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_pass() {
        let loss = check_loss_gradients(50, 0).unwrap();
        assert!(
            loss.passed,
            "loss-level max error {}",
            loss.max_relative_error
        );
        let model = check_model_gradients(5, 0).unwrap();
        assert!(
            model.passed,
            "model-level max error {}",
            model.max_relative_error
        );
    }

    #[test]
    fn harness_detects_an_injected_sign_error() {
        // A wrong-signed analytic gradient must blow past the tolerance.
        let scores = [0.7, -0.3];
        let params = VSParams::cross_entropy(2);
        let mut g = vs_loss_grad(&scores, 0, &params).unwrap();
        g[0] = -g[0];
        let mut worst = 0.0f64;
        for j in 0..2 {
            let mut plus = scores;
            let mut minus = scores;
            plus[j] += LOSS_LEVEL_STEP;
            minus[j] -= LOSS_LEVEL_STEP;
            let numeric = (vs_loss(&plus, 0, &params).unwrap()
                - vs_loss(&minus, 0, &params).unwrap())
                / (2.0 * LOSS_LEVEL_STEP);
            worst = worst.max(relative_error(g[j], numeric));
        }
        assert!(worst > LOSS_LEVEL_TOLERANCE);
    }
}
