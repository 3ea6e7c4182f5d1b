//! The vector-scaled softmax loss family.
//!
//! Each member is determined by per-class parameters `(alpha, beta,
//! delta)`:
//!
//! ```text
//! L(s, y) = -alpha[y] * log( exp(beta[y]*s[y] + delta[y]) / sum_j exp(beta[j]*s[j] + delta[j]) )
//! ```
//!
//! `alpha` re-weights the loss, `beta` rescales logits multiplicatively,
//! and `delta` shifts them additively. The classic presets (balanced,
//! class-balanced, additive logit adjustment, class-dependent
//! temperatures, margin-style offsets) are all obtained by picking the
//! three vectors from the class counts; see [`preset`].
//!
//! The loss is evaluated as `alpha[y] * (logsumexp(a) - a[y])` over the
//! adjusted logits `a[j] = beta[j]*s[j] + delta[j]`, with max
//! subtraction inside the log-sum-exp, so large logits never overflow
//! and `log(0)` never appears.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class parameters selecting one member of the loss family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VSParams {
    /// Positive per-class loss weights.
    pub alpha: Vec<f64>,
    /// Positive per-class multiplicative logit factors.
    pub beta: Vec<f64>,
    /// Finite per-class additive logit offsets.
    pub delta: Vec<f64>,
}

impl VSParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let p = VSParams { alpha, beta, delta };
        p.validate()?;
        Ok(p)
    }

    /// Plain cross entropy: `alpha = beta = 1`, `delta = 0`.
    pub fn cross_entropy(num_classes: usize) -> Self {
        VSParams {
            alpha: vec![1.0; num_classes],
            beta: vec![1.0; num_classes],
            delta: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.alpha.len();
        if c < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {c}")));
        }
        if self.beta.len() != c || self.delta.len() != c {
            return Err(Error::invalid(format!(
                "parameter lengths differ: alpha {}, beta {}, delta {}",
                c,
                self.beta.len(),
                self.delta.len()
            )));
        }
        for y in 0..c {
            if !(self.alpha[y] > 0.0) || !self.alpha[y].is_finite() {
                return Err(Error::invalid(format!("alpha[{y}] must be positive")));
            }
            if !(self.beta[y] > 0.0) || !self.beta[y].is_finite() {
                return Err(Error::invalid(format!("beta[{y}] must be positive")));
            }
            if !self.delta[y].is_finite() {
                return Err(Error::invalid(format!("delta[{y}] must be finite")));
            }
        }
        Ok(())
    }
}

/// Softmax over the adjusted logits of one sample.
#[derive(Debug, Clone)]
pub struct AdjustedDistribution {
    /// Per-class probabilities; sums to 1.
    pub probs: Vec<f64>,
    /// `log sum_j exp(beta[j]*s[j] + delta[j])`.
    pub log_normalizer: f64,
}

fn check_scores(scores: &[f64], params: &VSParams) -> Result<()> {
    params.validate()?;
    if scores.len() != params.num_classes() {
        return Err(Error::invalid(format!(
            "expected {} scores, got {}",
            params.num_classes(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    Ok(())
}

fn adjusted_logits(scores: &[f64], params: &VSParams) -> Vec<f64> {
    scores
        .iter()
        .zip(&params.beta)
        .zip(&params.delta)
        .map(|((s, b), d)| b * s + d)
        .collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// Softmax of the adjusted logits, computed with max subtraction.
pub fn adjusted_softmax(scores: &[f64], params: &VSParams) -> Result<AdjustedDistribution> {
    check_scores(scores, params)?;
    let logits = adjusted_logits(scores, params);
    let lse = log_sum_exp(&logits);
    let probs = logits.iter().map(|a| (a - lse).exp()).collect();
    Ok(AdjustedDistribution {
        probs,
        log_normalizer: lse,
    })
}

/// Loss value `alpha[y] * (logsumexp(a) - a[y])`.
pub fn vs_loss(scores: &[f64], label: usize, params: &VSParams) -> Result<f64> {
    check_scores(scores, params)?;
    if label >= params.num_classes() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            params.num_classes()
        )));
    }
    let logits = adjusted_logits(scores, params);
    Ok(params.alpha[label] * (log_sum_exp(&logits) - logits[label]))
}

/// Exact gradient of [`vs_loss`] with respect to the raw scores:
/// `-alpha[y]*beta[y]*(1 - p[y])` on the true class and
/// `alpha[y]*beta[j]*p[j]` elsewhere, with `p` the adjusted softmax.
pub fn vs_loss_grad(scores: &[f64], label: usize, params: &VSParams) -> Result<Vec<f64>> {
    if label >= params.alpha.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            params.alpha.len()
        )));
    }
    let dist = adjusted_softmax(scores, params)?;
    let a = params.alpha[label];
    let grad = dist
        .probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if j == label {
                -a * params.beta[j] * (1.0 - p)
            } else {
                a * params.beta[j] * p
            }
        })
        .collect();
    Ok(grad)
}

/// The Fisher-consistent subfamily
/// `(delta_y/pi_y) * log(1 + sum_{j != y} (delta_j/delta_y) * exp(s_j - s_y))`.
///
/// Algebraically this equals [`vs_loss`] with `alpha = delta/pi`,
/// `beta = 1`, and additive offsets `log delta`; it is evaluated here
/// from the displayed sum so the identity can be checked between two
/// independent code paths.
pub fn fisher_loss(scores: &[f64], label: usize, fisher_deltas: &[f64], pi: &[f64]) -> Result<f64> {
    let c = scores.len();
    if fisher_deltas.len() != c || pi.len() != c {
        return Err(Error::invalid(format!(
            "length mismatch: scores {c}, deltas {}, pi {}",
            fisher_deltas.len(),
            pi.len()
        )));
    }
    if c < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if label >= c {
        return Err(Error::invalid(format!("label {label} out of range")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    for y in 0..c {
        if !(fisher_deltas[y] > 0.0) || !fisher_deltas[y].is_finite() {
            return Err(Error::invalid(format!(
                "fisher delta[{y}] must be positive"
            )));
        }
        if !(pi[y] > 0.0) || !pi[y].is_finite() {
            return Err(Error::invalid(format!("pi[{y}] must be positive")));
        }
    }
    let sum: f64 = (0..c)
        .filter(|&j| j != label)
        .map(|j| (fisher_deltas[j] / fisher_deltas[label]) * (scores[j] - scores[label]).exp())
        .sum();
    Ok((fisher_deltas[label] / pi[label]) * sum.ln_1p())
}

/// Named parameter presets derived from class counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preset {
    /// `alpha = beta = 1`, `delta = 0`.
    CrossEntropy,
    /// Inverse-prior weights `alpha[y] = 1/pi[y]`.
    Balanced,
    /// Effective-number weights `alpha[y] = (1-p)/(1-p^{N_y})`, `p in (0,1)`.
    ClassBalanced { p: f64 },
    /// Additive adjustment `delta[y] = tau * log pi[y]`, `tau > 0`.
    LogitAdjusted { tau: f64 },
    /// Multiplicative temperatures `beta[y] = (N_y/N_1)^gamma`, `gamma > 0`.
    ClassTemperatures { gamma: f64 },
    /// Margin-style offsets `delta[y] = -c * N_y^{-1/4}`, `c > 0`.
    MarginOffsets { c: f64 },
    /// `beta[y] = (N_y/N_1)^gamma` combined with `delta[y] = tau * log pi[y]`.
    VectorScaled { gamma: f64, tau: f64 },
}

/// Build [`VSParams`] from a preset and per-class sample counts.
///
/// Weight vectors are returned un-normalized; any normalization policy
/// (for example forcing the prior-weighted mean of `alpha` to 1) is
/// applied by the training schedule, not here.
pub fn preset(kind: Preset, class_counts: &[usize]) -> Result<VSParams> {
    let c = class_counts.len();
    if c < 2 {
        return Err(Error::invalid(format!("need at least 2 classes, got {c}")));
    }
    if class_counts.contains(&0) {
        return Err(Error::invalid("class counts must be at least 1"));
    }
    let n_total: usize = class_counts.iter().sum();
    let n_head = *class_counts.iter().max().expect("nonempty") as f64;
    let pi: Vec<f64> = class_counts
        .iter()
        .map(|&n| n as f64 / n_total as f64)
        .collect();

    let mut params = VSParams::cross_entropy(c);
    match kind {
        Preset::CrossEntropy => {}
        Preset::Balanced => {
            params.alpha = pi.iter().map(|p| 1.0 / p).collect();
        }
        Preset::ClassBalanced { p } => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!(
                    "class-balanced p must be in (0,1), got {p}"
                )));
            }
            params.alpha = class_counts
                .iter()
                .map(|&n| (1.0 - p) / (1.0 - p.powi(n as i32)))
                .collect();
        }
        Preset::LogitAdjusted { tau } => {
            if !(tau > 0.0) {
                return Err(Error::invalid(format!("tau must be positive, got {tau}")));
            }
            params.delta = pi.iter().map(|p| tau * p.ln()).collect();
        }
        Preset::ClassTemperatures { gamma } => {
            if !(gamma > 0.0) {
                return Err(Error::invalid(format!(
                    "gamma must be positive, got {gamma}"
                )));
            }
            params.beta = class_counts
                .iter()
                .map(|&n| (n as f64 / n_head).powf(gamma))
                .collect();
        }
        Preset::MarginOffsets { c: scale } => {
            if !(scale > 0.0) {
                return Err(Error::invalid(format!(
                    "margin scale must be positive, got {scale}"
                )));
            }
            params.delta = class_counts
                .iter()
                .map(|&n| -scale * (n as f64).powf(-0.25))
                .collect();
        }
        Preset::VectorScaled { gamma, tau } => {
            if !(gamma > 0.0) {
                return Err(Error::invalid(format!(
                    "gamma must be positive, got {gamma}"
                )));
            }
            if !(tau > 0.0) {
                return Err(Error::invalid(format!("tau must be positive, got {tau}")));
            }
            params.beta = class_counts
                .iter()
                .map(|&n| (n as f64 / n_head).powf(gamma))
                .collect();
            params.delta = pi.iter().map(|p| tau * p.ln()).collect();
        }
    }
    params.validate()?;
    Ok(params)
}
