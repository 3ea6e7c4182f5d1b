//! Generalization-bound machinery.
//!
//! The pieces assembled here:
//!
//! - `B_y`: the minimal true-class score over the class-`y` training
//!   samples, and the related minimal margin.
//! - `beta_tilde[y] = sqrt(beta[y]^2 + (sum_{j != y} beta[j])^2)`, the
//!   gradient-norm aggregation of the multiplicative factors.
//! - per-class local Lipschitz constants
//!   `mu[y] = alpha[y] * beta_tilde[y] * (1 - p_y)`, in two readings of
//!   the softmax argument (per-sample supremum, or the conservative
//!   reconstruction from `B_y` and per-class maxima).
//! - empirical Rademacher complexity of the norm-bounded linear class,
//!   analytic or Monte Carlo.
//! - the empirical-risk term
//!   `phi = (1/(C*pi_C)) * (risk + 3M*sqrt(log(2/delta)/(2N)))`,
//!   the data-dependent bound
//!   `phi + (complexity/(C*pi_C)) * sum_y mu[y]*sqrt(pi[y])`,
//!   and the per-class union bound it is compared against.
//! - the sharpness comparator `h1`, whose sign decides which bound is
//!   tighter when `mu[y]` decays like `N_y^{-kappa}`.
//!
//! All bound values are computed with the asymptotic constants set
//! to 1, so they are only meaningful relative to each other under the
//! same convention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{adjusted_softmax, vs_loss, VSParams};
use crate::matrix::Matrix;
use crate::seed;

fn class_count_from(scores: &Matrix, labels: &[usize]) -> Result<usize> {
    if scores.rows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} score rows but {} labels",
            scores.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty score matrix"));
    }
    let c = scores.cols();
    if c < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let mut seen = vec![false; c];
    for &y in labels {
        if y >= c {
            return Err(Error::invalid(format!(
                "label {y} out of range for {c} classes"
            )));
        }
        seen[y] = true;
    }
    if let Some(y) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("class {y} has no samples")));
    }
    Ok(c)
}

/// `B_y`: minimum over class-`y` samples of the true-class score.
pub fn b_min(scores: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let c = class_count_from(scores, labels)?;
    let mut mins = vec![f64::INFINITY; c];
    for (row, &y) in scores.iter_rows().zip(labels) {
        mins[y] = mins[y].min(row[y]);
    }
    Ok(mins)
}

/// Minimal margin: minimum over class-`y` samples of the true-class
/// score minus the best competing score.
pub fn min_margin(scores: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let c = class_count_from(scores, labels)?;
    let mut margins = vec![f64::INFINITY; c];
    for (row, &y) in scores.iter_rows().zip(labels) {
        let best_other = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        margins[y] = margins[y].min(row[y] - best_other);
    }
    Ok(margins)
}

/// `sqrt(beta[y]^2 + (sum_{j != y} beta[j])^2)` per class.
pub fn beta_tilde(beta: &[f64]) -> Result<Vec<f64>> {
    if beta.len() < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if beta.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(Error::invalid("beta entries must be positive"));
    }
    let total: f64 = beta.iter().sum();
    Ok(beta
        .iter()
        .map(|&b| (b * b + (total - b) * (total - b)).sqrt())
        .collect())
}

/// How the softmax argument of the local Lipschitz constant is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    /// Per-sample supremum of the gradient-norm cap: for each class,
    /// the maximum of `alpha_y * beta_tilde_y * (1 - p_y(x))` over the
    /// class's samples. Tight.
    Pointwise,
    /// Conservative reconstruction: the true-class adjusted logit is
    /// set to `beta_y * B_y + delta_y` and every competing adjusted
    /// logit to its per-class maximum, which upper-bounds Pointwise.
    BSurrogate,
}

/// Per-class local Lipschitz constants of the loss.
pub fn local_lipschitz(
    scores: &Matrix,
    labels: &[usize],
    params: &VSParams,
    mode: MuMode,
) -> Result<Vec<f64>> {
    let c = class_count_from(scores, labels)?;
    if params.num_classes() != c {
        return Err(Error::invalid(format!(
            "params have {} classes, scores have {c}",
            params.num_classes()
        )));
    }
    params.validate()?;
    let bt = beta_tilde(&params.beta)?;
    match mode {
        MuMode::Pointwise => {
            let mut mu = vec![0.0f64; c];
            for (row, &y) in scores.iter_rows().zip(labels) {
                let p = adjusted_softmax(row, params)?.probs[y];
                mu[y] = mu[y].max(params.alpha[y] * bt[y] * (1.0 - p));
            }
            Ok(mu)
        }
        MuMode::BSurrogate => {
            // Per-class extremes of the adjusted logits over each
            // class's own samples.
            let mut min_true = vec![f64::INFINITY; c];
            let mut max_adj = vec![vec![f64::NEG_INFINITY; c]; c];
            for (row, &y) in scores.iter_rows().zip(labels) {
                for j in 0..c {
                    let adj = params.beta[j] * row[j] + params.delta[j];
                    if j == y {
                        min_true[y] = min_true[y].min(adj);
                    }
                    max_adj[y][j] = max_adj[y][j].max(adj);
                }
            }
            let mut mu = vec![0.0; c];
            for y in 0..c {
                let mut logits = max_adj[y].clone();
                logits[y] = min_true[y];
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|a| (a - m).exp()).sum();
                let p = (logits[y] - m).exp() / z;
                mu[y] = params.alpha[y] * bt[y] * (1.0 - p);
            }
            Ok(mu)
        }
    }
}

/// How the empirical complexity is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityMethod {
    /// `B * sqrt(sum_n ||x_n||^2) / N`, the standard cap for the
    /// norm-bounded linear class.
    LinearAnalytic,
    /// Mean over sign-vector draws of `B * ||sum_n xi_n x_n|| / N`,
    /// the exact per-draw supremum for the same class.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub value: f64,
    pub method: ComplexityMethod,
    pub norm_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Empirical Rademacher complexity of the norm-bounded linear class on
/// the given feature matrix.
pub fn complexity(
    features: &Matrix,
    method: ComplexityMethod,
    norm_bound: f64,
    mc_samples: usize,
    seed_value: u64,
) -> Result<ComplexityEstimate> {
    if features.rows() == 0 {
        return Err(Error::invalid("empty feature matrix"));
    }
    if !(norm_bound > 0.0) || !norm_bound.is_finite() {
        return Err(Error::invalid(format!(
            "norm bound must be positive, got {norm_bound}"
        )));
    }
    let n = features.rows() as f64;
    match method {
        ComplexityMethod::LinearAnalytic => {
            let value = norm_bound * features.norm_sq().sqrt() / n;
            Ok(ComplexityEstimate {
                value,
                method,
                norm_bound,
                mc_samples: None,
                seed: None,
            })
        }
        ComplexityMethod::MonteCarlo => {
            if mc_samples == 0 {
                return Err(Error::invalid("Monte Carlo needs at least 1 sample"));
            }
            let d = features.cols();
            let mut rng = seed::rng(seed_value, "rademacher", 0);
            let mut total = 0.0;
            let mut signed_sum = vec![0.0f64; d];
            for _ in 0..mc_samples {
                signed_sum.iter_mut().for_each(|v| *v = 0.0);
                for row in features.iter_rows() {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    for (acc, x) in signed_sum.iter_mut().zip(row) {
                        *acc += sign * x;
                    }
                }
                let norm = signed_sum.iter().map(|v| v * v).sum::<f64>().sqrt();
                total += norm_bound * norm / n;
            }
            Ok(ComplexityEstimate {
                value: total / mc_samples as f64,
                method,
                norm_bound,
                mc_samples: Some(mc_samples),
                seed: Some(seed_value),
            })
        }
    }
}

/// Empirical-risk-plus-confidence term
/// `(1/(C*pi_C)) * (risk + 3M*sqrt(log(2/delta)/(2N)))`.
pub fn phi(
    empirical_risk: f64,
    m_cap: f64,
    delta: f64,
    num_classes: usize,
    pi_tail: f64,
    n: usize,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    if !(pi_tail > 0.0) {
        return Err(Error::invalid("tail prior must be positive"));
    }
    if !(m_cap > 0.0) {
        return Err(Error::invalid("loss cap must be positive"));
    }
    if n == 0 || num_classes < 2 {
        return Err(Error::invalid("need at least 1 sample and 2 classes"));
    }
    if empirical_risk < 0.0 || !empirical_risk.is_finite() {
        return Err(Error::invalid(
            "empirical risk must be finite and nonnegative",
        ));
    }
    let conf = 3.0 * m_cap * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt();
    Ok((empirical_risk + conf) / (num_classes as f64 * pi_tail))
}

/// `phi + (complexity/(C*pi_C)) * sum_y mu[y]*sqrt(pi[y])`.
pub fn data_dependent_bound(
    phi_value: f64,
    complexity_value: f64,
    mu: &[f64],
    pi: &[f64],
) -> Result<f64> {
    if mu.len() != pi.len() || mu.is_empty() {
        return Err(Error::invalid("mu and pi must have equal nonzero length"));
    }
    let pi_tail = pi.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(pi_tail > 0.0) {
        return Err(Error::invalid("priors must be positive"));
    }
    let c = pi.len() as f64;
    let sum: f64 = mu.iter().zip(pi).map(|(m, p)| m * p.sqrt()).sum();
    Ok(phi_value + complexity_value / (c * pi_tail) * sum)
}

/// Per-class union bound: the average over classes of
/// `risk_y + mu * complexity_y + 3M*sqrt(log(2C/delta)/(2N_y))`.
pub fn union_bound(
    per_class_risks: &[f64],
    per_class_complexities: &[f64],
    mu_global: f64,
    m_cap: f64,
    delta: f64,
    counts: &[usize],
) -> Result<f64> {
    let c = per_class_risks.len();
    if c < 2 || per_class_complexities.len() != c || counts.len() != c {
        return Err(Error::invalid(
            "per-class inputs must share a length of at least 2",
        ));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("class counts must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    if !(m_cap > 0.0) || mu_global < 0.0 {
        return Err(Error::invalid(
            "loss cap must be positive and mu nonnegative",
        ));
    }
    let log_term = (2.0 * c as f64 / delta).ln();
    let total: f64 = (0..c)
        .map(|y| {
            per_class_risks[y]
                + mu_global * per_class_complexities[y]
                + 3.0 * m_cap * (log_term / (2.0 * counts[y] as f64)).sqrt()
        })
        .sum();
    Ok(total / c as f64)
}

fn check_sorted_priors(pi: &[f64]) -> Result<f64> {
    if pi.len() < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("priors sum to {sum}, expected 1")));
    }
    if pi.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("priors must be sorted nonincreasing"));
    }
    let tail = *pi.last().expect("nonempty");
    if !(tail > 0.0) {
        return Err(Error::invalid("priors must be positive"));
    }
    Ok(tail)
}

/// Sharpness comparator
/// `h1(kappa) = (1/pi_C^kappa) * sum_y pi_y^{-1/2} - (1/pi_C) * sum_y pi_y^{1/2-kappa}`.
///
/// Nonnegative for `kappa >= 1`; its sign decides whether the
/// data-dependent bound beats the union bound when `mu_y` decays like
/// `N_y^{-kappa}`. Evaluated in the factored form
/// `(pi_C^{1-kappa} * A - B) / pi_C` so that `h1(1)` is exactly zero.
pub fn h1(kappa: f64, pi: &[f64]) -> Result<f64> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!(
            "kappa must be at least 1, got {kappa}"
        )));
    }
    let tail = check_sorted_priors(pi)?;
    let a: f64 = pi.iter().map(|p| p.powf(-0.5)).sum();
    let b: f64 = pi.iter().map(|p| p.powf(0.5 - kappa)).sum();
    Ok((tail.powf(1.0 - kappa) * a - b) / tail)
}

/// `h2(t) = t^{1-kappa} * ln(t)`, the integrand driving the
/// monotonicity of [`h1`]; increasing on `(0,1)` for `kappa > 1`.
pub fn h2(t: f64, kappa: f64) -> f64 {
    t.powf(1.0 - kappa) * t.ln()
}

/// Everything needed to audit both bounds for one model/dataset pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub phi: f64,
    /// Loss cap `M`; defaults to the empirical maximum loss.
    pub m_cap: f64,
    pub delta: f64,
    /// Constants dropped by the asymptotic notation are set to 1.
    pub constants_convention: String,
    /// Class priors, sorted nonincreasing.
    pub pi: Vec<f64>,
    /// The mode whose `mu` feeds the bound below.
    pub mu_mode: MuMode,
    pub mu_pointwise: Vec<f64>,
    pub mu_bsurrogate: Vec<f64>,
    /// Minimal true-class scores `B_y`.
    pub b: Vec<f64>,
    pub min_margins: Vec<f64>,
    pub complexity: ComplexityEstimate,
    pub data_dependent_bound: f64,
    pub union_bound: f64,
    /// Per-class contributions `(complexity/(C*pi_C)) * mu_y * sqrt(pi_y)`,
    /// so `data_dependent_bound = phi + sum(per_class_terms)`.
    pub per_class_terms: Vec<f64>,
    pub empirical_risk: f64,
    pub per_class_risks: Vec<f64>,
}

/// Assemble a [`BoundReport`] from scores, labels, and loss parameters.
///
/// The per-class complexities feeding the union bound are scaled from
/// the aggregate estimate as `complexity * sqrt(N/N_y)`, the `1/sqrt(N)`
/// rate applied per class.
pub fn vs_bound_report(
    scores: &Matrix,
    labels: &[usize],
    params: &VSParams,
    complexity: ComplexityEstimate,
    m_cap: Option<f64>,
    delta: f64,
    mu_mode: MuMode,
) -> Result<BoundReport> {
    let c = class_count_from(scores, labels)?;
    if params.num_classes() != c {
        return Err(Error::invalid("params do not match score width"));
    }
    let n = labels.len();

    let mut counts = vec![0usize; c];
    for &y in labels {
        counts[y] += 1;
    }
    let pi: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    let pi_tail = pi.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut per_class_loss_sums = vec![0.0; c];
    let mut max_loss = 0.0f64;
    for (row, &y) in scores.iter_rows().zip(labels) {
        let l = vs_loss(row, y, params)?;
        per_class_loss_sums[y] += l;
        max_loss = max_loss.max(l);
    }
    let empirical_risk: f64 = per_class_loss_sums.iter().sum::<f64>() / n as f64;
    let per_class_risks: Vec<f64> = per_class_loss_sums
        .iter()
        .zip(&counts)
        .map(|(s, &k)| s / k as f64)
        .collect();

    let m_cap = match m_cap {
        Some(m) if m > 0.0 => m,
        Some(m) => {
            return Err(Error::invalid(format!(
                "loss cap must be positive, got {m}"
            )))
        }
        // Guard against an exactly-zero empirical maximum.
        None => max_loss.max(f64::MIN_POSITIVE),
    };

    let phi_value = phi(empirical_risk, m_cap, delta, c, pi_tail, n)?;
    let mu_pointwise = local_lipschitz(scores, labels, params, MuMode::Pointwise)?;
    let mu_bsurrogate = local_lipschitz(scores, labels, params, MuMode::BSurrogate)?;
    let mu = match mu_mode {
        MuMode::Pointwise => &mu_pointwise,
        MuMode::BSurrogate => &mu_bsurrogate,
    };

    let b = b_min(scores, labels)?;
    let min_margins = min_margin(scores, labels)?;

    let dd = data_dependent_bound(phi_value, complexity.value, mu, &pi)?;
    let per_class_terms: Vec<f64> = mu
        .iter()
        .zip(&pi)
        .map(|(m, p)| complexity.value / (c as f64 * pi_tail) * m * p.sqrt())
        .collect();

    let mu_global = mu.iter().cloned().fold(0.0, f64::max);
    let per_class_complexities: Vec<f64> = counts
        .iter()
        .map(|&k| complexity.value * (n as f64 / k as f64).sqrt())
        .collect();
    let ub = union_bound(
        &per_class_risks,
        &per_class_complexities,
        mu_global,
        m_cap,
        delta,
        &counts,
    )?;

    Ok(BoundReport {
        phi: phi_value,
        m_cap,
        delta,
        constants_convention: "asymptotic constants set to 1".to_string(),
        pi,
        mu_mode,
        mu_pointwise,
        mu_bsurrogate,
        b,
        min_margins,
        complexity,
        data_dependent_bound: dd,
        union_bound: ub,
        per_class_terms,
        empirical_risk,
        per_class_risks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::vs_loss_grad;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_class_scores() -> (Matrix, Vec<usize>) {
        // class 0: [2, 0], [1, 0.5]; class 1: [0, 1]
        (
            Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 0.5], vec![0.0, 1.0]]),
            vec![0, 0, 1],
        )
    }

    fn random_params(rng: &mut ChaCha8Rng, c: usize) -> VSParams {
        VSParams {
            alpha: (0..c).map(|_| rng.random_range(0.2..3.0)).collect(),
            beta: (0..c).map(|_| rng.random_range(0.2..3.0)).collect(),
            delta: (0..c).map(|_| rng.random_range(-2.0..2.0)).collect(),
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, c: usize, per_class: usize) -> (Matrix, Vec<usize>) {
        let n = c * per_class;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for y in 0..c {
            for _ in 0..per_class {
                rows.push((0..c).map(|_| rng.random_range(-4.0..4.0)).collect());
                labels.push(y);
            }
        }
        (Matrix::from_rows(&rows), labels)
    }

    #[test]
    fn b_min_takes_the_minimum_true_score() {
        let (scores, labels) = two_class_scores();
        let b = b_min(&scores, &labels).unwrap();
        assert_eq!(b, vec![1.0, 1.0]);
    }

    #[test]
    fn b_min_unchanged_by_larger_sample() {
        let scores = Matrix::from_rows(&[vec![2.0, 0.0], vec![5.0, 0.0], vec![0.0, 1.0]]);
        let b = b_min(&scores, &[0, 0, 1]).unwrap();
        assert_eq!(b[0], 2.0);
    }

    #[test]
    fn b_min_rejects_empty_class() {
        let scores = Matrix::from_rows(&[vec![1.0, 0.0]]);
        assert!(b_min(&scores, &[0]).is_err());
    }

    #[test]
    fn min_margin_values_and_remark_inequality() {
        let (scores, labels) = two_class_scores();
        let margins = min_margin(&scores, &labels).unwrap();
        assert_eq!(margins[0], 0.5); // min(2-0, 1-0.5)
        assert_eq!(margins[1], 1.0);
        // B_0 - margin_0 = 0.5 <= max competing logit over class 0 = 0.5.
        let b = b_min(&scores, &labels).unwrap();
        assert!(b[0] - margins[0] <= 0.5 + 1e-12);
    }

    #[test]
    fn min_margin_zero_for_tied_scores() {
        let scores = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let margins = min_margin(&scores, &[0, 1]).unwrap();
        assert_eq!(margins, vec![0.0, 0.0]);
    }

    #[test]
    fn remark_inequality_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let c = rng.random_range(2..6);
            let (scores, labels) = random_instance(&mut rng, c, 4);
            let b = b_min(&scores, &labels).unwrap();
            let margins = min_margin(&scores, &labels).unwrap();
            for y in 0..c {
                let max_other = scores
                    .iter_rows()
                    .zip(&labels)
                    .filter(|&(_, &l)| l == y)
                    .flat_map(|(row, _)| {
                        row.iter()
                            .enumerate()
                            .filter(|&(j, _)| j != y)
                            .map(|(_, &v)| v)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(b[y] - margins[y] <= max_other + 1e-12);
            }
        }
    }

    #[test]
    fn beta_tilde_frozen_values() {
        let bt = beta_tilde(&[1.0, 1.0]).unwrap();
        assert!((bt[0] - 2f64.sqrt()).abs() < 1e-12);
        let bt = beta_tilde(&[1.0, 1.0, 1.0]).unwrap();
        for v in bt {
            assert!((v - 5f64.sqrt()).abs() < 1e-12);
        }
        let bt = beta_tilde(&[2.0, 1.0, 1.0]).unwrap();
        assert!((bt[0] - 8f64.sqrt()).abs() < 1e-12);
        assert!((bt[1] - 10f64.sqrt()).abs() < 1e-12);
        assert!((bt[2] - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pointwise_mu_single_sample_case() {
        let scores = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 5.0]]);
        let mu = local_lipschitz(
            &scores,
            &[0, 1],
            &VSParams::cross_entropy(2),
            MuMode::Pointwise,
        )
        .unwrap();
        assert!((mu[0] - 2f64.sqrt() * 0.5).abs() < 1e-12, "got {}", mu[0]);
    }

    #[test]
    fn confident_class_has_vanishing_mu() {
        let scores = Matrix::from_rows(&[vec![60.0, 0.0], vec![0.0, 60.0]]);
        let mu = local_lipschitz(
            &scores,
            &[0, 1],
            &VSParams::cross_entropy(2),
            MuMode::Pointwise,
        )
        .unwrap();
        assert!(mu[0] < 1e-20);
        assert!(mu[1] < 1e-20);
    }

    #[test]
    fn bsurrogate_dominates_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let c = rng.random_range(2..6);
            let params = random_params(&mut rng, c);
            let per_class = rng.random_range(1..6);
            let (scores, labels) = random_instance(&mut rng, c, per_class);
            let pw = local_lipschitz(&scores, &labels, &params, MuMode::Pointwise).unwrap();
            let bs = local_lipschitz(&scores, &labels, &params, MuMode::BSurrogate).unwrap();
            for y in 0..c {
                assert!(
                    bs[y] >= pw[y] - 1e-12,
                    "surrogate {} below pointwise {} at class {y}",
                    bs[y],
                    pw[y]
                );
            }
        }
    }

    #[test]
    fn segment_lipschitz_soundness() {
        // |L(s) - L(s')| <= sup ||grad|| along the segment * ||s - s'||,
        // and every sampled gradient norm respects the analytic cap.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..50 {
            let c = rng.random_range(2..6);
            let params = random_params(&mut rng, c);
            let y = rng.random_range(0..c);
            let s0: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
            let s1: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
            let bt = beta_tilde(&params.beta).unwrap();

            let mut sup_norm = 0.0f64;
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                let s: Vec<f64> = s0.iter().zip(&s1).map(|(a, b)| a + t * (b - a)).collect();
                let g = vs_loss_grad(&s, y, &params).unwrap();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let p = adjusted_softmax(&s, &params).unwrap().probs[y];
                let cap = params.alpha[y] * bt[y] * (1.0 - p);
                assert!(norm <= cap + 1e-12, "norm {norm} above cap {cap}");
                sup_norm = sup_norm.max(norm);
            }
            let dist = s0
                .iter()
                .zip(&s1)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let l0 = vs_loss(&s0, y, &params).unwrap();
            let l1 = vs_loss(&s1, y, &params).unwrap();
            assert!((l0 - l1).abs() <= sup_norm * dist + 1e-9);
        }
    }

    #[test]
    fn complexity_zero_features() {
        let features = Matrix::zeros(4, 3);
        let est = complexity(&features, ComplexityMethod::LinearAnalytic, 1.0, 0, 0).unwrap();
        assert_eq!(est.value, 0.0);
        let est = complexity(&features, ComplexityMethod::MonteCarlo, 1.0, 16, 0).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn duplicating_dataset_scales_analytic_estimate() {
        let rows = vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![3.0, -1.0]];
        let single = Matrix::from_rows(&rows);
        let mut doubled_rows = rows.clone();
        doubled_rows.extend(rows);
        let doubled = Matrix::from_rows(&doubled_rows);
        let a = complexity(&single, ComplexityMethod::LinearAnalytic, 2.0, 0, 0).unwrap();
        let b = complexity(&doubled, ComplexityMethod::LinearAnalytic, 2.0, 0, 0).unwrap();
        assert!((b.value - a.value / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_exhaustive_enumeration() {
        // N = 12 points in the plane; enumerate all 2^12 sign vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let features = Matrix::from_rows(&rows);
        let n = 12usize;
        let mut exact = 0.0;
        for mask in 0u32..(1 << n) {
            let mut sum = [0.0f64; 2];
            for (i, row) in rows.iter().enumerate() {
                let sign = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                sum[0] += sign * row[0];
                sum[1] += sign * row[1];
            }
            exact += (sum[0] * sum[0] + sum[1] * sum[1]).sqrt() / n as f64;
        }
        exact /= f64::from(1u32 << n);
        let mc = complexity(&features, ComplexityMethod::MonteCarlo, 1.0, 10_000, 7).unwrap();
        let rel = (mc.value - exact).abs() / exact;
        assert!(
            rel < 0.05,
            "monte carlo {} vs exact {exact} ({rel})",
            mc.value
        );
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let features = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let a = complexity(&features, ComplexityMethod::MonteCarlo, 1.0, 100, 11).unwrap();
        let b = complexity(&features, ComplexityMethod::MonteCarlo, 1.0, 100, 11).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn phi_frozen_value() {
        // N=100, C=2, pi_C=0.25, risk=0.5, M=10, delta=0.05.
        let v = phi(0.5, 10.0, 0.05, 2, 0.25, 100).unwrap();
        assert!((v - 9.148609094443717).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn phi_limits() {
        let v = phi(0.0, 1e-300, 0.05, 2, 0.5, 100).unwrap();
        assert!(v < 1e-290);
        let half = phi(0.0, 1.0, 0.05, 2, 0.5, 100).unwrap();
        let double = phi(0.0, 1.0, 0.05, 2, 0.5, 200).unwrap();
        assert!((half / double - 2f64.sqrt()).abs() < 1e-12);
        assert!(phi(0.5, 1.0, 0.05, 2, 0.0, 100).is_err());
    }

    #[test]
    fn data_dependent_bound_frozen_value() {
        let v = data_dependent_bound(1.0, 0.1, &[1.0, 1.0], &[0.75, 0.25]).unwrap();
        let expected = 1.0 + 0.2 * (0.75f64.sqrt() + 0.5);
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 1.273205080756888).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn data_dependent_bound_degenerate_cases() {
        let v = data_dependent_bound(2.5, 0.0, &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(v, 2.5);
        let v = data_dependent_bound(2.5, 10.0, &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(v, 2.5);
    }

    #[test]
    fn balanced_mu_sum_is_mu_sqrt_c() {
        // With uniform priors and equal mu, sum mu_y sqrt(pi_y) = mu * sqrt(C).
        let c = 8usize;
        let pi = vec![1.0 / c as f64; c];
        let mu = vec![0.7; c];
        let v = data_dependent_bound(0.0, 1.0, &mu, &pi).unwrap();
        let expected = 1.0 / (c as f64 * (1.0 / c as f64)) * 0.7 * (c as f64).sqrt();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn union_bound_values() {
        assert!(
            union_bound(&[0.0, 0.0], &[0.0, 0.0], 0.0, 1e-300, 0.05, &[5, 5]).unwrap() < 1e-290
        );
        // Balanced classes get identical confidence terms; hand-check a
        // 2-class instance term by term.
        let risks = [0.4, 0.9];
        let comps = [0.02, 0.05];
        let v = union_bound(&risks, &comps, 1.5, 2.0, 0.1, &[40, 10]).unwrap();
        let lt = (2.0 * 2.0 / 0.1f64).ln();
        let t0 = 0.4 + 1.5 * 0.02 + 6.0 * (lt / 80.0).sqrt();
        let t1 = 0.9 + 1.5 * 0.05 + 6.0 * (lt / 20.0).sqrt();
        assert!((v - (t0 + t1) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn union_bound_symmetric_on_balanced_counts() {
        // Equal counts put the same confidence term on every class, so
        // the average collapses to one term.
        let v = union_bound(
            &[0.3, 0.3, 0.3],
            &[0.1, 0.1, 0.1],
            2.0,
            1.0,
            0.05,
            &[20, 20, 20],
        )
        .unwrap();
        let single = 0.3 + 2.0 * 0.1 + 3.0 * ((6.0 / 0.05f64).ln() / 40.0).sqrt();
        assert!((v - single).abs() < 1e-12);
    }

    #[test]
    fn h1_is_zero_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let c = rng.random_range(2..20);
            let mut pi: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
            let z: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= z);
            pi.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let v = h1(1.0, &pi).unwrap();
            assert!(v.abs() < 1e-9, "h1(1) = {v}");
        }
    }

    #[test]
    fn h1_frozen_value() {
        let v = h1(2.0, &[0.9, 0.1]).unwrap();
        assert!((v - 93.69711585684087).abs() < 1e-8, "got {v}");
        assert!(v > 0.0);
    }

    #[test]
    fn h1_nonnegative_above_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            let c = rng.random_range(2..20);
            let mut pi: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
            let z: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= z);
            pi.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for kappa in [1.25, 2.0, 3.0] {
                let v = h1(kappa, &pi).unwrap();
                assert!(v >= -1e-9, "h1({kappa}) = {v} for {pi:?}");
            }
        }
    }

    #[test]
    fn h1_uniform_priors_nonnegative() {
        for c in [2usize, 4, 10] {
            let pi = vec![1.0 / c as f64; c];
            for kappa in [1.0, 1.5, 2.0, 3.0] {
                let v = h1(kappa, &pi).unwrap();
                assert!(v >= -1e-9, "uniform h1({kappa}) = {v}");
            }
        }
    }

    #[test]
    fn h1_rejects_bad_inputs() {
        assert!(h1(0.5, &[0.5, 0.5]).is_err());
        assert!(h1(2.0, &[0.25, 0.75]).is_err()); // unsorted
        assert!(h1(2.0, &[0.5, 0.4]).is_err()); // not a distribution
    }

    #[test]
    fn h2_increasing_for_kappa_above_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..500 {
            let kappa = rng.random_range(1.0001..4.0);
            let a = rng.random_range(0.001..0.999);
            let b = rng.random_range(0.001..0.999);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            assert!(h2(lo, kappa) <= h2(hi, kappa) + 1e-12);
        }
    }

    #[test]
    fn square_inequality_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..10_000 {
            let len = rng.random_range(1..=8);
            let a: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..3.0)).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..3.0)).collect();
            let lhs: f64 = a.iter().zip(&b).map(|(x, y)| x * x * y * y).sum();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            assert!(lhs <= sa * sa * sb * sb + 1e-12);
        }
    }

    #[test]
    fn report_recomposes_from_its_own_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..20 {
            let c = rng.random_range(2..5);
            let params = random_params(&mut rng, c);
            let per_class = rng.random_range(2..7);
            let (scores, labels) = random_instance(&mut rng, c, per_class);
            let est = ComplexityEstimate {
                value: rng.random_range(0.01..0.5),
                method: ComplexityMethod::LinearAnalytic,
                norm_bound: 1.0,
                mc_samples: None,
                seed: None,
            };
            let report = vs_bound_report(
                &scores,
                &labels,
                &params,
                est,
                None,
                0.05,
                MuMode::Pointwise,
            )
            .unwrap();
            let pi_tail = report.pi.iter().cloned().fold(f64::INFINITY, f64::min);
            let sum: f64 = report
                .mu_pointwise
                .iter()
                .zip(&report.pi)
                .map(|(m, p)| m * p.sqrt())
                .sum();
            let recomposed = report.phi + report.complexity.value / (c as f64 * pi_tail) * sum;
            assert!(
                (report.data_dependent_bound - recomposed).abs() < 1e-12,
                "recomposition mismatch"
            );
            let term_sum: f64 = report.per_class_terms.iter().sum();
            assert!((report.data_dependent_bound - (report.phi + term_sum)).abs() < 1e-12);
            assert!(report.data_dependent_bound >= report.phi);
            assert!(report.mu_pointwise.iter().all(|&m| m >= 0.0));
        }
    }

    #[test]
    fn well_fit_data_collapses_to_phi() {
        // Confident scores: p_y near 1 everywhere, so mu ~ 0.
        let scores = Matrix::from_rows(&[vec![80.0, 0.0], vec![90.0, 0.0], vec![0.0, 85.0]]);
        let labels = vec![0, 0, 1];
        let est = ComplexityEstimate {
            value: 0.3,
            method: ComplexityMethod::LinearAnalytic,
            norm_bound: 1.0,
            mc_samples: None,
            seed: None,
        };
        let report = vs_bound_report(
            &scores,
            &labels,
            &VSParams::cross_entropy(2),
            est,
            Some(1.0),
            0.05,
            MuMode::Pointwise,
        )
        .unwrap();
        assert!((report.data_dependent_bound - report.phi).abs() < 1e-12);
    }
}
