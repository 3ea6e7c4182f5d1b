//! The deferred re-weighting training loop.
//!
//! Training runs in two phases split at the deferral epoch `T0`:
//!
//! - warm-up (`t < T0`): `alpha = 1`, logits adjusted by the warm-up
//!   `beta` and `delta` vectors;
//! - terminal (`t >= T0`): `alpha` switches to the configured
//!   re-weighting family, normalized so the prior-weighted mean weight
//!   is 1; when truncation is enabled the multiplicative factors are
//!   reset to 1 so they stop fighting the weights.
//!
//! The learning rate is annealed by a multistep schedule whose first
//! milestone coincides with `T0`. Each epoch records the training
//! loss, test balanced accuracy, per-class training accuracy, the
//! per-class minimal scores `B_y`, and the minority/majority accuracy
//! ratio.

use serde::{Deserialize, Serialize};

use crate::bounds::b_min;
use crate::data::{minibatches, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{balanced_accuracy, min_maj_ratio, GroupSplit};
use crate::losses::{preset, Preset, VSParams};
use crate::model::{loss_and_grads, sgd_step, LrSchedule, OptState, ScoreModel};
use crate::seed;

/// Hyperparameter grids searched in the experiments.
pub const NU_GRID: [f64; 6] = [0.15, 0.25, 0.75, 1.0, 2.0, 3.0];
pub const TAU_GRID: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 2.0];
pub const GAMMA_GRID: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.25];

/// Re-weighting family applied from the deferral epoch onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ReweightFamily {
    /// Keep `alpha = 1` in the terminal phase too.
    None,
    /// Effective-number weights `(1-p)/(1-p^{N_y})`.
    EffectiveNumber { p: f64 },
    /// Prior-aligned weights `alpha_y = pi_y^{-nu}`.
    PriorAligned { nu: f64 },
}

/// Phase logic for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub total_epochs: usize,
    /// First epoch of the terminal phase; `total_epochs` means the
    /// re-weighting phase never starts.
    pub drw_epoch: usize,
    pub reweight: ReweightFamily,
    pub warmup_beta: Vec<f64>,
    pub warmup_delta: Vec<f64>,
    pub terminal_delta: Vec<f64>,
    /// Reset `beta` to 1 during the terminal phase.
    pub tla_enabled: bool,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.warmup_beta.len();
        if c < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if self.warmup_delta.len() != c || self.terminal_delta.len() != c {
            return Err(Error::config(
                "warm-up and terminal vectors must share a length",
            ));
        }
        if self.total_epochs == 0 {
            return Err(Error::config("need at least 1 epoch"));
        }
        if self.drw_epoch > self.total_epochs {
            return Err(Error::config(format!(
                "deferral epoch {} beyond total epochs {}",
                self.drw_epoch, self.total_epochs
            )));
        }
        if self.warmup_beta.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::config("warm-up beta must be positive"));
        }
        if self
            .warmup_delta
            .iter()
            .chain(&self.terminal_delta)
            .any(|d| !d.is_finite())
        {
            return Err(Error::config("delta vectors must be finite"));
        }
        match self.reweight {
            ReweightFamily::None => {}
            ReweightFamily::EffectiveNumber { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::config(format!(
                        "effective-number p must be in (0,1), got {p}"
                    )));
                }
            }
            ReweightFamily::PriorAligned { nu } => {
                if !(nu > 0.0) {
                    return Err(Error::config(format!("nu must be positive, got {nu}")));
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.warmup_beta.len()
    }
}

/// Normalize weights so the prior-weighted mean is 1, keeping the
/// expected per-sample weight (and so the effective learning rate)
/// phase-invariant. Presets return raw weights; this is the form
/// training uses, and run summaries record that choice.
pub fn normalize_alpha(raw: &[f64], pi: &[f64]) -> Vec<f64> {
    let z: f64 = raw.iter().zip(pi).map(|(a, p)| a * p).sum();
    raw.iter().map(|a| a / z).collect()
}

/// Loss parameters in effect at epoch `t`. Takes the integer class
/// counts because the effective-number weights need them; priors are
/// derived internally.
pub fn phase_params(t: usize, spec: &ScheduleSpec, class_counts: &[usize]) -> Result<VSParams> {
    spec.validate()?;
    let c = spec.num_classes();
    if class_counts.len() != c {
        return Err(Error::config("class counts length does not match schedule"));
    }
    if class_counts.contains(&0) {
        return Err(Error::config("class counts must be at least 1"));
    }
    if t >= spec.total_epochs {
        return Err(Error::config(format!(
            "epoch {t} out of range for {} total epochs",
            spec.total_epochs
        )));
    }
    if t < spec.drw_epoch {
        return VSParams::new(
            vec![1.0; c],
            spec.warmup_beta.clone(),
            spec.warmup_delta.clone(),
        );
    }
    let n: usize = class_counts.iter().sum();
    let pi: Vec<f64> = class_counts.iter().map(|&k| k as f64 / n as f64).collect();
    let alpha = match spec.reweight {
        ReweightFamily::None => vec![1.0; c],
        ReweightFamily::EffectiveNumber { p } => {
            let raw = preset(Preset::ClassBalanced { p }, class_counts)?.alpha;
            normalize_alpha(&raw, &pi)
        }
        ReweightFamily::PriorAligned { nu } => {
            let raw: Vec<f64> = pi.iter().map(|p| p.powf(-nu)).collect();
            normalize_alpha(&raw, &pi)
        }
    };
    let beta = if spec.tla_enabled {
        vec![1.0; c]
    } else {
        spec.warmup_beta.clone()
    };
    VSParams::new(alpha, beta, spec.terminal_delta.clone())
}

/// Catalog identifiers for the standard training schemes.
pub const SCHEME_NAMES: [&str; 10] = [
    "CE",
    "CE+DRW",
    "CE+ADRW",
    "LDAM",
    "LDAM+DRW",
    "LDAM+ADRW",
    "VS",
    "VS+DRW",
    "VS+TLA+DRW",
    "VS+TLA+ADRW",
];

/// Tunables consumed by [`scheme_catalog`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeHypers {
    pub epochs: usize,
    /// Deferral epoch for schemes with a re-weighting phase.
    pub t0: usize,
    pub nu: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Effective-number parameter for the deferred re-weighting family.
    pub cb_p: f64,
    /// Margin-offset scale used by the LDAM-style presets.
    pub margin_scale: f64,
}

impl Default for SchemeHypers {
    fn default() -> Self {
        SchemeHypers {
            epochs: 200,
            t0: 160,
            nu: 1.0,
            tau: 1.0,
            gamma: 0.1,
            cb_p: 0.9999,
            margin_scale: 1.0,
        }
    }
}

/// Which hyperparameter axes a scheme actually reads, as
/// `(nu, tau, gamma, t0)`.
pub fn scheme_axes(name: &str) -> Result<(bool, bool, bool, bool)> {
    match name {
        "CE" | "LDAM" => Ok((false, false, false, false)),
        "CE+DRW" | "LDAM+DRW" => Ok((false, false, false, true)),
        "CE+ADRW" | "LDAM+ADRW" => Ok((true, false, false, true)),
        "VS" => Ok((false, true, true, false)),
        "VS+DRW" | "VS+TLA+DRW" => Ok((false, true, true, true)),
        "VS+TLA+ADRW" => Ok((true, true, true, true)),
        _ => Err(Error::config(format!("unknown scheme `{name}`"))),
    }
}

/// Assemble the schedule for a named scheme from the class counts and
/// hyperparameters.
pub fn scheme_catalog(
    name: &str,
    class_counts: &[usize],
    hypers: &SchemeHypers,
) -> Result<ScheduleSpec> {
    if !SCHEME_NAMES.contains(&name) {
        return Err(Error::config(format!("unknown scheme `{name}`")));
    }
    if hypers.epochs == 0 {
        return Err(Error::config("need at least 1 epoch"));
    }
    if hypers.t0 > hypers.epochs {
        return Err(Error::config(format!(
            "deferral epoch {} beyond total epochs {}",
            hypers.t0, hypers.epochs
        )));
    }
    let parts: Vec<&str> = name.split('+').collect();
    let base = match parts[0] {
        "CE" => preset(Preset::CrossEntropy, class_counts)?,
        "LDAM" => preset(
            Preset::MarginOffsets {
                c: hypers.margin_scale,
            },
            class_counts,
        )?,
        "VS" => preset(
            Preset::VectorScaled {
                gamma: hypers.gamma,
                tau: hypers.tau,
            },
            class_counts,
        )?,
        _ => unreachable!("validated against the catalog above"),
    };
    let mut tla = false;
    let mut reweight = ReweightFamily::None;
    let mut deferred = false;
    for part in &parts[1..] {
        match *part {
            "TLA" => tla = true,
            "DRW" => {
                reweight = ReweightFamily::EffectiveNumber { p: hypers.cb_p };
                deferred = true;
            }
            "ADRW" => {
                reweight = ReweightFamily::PriorAligned { nu: hypers.nu };
                deferred = true;
            }
            _ => unreachable!("validated against the catalog above"),
        }
    }
    let spec = ScheduleSpec {
        total_epochs: hypers.epochs,
        drw_epoch: if deferred { hypers.t0 } else { hypers.epochs },
        reweight,
        warmup_beta: base.beta.clone(),
        warmup_delta: base.delta.clone(),
        terminal_delta: base.delta,
        tla_enabled: tla,
    };
    spec.validate()?;
    Ok(spec)
}

/// One epoch's diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_balanced_accuracy: f64,
    pub per_class_train_accuracy: Vec<f64>,
    /// Per-class minimal true-class scores on the training set.
    pub b_y: Vec<f64>,
    /// Minority/majority training-accuracy ratio (top-half split);
    /// absent when the majority accuracy is zero.
    pub acc_ratio_min_maj: Option<f64>,
    pub acc_ratio_flagged: bool,
    pub learning_rate: f64,
}

/// Optimizer configuration for a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

/// Run the full two-phase training loop. Deterministic given `seed`.
pub fn run_training(
    train: &LabeledDataset,
    test: &LabeledDataset,
    mut model: ScoreModel,
    spec: &ScheduleSpec,
    opt_config: &OptConfig,
    seed_value: u64,
) -> Result<(ScoreModel, Vec<EpochRecord>)> {
    spec.validate()?;
    if spec.num_classes() != train.num_classes() {
        return Err(Error::config("schedule class count does not match dataset"));
    }
    if model.dim() != train.dim() || model.num_classes() != train.num_classes() {
        return Err(Error::config("model shape does not match dataset"));
    }
    if test.num_classes() != train.num_classes() || test.dim() != train.dim() {
        return Err(Error::config("test set shape does not match training set"));
    }
    if 0 < spec.drw_epoch
        && spec.drw_epoch < spec.total_epochs
        && !opt_config.schedule.milestones.contains(&spec.drw_epoch)
    {
        return Err(Error::config(format!(
            "deferral epoch {} must be a learning-rate milestone",
            spec.drw_epoch
        )));
    }
    let batch_size = opt_config.batch_size.min(train.n());
    let mut opt = OptState::new(
        &model,
        opt_config.momentum,
        opt_config.weight_decay,
        opt_config.schedule.base,
    )?;

    let mut records = Vec::with_capacity(spec.total_epochs);
    for t in 0..spec.total_epochs {
        let params = phase_params(t, spec, train.class_counts())?;
        let lr = opt_config.schedule.at(t);
        opt.learning_rate = lr;

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let batches = minibatches(
            train,
            batch_size,
            seed::derive(seed_value, "epoch", t as u64),
        )?;
        for batch in &batches {
            // A diverged model produces non-finite scores, which the
            // loss rejects; report that as a blow-up, not bad input.
            let (loss, grads) =
                match loss_and_grads(&model, train.features(), train.labels(), batch, &params) {
                    Ok(v) => v,
                    Err(Error::InvalidInput(_)) if !model.is_finite() => {
                        return Err(Error::NonFiniteLoss { epoch: t });
                    }
                    Err(e) => return Err(e),
                };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: t });
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            sgd_step(&mut model, &grads, &mut opt)?;
        }
        let train_loss = epoch_loss / seen as f64;

        let train_scores = model.score_dataset(train)?;
        let (_, per_class_train_acc) = balanced_accuracy(&train_scores, train.labels())?;
        let b_y = b_min(&train_scores, train.labels())?;
        let ratio = min_maj_ratio(
            &per_class_train_acc,
            train.class_counts(),
            &GroupSplit::TopHalf,
        )?;
        let test_scores = model.score_dataset(test)?;
        let (test_bal_acc, _) = balanced_accuracy(&test_scores, test.labels())?;

        records.push(EpochRecord {
            epoch: t,
            train_loss,
            test_balanced_accuracy: test_bal_acc,
            per_class_train_accuracy: per_class_train_acc,
            b_y,
            acc_ratio_min_maj: if ratio.majority_zero {
                None
            } else {
                Some(ratio.value)
            },
            acc_ratio_flagged: ratio.majority_zero,
            learning_rate: lr,
        });
    }
    Ok((model, records))
}

/// Index of the record with the highest test balanced accuracy,
/// earliest epoch winning ties.
pub fn best_epoch(records: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        let better = match best {
            None => true,
            Some(j) => r.test_balanced_accuracy > records[j].test_balanced_accuracy,
        };
        if better {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, generate_balanced_test, GaussianMixtureSpec};
    use crate::matrix::Matrix;
    use crate::model::ModelKind;

    fn spec_two_class(
        total: usize,
        t0: usize,
        reweight: ReweightFamily,
        tla: bool,
    ) -> ScheduleSpec {
        ScheduleSpec {
            total_epochs: total,
            drw_epoch: t0,
            reweight,
            warmup_beta: vec![1.0, 1.0],
            warmup_delta: vec![0.0, 0.0],
            terminal_delta: vec![0.0, 0.0],
            tla_enabled: tla,
        }
    }

    #[test]
    fn warmup_always_unit_alpha() {
        let spec = spec_two_class(10, 5, ReweightFamily::PriorAligned { nu: 2.0 }, false);
        let p = phase_params(0, &spec, &[75, 25]).unwrap();
        assert_eq!(p.alpha, vec![1.0, 1.0]);
    }

    #[test]
    fn prior_aligned_weights_normalize() {
        let spec = spec_two_class(10, 5, ReweightFamily::PriorAligned { nu: 1.0 }, false);
        // pi = [0.75, 0.25]: raw alpha = [4/3, 4], weighted sum 2.
        let p = phase_params(5, &spec, &[75, 25]).unwrap();
        assert!((p.alpha[0] - 2.0 / 3.0).abs() < 1e-12, "got {:?}", p.alpha);
        assert!((p.alpha[1] - 2.0).abs() < 1e-12);
        let weighted: f64 = p
            .alpha
            .iter()
            .zip(&[0.75, 0.25])
            .map(|(a, pi)| a * pi)
            .sum();
        assert!((weighted - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_resets_beta() {
        let mut spec = spec_two_class(10, 5, ReweightFamily::PriorAligned { nu: 1.0 }, true);
        spec.warmup_beta = vec![1.2, 1.0];
        let warm = phase_params(4, &spec, &[75, 25]).unwrap();
        assert_eq!(warm.beta, vec![1.2, 1.0]);
        let term = phase_params(5, &spec, &[75, 25]).unwrap();
        assert_eq!(term.beta, vec![1.0, 1.0]);
    }

    #[test]
    fn without_truncation_beta_persists() {
        let mut spec = spec_two_class(10, 5, ReweightFamily::PriorAligned { nu: 1.0 }, false);
        spec.warmup_beta = vec![1.2, 1.0];
        let term = phase_params(7, &spec, &[75, 25]).unwrap();
        assert_eq!(term.beta, vec![1.2, 1.0]);
    }

    #[test]
    fn effective_number_weights_match_preset() {
        let counts = [40usize, 10];
        let pi = [0.8, 0.2];
        let spec = spec_two_class(4, 0, ReweightFamily::EffectiveNumber { p: 0.99 }, false);
        let p = phase_params(0, &spec, &counts).unwrap();
        let raw0 = 0.01 / (1.0 - 0.99f64.powi(40));
        let raw1 = 0.01 / (1.0 - 0.99f64.powi(10));
        let z = raw0 * pi[0] + raw1 * pi[1];
        assert!((p.alpha[0] - raw0 / z).abs() < 1e-12);
        assert!((p.alpha[1] - raw1 / z).abs() < 1e-12);
    }

    #[test]
    fn catalog_covers_all_names() {
        let counts = [30usize, 10];
        let hypers = SchemeHypers {
            epochs: 10,
            t0: 8,
            ..Default::default()
        };
        for name in SCHEME_NAMES {
            let spec = scheme_catalog(name, &counts, &hypers).unwrap();
            spec.validate().unwrap();
            let deferred = name.contains("DRW");
            assert_eq!(spec.drw_epoch, if deferred { 8 } else { 10 }, "{name}");
            assert_eq!(spec.tla_enabled, name.contains("TLA"), "{name}");
        }
        assert!(scheme_catalog("FOCAL", &counts, &hypers).is_err());
        assert!(scheme_catalog("CE+TLA", &counts, &hypers).is_err());
    }

    #[test]
    fn catalog_ce_is_plain_cross_entropy() {
        let hypers = SchemeHypers {
            epochs: 5,
            t0: 3,
            ..Default::default()
        };
        let spec = scheme_catalog("CE", &[30, 10], &hypers).unwrap();
        assert_eq!(spec.warmup_beta, vec![1.0, 1.0]);
        assert_eq!(spec.warmup_delta, vec![0.0, 0.0]);
        assert_eq!(spec.reweight, ReweightFamily::None);
        for t in 0..5 {
            let p = phase_params(t, &spec, &[30, 10]).unwrap();
            assert_eq!(p.alpha, vec![1.0, 1.0]);
            assert_eq!(p.beta, vec![1.0, 1.0]);
            assert_eq!(p.delta, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn catalog_full_scheme_phases() {
        let counts = [75usize, 25];
        let hypers = SchemeHypers {
            epochs: 10,
            t0: 6,
            nu: 1.0,
            tau: 1.0,
            gamma: 0.2,
            ..Default::default()
        };
        let spec = scheme_catalog("VS+TLA+ADRW", &counts, &hypers).unwrap();
        let warm = phase_params(0, &spec, &counts).unwrap();
        assert_eq!(warm.alpha, vec![1.0, 1.0]);
        assert!((warm.beta[1] - (25f64 / 75.0).powf(0.2)).abs() < 1e-12);
        assert!((warm.delta[0] - 0.75f64.ln()).abs() < 1e-12);
        let term = phase_params(6, &spec, &counts).unwrap();
        assert_eq!(term.beta, vec![1.0, 1.0]);
        assert!((term.delta[0] - 0.75f64.ln()).abs() < 1e-12);
        assert!(term.alpha[1] > term.alpha[0]);
    }

    #[test]
    fn catalog_drw_uses_effective_number_weights() {
        let hypers = SchemeHypers {
            epochs: 4,
            t0: 2,
            cb_p: 0.9999,
            ..Default::default()
        };
        let spec = scheme_catalog("CE+DRW", &[3, 2], &hypers).unwrap();
        match spec.reweight {
            ReweightFamily::EffectiveNumber { p } => assert_eq!(p, 0.9999),
            other => panic!("wrong family {other:?}"),
        }
        // With tiny counts the effective-number weights approach 1/N_y.
        let params = phase_params(2, &spec, &[3, 2]).unwrap();
        let raw0 = (1.0 - 0.9999f64) / (1.0 - 0.9999f64.powi(3));
        let raw1 = (1.0 - 0.9999f64) / (1.0 - 0.9999f64.powi(2));
        let z = raw0 * 0.6 + raw1 * 0.4;
        assert!((params.alpha[0] - raw0 / z).abs() < 1e-12);
        assert!((params.alpha[1] - raw1 / z).abs() < 1e-12);
    }

    fn toy_datasets(seed: u64) -> (LabeledDataset, LabeledDataset) {
        let spec = GaussianMixtureSpec {
            class_means: Matrix::from_rows(&[vec![1.5, 0.0], vec![-1.5, 0.0]]),
            covariance_scale: 1.0,
            seed,
        };
        let train = generate(&spec, &[40, 10]).unwrap();
        let test = generate_balanced_test(&spec, 10, seed ^ 0xdead).unwrap();
        (train, test)
    }

    fn toy_opt(total: usize, t0: usize) -> OptConfig {
        let milestones = if t0 > 0 && t0 < total {
            vec![t0]
        } else {
            vec![]
        };
        OptConfig {
            schedule: LrSchedule::new(0.1, milestones, 0.1).unwrap(),
            momentum: 0.9,
            weight_decay: 2e-4,
            batch_size: 16,
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (train, test) = toy_datasets(5);
        let spec = spec_two_class(6, 4, ReweightFamily::PriorAligned { nu: 1.0 }, false);
        let model = ScoreModel::init(ModelKind::Linear, 2, 2, 3).unwrap();
        let opt = toy_opt(6, 4);
        let (m1, r1) = run_training(&train, &test, model.clone(), &spec, &opt, 11).unwrap();
        let (m2, r2) = run_training(&train, &test, model, &spec, &opt, 11).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn trace_is_complete_and_finite() {
        let (train, test) = toy_datasets(7);
        let spec = spec_two_class(5, 3, ReweightFamily::EffectiveNumber { p: 0.999 }, false);
        let model = ScoreModel::init(ModelKind::Linear, 2, 2, 3).unwrap();
        let (_, records) = run_training(&train, &test, model, &spec, &toy_opt(5, 3), 1).unwrap();
        assert_eq!(records.len(), 5);
        for (t, r) in records.iter().enumerate() {
            assert_eq!(r.epoch, t);
            assert!(r.train_loss.is_finite());
            assert!(r.test_balanced_accuracy.is_finite());
            assert!(r.b_y.iter().all(|v| v.is_finite()));
            assert!(r.learning_rate > 0.0);
        }
    }

    #[test]
    fn phase_boundary_visible_in_params() {
        let spec = spec_two_class(8, 5, ReweightFamily::PriorAligned { nu: 2.0 }, false);
        let counts = [80usize, 20];
        let before = phase_params(4, &spec, &counts).unwrap();
        assert_eq!(before.alpha, vec![1.0, 1.0]);
        let after = phase_params(5, &spec, &counts).unwrap();
        assert!(after.alpha[1] > after.alpha[0]);
        let weighted: f64 = after
            .alpha
            .iter()
            .zip(&[0.8, 0.2])
            .map(|(a, p)| a * p)
            .sum();
        assert!((weighted - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t0_zero_reweights_from_the_start() {
        let (train, test) = toy_datasets(9);
        let spec = spec_two_class(3, 0, ReweightFamily::EffectiveNumber { p: 0.999 }, false);
        let model = ScoreModel::init(ModelKind::Linear, 2, 2, 2).unwrap();
        let (_, records) = run_training(&train, &test, model, &spec, &toy_opt(3, 0), 4).unwrap();
        assert_eq!(records.len(), 3);
    }

    #[test]
    fn pure_warmup_run_never_reweights() {
        let spec = spec_two_class(1, 1, ReweightFamily::PriorAligned { nu: 3.0 }, true);
        let p = phase_params(0, &spec, &[6, 4]).unwrap();
        assert_eq!(p.alpha, vec![1.0, 1.0]);
    }

    #[test]
    fn milestone_must_cover_deferral_epoch() {
        let (train, test) = toy_datasets(3);
        let spec = spec_two_class(6, 4, ReweightFamily::PriorAligned { nu: 1.0 }, false);
        let model = ScoreModel::init(ModelKind::Linear, 2, 2, 3).unwrap();
        let opt = OptConfig {
            schedule: LrSchedule::new(0.1, vec![], 0.1).unwrap(),
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 16,
        };
        assert!(run_training(&train, &test, model, &spec, &opt, 1).is_err());
    }

    #[test]
    fn best_epoch_prefers_earliest_on_ties() {
        let mk = |acc: f64, t: usize| EpochRecord {
            epoch: t,
            train_loss: 0.0,
            test_balanced_accuracy: acc,
            per_class_train_accuracy: vec![],
            b_y: vec![],
            acc_ratio_min_maj: None,
            acc_ratio_flagged: false,
            learning_rate: 0.1,
        };
        let records = vec![mk(0.4, 0), mk(0.9, 1), mk(0.9, 2), mk(0.5, 3)];
        assert_eq!(best_epoch(&records), Some(1));
        assert_eq!(best_epoch(&[]), None);
    }
}
