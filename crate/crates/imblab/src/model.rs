//! Small score functions with hand-written backward passes.
//!
//! Two architectures: a linear map `W x + b` and a one-hidden-layer
//! relu network `W2 relu(W1 x + b1) + b2`. Gradients are computed by
//! composing the loss gradient with the layer Jacobians, and the
//! optimizer is classic momentum SGD with weight decay folded into the
//! velocity:
//!
//! ```text
//! v <- momentum * v + grad + weight_decay * theta
//! theta <- theta - lr * v
//! ```

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{vs_loss, vs_loss_grad, VSParams};
use crate::matrix::Matrix;
use crate::seed;

/// Architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    OneHidden { width: usize },
}

/// A scorer `f: R^d -> R^C` with explicit parameter tensors.
///
/// Checkpoints serialize to JSON with shape metadata and row-major
/// arrays; the round trip is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    Linear {
        /// `C x d` weights.
        w: Matrix,
        /// Length-`C` bias.
        b: Vec<f64>,
    },
    OneHidden {
        /// `h x d` first layer.
        w1: Matrix,
        b1: Vec<f64>,
        /// `C x h` output layer.
        w2: Matrix,
        b2: Vec<f64>,
    },
}

/// Gradient buffers shaped like a [`ScoreModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum Gradients {
    Linear {
        w: Matrix,
        b: Vec<f64>,
    },
    OneHidden {
        w1: Matrix,
        b1: Vec<f64>,
        w2: Matrix,
        b2: Vec<f64>,
    },
}

fn init_matrix(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Matrix {
    use rand::Rng;
    let bound = 1.0 / (cols as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
    m
}

impl ScoreModel {
    /// Initialize with weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// and zero biases, deterministically from `seed`.
    pub fn init(kind: ModelKind, dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if dim == 0 || num_classes < 2 {
            return Err(Error::invalid("need at least 1 feature and 2 classes"));
        }
        let mut rng = seed::rng(seed, "init", 0);
        match kind {
            ModelKind::Linear => Ok(ScoreModel::Linear {
                w: init_matrix(num_classes, dim, &mut rng),
                b: vec![0.0; num_classes],
            }),
            ModelKind::OneHidden { width } => {
                if width == 0 {
                    return Err(Error::invalid("hidden width must be at least 1"));
                }
                Ok(ScoreModel::OneHidden {
                    w1: init_matrix(width, dim, &mut rng),
                    b1: vec![0.0; width],
                    w2: init_matrix(num_classes, width, &mut rng),
                    b2: vec![0.0; num_classes],
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Linear { w, .. } => w.cols(),
            ScoreModel::OneHidden { w1, .. } => w1.cols(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ScoreModel::Linear { b, .. } => b.len(),
            ScoreModel::OneHidden { b2, .. } => b2.len(),
        }
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        match self {
            ScoreModel::Linear { w, b } => w.is_finite() && b.iter().all(|v| v.is_finite()),
            ScoreModel::OneHidden { w1, b1, w2, b2 } => {
                w1.is_finite()
                    && w2.is_finite()
                    && b1.iter().all(|v| v.is_finite())
                    && b2.iter().all(|v| v.is_finite())
            }
        }
    }

    /// Euclidean norm of all parameters; the default complexity norm
    /// bound.
    pub fn param_norm(&self) -> f64 {
        let sq = match self {
            ScoreModel::Linear { w, b } => w.norm_sq() + b.iter().map(|v| v * v).sum::<f64>(),
            ScoreModel::OneHidden { w1, b1, w2, b2 } => {
                w1.norm_sq()
                    + w2.norm_sq()
                    + b1.iter().map(|v| v * v).sum::<f64>()
                    + b2.iter().map(|v| v * v).sum::<f64>()
            }
        };
        sq.sqrt()
    }

    pub fn zero_gradients(&self) -> Gradients {
        match self {
            ScoreModel::Linear { w, b } => Gradients::Linear {
                w: Matrix::zeros(w.rows(), w.cols()),
                b: vec![0.0; b.len()],
            },
            ScoreModel::OneHidden { w1, b1, w2, b2 } => Gradients::OneHidden {
                w1: Matrix::zeros(w1.rows(), w1.cols()),
                b1: vec![0.0; b1.len()],
                w2: Matrix::zeros(w2.rows(), w2.cols()),
                b2: vec![0.0; b2.len()],
            },
        }
    }

    /// Scores for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature"));
        }
        Ok(match self {
            ScoreModel::Linear { w, b } => {
                let mut s = w.matvec(x);
                for (si, bi) in s.iter_mut().zip(b) {
                    *si += bi;
                }
                s
            }
            ScoreModel::OneHidden { w1, b1, w2, b2 } => {
                let mut h = w1.matvec(x);
                for (hi, bi) in h.iter_mut().zip(b1) {
                    *hi = (*hi + bi).max(0.0);
                }
                let mut s = w2.matvec(&h);
                for (si, bi) in s.iter_mut().zip(b2) {
                    *si += bi;
                }
                s
            }
        })
    }

    /// Score every sample of a dataset into an `N x C` matrix.
    pub fn score_dataset(&self, dataset: &LabeledDataset) -> Result<Matrix> {
        let mut scores = Matrix::zeros(dataset.n(), self.num_classes());
        for i in 0..dataset.n() {
            let s = self.forward(dataset.feature(i))?;
            scores.row_mut(i).copy_from_slice(&s);
        }
        Ok(scores)
    }
}

/// Mean loss over a batch and the exact gradients of that mean.
pub fn loss_and_grads(
    model: &ScoreModel,
    features: &Matrix,
    labels: &[usize],
    indices: &[usize],
    params: &VSParams,
) -> Result<(f64, Gradients)> {
    if indices.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = model.zero_gradients();
    let mut total_loss = 0.0;
    let scale = 1.0 / indices.len() as f64;

    for &i in indices {
        let x = features.row(i);
        let y = labels[i];
        match (model, &mut grads) {
            (ScoreModel::Linear { w, b }, Gradients::Linear { w: gw, b: gb }) => {
                let mut s = w.matvec(x);
                for (si, bi) in s.iter_mut().zip(b) {
                    *si += bi;
                }
                total_loss += vs_loss(&s, y, params)?;
                let g = vs_loss_grad(&s, y, params)?;
                for (k, gk) in g.iter().enumerate() {
                    let row = gw.row_mut(k);
                    for (j, xj) in x.iter().enumerate() {
                        row[j] += scale * gk * xj;
                    }
                    gb[k] += scale * gk;
                }
            }
            (
                ScoreModel::OneHidden { w1, b1, w2, b2 },
                Gradients::OneHidden {
                    w1: gw1,
                    b1: gb1,
                    w2: gw2,
                    b2: gb2,
                },
            ) => {
                let mut pre = w1.matvec(x);
                for (pi, bi) in pre.iter_mut().zip(b1) {
                    *pi += bi;
                }
                let h: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
                let mut s = w2.matvec(&h);
                for (si, bi) in s.iter_mut().zip(b2) {
                    *si += bi;
                }
                total_loss += vs_loss(&s, y, params)?;
                let g = vs_loss_grad(&s, y, params)?;

                let mut dh = vec![0.0; h.len()];
                for (k, gk) in g.iter().enumerate() {
                    let row = gw2.row_mut(k);
                    for (j, hj) in h.iter().enumerate() {
                        row[j] += scale * gk * hj;
                        dh[j] += gk * w2.get(k, j);
                    }
                    gb2[k] += scale * gk;
                }
                for (j, dj) in dh.iter().enumerate() {
                    if pre[j] > 0.0 {
                        let row = gw1.row_mut(j);
                        for (l, xl) in x.iter().enumerate() {
                            row[l] += scale * dj * xl;
                        }
                        gb1[j] += scale * dj;
                    }
                }
            }
            _ => unreachable!("gradient buffers always match the model"),
        }
    }
    Ok((total_loss * scale, grads))
}

/// Momentum SGD state.
#[derive(Debug, Clone)]
pub struct OptState {
    pub velocity: Gradients,
    pub momentum: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
}

impl OptState {
    pub fn new(
        model: &ScoreModel,
        momentum: f64,
        weight_decay: f64,
        learning_rate: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0,1), got {momentum}"
            )));
        }
        if weight_decay < 0.0 {
            return Err(Error::config("weight decay must be nonnegative"));
        }
        if !(learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(OptState {
            velocity: model.zero_gradients(),
            momentum,
            weight_decay,
            learning_rate,
        })
    }
}

fn step_slices(
    theta: &mut [f64],
    grad: &[f64],
    vel: &mut [f64],
    opt_momentum: f64,
    wd: f64,
    lr: f64,
) {
    for ((t, g), v) in theta.iter_mut().zip(grad).zip(vel.iter_mut()) {
        *v = opt_momentum * *v + g + wd * *t;
        *t -= lr * *v;
    }
}

/// One momentum-SGD update in place.
pub fn sgd_step(model: &mut ScoreModel, grads: &Gradients, opt: &mut OptState) -> Result<()> {
    let (m, wd, lr) = (opt.momentum, opt.weight_decay, opt.learning_rate);
    match (model, grads, &mut opt.velocity) {
        (
            ScoreModel::Linear { w, b },
            Gradients::Linear { w: gw, b: gb },
            Gradients::Linear { w: vw, b: vb },
        ) => {
            step_slices(w.data_mut(), gw.data(), vw.data_mut(), m, wd, lr);
            step_slices(b, gb, vb, m, wd, lr);
        }
        (
            ScoreModel::OneHidden { w1, b1, w2, b2 },
            Gradients::OneHidden {
                w1: g1,
                b1: gb1,
                w2: g2,
                b2: gb2,
            },
            Gradients::OneHidden {
                w1: v1,
                b1: vb1,
                w2: v2,
                b2: vb2,
            },
        ) => {
            step_slices(w1.data_mut(), g1.data(), v1.data_mut(), m, wd, lr);
            step_slices(b1, gb1, vb1, m, wd, lr);
            step_slices(w2.data_mut(), g2.data(), v2.data_mut(), m, wd, lr);
            step_slices(b2, gb2, vb2, m, wd, lr);
        }
        _ => return Err(Error::invalid("gradient shape does not match model")),
    }
    Ok(())
}

/// Multistep learning-rate schedule: the base rate is multiplied by
/// `decay` at each milestone epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub decay: f64,
}

impl LrSchedule {
    pub fn new(base: f64, milestones: Vec<usize>, decay: f64) -> Result<Self> {
        if !(base > 0.0) {
            return Err(Error::config(format!(
                "base rate must be positive, got {base}"
            )));
        }
        if !(decay > 0.0) {
            return Err(Error::config(format!(
                "decay must be positive, got {decay}"
            )));
        }
        if milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("milestones must be strictly increasing"));
        }
        Ok(LrSchedule {
            base,
            milestones,
            decay,
        })
    }

    /// Learning rate at epoch `t`.
    pub fn at(&self, t: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&ms| t >= ms).count();
        self.base * self.decay.powi(hits as i32)
    }
}
