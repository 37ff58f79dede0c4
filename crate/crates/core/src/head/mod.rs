//! The trainable classification layer: a two-logit linear softmax over frozen
//! sentence embeddings, trained by plain mini-batch gradient descent with a
//! linearly decaying learning rate.

mod artifact;
mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::Class;
use crate::encoder::{EmbeddingVector, EncoderError};

pub use artifact::{score, ModelArtifact, ScoreResult, ARTIFACT_SCHEMA_VERSION};
pub use train::{
    embed_records, train, train_on_embeddings, train_with_cache, EpochRecord, EvalSnapshot, StepRecord, TrainOutcome,
    TrainTrace,
};

#[derive(Debug, thiserror::Error)]
pub enum HeadError {
    #[error("embedding dimension {actual} does not match head dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("embedding for record {0:?} contains a non-finite value")]
    NonFiniteEmbedding(String),
    #[error("record {0:?} is unlabeled and cannot be used for training or evaluation")]
    Unlabeled(String),
    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("model was trained with encoder {expected}, refusing to score with {actual}")]
    BackendMismatch { expected: String, actual: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("model artifact {path}: {reason}")]
    Artifact { path: String, reason: String },
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

/// Optimization settings. The defaults train for five epochs at batch size
/// 256 with the learning rate decaying linearly from 5e-5 to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 256,
            lr_initial: 5e-5,
            lr_final: 0.0,
            seed: 42,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, keyed by field name.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.epochs < 1 {
            out.push(("epochs", "must be at least 1".to_string()));
        }
        if self.batch_size < 1 {
            out.push(("batch_size", "must be at least 1".to_string()));
        }
        if self.lr_final.is_nan() || self.lr_final < 0.0 {
            out.push(("lr_final", "must be non-negative".to_string()));
        }
        if self.lr_initial.is_nan() || self.lr_initial <= self.lr_final {
            out.push(("lr_initial", "must exceed lr_final".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), HeadError> {
        match self.issues().first() {
            None => Ok(()),
            Some((k, msg)) => Err(HeadError::Config(format!("{k} {msg}"))),
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }
}

/// Learning rate at `step` of a linear schedule from `lr_initial` (step 0) to
/// `lr_final` (last step).
pub fn lr_at(step: usize, total_steps: usize, config: &TrainConfig) -> Result<f64, HeadError> {
    if step >= total_steps {
        return Err(HeadError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    if total_steps == 1 {
        return Ok(config.lr_initial);
    }
    let frac = step as f64 / (total_steps - 1) as f64;
    Ok(config.lr_initial + (config.lr_final - config.lr_initial) * frac)
}

/// Weights `[2 x dim]` (row per class, `[Neutral, Burnout]`) and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    dim: usize,
    weights: Vec<f64>,
    bias: [f64; 2],
}

impl HeadParams {
    pub fn zeros(dim: usize) -> Self {
        HeadParams {
            dim,
            weights: vec![0.0; 2 * dim],
            bias: [0.0; 2],
        }
    }

    pub fn from_parts(dim: usize, weights: Vec<f64>, bias: [f64; 2]) -> Result<Self, HeadError> {
        if weights.len() != 2 * dim {
            return Err(HeadError::DimensionMismatch {
                expected: 2 * dim,
                actual: weights.len(),
            });
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(HeadError::Config("head parameters must be finite".into()));
        }
        Ok(HeadParams { dim, weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `[2 x dim]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> [f64; 2] {
        self.bias
    }

    fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2], HeadError> {
        if x.len() != self.dim {
            return Err(HeadError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let dot = |row: &[f64]| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        Ok([dot(self.row(0)) + self.bias[0], dot(self.row(1)) + self.bias[1]])
    }

    /// `self -= lr * grad`.
    pub fn apply(&mut self, grad: &HeadGradient, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(grad.bias) {
            *b -= lr * g;
        }
    }
}

/// Gradient of the mean loss, laid out like [`HeadParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn log_sum_exp2(z: [f64; 2]) -> f64 {
    let m = z[0].max(z[1]);
    m + ((z[0] - m).exp() + (z[1] - m).exp()).ln()
}

/// Class probabilities `softmax(Wx + b)` in `[Neutral, Burnout]` order.
pub fn forward(params: &HeadParams, x: &EmbeddingVector) -> Result<[f64; 2], HeadError> {
    Ok(softmax2(params.logits(x.as_slice())?))
}

/// An embedding with its training target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub id: String,
    pub embedding: EmbeddingVector,
    pub class: Class,
}

/// Mean cross-entropy over the batch and its analytic gradient.
pub fn loss_and_grad(params: &HeadParams, batch: &[&LabeledEmbedding]) -> Result<(f64, HeadGradient), HeadError> {
    if batch.is_empty() {
        return Err(HeadError::EmptyBatch);
    }
    let dim = params.dim;
    let mut grad = HeadGradient {
        weights: vec![0.0; 2 * dim],
        bias: [0.0; 2],
    };
    let mut loss = 0.0;
    for ex in batch {
        let x = ex.embedding.as_slice();
        if x.len() != dim {
            return Err(HeadError::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            });
        }
        if !ex.embedding.is_finite() {
            return Err(HeadError::NonFiniteEmbedding(ex.id.clone()));
        }
        let z = params.logits(x)?;
        let y = ex.class.index();
        loss += log_sum_exp2(z) - z[y];
        let p = softmax2(z);
        for (c, pc) in p.iter().enumerate() {
            let dz = pc - if c == y { 1.0 } else { 0.0 };
            grad.bias[c] += dz;
            for (g, v) in grad.weights[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *g += dz * v;
            }
        }
    }
    let n = batch.len() as f64;
    grad.weights.iter_mut().for_each(|g| *g /= n);
    grad.bias.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn ex(id: &str, v: Vec<f64>, class: Class) -> LabeledEmbedding {
        LabeledEmbedding {
            id: id.into(),
            embedding: EmbeddingVector(v),
            class,
        }
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, 360, &cfg).unwrap(), 5e-5);
        assert_eq!(lr_at(359, 360, &cfg).unwrap(), 0.0);
        assert_eq!(lr_at(2, 5, &cfg).unwrap(), 2.5e-5);
        assert_eq!(lr_at(0, 1, &cfg).unwrap(), 5e-5);
        assert!(matches!(
            lr_at(5, 5, &cfg),
            Err(HeadError::StepOutOfRange { step: 5, total: 5 })
        ));
    }

    #[test]
    fn schedule_is_linear() {
        let cfg = TrainConfig::default();
        let total = 360;
        let lrs: Vec<f64> = (0..total).map(|s| lr_at(s, total, &cfg).unwrap()).collect();
        for w in lrs.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() <= 1e-18);
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn config_issues() {
        let bad = TrainConfig {
            epochs: 0,
            batch_size: 0,
            lr_initial: 0.0,
            lr_final: 0.0,
            ..TrainConfig::default()
        };
        let keys: Vec<_> = bad.issues().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["epochs", "batch_size", "lr_initial"]);
        assert!(TrainConfig::default().validate().is_ok());
        assert_eq!(TrainConfig::default().steps_per_epoch(18_395), 72);
    }

    #[test]
    fn zero_params_give_half() {
        let p = HeadParams::zeros(4);
        assert_eq!(
            forward(&p, &EmbeddingVector(vec![1.0, -2.0, 3.0, 0.5])).unwrap(),
            [0.5, 0.5]
        );
    }

    #[test]
    fn closed_form_softmax() {
        // logits (-1, 1) via bias only.
        let p = HeadParams::from_parts(1, vec![0.0, 0.0], [-1.0, 1.0]).unwrap();
        let probs = forward(&p, &EmbeddingVector(vec![0.3])).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((probs[1] - expected).abs() < 1e-15);
        assert!((probs[1] - 0.8808).abs() < 1e-4);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let p = HeadParams::zeros(3);
        assert!(matches!(
            forward(&p, &EmbeddingVector(vec![1.0])),
            Err(HeadError::DimensionMismatch { expected: 3, actual: 1 })
        ));
        assert!(HeadParams::from_parts(2, vec![0.0; 3], [0.0; 2]).is_err());
    }

    #[test]
    fn uniform_prediction_loss_is_ln2() {
        let p = HeadParams::zeros(2);
        let a = ex("a", vec![1.0, 2.0], Class::Burnout);
        let b = ex("b", vec![-1.0, 0.5], Class::Neutral);
        let (loss, _) = loss_and_grad(&p, &[&a, &b]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn optimum_has_no_loss_or_gradient() {
        let p = HeadParams::from_parts(1, vec![0.0, 0.0], [-400.0, 400.0]).unwrap();
        let a = ex("a", vec![1.0], Class::Burnout);
        let (loss, grad) = loss_and_grad(&p, &[&a]).unwrap();
        assert!(loss < 1e-300);
        assert!(grad.weights.iter().chain(&grad.bias).all(|g| g.abs() < 1e-300));
    }

    #[test]
    fn non_finite_embedding_names_record() {
        let p = HeadParams::zeros(2);
        let bad = ex("rec-17", vec![f64::NAN, 0.0], Class::Neutral);
        match loss_and_grad(&p, &[&bad]) {
            Err(HeadError::NonFiniteEmbedding(id)) => assert_eq!(id, "rec-17"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(loss_and_grad(&p, &[]), Err(HeadError::EmptyBatch)));
    }

    /// Central finite differences of the mean loss.
    fn numeric_grad(p: &HeadParams, batch: &[&LabeledEmbedding], h: f64) -> Vec<f64> {
        let loss = |q: &HeadParams| loss_and_grad(q, batch).unwrap().0;
        let n = 2 * p.dim + 2;
        (0..n)
            .map(|k| {
                let mut plus = p.clone();
                let mut minus = p.clone();
                if k < 2 * p.dim {
                    plus.weights[k] += h;
                    minus.weights[k] -= h;
                } else {
                    plus.bias[k - 2 * p.dim] += h;
                    minus.bias[k - 2 * p.dim] -= h;
                }
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 8;
        let p = HeadParams::from_parts(
            dim,
            (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        )
        .unwrap();
        let batch: Vec<LabeledEmbedding> = (0..16)
            .map(|i| {
                let class = if rng.gen_bool(0.5) {
                    Class::Burnout
                } else {
                    Class::Neutral
                };
                ex(
                    &i.to_string(),
                    (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    class,
                )
            })
            .collect();
        let refs: Vec<&LabeledEmbedding> = batch.iter().collect();
        let (_, g) = loss_and_grad(&p, &refs).unwrap();
        let analytic: Vec<f64> = g.weights.iter().chain(&g.bias).copied().collect();
        let numeric = numeric_grad(&p, &refs, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {a} numeric {n}");
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(w in prop::collection::vec(-3.0f64..3.0, 6), b0 in -5.0f64..5.0, b1 in -5.0f64..5.0,
                                    x in prop::collection::vec(-2.0f64..2.0, 3), shift in -50.0f64..50.0) {
            let p = HeadParams::from_parts(3, w.clone(), [b0, b1]).unwrap();
            let q = HeadParams::from_parts(3, w, [b0 + shift, b1 + shift]).unwrap();
            let x = EmbeddingVector(x);
            let (a, c) = (forward(&p, &x).unwrap(), forward(&q, &x).unwrap());
            prop_assert!((a[1] - c[1]).abs() < 1e-12);
            prop_assert!(a[0] > 0.0 && a[1] > 0.0);
            prop_assert!((a[0] + a[1] - 1.0).abs() < 1e-12);
        }
    }
}
