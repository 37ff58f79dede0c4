use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{forward, loss_and_grad, lr_at, HeadError, HeadParams, LabeledEmbedding, TrainConfig};
use crate::corpus::{Class, SentenceRecord};
use crate::encoder::{EmbeddingCache, TextEncoder};
use crate::eval::{self, ConfusionMatrix, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss before the update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub loss: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per-example mean of the step losses seen during the epoch.
    pub mean_batch_loss: f64,
    /// Full-pass training loss and accuracy after the epoch's updates.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub eval: Option<EvalSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub steps_per_epoch: usize,
    pub total_steps: usize,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HeadParams,
    pub trace: TrainTrace,
    pub warnings: Vec<String>,
}

/// Embeds labeled records through the frozen encoder, optionally via a cache.
pub fn embed_records(
    records: &[SentenceRecord],
    encoder: &TextEncoder,
    cache: Option<&mut EmbeddingCache>,
) -> Result<Vec<LabeledEmbedding>, HeadError> {
    let mut classes = Vec::with_capacity(records.len());
    for r in records {
        classes.push(r.class().ok_or_else(|| HeadError::Unlabeled(r.id.clone()))?);
    }
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let vectors = match cache {
        Some(c) => c.embed_texts(encoder, &texts)?,
        None => encoder.embed_texts(&texts)?,
    };
    Ok(records
        .iter()
        .zip(vectors)
        .zip(classes)
        .map(|((r, embedding), class)| LabeledEmbedding {
            id: r.id.clone(),
            embedding,
            class,
        })
        .collect())
}

pub fn train(
    train_set: &[SentenceRecord],
    eval_set: &[SentenceRecord],
    encoder: &TextEncoder,
    config: &TrainConfig,
) -> Result<TrainOutcome, HeadError> {
    train_with_cache(train_set, eval_set, encoder, config, None)
}

/// Embeds both sets once, then trains the head on the cached vectors.
pub fn train_with_cache(
    train_set: &[SentenceRecord],
    eval_set: &[SentenceRecord],
    encoder: &TextEncoder,
    config: &TrainConfig,
    mut cache: Option<&mut EmbeddingCache>,
) -> Result<TrainOutcome, HeadError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(HeadError::EmptyTrainingSet);
    }
    let train_emb = embed_records(train_set, encoder, cache.as_deref_mut())?;
    let eval_emb = embed_records(eval_set, encoder, cache)?;
    train_on_embeddings(&train_emb, &eval_emb, encoder.backend.dim(), config)
}

fn full_pass(params: &HeadParams, data: &[LabeledEmbedding]) -> Result<(f64, Vec<f64>), HeadError> {
    let refs: Vec<&LabeledEmbedding> = data.iter().collect();
    let (loss, _) = loss_and_grad(params, &refs)?;
    let scores = data
        .iter()
        .map(|e| forward(params, &e.embedding).map(|p| p[Class::Burnout.index()]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((loss, scores))
}

/// Mini-batch gradient descent from zero-initialized parameters.
///
/// Single-threaded and seeded, so the result is a pure function of the
/// inputs and `config`.
pub fn train_on_embeddings(
    train_set: &[LabeledEmbedding],
    eval_set: &[LabeledEmbedding],
    dim: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome, HeadError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(HeadError::EmptyTrainingSet);
    }
    let mut warnings = Vec::new();
    if eval_set.is_empty() {
        let msg = "eval set is empty; per-epoch eval metrics omitted".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }

    let n = train_set.len();
    let steps_per_epoch = config.steps_per_epoch(n);
    let total_steps = steps_per_epoch * config.epochs;
    let mut params = HeadParams::zeros(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = TrainTrace {
        steps_per_epoch,
        total_steps,
        steps: Vec::with_capacity(total_steps),
        epochs: Vec::with_capacity(config.epochs),
    };

    let truths_train: Vec<Class> = train_set.iter().map(|e| e.class).collect();
    let truths_eval: Vec<Class> = eval_set.iter().map(|e| e.class).collect();

    let mut step = 0;
    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut weighted_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledEmbedding> = chunk.iter().map(|&i| &train_set[i]).collect();
            let lr = lr_at(step, total_steps, config)?;
            let (loss, grad) = loss_and_grad(&params, &batch)?;
            params.apply(&grad, lr);
            weighted_loss += loss * batch.len() as f64;
            trace.steps.push(StepRecord { step, epoch, lr, loss });
            step += 1;
        }

        let (train_loss, train_scores) = full_pass(&params, train_set)?;
        let (_, train_report) = eval::evaluate(&train_scores, &truths_train, 0.5)?;
        let eval = if eval_set.is_empty() {
            None
        } else {
            let (loss, scores) = full_pass(&params, eval_set)?;
            let (confusion, metrics) = eval::evaluate(&scores, &truths_eval, 0.5)?;
            Some(EvalSnapshot {
                loss,
                confusion,
                metrics,
            })
        };
        info!(
            epoch,
            train_loss,
            train_accuracy = train_report.accuracy,
            eval_accuracy = eval.as_ref().map(|e| e.metrics.accuracy),
            "epoch complete"
        );
        trace.epochs.push(EpochRecord {
            epoch,
            mean_batch_loss: weighted_loss / n as f64,
            train_loss,
            train_accuracy: train_report.accuracy,
            eval,
        });
    }
    Ok(TrainOutcome {
        params,
        trace,
        warnings,
    })
}
