//! Frozen encoder loaded from an ONNX file and executed with tract.

use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::wordpiece::TokenSequence;
use super::{EncoderError, InterchangeConfig, OutputKind, Pooling};

type Plan = Arc<TypedRunnableModel>;

pub(crate) struct OnnxEncoder {
    plan: Plan,
    /// For each model input, which tensor to feed.
    feeds: Vec<Feed>,
    output_index: usize,
    output_kind: OutputKind,
    pooling: Pooling,
    dim: usize,
}

impl std::fmt::Debug for OnnxEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxEncoder")
            .field("feeds", &self.feeds)
            .field("output_index", &self.output_index)
            .field("dim", &self.dim)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feed {
    InputIds,
    AttentionMask,
    TokenTypeIds,
}

fn load_err(path: &Path, e: impl std::fmt::Display) -> EncoderError {
    EncoderError::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

impl OnnxEncoder {
    pub(crate) fn load(config: &InterchangeConfig, dim: usize, pooling: Pooling) -> Result<Self, EncoderError> {
        let path = config.path.as_path();
        if !path.is_file() {
            return Err(load_err(path, "model file not found"));
        }
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(|e| load_err(path, format!("{e:#}")))?;

        let mut feeds = Vec::new();
        let inputs = model.input_outlets().map_err(|e| load_err(path, e))?.to_vec();
        for outlet in &inputs {
            let name = model.node(outlet.node).name.as_str();
            let feed = if name == config.input_ids_name {
                Feed::InputIds
            } else if Some(name) == config.attention_mask_name.as_deref() {
                Feed::AttentionMask
            } else if Some(name) == config.token_type_ids_name.as_deref() {
                Feed::TokenTypeIds
            } else {
                return Err(load_err(
                    path,
                    format!("model input {name:?} is not mapped in the backend config"),
                ));
            };
            feeds.push(feed);
        }
        if !feeds.contains(&Feed::InputIds) {
            return Err(load_err(
                path,
                format!("model has no input named {:?}", config.input_ids_name),
            ));
        }

        let outputs = model.output_outlets().map_err(|e| load_err(path, e))?.to_vec();
        let output_index = match &config.output_name {
            None => 0,
            Some(want) => outputs
                .iter()
                .position(|o| model.node(o.node).name == *want || model.outlet_label(*o).is_some_and(|l| l == want))
                .ok_or_else(|| load_err(path, format!("model has no output named {want:?}")))?,
        };

        let plan = model
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(|e| load_err(path, format!("{e:#}")))?;

        let encoder = OnnxEncoder {
            plan,
            feeds,
            output_index,
            output_kind: config.output_kind,
            pooling,
            dim,
        };
        // Probe once so shape or dimension problems surface at construction.
        let probe = TokenSequence::from_content(
            &[],
            super::vocab::SpecialIds {
                cls: 0,
                sep: 0,
                pad: 0,
                unk: 0,
            },
            2,
        );
        encoder
            .run_batch(std::slice::from_ref(&probe))
            .map_err(|e| load_err(path, format!("probe inference failed: {e}")))?;
        Ok(encoder)
    }

    pub(crate) fn run_batch(&self, seqs: &[TokenSequence]) -> Result<Vec<Vec<f64>>, EncoderError> {
        let batch = seqs.len();
        let seq_len = seqs.first().map_or(0, |s| s.max_len);
        let mut ids = Vec::with_capacity(batch * seq_len);
        let mut mask = Vec::with_capacity(batch * seq_len);
        for s in seqs {
            ids.extend(s.ids.iter().map(|&i| i64::from(i)));
            mask.extend(s.attention_mask.iter().map(|&m| i64::from(m)));
        }
        let infer = |e: TractError| EncoderError::Inference(format!("{e:#}"));
        let shape = [batch, seq_len];
        let mut inputs: TVec<TValue> = tvec!();
        for feed in &self.feeds {
            let data = match feed {
                Feed::InputIds => ids.clone(),
                Feed::AttentionMask => mask.clone(),
                Feed::TokenTypeIds => vec![0i64; batch * seq_len],
            };
            let t = Tensor::from_shape(&shape, &data).map_err(infer)?;
            inputs.push(t.into());
        }
        let outputs = self.plan.run(inputs).map_err(infer)?;
        let out = outputs
            .get(self.output_index)
            .ok_or_else(|| EncoderError::Inference("missing model output".into()))?;
        let view = out.to_plain_array_view::<f32>().map_err(infer)?;
        let shape = view.shape().to_vec();

        let mut vectors = Vec::with_capacity(batch);
        match self.output_kind {
            OutputKind::Pooled => {
                if shape.len() != 2 || shape[0] != batch {
                    return Err(EncoderError::Inference(format!(
                        "expected pooled output [batch, dim], got {shape:?}"
                    )));
                }
                self.check_dim(shape[1])?;
                for b in 0..batch {
                    vectors.push((0..shape[1]).map(|j| f64::from(view[[b, j]])).collect());
                }
            }
            OutputKind::HiddenStates => {
                if shape.len() != 3 || shape[0] != batch || shape[1] != seq_len {
                    return Err(EncoderError::Inference(format!(
                        "expected hidden states [batch, seq, dim], got {shape:?}"
                    )));
                }
                self.check_dim(shape[2])?;
                for (b, s) in seqs.iter().enumerate() {
                    let v: Vec<f64> = match self.pooling {
                        Pooling::Cls => (0..shape[2]).map(|j| f64::from(view[[b, 0, j]])).collect(),
                        Pooling::Mean => {
                            let used: Vec<usize> = (0..seq_len).filter(|&t| s.attention_mask[t] == 1).collect();
                            let n = used.len().max(1) as f64;
                            (0..shape[2])
                                .map(|j| used.iter().map(|&t| f64::from(view[[b, t, j]])).sum::<f64>() / n)
                                .collect()
                        }
                    };
                    vectors.push(v);
                }
            }
        }
        Ok(vectors)
    }

    fn check_dim(&self, got: usize) -> Result<(), EncoderError> {
        if got != self.dim {
            return Err(EncoderError::DimensionMismatch {
                declared: self.dim,
                actual: got,
            });
        }
        Ok(())
    }
}
