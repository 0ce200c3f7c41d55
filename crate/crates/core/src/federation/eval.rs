use serde::{Deserialize, Serialize};

use crate::datagen::{eval_transform, LabeledSample, NormStats};
use crate::error::{Error, Result};
use crate::tensor::{argmax, forward, sample_cross_entropy, Batch, Matrix, ModelSpec, ParameterVector};

const EVAL_CHUNK: usize = 256;

/// Eval-transformed inputs, computed once and reused every round.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    inputs: Matrix,
    labels: Vec<usize>,
}

impl EvalSet {
    pub fn build(samples: &[LabeledSample], norm: &NormStats) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::config("evaluation set is empty"))?;
        let cols = first.image.pixels().len();
        let mut data = Vec::with_capacity(samples.len() * cols);
        for s in samples {
            data.extend(eval_transform(&s.image, norm));
        }
        Ok(EvalSet {
            inputs: Matrix::new(samples.len(), cols, data)?,
            labels: samples.iter().map(|s| s.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    /// `None` for classes with no samples in the set.
    pub per_class_accuracy: Vec<Option<f64>>,
}

pub fn evaluate_global(spec: &ModelSpec, params: &ParameterVector, set: &EvalSet) -> Result<Evaluation> {
    let k = spec.num_classes;
    let cols = set.inputs.cols();
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    let mut loss = 0.0;
    for start in (0..set.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(set.len());
        let data = set.inputs.as_slice()[start * cols..end * cols].to_vec();
        let labels = set.labels[start..end].to_vec();
        let batch = Batch::new(Matrix::new(end - start, cols, data)?, labels)?;
        let logits = forward(spec, params, &batch)?;
        for (i, &label) in batch.labels().iter().enumerate() {
            if label >= k {
                return Err(Error::input(format!("label {label} out of range for {k} classes")));
            }
            let row = logits.row(i);
            loss += sample_cross_entropy(row, label);
            total[label] += 1;
            if argmax(row) == label {
                correct[label] += 1;
            }
        }
    }
    let n = set.len() as f64;
    Ok(Evaluation {
        accuracy: correct.iter().sum::<usize>() as f64 / n,
        loss: loss / n,
        per_class_accuracy: correct
            .iter()
            .zip(&total)
            .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
            .collect(),
    })
}

/// Convenience wrapper that builds the [`EvalSet`] on the fly.
pub fn evaluate_samples(
    spec: &ModelSpec,
    params: &ParameterVector,
    samples: &[LabeledSample],
    norm: &NormStats,
) -> Result<Evaluation> {
    evaluate_global(spec, params, &EvalSet::build(samples, norm)?)
}
