//! Forward pass and backpropagation for the dense ReLU classifier.

use crate::error::{Error, Result};
use crate::tensor::loss::{check_labels, sample_cross_entropy, softmax};
use crate::tensor::{Batch, Matrix, ModelSpec, ParameterVector};

/// Dot product with sixteen independent accumulators. The summation order is
/// fixed, so results are reproducible bit-for-bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..16 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut lanes = [0.0f64; 2];
    for k in 0..8 {
        lanes[0] += acc[2 * k];
        lanes[1] += acc[2 * k + 1];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (lanes[0] + lanes[1]) + tail
}

/// `y += sum_k alpha_k * x_k` for up to four terms in a single pass over `y`.
#[inline]
fn axpy_multi(terms: &[(f64, &[f64])], y: &mut [f64]) {
    match *terms {
        [] => {}
        [(a0, x0)] => {
            for (yi, &u) in y.iter_mut().zip(x0) {
                *yi += a0 * u;
            }
        }
        [(a0, x0), (a1, x1)] => {
            for ((yi, &u), &w) in y.iter_mut().zip(x0).zip(x1) {
                *yi += a0 * u + a1 * w;
            }
        }
        [(a0, x0), (a1, x1), (a2, x2)] => {
            for (((yi, &u), &w), &z) in y.iter_mut().zip(x0).zip(x1).zip(x2) {
                *yi += (a0 * u + a1 * w) + a2 * z;
            }
        }
        [(a0, x0), (a1, x1), (a2, x2), (a3, x3)] => {
            for ((((yi, &u), &w), &z), &q) in y.iter_mut().zip(x0).zip(x1).zip(x2).zip(x3) {
                *yi += (a0 * u + a1 * w) + (a2 * z + a3 * q);
            }
        }
        _ => {
            for chunk in terms.chunks(4) {
                axpy_multi(chunk, y);
            }
        }
    }
}

/// Offsets of each layer's weight and bias block inside the flat vector.
#[derive(Clone, Copy, Debug)]
struct LayerView {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

fn layer_views(spec: &ModelSpec) -> Vec<LayerView> {
    let mut offset = 0;
    spec.layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let view = LayerView {
                fan_in,
                fan_out,
                weight: offset,
                bias: offset + fan_in * fan_out,
            };
            offset += (fan_in + 1) * fan_out;
            view
        })
        .collect()
}

fn check_batch(spec: &ModelSpec, batch: &Batch) -> Result<()> {
    if batch.inputs().cols() != spec.input_dim {
        return Err(Error::config(format!(
            "batch input width {} does not match model input_dim {}",
            batch.inputs().cols(),
            spec.input_dim
        )));
    }
    if batch.inputs().as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("batch contains non-finite inputs".into()));
    }
    Ok(())
}

/// Reusable activation buffers. Keeping one per training loop avoids
/// reallocating on every mini-batch.
#[derive(Debug, Default)]
pub struct Workspace {
    // acts[l] holds the input to layer l for every sample; acts[L] holds logits.
    acts: Vec<Vec<f64>>,
    deltas: Vec<f64>,
    prev_deltas: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn run_forward(&mut self, views: &[LayerView], params: &[f64], batch: &Batch) {
        let b = batch.len();
        self.acts.resize_with(views.len() + 1, Vec::new);
        self.acts[0].clear();
        self.acts[0].extend_from_slice(batch.inputs().as_slice());
        for (l, v) in views.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            out.resize(b * v.fan_out, 0.0);
            let last = l + 1 == views.len();
            // Row-outer so each weight row is loaded once per batch.
            for o in 0..v.fan_out {
                let w = &params[v.weight + o * v.fan_in..v.weight + (o + 1) * v.fan_in];
                for s in 0..b {
                    let x = &input[s * v.fan_in..(s + 1) * v.fan_in];
                    let z = dot(w, x) + params[v.bias + o];
                    out[s * v.fan_out + o] = if last { z } else { z.max(0.0) };
                }
            }
        }
    }
}

/// Raw logits, one row per sample.
pub fn forward(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<Matrix> {
    params.check_matches(spec)?;
    check_batch(spec, batch)?;
    let views = layer_views(spec);
    let mut ws = Workspace::new();
    ws.run_forward(&views, params.values(), batch);
    let logits = ws.acts.pop().unwrap_or_default();
    let m = Matrix::new(batch.len(), spec.num_classes, logits)?;
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("forward produced non-finite logits".into()));
    }
    Ok(m)
}

/// Gradient of the mean cross-entropy with respect to every parameter.
pub fn gradient(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<ParameterVector> {
    let mut grad = vec![0.0; params.len()];
    let mut ws = Workspace::new();
    loss_and_gradient(spec, params, batch, &mut ws, &mut grad)?;
    ParameterVector::new(grad, params.layout().clone())
}

/// Computes the batch loss and writes its gradient into `grad` (overwritten).
pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> Result<f64> {
    params.check_matches(spec)?;
    check_batch(spec, batch)?;
    check_labels(batch.labels(), spec.num_classes)?;
    if grad.len() != params.len() {
        return Err(Error::config("gradient buffer length does not match parameters"));
    }
    let views = layer_views(spec);
    let p = params.values();
    ws.run_forward(&views, p, batch);

    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let k = spec.num_classes;
    let logits = &ws.acts[views.len()];
    let mut loss = 0.0;
    ws.deltas.clear();
    ws.deltas.resize(b * k, 0.0);
    for (s, &label) in batch.labels().iter().enumerate() {
        let row = &logits[s * k..(s + 1) * k];
        loss += sample_cross_entropy(row, label);
        let probs = softmax(row);
        for (c, pc) in probs.into_iter().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            ws.deltas[s * k + c] = (pc - target) * inv_b;
        }
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }

    grad.fill(0.0);
    let mut terms: Vec<(f64, &[f64])> = Vec::with_capacity(b.max(4));
    for (l, v) in views.iter().enumerate().rev() {
        let input = &ws.acts[l];
        for o in 0..v.fan_out {
            let row = &mut grad[v.weight + o * v.fan_in..v.weight + (o + 1) * v.fan_in];
            let mut bias_grad = 0.0;
            terms.clear();
            for s in 0..b {
                let d = ws.deltas[s * v.fan_out + o];
                if d != 0.0 {
                    terms.push((d, &input[s * v.fan_in..(s + 1) * v.fan_in]));
                }
                bias_grad += d;
            }
            for chunk in terms.chunks(4) {
                axpy_multi(chunk, row);
            }
            grad[v.bias + o] = bias_grad;
        }
        if l == 0 {
            break;
        }
        // Propagate through W^T and the ReLU that produced `input`.
        ws.prev_deltas.clear();
        ws.prev_deltas.resize(b * v.fan_in, 0.0);
        for s in 0..b {
            let prev = &mut ws.prev_deltas[s * v.fan_in..(s + 1) * v.fan_in];
            terms.clear();
            for o in 0..v.fan_out {
                let d = ws.deltas[s * v.fan_out + o];
                if d != 0.0 {
                    terms.push((d, &p[v.weight + o * v.fan_in..v.weight + (o + 1) * v.fan_in]));
                }
            }
            for chunk in terms.chunks(4) {
                axpy_multi(chunk, prev);
            }
            let act = &input[s * v.fan_in..(s + 1) * v.fan_in];
            for (d, &a) in prev.iter_mut().zip(act) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        std::mem::swap(&mut ws.deltas, &mut ws.prev_deltas);
    }
    Ok(loss)
}

/// Predicted class (first maximum) for every sample.
pub fn predict(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<Vec<usize>> {
    let logits = forward(spec, params, batch)?;
    Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
