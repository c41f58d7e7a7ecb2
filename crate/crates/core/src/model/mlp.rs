//! Dense ReLU network over a flat parameter vector.
//!
//! Layout per layer: weight matrix `(fan_in, fan_out)` row-major, then the
//! `fan_out` biases. Hidden layers use ReLU; the output layer produces logits
//! for softmax cross-entropy.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParameterVector;
use crate::error::{FedError, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_classes: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl LayerShape {
    fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_classes: usize, seed: u64) -> Self {
        ModelSpec {
            input_dim,
            hidden_dims,
            output_classes,
            activation: Activation::Relu,
            init_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(FedError::config("model.input_dim", "must be >= 1"));
        }
        if self.output_classes < 2 {
            return Err(FedError::config("model.output_classes", "must be >= 2"));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(FedError::config("model.hidden", "layer widths must be >= 1"));
        }
        Ok(())
    }

    fn layers(&self) -> Vec<LayerShape> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_classes);
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let layer = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = layer.end();
                layer
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().last().map_or(0, LayerShape::end)
    }
}

/// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
pub fn init_model(spec: &ModelSpec) -> Result<ParameterVector> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.init_seed);
    let mut values = vec![0.0; spec.num_params()];
    for layer in spec.layers() {
        let limit = (6.0 / layer.fan_in as f64).sqrt();
        for w in &mut values[layer.weight_offset..layer.bias_offset] {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(ParameterVector::new(values))
}

/// A borrowed minibatch: `labels.len()` rows of `input_dim` features.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(features: &'a [f64], labels: &'a [usize]) -> Self {
        Batch { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_inputs(params: &ParameterVector, spec: &ModelSpec, batch: &Batch<'_>) -> Result<()> {
    if params.len() != spec.num_params() {
        return Err(FedError::Shape(format!(
            "model expects {} parameters, got {}",
            spec.num_params(),
            params.len()
        )));
    }
    if batch.is_empty() {
        return Err(FedError::Shape("empty batch".into()));
    }
    if batch.features.len() != batch.len() * spec.input_dim {
        return Err(FedError::Shape(format!(
            "feature buffer of {} values does not hold {} rows of width {}",
            batch.features.len(),
            batch.len(),
            spec.input_dim
        )));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= spec.output_classes) {
        return Err(FedError::Shape(format!(
            "label {bad} outside [0, {})",
            spec.output_classes
        )));
    }
    Ok(())
}

fn weights<'p>(params: &'p [f64], layer: &LayerShape) -> ArrayView2<'p, f64> {
    ArrayView2::from_shape(
        (layer.fan_in, layer.fan_out),
        &params[layer.weight_offset..layer.bias_offset],
    )
    .expect("layer slice matches its shape")
}

fn bias<'p>(params: &'p [f64], layer: &LayerShape) -> ArrayView1<'p, f64> {
    ArrayView1::from(&params[layer.bias_offset..layer.end()])
}

/// Runs the network, returning every layer's output (post-ReLU for hidden
/// layers, raw logits for the last).
fn forward(params: &[f64], layers: &[LayerShape], x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let input = if i == 0 { x } else { outputs[i - 1].view() };
        let mut z = input.dot(&weights(params, layer));
        z += &bias(params, layer);
        if i + 1 < layers.len() {
            z.mapv_inplace(|v| v.max(0.0));
        }
        outputs.push(z);
    }
    outputs
}

/// Per-row log-sum-exp of the logits.
fn log_sum_exp(logits: &Array2<f64>) -> Vec<f64> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
        })
        .collect()
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn forward_loss_grad(
    params: &ParameterVector,
    spec: &ModelSpec,
    batch: Batch<'_>,
) -> Result<(f64, ParameterVector)> {
    check_inputs(params, spec, &batch)?;
    let layers = spec.layers();
    let p = params.as_slice();
    let n = batch.len();
    let x = ArrayView2::from_shape((n, spec.input_dim), batch.features).expect("checked shape");
    let outputs = forward(p, &layers, x);
    let logits = outputs.last().expect("at least one layer");
    let lse = log_sum_exp(logits);

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    // dL/dlogits = (softmax - onehot) / n
    let mut delta = Array2::<f64>::zeros(logits.raw_dim());
    for (r, (&y, &l)) in batch.labels.iter().zip(&lse).enumerate() {
        loss += l - logits[[r, y]];
        for c in 0..spec.output_classes {
            delta[[r, c]] = (logits[[r, c]] - l).exp() * inv_n;
        }
        delta[[r, y]] -= inv_n;
    }
    loss *= inv_n;

    let mut grad = vec![0.0; p.len()];
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let input = if i == 0 { x } else { outputs[i - 1].view() };
        {
            let (gw, gb) = grad[layer.weight_offset..layer.end()]
                .split_at_mut(layer.fan_in * layer.fan_out);
            let mut gw = ArrayViewMut2::from_shape((layer.fan_in, layer.fan_out), gw)
                .expect("layer slice matches its shape");
            general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut gw);
            for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                *g = s;
            }
        }
        if i > 0 {
            let mut upstream = delta.dot(&weights(p, layer).t());
            // ReLU mask: an output is active iff it is positive.
            upstream.zip_mut_with(&outputs[i - 1], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = upstream;
        }
    }
    Ok((loss, ParameterVector::new(grad)))
}

/// Summed loss and correct-prediction count over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalTally {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

pub fn evaluate_batch(params: &ParameterVector, spec: &ModelSpec, batch: Batch<'_>) -> Result<EvalTally> {
    check_inputs(params, spec, &batch)?;
    let layers = spec.layers();
    let n = batch.len();
    let x = ArrayView2::from_shape((n, spec.input_dim), batch.features).expect("checked shape");
    let outputs = forward(params.as_slice(), &layers, x);
    let logits = outputs.last().expect("at least one layer");
    let lse = log_sum_exp(logits);
    let mut tally = EvalTally {
        count: n,
        ..EvalTally::default()
    };
    for ((row, &y), l) in logits.axis_iter(Axis(0)).zip(batch.labels).zip(lse) {
        tally.loss_sum += l - row[y];
        // first maximal index wins ties
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == y {
            tally.correct += 1;
        }
    }
    Ok(tally)
}
