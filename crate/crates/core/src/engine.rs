//! Forward passes over a validated [`Model`], with optional Monte-Carlo
//! dropout and activation-trace capture.
//!
//! Dropout is inverted: kept activations are scaled by `1 / (1 - rate)` at
//! sample time, so the deterministic pass treats dropout as identity.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::{same_pad_low, LayerKind, LayerSpec, Model, Padding, Task};
use crate::rng;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Deterministic,
    /// Dropout active. `input_index` identifies the input within its dataset
    /// so that masks are independent of batching.
    Stochastic {
        global_seed: u64,
        input_index: u64,
        sample_index: u32,
    },
}

/// Concatenated activations of the traced layers, one row per input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTraceSet {
    /// Traced layers in network order.
    pub layer_names: Vec<String>,
    /// `[N, d]`.
    pub traces: Tensor,
    /// Model-predicted class per input; `None` for regression models.
    pub predicted_class: Option<Vec<u32>>,
}

impl ActivationTraceSet {
    pub fn new(
        layer_names: Vec<String>,
        traces: Tensor,
        predicted_class: Option<Vec<u32>>,
    ) -> Result<Self> {
        if traces.rank() != 2 {
            return Err(Error::Dimension(format!(
                "trace matrix must be [N, d], got {:?}",
                traces.shape()
            )));
        }
        if let Some(c) = &predicted_class {
            if c.len() != traces.rows() {
                return Err(Error::Dimension(format!(
                    "{} predicted classes for {} traces",
                    c.len(),
                    traces.rows()
                )));
            }
        }
        Ok(Self {
            layer_names,
            traces,
            predicted_class,
        })
    }

    pub fn len(&self) -> usize {
        self.traces.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.traces.row_len()
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        self.traces.row(i)
    }
}

/// Numerically stable softmax, computed in `f64`.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax input contains {bad}")));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Output of the final layer for a single input of shape `model.input_shape()`.
pub fn forward(model: &Model, input: &Tensor, mode: ForwardMode) -> Result<Tensor> {
    if input.shape() != model.input_shape() {
        return Err(Error::Dimension(format!(
            "input shape {:?} does not match model input {:?}",
            input.shape(),
            model.input_shape()
        )));
    }
    let out = run(model, input.data(), mode, &[])?.output;
    Tensor::new(model.output_shape().to_vec(), out)
}

/// Same as [`forward`] on a flat input slice; returns the flattened output.
pub fn forward_flat(model: &Model, input: &[f32], mode: ForwardMode) -> Result<Vec<f32>> {
    let expected: usize = model.input_shape().iter().product();
    if input.len() != expected {
        return Err(Error::Dimension(format!(
            "input has {} elements, model expects {expected}",
            input.len()
        )));
    }
    Ok(run(model, input, mode, &[])?.output)
}

fn check_batch(model: &Model, inputs: &Tensor) -> Result<()> {
    if inputs.rank() < 2 || &inputs.shape()[1..] != model.input_shape() {
        return Err(Error::Dimension(format!(
            "batch shape {:?} is not [N, {:?}]",
            inputs.shape(),
            model.input_shape()
        )));
    }
    Ok(())
}

/// Deterministic outputs for every input in a `[N, ...input_shape]` batch.
pub fn predict_batch(model: &Model, inputs: &Tensor) -> Result<Tensor> {
    check_batch(model, inputs)?;
    let rows = (0..inputs.rows())
        .into_par_iter()
        .map(|i| run(model, inputs.row(i), ForwardMode::Deterministic, &[]).map(|r| r.output))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&[model.output_len()], &rows)
}

/// Captures deterministic activation traces of `layer_names` for each input.
///
/// Traced layers are concatenated in network order regardless of the order
/// given. With `with_classes`, each input's predicted class (argmax of the
/// final output) is recorded; this requires a classification model.
pub fn capture_traces(
    model: &Model,
    inputs: &Tensor,
    layer_names: &[impl AsRef<str>],
    with_classes: bool,
) -> Result<ActivationTraceSet> {
    check_batch(model, inputs)?;
    if layer_names.is_empty() {
        return Err(Error::InvalidArgument("no trace layers given".into()));
    }
    if with_classes && model.task() != Task::Classification {
        return Err(Error::Task(
            "predicted classes requested from a regression model".into(),
        ));
    }
    let mut indices = layer_names
        .iter()
        .map(|n| {
            model
                .layer_index(n.as_ref())
                .ok_or_else(|| Error::UnknownLayer(n.as_ref().to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    indices.sort_unstable();
    if indices.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("trace layer listed twice".into()));
    }
    let dim: usize = indices
        .iter()
        .map(|&i| model.layer_shape(i).iter().product::<usize>())
        .sum();

    let per_input = (0..inputs.rows())
        .into_par_iter()
        .map(|i| {
            let r = run(model, inputs.row(i), ForwardMode::Deterministic, &indices)?;
            let class = if with_classes {
                Some(tensor::argmax(&r.output)? as u32)
            } else {
                None
            };
            Ok((r.captured.concat(), class))
        })
        .collect::<Result<Vec<_>>>()?;

    let (rows, classes): (Vec<Vec<f32>>, Vec<Option<u32>>) = per_input.into_iter().unzip();
    let traces = Tensor::stack(&[dim], &rows)?;
    let predicted_class = if with_classes {
        Some(classes.into_iter().map(|c| c.unwrap_or_default()).collect())
    } else {
        None
    };
    let layer_names = indices
        .iter()
        .map(|&i| model.layers()[i].name.clone())
        .collect();
    ActivationTraceSet::new(layer_names, traces, predicted_class)
}

struct RunOutput {
    output: Vec<f32>,
    captured: Vec<Vec<f32>>,
}

/// Runs every layer, copying out the outputs of `capture` (sorted layer
/// indices) along the way.
fn run(model: &Model, input: &[f32], mode: ForwardMode, capture: &[usize]) -> Result<RunOutput> {
    if let ForwardMode::Stochastic { .. } = mode {
        if !model.has_dropout() {
            return Err(Error::NoDropout);
        }
    }
    let mut x = input.to_vec();
    let mut shape = model.input_shape().to_vec();
    let mut captured = Vec::with_capacity(capture.len());
    for (ordinal, layer) in model.layers().iter().enumerate() {
        x = apply_layer(model, layer, ordinal, &shape, x, mode)?;
        shape.clear();
        shape.extend_from_slice(model.layer_shape(ordinal));
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "layer `{}` produced {} at element {i}",
                layer.name, x[i]
            )));
        }
        if capture.binary_search(&ordinal).is_ok() {
            captured.push(x.clone());
        }
    }
    Ok(RunOutput {
        output: x,
        captured,
    })
}

fn apply_layer(
    model: &Model,
    layer: &LayerSpec,
    ordinal: usize,
    in_shape: &[usize],
    mut x: Vec<f32>,
    mode: ForwardMode,
) -> Result<Vec<f32>> {
    Ok(match layer.kind {
        LayerKind::Dense { in_dim, out_dim } => {
            let kernel = model.weight(layer, "kernel").data();
            let bias = model.weight(layer, "bias").data();
            (0..out_dim)
                .map(|o| {
                    let row = &kernel[o * in_dim..(o + 1) * in_dim];
                    (f64::from(bias[o]) + tensor::dot(row, &x)) as f32
                })
                .collect()
        }
        LayerKind::Relu => {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
            x
        }
        LayerKind::Softmax => {
            let width = *in_shape.last().expect("non-empty shape");
            let mut out = Vec::with_capacity(x.len());
            for chunk in x.chunks(width) {
                let z: Vec<f64> = chunk.iter().map(|&v| f64::from(v)).collect();
                out.extend(softmax(&z)?.into_iter().map(|p| p as f32));
            }
            out
        }
        LayerKind::Dropout { rate } => match mode {
            ForwardMode::Deterministic => x,
            ForwardMode::Stochastic {
                global_seed,
                input_index,
                sample_index,
            } => {
                let mut rng = rng::mask_rng(global_seed, input_index, sample_index, ordinal);
                let scale = 1.0 / (1.0 - rate);
                for v in x.iter_mut() {
                    let keep = rng.random::<f64>() >= rate;
                    *v = if keep {
                        (f64::from(*v) * scale) as f32
                    } else {
                        0.0
                    };
                }
                x
            }
        },
        LayerKind::Flatten => x,
        LayerKind::Conv2d {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
        } => {
            let (h, w) = (in_shape[0], in_shape[1]);
            let out_shape = model.layer_shape(ordinal);
            let (oh, ow) = (out_shape[0], out_shape[1]);
            let (pad_top, pad_left) = match padding {
                Padding::Same => (
                    same_pad_low(h, kernel_h, stride),
                    same_pad_low(w, kernel_w, stride),
                ),
                Padding::Valid => (0, 0),
            };
            let kernel = model.weight(layer, "kernel").data();
            let bias = model.weight(layer, "bias").data();
            let mut out = vec![0f32; oh * ow * out_channels];
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..out_channels {
                        let mut acc = f64::from(bias[co]);
                        for ky in 0..kernel_h {
                            let iy = (oy * stride + ky) as isize - pad_top as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kernel_w {
                                let ix = (ox * stride + kx) as isize - pad_left as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let base = (iy as usize * w + ix as usize) * in_channels;
                                for ci in 0..in_channels {
                                    let k = kernel
                                        [((co * in_channels + ci) * kernel_h + ky) * kernel_w + kx];
                                    acc += f64::from(k) * f64::from(x[base + ci]);
                                }
                            }
                        }
                        out[(oy * ow + ox) * out_channels + co] = acc as f32;
                    }
                }
            }
            out
        }
        LayerKind::Maxpool2d { kernel, stride } => {
            let (w, c) = (in_shape[1], in_shape[2]);
            let out_shape = model.layer_shape(ordinal);
            let (oh, ow) = (out_shape[0], out_shape[1]);
            let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
            for oy in 0..oh {
                for ox in 0..ow {
                    let dst = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let base = ((oy * stride + ky) * w + ox * stride + kx) * c;
                            for (d, &v) in dst.iter_mut().zip(&x[base..base + c]) {
                                *d = d.max(v);
                            }
                        }
                    }
                }
            }
            out
        }
        LayerKind::Batchnorm { epsilon } => {
            let c = *in_shape.last().expect("non-empty shape");
            let gamma = model.weight(layer, "gamma").data();
            let beta = model.weight(layer, "beta").data();
            let mean = model.weight(layer, "moving_mean").data();
            let var = model.weight(layer, "moving_var").data();
            for (i, v) in x.iter_mut().enumerate() {
                let ch = i % c;
                let norm =
                    (f64::from(*v) - f64::from(mean[ch])) / (f64::from(var[ch]) + epsilon).sqrt();
                *v = (f64::from(gamma[ch]) * norm + f64::from(beta[ch])) as f32;
            }
            x
        }
    })
}
