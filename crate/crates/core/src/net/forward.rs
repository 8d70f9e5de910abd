//! Forward and backward passes.
//!
//! A training forward pass records a cache per layer (inputs and dropout
//! masks); the backward pass walks the caches in reverse, so the masks drawn
//! on the way forward are exactly the ones differentiated through.

use rand::Rng;

use super::ops::{bce_loss, dropout_mask, sigmoid, softmax, BCE_EPSILON};
use super::params::NetworkParams;
use super::spec::{Layer, NetworkSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Fresh dropout masks per call.
    Train,
    /// Dropout layers are the identity.
    Eval,
    /// Same masking as `Train`; used for Monte-Carlo sampling at inference.
    McSample,
}

enum Cache {
    Dense {
        param: usize,
        input: Vec<f64>,
    },
    Conv {
        param: usize,
        input: Vec<f64>,
        in_shape: [usize; 3],
        out_shape: [usize; 3],
    },
    Relu {
        input: Vec<f64>,
    },
    Dropout {
        mask: Option<Vec<f64>>,
    },
    Residual {
        inner: Vec<Cache>,
    },
}

struct Pass<'a, R: ?Sized> {
    params: &'a NetworkParams,
    rng: Option<&'a mut R>,
    cursor: usize,
}

impl<R: Rng + ?Sized> Pass<'_, R> {
    fn run(
        &mut self,
        layers: &[Layer],
        mut x: Vec<f64>,
        mut shape: Vec<usize>,
        mut caches: Option<&mut Vec<Cache>>,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        for layer in layers {
            match layer {
                Layer::Dense { input, output } => {
                    let param = self.cursor;
                    self.cursor += 2;
                    let w = &self.params.tensors[param].data;
                    let b = &self.params.tensors[param + 1].data;
                    let y: Vec<f64> = (0..*output)
                        .map(|o| {
                            let row = &w[o * input..(o + 1) * input];
                            b[o] + row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>()
                        })
                        .collect();
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::Dense { param, input: x });
                    }
                    x = y;
                    shape = vec![*output];
                }
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let param = self.cursor;
                    self.cursor += 2;
                    let in_shape = [shape[0], shape[1], *in_channels];
                    let out_shape = [
                        (shape[0] - kernel) / stride + 1,
                        (shape[1] - kernel) / stride + 1,
                        *out_channels,
                    ];
                    let y = conv_forward(
                        &x,
                        in_shape,
                        out_shape,
                        *kernel,
                        *stride,
                        &self.params.tensors[param].data,
                        &self.params.tensors[param + 1].data,
                    );
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::Conv {
                            param,
                            input: x,
                            in_shape,
                            out_shape,
                        });
                    }
                    x = y;
                    shape = out_shape.to_vec();
                }
                Layer::Relu => {
                    let y = x.iter().map(|&v| v.max(0.0)).collect();
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::Relu { input: x });
                    }
                    x = y;
                }
                Layer::Dropout { rate } => {
                    let mask = match self.rng.as_deref_mut() {
                        Some(rng) => Some(dropout_mask(x.len(), *rate, rng)?),
                        None => None,
                    };
                    if let Some(m) = &mask {
                        for (v, k) in x.iter_mut().zip(m) {
                            *v *= k;
                        }
                    }
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::Dropout { mask });
                    }
                }
                Layer::Residual { inner } => {
                    let mut inner_caches = caches.as_ref().map(|_| Vec::new());
                    let (fx, _) =
                        self.run(inner, x.clone(), shape.clone(), inner_caches.as_mut())?;
                    for (v, f) in x.iter_mut().zip(&fx) {
                        *v += f;
                    }
                    if let (Some(c), Some(inner)) = (caches.as_deref_mut(), inner_caches) {
                        c.push(Cache::Residual { inner });
                    }
                }
                Layer::SigmoidHead | Layer::SoftmaxHead { .. } => {
                    unreachable!("heads are applied outside the layer loop")
                }
            }
        }
        Ok((x, shape))
    }
}

/// Reverse pass for `layers`. `grad` is the gradient with respect to the
/// output of the last layer; returns the gradient with respect to the input.
fn backprop(
    layers: &[Layer],
    caches: &[Cache],
    params: &NetworkParams,
    grads: &mut NetworkParams,
    mut grad: Vec<f64>,
) -> Vec<f64> {
    for (layer, cache) in layers.iter().zip(caches).rev() {
        grad = match (layer, cache) {
            (Layer::Dense { input, output }, Cache::Dense { param, input: x }) => {
                let w = &params.tensors[*param].data;
                let mut dx = vec![0.0; *input];
                {
                    let gw = &mut grads.tensors[*param].data;
                    for (o, &g) in grad.iter().enumerate().take(*output) {
                        if g == 0.0 {
                            continue;
                        }
                        let row = o * input;
                        for i in 0..*input {
                            gw[row + i] += g * x[i];
                            dx[i] += g * w[row + i];
                        }
                    }
                }
                for (gb, g) in grads.tensors[*param + 1].data.iter_mut().zip(&grad) {
                    *gb += g;
                }
                dx
            }
            (
                Layer::Conv2d { kernel, stride, .. },
                Cache::Conv {
                    param,
                    input,
                    in_shape,
                    out_shape,
                },
            ) => conv_backward(
                input, *in_shape, *out_shape, *kernel, *stride, params, grads, *param, &grad,
            ),
            (Layer::Relu, Cache::Relu { input }) => grad
                .iter()
                .zip(input)
                .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                .collect(),
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                Some(m) => grad.iter().zip(m).map(|(g, k)| g * k).collect(),
                None => grad,
            },
            (
                Layer::Residual { inner },
                Cache::Residual {
                    inner: inner_caches,
                },
            ) => {
                let through = backprop(inner, inner_caches, params, grads, grad.clone());
                grad.iter().zip(&through).map(|(a, b)| a + b).collect()
            }
            _ => unreachable!("cache does not match layer"),
        };
    }
    grad
}

fn conv_forward(
    x: &[f64],
    [_h, w, c]: [usize; 3],
    [oh, ow, oc]: [usize; 3],
    k: usize,
    s: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; oh * ow * oc];
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..oc {
                let mut acc = bias[o];
                for ky in 0..k {
                    for kx in 0..k {
                        let xi = ((oy * s + ky) * w + ox * s + kx) * c;
                        let wi = ((o * k + ky) * k + kx) * c;
                        for ci in 0..c {
                            acc += weight[wi + ci] * x[xi + ci];
                        }
                    }
                }
                y[(oy * ow + ox) * oc + o] = acc;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    [h, w, c]: [usize; 3],
    [oh, ow, oc]: [usize; 3],
    k: usize,
    s: usize,
    params: &NetworkParams,
    grads: &mut NetworkParams,
    param: usize,
    grad: &[f64],
) -> Vec<f64> {
    let weight = &params.tensors[param].data;
    let mut dx = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..oc {
                let g = grad[(oy * ow + ox) * oc + o];
                grads.tensors[param + 1].data[o] += g;
                let gw = &mut grads.tensors[param].data;
                for ky in 0..k {
                    for kx in 0..k {
                        let xi = ((oy * s + ky) * w + ox * s + kx) * c;
                        let wi = ((o * k + ky) * k + kx) * c;
                        for ci in 0..c {
                            gw[wi + ci] += g * x[xi + ci];
                            dx[xi + ci] += g * weight[wi + ci];
                        }
                    }
                }
            }
        }
    }
    dx
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerics(format!("non-finite {what}")))
    }
}

fn prepare<'a>(
    spec: &'a NetworkSpec,
    params: &NetworkParams,
    input: &[f64],
) -> Result<(&'a [Layer], &'a Layer)> {
    spec.validate()?;
    params.check_matches(spec)?;
    if input.len() != spec.input_len() {
        return Err(Error::Shape(format!(
            "input has {} values, spec expects shape {:?}",
            input.len(),
            spec.input_shape
        )));
    }
    let (head, body) = spec.layers.split_last().expect("validated spec has a head");
    Ok((body, head))
}

fn apply_head(head: &Layer, logits: &[f64]) -> Result<Vec<f64>> {
    match head {
        Layer::SigmoidHead => Ok(vec![sigmoid(logits[0])]),
        Layer::SoftmaxHead { .. } => softmax(logits),
        _ => unreachable!("validated head"),
    }
}

/// Runs the network on one input and returns the head's probabilities.
///
/// `rng` is required unless `mode` is `Eval`.
pub fn forward<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &[f64],
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<Vec<f64>> {
    let (body, head) = prepare(spec, params, input)?;
    let rng = match mode {
        Mode::Eval => None,
        Mode::Train | Mode::McSample => Some(rng.ok_or_else(|| {
            Error::Domain("a random stream is required outside Eval mode".into())
        })?),
    };
    let mut pass = Pass {
        params,
        rng,
        cursor: 0,
    };
    let (logits, _) = pass.run(body, input.to_vec(), spec.input_shape.clone(), None)?;
    check_finite(&logits, "activation")?;
    apply_head(head, &logits)
}

/// `forward` in `Eval` mode.
pub fn forward_eval(spec: &NetworkSpec, params: &NetworkParams, input: &[f64]) -> Result<Vec<f64>> {
    forward::<rand_chacha::ChaCha8Rng>(spec, params, input, Mode::Eval, None)
}

/// Per-example loss: BCE for the sigmoid head, cross-entropy of the labelled
/// class for the softmax head.
pub fn example_loss(probs: &[f64], label: u8) -> f64 {
    if probs.len() == 1 {
        bce_loss(probs[0], label)
    } else {
        -probs[label as usize].clamp(BCE_EPSILON, 1.0).ln()
    }
}

/// Mean loss over a batch. With `rng` set, each example gets fresh dropout
/// masks (Train mode); without it dropout is off.
pub fn batch_loss<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &NetworkParams,
    batch: &[(&[f64], u8)],
    mut rng: Option<&mut R>,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in batch {
        let mode = if rng.is_some() {
            Mode::Train
        } else {
            Mode::Eval
        };
        let p = forward(spec, params, x, mode, rng.as_deref_mut())?;
        total += example_loss(&p, *y);
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of the mean batch loss with respect to every parameter, together
/// with the mean loss itself.
///
/// With `rng` set each example is run in Train mode and its dropout masks are
/// reused for its backward pass; with `None` dropout is off.
pub fn backward<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &NetworkParams,
    batch: &[(&[f64], u8)],
    mut rng: Option<&mut R>,
) -> Result<(NetworkParams, f64)> {
    if batch.is_empty() {
        return Err(Error::Data("backward on an empty batch".into()));
    }
    let mut grads = NetworkParams::zeros(spec);
    let mut total = 0.0;
    for (x, y) in batch {
        let (body, head) = prepare(spec, params, x)?;
        let classes = match head {
            Layer::SigmoidHead => 2,
            Layer::SoftmaxHead { classes } => *classes,
            _ => unreachable!(),
        };
        if (*y as usize) >= classes {
            return Err(Error::Data(format!(
                "label {y} outside the head's {classes} classes"
            )));
        }
        let mut caches = Vec::new();
        let mut pass = Pass {
            params,
            rng: rng.as_deref_mut(),
            cursor: 0,
        };
        let (logits, _) = pass.run(
            body,
            x.to_vec(),
            spec.input_shape.clone(),
            Some(&mut caches),
        )?;
        check_finite(&logits, "activation")?;
        let probs = apply_head(head, &logits)?;
        total += example_loss(&probs, *y);
        let dlogits: Vec<f64> = match head {
            Layer::SigmoidHead => vec![probs[0] - f64::from(*y)],
            _ => probs
                .iter()
                .enumerate()
                .map(|(k, p)| p - if k == *y as usize { 1.0 } else { 0.0 })
                .collect(),
        };
        backprop(body, &caches, params, &mut grads, dlogits);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    if !grads.all_finite() {
        return Err(Error::numerics("non-finite gradient"));
    }
    Ok((grads, total / n))
}
