//! Architecture description and shape validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default dropout rate applied by the builder helpers.
pub const DEFAULT_DROPOUT: f64 = 0.2;

/// One layer of a feedforward network.
///
/// Activations flow as flat `f64` buffers. Rank-3 shapes are laid out as
/// `[height, width, channels]` in row-major order, which is what `Conv2d`
/// expects. `Dense` consumes any shape whose element count matches `input`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        input: usize,
        output: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    /// `x + inner(x)`; `inner` must preserve the shape.
    Residual {
        inner: Vec<Layer>,
    },
    SigmoidHead,
    SoftmaxHead {
        classes: usize,
    },
}

impl Layer {
    pub fn is_head(&self) -> bool {
        matches!(self, Layer::SigmoidHead | Layer::SoftmaxHead { .. })
    }

    /// Parameter tensor shapes owned directly by this layer (not its children).
    pub(crate) fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Layer::Dense { input, output } => vec![vec![output, input], vec![output]],
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, kernel, kernel, in_channels],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl NetworkSpec {
    /// Dense residual stack: `dense(input, hidden) -> relu`, then `blocks` times
    /// `residual{dense, relu, dense} -> relu -> dropout(rate)`, then a single
    /// logit with a sigmoid head. Dropout sits after the shortcut addition.
    pub fn residual_mlp(input: usize, hidden: usize, blocks: usize, rate: f64) -> Self {
        let mut layers = vec![
            Layer::Dense {
                input,
                output: hidden,
            },
            Layer::Relu,
        ];
        for _ in 0..blocks {
            layers.push(Layer::Residual {
                inner: vec![
                    Layer::Dense {
                        input: hidden,
                        output: hidden,
                    },
                    Layer::Relu,
                    Layer::Dense {
                        input: hidden,
                        output: hidden,
                    },
                ],
            });
            layers.push(Layer::Relu);
            layers.push(Layer::Dropout { rate });
        }
        layers.push(Layer::Dense {
            input: hidden,
            output: 1,
        });
        layers.push(Layer::SigmoidHead);
        NetworkSpec {
            input_shape: vec![input],
            layers,
        }
    }

    /// Validates the architecture and returns the output shape of every top-level layer.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Shape(format!(
                "input shape {:?} must be nonempty with positive dims",
                self.input_shape
            )));
        }
        match self.layers.last() {
            Some(l) if l.is_head() => {}
            _ => {
                return Err(Error::Shape(
                    "the final layer must be an output head".into(),
                ))
            }
        }
        let heads = self.layers.iter().filter(|l| l.is_head()).count();
        if heads != 1 {
            return Err(Error::Shape(format!(
                "expected exactly one output head, found {heads}"
            )));
        }
        let mut shape = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(layer, &shape).map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("layer {i}: {m}")),
                other => other,
            })?;
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> Result<usize> {
        let shapes = self.validate()?;
        Ok(numel(shapes.last().expect("validated spec has layers")))
    }

    pub fn input_len(&self) -> usize {
        numel(&self.input_shape)
    }

    /// Copy of the architecture with every dropout rate set to zero.
    pub fn without_dropout(&self) -> Self {
        fn strip(layers: &[Layer]) -> Vec<Layer> {
            layers
                .iter()
                .map(|l| match l {
                    Layer::Dropout { .. } => Layer::Dropout { rate: 0.0 },
                    Layer::Residual { inner } => Layer::Residual {
                        inner: strip(inner),
                    },
                    other => other.clone(),
                })
                .collect()
        }
        NetworkSpec {
            input_shape: self.input_shape.clone(),
            layers: strip(&self.layers),
        }
    }

    /// All dropout rates in traversal order.
    pub fn dropout_rates(&self) -> Vec<f64> {
        fn collect(layers: &[Layer], out: &mut Vec<f64>) {
            for l in layers {
                match l {
                    Layer::Dropout { rate } => out.push(*rate),
                    Layer::Residual { inner } => collect(inner, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.layers, &mut out);
        out
    }

    /// Parameter tensor shapes in depth-first layer order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        fn collect(layers: &[Layer], out: &mut Vec<Vec<usize>>) {
            for l in layers {
                out.extend(l.param_shapes());
                if let Layer::Residual { inner } = l {
                    collect(inner, out);
                }
            }
        }
        let mut out = Vec::new();
        collect(&self.layers, &mut out);
        out
    }
}

fn layer_output_shape(layer: &Layer, shape: &[usize]) -> Result<Vec<usize>> {
    match layer {
        Layer::Dense { input, output } => {
            if numel(shape) != *input {
                return Err(Error::Shape(format!(
                    "dense expects {input} inputs, got shape {shape:?}"
                )));
            }
            if *output == 0 {
                return Err(Error::Shape("dense output must be positive".into()));
            }
            Ok(vec![*output])
        }
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let [h, w, c] = shape else {
                return Err(Error::Shape(format!(
                    "conv2d expects a [height, width, channels] input, got {shape:?}"
                )));
            };
            if c != in_channels {
                return Err(Error::Shape(format!(
                    "conv2d expects {in_channels} channels, got {c}"
                )));
            }
            if *kernel == 0 || *stride == 0 || *out_channels == 0 {
                return Err(Error::Shape(
                    "conv2d kernel, stride and channels must be positive".into(),
                ));
            }
            if kernel > h || kernel > w {
                return Err(Error::Shape(format!(
                    "conv2d kernel {kernel} larger than input {h}x{w}"
                )));
            }
            Ok(vec![
                (h - kernel) / stride + 1,
                (w - kernel) / stride + 1,
                *out_channels,
            ])
        }
        Layer::Relu => Ok(shape.to_vec()),
        Layer::Dropout { rate } => {
            if !(0.0..1.0).contains(rate) {
                return Err(Error::Domain(format!("dropout rate {rate} outside [0, 1)")));
            }
            Ok(shape.to_vec())
        }
        Layer::Residual { inner } => {
            let mut s = shape.to_vec();
            for l in inner {
                if l.is_head() {
                    return Err(Error::Shape("output head inside a residual block".into()));
                }
                s = layer_output_shape(l, &s)?;
            }
            if s != shape {
                return Err(Error::Shape(format!(
                    "residual block maps {shape:?} to {s:?}; the shortcut needs equal shapes"
                )));
            }
            Ok(s)
        }
        Layer::SigmoidHead => {
            if numel(shape) != 1 {
                return Err(Error::Shape(format!(
                    "sigmoid head expects one logit, got {shape:?}"
                )));
            }
            Ok(vec![1])
        }
        Layer::SoftmaxHead { classes } => {
            if *classes == 0 || numel(shape) != *classes {
                return Err(Error::Shape(format!(
                    "softmax head expects {classes} logits, got {shape:?}"
                )));
            }
            Ok(vec![*classes])
        }
    }
}
