//! Finite-difference verification of `backward`.

use rand_chacha::ChaCha8Rng;

use super::forward::{backward, batch_loss};
use super::params::NetworkParams;
use super::spec::NetworkSpec;
use crate::error::Result;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Largest relative disagreement between the analytic gradient and central
/// differences `(f(θ+ε) - f(θ-ε)) / 2ε`, taken over every parameter.
///
/// Dropout is disabled for the check since re-masking makes the loss surface
/// non-differentiable between evaluations.
pub fn grad_check(
    spec: &NetworkSpec,
    params: &NetworkParams,
    batch: &[(&[f64], u8)],
    epsilon: f64,
) -> Result<f64> {
    let spec = spec.without_dropout();
    let (analytic, _) = backward::<ChaCha8Rng>(&spec, params, batch, None)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for t in 0..probe.tensors.len() {
        for i in 0..probe.tensors[t].data.len() {
            let orig = probe.tensors[t].data[i];
            probe.tensors[t].data[i] = orig + epsilon;
            let plus = batch_loss::<ChaCha8Rng>(&spec, &probe, batch, None)?;
            probe.tensors[t].data[i] = orig - epsilon;
            let minus = batch_loss::<ChaCha8Rng>(&spec, &probe, batch, None)?;
            probe.tensors[t].data[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.tensors[t].data[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Layer;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn check(spec: &NetworkSpec, seed: u64) -> f64 {
        let mut rng = stream(seed, Domain::Train, 0);
        let mut params = NetworkParams::init(spec, &mut rng);
        // Nonzero biases keep ReLU inputs off their kinks.
        for v in params.values_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..spec.input_len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let batch: Vec<(&[f64], u8)> = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.as_slice(), (i % 2) as u8))
            .collect();
        grad_check(spec, &params, &batch, DEFAULT_EPSILON).unwrap()
    }

    #[test]
    fn linear_network() {
        let spec = NetworkSpec {
            input_shape: vec![4],
            layers: vec![
                Layer::Dense {
                    input: 4,
                    output: 1,
                },
                Layer::SigmoidHead,
            ],
        };
        assert!(check(&spec, 1) <= 1e-7);
    }

    #[test]
    fn two_hidden_relu_layers() {
        let spec = NetworkSpec {
            input_shape: vec![3],
            layers: vec![
                Layer::Dense {
                    input: 3,
                    output: 5,
                },
                Layer::Relu,
                Layer::Dense {
                    input: 5,
                    output: 4,
                },
                Layer::Relu,
                Layer::Dense {
                    input: 4,
                    output: 1,
                },
                Layer::SigmoidHead,
            ],
        };
        assert!(check(&spec, 2) <= 1e-4);
    }

    #[test]
    fn small_convolution() {
        let spec = NetworkSpec {
            input_shape: vec![4, 4, 1],
            layers: vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 2,
                    stride: 1,
                },
                Layer::Dense {
                    input: 9,
                    output: 1,
                },
                Layer::SigmoidHead,
            ],
        };
        assert!(check(&spec, 3) <= 1e-4);
    }

    #[test]
    fn softmax_head_with_dropout_in_spec() {
        let spec = NetworkSpec {
            input_shape: vec![3],
            layers: vec![
                Layer::Dense {
                    input: 3,
                    output: 4,
                },
                Layer::Relu,
                Layer::Dropout { rate: 0.5 },
                Layer::Dense {
                    input: 4,
                    output: 3,
                },
                Layer::SoftmaxHead { classes: 3 },
            ],
        };
        assert!(check(&spec, 4) <= 1e-4);
    }
}
