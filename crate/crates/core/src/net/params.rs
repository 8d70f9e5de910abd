//! Trainable parameters and their binary file format.
//!
//! File layout: magic `ELND`, format version as little-endian `u16`, then for
//! each tensor its rank (`u8`), each dimension (`u32` LE) and the values as
//! little-endian `f64` in row-major order. Tensors follow the depth-first
//! layer order of the architecture; the file ends after the last tensor.

use std::io::{Read, Write};

use rand::Rng;

use super::spec::{numel, NetworkSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ELND";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = numel(&dims);
        Tensor {
            dims,
            data: vec![0.0; n],
        }
    }
}

/// Weights and biases for every parameterized layer, in spec order.
/// Gradients share the same representation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub tensors: Vec<Tensor>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkParams {
            tensors: spec.param_shapes().into_iter().map(Tensor::zeros).collect(),
        }
    }

    /// Scaled uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        for t in &mut params.tensors {
            if t.dims.len() < 2 {
                continue;
            }
            // dense: [out, in]; conv: [out_ch, k, k, in_ch]
            let receptive: usize = t.dims[1..t.dims.len() - 1].iter().product();
            let fan_out = t.dims[0] * receptive;
            let fan_in = t.dims[t.dims.len() - 1] * receptive;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut t.data {
                *v = rng.random_range(-limit..=limit);
            }
        }
        params
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &NetworkParams) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.values_mut() {
            *v *= s;
        }
    }

    /// Checks the tensor list against the architecture's expected shapes.
    pub fn check_matches(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "spec needs {} parameter tensors, params have {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for (i, (dims, t)) in expected.iter().zip(&self.tensors).enumerate() {
            if dims != &t.dims || t.data.len() != numel(dims) {
                return Err(Error::Shape(format!(
                    "parameter tensor {i}: expected {dims:?}, found {:?}",
                    t.dims
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for t in &self.tensors {
            let rank = u8::try_from(t.dims.len())
                .map_err(|_| Error::Shape(format!("tensor rank {} too large", t.dims.len())))?;
            w.write_all(&[rank])?;
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Shape(format!("dimension {d} too large")))?;
                w.write_all(&d.to_le_bytes())?;
            }
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Data("not a parameter file: bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported parameter format version {version}"
            )));
        }
        let mut tensors = Vec::new();
        while cur.pos < bytes.len() {
            let rank = cur.take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize);
            }
            let n = numel(&dims);
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
            }
            tensors.push(Tensor { dims, data });
        }
        Ok(NetworkParams { tensors })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Data(format!(
                "parameter file truncated at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::Layer;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let params = NetworkParams {
            tensors: vec![Tensor {
                dims: vec![1, 2],
                data: vec![1.0, -2.5],
            }],
        };
        let bytes = params.to_bytes();
        assert_eq!(&bytes[..4], b"ELND");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[7..11], &[1, 0, 0, 0]);
        assert_eq!(&bytes[11..15], &[2, 0, 0, 0]);
        assert_eq!(&bytes[15..23], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[23..31], &(-2.5f64).to_le_bytes());
        assert_eq!(bytes.len(), 31);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(NetworkParams::from_bytes(b"NOPE\x01\x00").is_err());
        let mut bytes = NetworkParams {
            tensors: vec![Tensor {
                dims: vec![3],
                data: vec![1.0, 2.0, 3.0],
            }],
        }
        .to_bytes();
        bytes.pop();
        assert!(matches!(
            NetworkParams::from_bytes(&bytes),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn init_respects_bounds_and_zero_biases() {
        let spec = NetworkSpec {
            input_shape: vec![6, 6, 2],
            layers: vec![
                Layer::Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Dense {
                    input: 48,
                    output: 1,
                },
                Layer::SigmoidHead,
            ],
        };
        let p = NetworkParams::init(&spec, &mut stream(1, Domain::Train, 0));
        p.check_matches(&spec).unwrap();
        let conv_limit = (6.0f64 / (2.0 * 9.0 + 3.0 * 9.0)).sqrt();
        assert!(p.tensors[0].data.iter().all(|v| v.abs() <= conv_limit));
        assert!(p.tensors[1].data.iter().all(|&v| v == 0.0));
        let dense_limit = (6.0f64 / 49.0).sqrt();
        assert!(p.tensors[2].data.iter().all(|v| v.abs() <= dense_limit));
    }

    proptest! {
        #[test]
        fn binary_round_trip(values in proptest::collection::vec(any::<f64>(), 0..40), split in 0usize..40) {
            let split = split.min(values.len());
            let params = NetworkParams {
                tensors: vec![
                    Tensor { dims: vec![split], data: values[..split].to_vec() },
                    Tensor { dims: vec![1, values.len() - split], data: values[split..].to_vec() },
                ],
            };
            let back = NetworkParams::from_bytes(&params.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), params.to_bytes());
        }
    }
}
