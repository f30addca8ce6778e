use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Param, Tape, Tensor, Var};
use crate::error::{dim_err, Result};
use crate::rng::RunRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Maxpool2d,
    Relu,
    Flatten,
}

impl LayerSpec {
    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(dim_err("dense", format!("expects [{inputs}], got {input:?}")));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => match *input {
                [c, h, w] if c == in_channels && kernel >= 1 && kernel <= h && kernel <= w => {
                    Ok(vec![out_channels, h - kernel + 1, w - kernel + 1])
                }
                _ => Err(dim_err(
                    "conv2d",
                    format!("{kernel}x{kernel} kernel over {in_channels} channels cannot take {input:?}"),
                )),
            },
            LayerSpec::Maxpool2d => match *input {
                [c, h, w] if h >= 2 && w >= 2 => Ok(vec![c, h / 2, w / 2]),
                _ => Err(dim_err("maxpool2d", format!("input {input:?} too small"))),
            },
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn build(&self, rng: &mut RunRng) -> Box<dyn Layer> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Box::new(Dense::new(inputs, outputs, rng)),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => Box::new(Conv2d::new(in_channels, out_channels, kernel, rng)),
            LayerSpec::Maxpool2d => Box::new(MaxPool2d),
            LayerSpec::Relu => Box::new(Relu),
            LayerSpec::Flatten => Box::new(Flatten),
        }
    }
}

pub trait Layer {
    fn spec(&self) -> LayerSpec;
    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var>;
    fn params(&self) -> Vec<Param> {
        Vec::new()
    }
}

impl fmt::Debug for dyn Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.spec())
    }
}

/// Glorot-uniform values for a tensor of `shape`.
fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RunRng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(shape, data).expect("init shape")
}

pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut RunRng) -> Self {
        Self {
            weight: Param::new(glorot(&[inputs, outputs], inputs, outputs, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }
}

impl Layer for Dense {
    fn spec(&self) -> LayerSpec {
        let s = self.weight.shape();
        LayerSpec::Dense {
            inputs: s[0],
            outputs: s[1],
        }
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        tape.dense(x, w, b)
    }

    fn params(&self) -> Vec<Param> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}

pub struct Conv2d {
    pub kernel: Param,
    pub bias: Param,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut RunRng) -> Self {
        let kk = kernel * kernel;
        Self {
            kernel: Param::new(glorot(
                &[out_channels, in_channels, kernel, kernel],
                in_channels * kk,
                out_channels * kk,
                rng,
            )),
            bias: Param::new(Tensor::zeros(&[out_channels])),
        }
    }
}

impl Layer for Conv2d {
    fn spec(&self) -> LayerSpec {
        let s = self.kernel.shape();
        LayerSpec::Conv2d {
            in_channels: s[1],
            out_channels: s[0],
            kernel: s[2],
        }
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let k = tape.param(&self.kernel);
        let b = tape.param(&self.bias);
        tape.conv2d(x, k, b)
    }

    fn params(&self) -> Vec<Param> {
        vec![self.kernel.clone(), self.bias.clone()]
    }
}

pub struct MaxPool2d;

impl Layer for MaxPool2d {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Maxpool2d
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.maxpool2d(x)
    }
}

pub struct Relu;

impl Layer for Relu {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Relu
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.relu(x)
    }
}

pub struct Flatten;

impl Layer for Flatten {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Flatten
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.flatten(x)
    }
}

/// A chain of layers applied in order.
#[derive(Debug)]
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

impl Sequential {
    /// Build from specs, checking shapes end to end for a per-sample input.
    pub fn build(specs: &[LayerSpec], input_shape: &[usize], rng: &mut RunRng) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for s in specs {
            shape = s.output_shape(&shape)?;
        }
        Ok(Self {
            layers: specs.iter().map(|s| s.build(rng)).collect(),
            input_shape: input_shape.to_vec(),
            output_shape: shape,
        })
    }

    pub fn forward(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(tape, x)?;
        }
        Ok(x)
    }

    pub fn params(&self) -> Vec<Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
}
