use serde::{Deserialize, Serialize};

use crate::envs::ObservationKind;
use crate::error::{Error, Result};
use crate::numerics::{LayerSpec, Param, Sequential, Tape, Tensor, Var};
use crate::rng::{self, RunRng};

/// Shape of the encoder and value head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    /// Convolutions with ReLU; every convolution except the last is followed
    /// by 2×2 max pooling; the flattened output is the representation.
    Conv {
        channels: Vec<usize>,
        kernels: Vec<usize>,
        head_hidden: Vec<usize>,
    },
    /// Dense + ReLU layers; the last hidden activation is the representation.
    Mlp {
        hidden: Vec<usize>,
        head_hidden: Vec<usize>,
    },
}

impl NetworkSpec {
    pub fn default_for(kind: ObservationKind) -> Self {
        match kind {
            ObservationKind::Grid => NetworkSpec::Conv {
                channels: vec![16, 32, 32],
                kernels: vec![3, 3, 1],
                head_hidden: vec![64],
            },
            ObservationKind::Vector => NetworkSpec::Mlp {
                hidden: vec![32, 32],
                head_hidden: vec![],
            },
        }
    }

    /// Encoder layers for a per-sample input shape.
    pub fn encoder_layers(&self, input: &[usize]) -> Result<Vec<LayerSpec>> {
        let mut layers = Vec::new();
        match self {
            NetworkSpec::Conv { channels, kernels, .. } => {
                if input.len() != 3 {
                    return Err(Error::Config(format!(
                        "conv encoder needs [C, H, W] observations, got {input:?}"
                    )));
                }
                if channels.is_empty() || channels.len() != kernels.len() {
                    return Err(Error::Config(
                        "conv encoder needs one kernel size per channel width".into(),
                    ));
                }
                let mut in_ch = input[0];
                for (i, (&out_ch, &k)) in channels.iter().zip(kernels).enumerate() {
                    layers.push(LayerSpec::Conv2d {
                        in_channels: in_ch,
                        out_channels: out_ch,
                        kernel: k,
                    });
                    layers.push(LayerSpec::Relu);
                    if i + 1 < channels.len() {
                        layers.push(LayerSpec::Maxpool2d);
                    }
                    in_ch = out_ch;
                }
                layers.push(LayerSpec::Flatten);
            }
            NetworkSpec::Mlp { hidden, .. } => {
                if input.len() != 1 {
                    return Err(Error::Config(format!(
                        "mlp encoder needs flat observations, got {input:?}"
                    )));
                }
                if hidden.is_empty() {
                    return Err(Error::Config("mlp encoder needs at least one hidden layer".into()));
                }
                let mut width = input[0];
                for &h in hidden {
                    layers.push(LayerSpec::Dense {
                        inputs: width,
                        outputs: h,
                    });
                    layers.push(LayerSpec::Relu);
                    width = h;
                }
            }
        }
        Ok(layers)
    }

    pub fn head_layers(&self, phi_dim: usize, actions: usize) -> Vec<LayerSpec> {
        let hidden = match self {
            NetworkSpec::Conv { head_hidden, .. } | NetworkSpec::Mlp { head_hidden, .. } => head_hidden,
        };
        let mut layers = Vec::new();
        let mut width = phi_dim;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: width,
                outputs: h,
            });
            layers.push(LayerSpec::Relu);
            width = h;
        }
        layers.push(LayerSpec::Dense {
            inputs: width,
            outputs: actions,
        });
        layers
    }
}

/// Encoder `f` producing the representation φ, followed by a value head.
#[derive(Debug)]
pub struct QNetwork {
    encoder: Sequential,
    head: Sequential,
    spec: NetworkSpec,
}

impl QNetwork {
    pub fn build(spec: &NetworkSpec, obs_shape: &[usize], actions: usize, rng: &mut RunRng) -> Result<Self> {
        let encoder = Sequential::build(&spec.encoder_layers(obs_shape)?, obs_shape, rng)?;
        let phi_dim = match encoder.output_shape() {
            [d] => *d,
            other => return Err(Error::Config(format!("encoder output {other:?} is not flat"))),
        };
        let head = Sequential::build(&spec.head_layers(phi_dim, actions), &[phi_dim], rng)?;
        Ok(Self {
            encoder,
            head,
            spec: spec.clone(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn phi_dim(&self) -> usize {
        self.encoder.output_shape()[0]
    }

    pub fn num_actions(&self) -> usize {
        self.head.output_shape()[0]
    }

    pub fn obs_shape(&self) -> &[usize] {
        self.encoder.input_shape()
    }

    pub fn encoder(&self) -> &Sequential {
        &self.encoder
    }

    pub fn head(&self) -> &Sequential {
        &self.head
    }

    pub fn encoder_params(&self) -> Vec<Param> {
        self.encoder.params()
    }

    pub fn head_params(&self) -> Vec<Param> {
        self.head.params()
    }

    /// Encoder parameters followed by head parameters.
    pub fn params(&self) -> Vec<Param> {
        let mut p = self.encoder_params();
        p.extend(self.head_params());
        p
    }

    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.encoder.forward(tape, x)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let phi = self.encode(tape, x)?;
        self.head.forward(tape, phi)
    }

    /// Q-values `[B, A]` for a batch of observations, without gradients.
    pub fn q_values(&self, batch: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.input(batch);
        let q = self.forward(&mut tape, x)?;
        Ok(tape.value(q).clone())
    }

    /// Representations `[B, D]` for a batch of observations.
    pub fn representations(&self, batch: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.input(batch);
        let phi = self.encode(&mut tape, x)?;
        Ok(tape.value(phi).clone())
    }

    /// Independent copy with identical values.
    pub fn deep_clone(&self) -> Result<Self> {
        // initial values are overwritten, so the init stream does not matter
        let copy = Self::build(&self.spec, self.obs_shape(), self.num_actions(), &mut rng::seeded(0))?;
        copy.copy_from(self);
        Ok(copy)
    }

    /// Overwrite every parameter with the matching one from `other`.
    pub fn copy_from(&self, other: &QNetwork) {
        for (dst, src) in self.params().iter().zip(other.params()) {
            dst.set_value(&src.value());
        }
    }

    pub fn zero_grad(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }
}
