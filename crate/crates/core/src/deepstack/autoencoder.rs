use crate::network::{Activation, Network, NetworkError, Pattern, Topology};
use crate::optimizers::{train, TrainConfig, TrainReport};

use super::{DeepError, MAX_CODE_DIM};

/// Encoding half of an autoencoder: `code = act(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    in_dim: usize,
    code_dim: usize,
    activation: Activation,
    /// Row-major `code_dim × in_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Encoder {
    pub fn from_parts(
        in_dim: usize,
        code_dim: usize,
        activation: Activation,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        if in_dim == 0 || code_dim == 0 {
            return Err(NetworkError::InvalidTopology(
                "encoder dimensions must be positive".into(),
            ));
        }
        if weights.len() != in_dim * code_dim {
            return Err(NetworkError::Dimension {
                expected: in_dim * code_dim,
                got: weights.len(),
            });
        }
        if bias.len() != code_dim {
            return Err(NetworkError::Dimension {
                expected: code_dim,
                got: bias.len(),
            });
        }
        Ok(Self {
            in_dim,
            code_dim,
            activation,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights followed by biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub(crate) fn with_params(&self, theta: &[f64]) -> Self {
        let w = self.weights.len();
        Self {
            weights: theta[..w].to_vec(),
            bias: theta[w..w + self.code_dim].to_vec(),
            ..self.clone()
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.in_dim {
            return Err(NetworkError::Dimension {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NetworkError::NonFiniteInput);
        }
        Ok(encode_raw(
            self.in_dim,
            self.activation,
            &self.weights,
            &self.bias,
            x,
        ))
    }
}

pub(crate) fn encode_raw(
    in_dim: usize,
    act: Activation,
    weights: &[f64],
    bias: &[f64],
    x: &[f64],
) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(j, b)| {
            let row = &weights[j * in_dim..(j + 1) * in_dim];
            act.apply(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        })
        .collect()
}

/// A `k → k' → k` network trained to reproduce its input.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderLayer {
    net: Network,
}

impl AutoencoderLayer {
    pub fn topology(in_dim: usize, code_dim: usize, activation: Activation) -> Topology {
        Topology::mlp(in_dim, &[code_dim])
            .with_output_dim(in_dim)
            .with_hidden_activation(activation)
    }

    pub fn from_network(net: Network) -> Result<Self, DeepError> {
        let t = net.topology();
        if t.hidden.len() != 1
            || t.output_dim != t.input_dim
            || t.scheme != crate::network::Scheme::Mlp
        {
            return Err(DeepError::Config(format!(
                "`{}` is not an autoencoder",
                t.label()
            )));
        }
        Ok(Self { net })
    }

    pub fn in_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.net.topology().hidden[0]
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn encoder(&self) -> Encoder {
        let (k, c) = (self.in_dim(), self.code_dim());
        let p = self.net.params();
        Encoder {
            in_dim: k,
            code_dim: c,
            activation: self.net.topology().hidden_activation,
            weights: p[..k * c].to_vec(),
            bias: p[k * c..k * c + c].to_vec(),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.encoder().encode(x)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        Ok(self.net.forward(x)?.output().to_vec())
    }

    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let (k, c) = (self.in_dim(), self.code_dim());
        if code.len() != c {
            return Err(NetworkError::Dimension {
                expected: c,
                got: code.len(),
            });
        }
        let p = &self.net.params()[k * c + c..];
        Ok(encode_raw(
            c,
            Activation::Linear,
            &p[..k * c],
            &p[k * c..],
            code,
        ))
    }
}

/// Fits an autoencoder with a `code_dim` bottleneck to `inputs`.
pub fn train_autoencoder(
    inputs: &[Vec<f64>],
    code_dim: usize,
    activation: Activation,
    config: &TrainConfig,
    seed: u64,
) -> Result<(AutoencoderLayer, TrainReport), DeepError> {
    let Some(first) = inputs.first() else {
        return Err(DeepError::Config(
            "autoencoder needs at least one input".into(),
        ));
    };
    if !(1..=MAX_CODE_DIM).contains(&code_dim) {
        return Err(DeepError::Config(format!(
            "code size {code_dim} outside 1..={MAX_CODE_DIM}"
        )));
    }
    let k = first.len();
    let batch: Vec<Pattern> = inputs
        .iter()
        .map(|x| {
            if x.len() != k {
                return Err(NetworkError::Dimension {
                    expected: k,
                    got: x.len(),
                });
            }
            Ok(Pattern::new(x.clone(), x.clone()))
        })
        .collect::<Result<_, _>>()?;
    let net = Network::init(AutoencoderLayer::topology(k, code_dim, activation), seed)?;
    let (net, report) = train(&net, &batch, config)?;
    Ok((AutoencoderLayer { net }, report))
}

/// Greedy layer-wise pre-training: layer `j` learns to reconstruct the
/// codes of layers `0..j`, which stay fixed.
pub fn pretrain_stack(
    inputs: &[Vec<f64>],
    code_dims: &[usize],
    activation: Activation,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Vec<AutoencoderLayer>, Vec<TrainReport>), DeepError> {
    if code_dims.is_empty() || code_dims.len() > 2 {
        return Err(DeepError::Config(format!(
            "stack must have 1 or 2 layers, got {}",
            code_dims.len()
        )));
    }
    let mut layers = Vec::new();
    let mut reports = Vec::new();
    let mut data = inputs.to_vec();
    for (j, &c) in code_dims.iter().enumerate() {
        let (layer, report) =
            train_autoencoder(&data, c, activation, config, seed.wrapping_add(j as u64))?;
        let enc = layer.encoder();
        data = data
            .iter()
            .map(|x| enc.encode(x))
            .collect::<Result<_, _>>()?;
        layers.push(layer);
        reports.push(report);
    }
    Ok((layers, reports))
}
