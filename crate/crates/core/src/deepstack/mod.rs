//! Deep models: stacked autoencoders beneath a classical front network.

mod autoencoder;
mod checkpoint;
mod unroll;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Activation, Network, NetworkError, Pattern, Scheme, Topology};
use crate::optimizers::{train, Algorithm, TrainConfig, TrainError, TrainReport};

pub use autoencoder::{pretrain_stack, train_autoencoder, AutoencoderLayer, Encoder};
pub use unroll::{fine_tune, UnrolledNetwork};

/// Largest code size an autoencoder layer may have.
pub const MAX_CODE_DIM: usize = 15;

#[derive(Debug, Error)]
pub enum DeepError {
    #[error("invalid deep model: {0}")]
    Config(String),
    #[error("stack layer {layer} expects {expected} inputs but receives {got}")]
    Chain {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Trained encoders feeding a front network.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    stack: Vec<Encoder>,
    front: Network,
    fine_tuned: bool,
}

fn check_chain(
    stack: &[Encoder],
    input_dim: Option<usize>,
    front_input: usize,
) -> Result<(), DeepError> {
    if stack.is_empty() || stack.len() > 2 {
        return Err(DeepError::Config(format!(
            "stack must have 1 or 2 layers, got {}",
            stack.len()
        )));
    }
    let mut dim = input_dim.unwrap_or(stack[0].in_dim());
    for (layer, e) in stack.iter().enumerate() {
        if e.in_dim() != dim {
            return Err(DeepError::Chain {
                layer,
                expected: e.in_dim(),
                got: dim,
            });
        }
        dim = e.code_dim();
    }
    if front_input != dim {
        return Err(DeepError::Chain {
            layer: stack.len(),
            expected: front_input,
            got: dim,
        });
    }
    Ok(())
}

impl DeepModel {
    pub fn new(stack: Vec<Encoder>, front: Network) -> Result<Self, DeepError> {
        check_chain(&stack, None, front.input_dim())?;
        if front.output_dim() != 1 {
            return Err(DeepError::Config(
                "front network must have a single output".into(),
            ));
        }
        Ok(Self {
            stack,
            front,
            fine_tuned: false,
        })
    }

    pub fn stack(&self) -> &[Encoder] {
        &self.stack
    }

    pub fn front(&self) -> &Network {
        &self.front
    }

    pub fn fine_tuned(&self) -> bool {
        self.fine_tuned
    }

    pub fn input_dim(&self) -> usize {
        self.stack[0].in_dim()
    }

    /// Features produced by the last encoder.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        encode_stack(&self.stack, x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        self.front.predict(&self.encode(x)?)
    }
}

/// Runs `x` through every encoder in order.
pub fn encode_stack(stack: &[Encoder], x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    let mut v = x.to_vec();
    for e in stack {
        v = e.encode(&v)?;
    }
    Ok(v)
}

/// Trains the front network on the features the stack extracts from the
/// training inputs.
pub fn pretrain_front(
    stack: &[Encoder],
    train_set: &[Pattern],
    front: &Topology,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Network, TrainReport), DeepError> {
    check_chain(
        stack,
        train_set.first().map(|p| p.input.len()),
        front.input_dim,
    )?;
    let coded = train_set
        .iter()
        .map(|p| {
            Ok(Pattern::new(
                encode_stack(stack, &p.input)?,
                p.target.clone(),
            ))
        })
        .collect::<Result<Vec<_>, NetworkError>>()?;
    let net = Network::init(front.clone(), seed)?;
    Ok(train(&net, &coded, config)?)
}

/// One of the four best deep configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeepPreset {
    #[serde(rename = "deep-MLP1")]
    Mlp1,
    #[serde(rename = "deep-MLP2")]
    Mlp2,
    #[serde(rename = "deep-CFMLP1")]
    Cfmlp1,
    #[serde(rename = "deep-CFMLP2")]
    Cfmlp2,
}

impl DeepPreset {
    pub const ALL: [DeepPreset; 4] = [
        DeepPreset::Mlp1,
        DeepPreset::Mlp2,
        DeepPreset::Cfmlp1,
        DeepPreset::Cfmlp2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeepPreset::Mlp1 => "deep-MLP1",
            DeepPreset::Mlp2 => "deep-MLP2",
            DeepPreset::Cfmlp1 => "deep-CFMLP1",
            DeepPreset::Cfmlp2 => "deep-CFMLP2",
        }
    }

    /// Name of the classical network with the same front block.
    pub fn classical_name(self) -> &'static str {
        match self {
            DeepPreset::Mlp1 => "MLP1",
            DeepPreset::Mlp2 => "MLP2",
            DeepPreset::Cfmlp1 => "CFMLP1",
            DeepPreset::Cfmlp2 => "CFMLP2",
        }
    }

    pub fn code_dims(self) -> Vec<usize> {
        match self {
            DeepPreset::Mlp1 => vec![2],
            DeepPreset::Mlp2 => vec![8],
            DeepPreset::Cfmlp1 => vec![10],
            DeepPreset::Cfmlp2 => vec![4],
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            DeepPreset::Mlp1 | DeepPreset::Mlp2 => Scheme::Mlp,
            DeepPreset::Cfmlp1 | DeepPreset::Cfmlp2 => Scheme::Cfmlp,
        }
    }

    pub fn front_hidden(self) -> Vec<usize> {
        match self {
            DeepPreset::Mlp1 => vec![4],
            DeepPreset::Mlp2 => vec![5, 2],
            DeepPreset::Cfmlp1 => vec![5],
            DeepPreset::Cfmlp2 => vec![2, 9],
        }
    }

    /// Optimizer of the front block, also used for fine-tuning.
    pub fn algorithm(self) -> Algorithm {
        match self {
            DeepPreset::Mlp1 => Algorithm::LMbr,
            DeepPreset::Mlp2 => Algorithm::RBP,
            DeepPreset::Cfmlp1 => Algorithm::LM,
            DeepPreset::Cfmlp2 => Algorithm::CGpr,
        }
    }

    pub fn front_topology(self) -> Topology {
        let code = *self.code_dims().last().expect("presets have a stack");
        Topology::new(self.scheme(), code, &self.front_hidden())
    }

    /// Front block applied directly to `input_dim` raw features.
    pub fn classical_topology(self, input_dim: usize) -> Topology {
        Topology::new(self.scheme(), input_dim, &self.front_hidden())
    }
}

impl fmt::Display for DeepPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeepPreset {
    type Err = DeepError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeepPreset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DeepError::Config(format!("unknown deep preset `{s}`")))
    }
}

/// Training settings for the three phases of a deep model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepTraining {
    pub autoencoder: TrainConfig,
    pub encoder_activation: Activation,
    pub front: TrainConfig,
    /// `max_epochs = 0` skips fine-tuning but still marks the model.
    pub fine_tune: TrainConfig,
}

impl DeepTraining {
    /// LM for the autoencoders, `front` for the supervised phases.
    pub fn new(front: Algorithm) -> Self {
        Self {
            autoencoder: TrainConfig::for_algorithm(Algorithm::LM),
            encoder_activation: Activation::Tanh,
            front: TrainConfig::for_algorithm(front),
            fine_tune: TrainConfig::for_algorithm(front),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepReports {
    pub autoencoders: Vec<TrainReport>,
    pub front: TrainReport,
    pub fine_tune: Option<TrainReport>,
}

/// Pre-trains the stack on the training inputs, pre-trains the front, then
/// fine-tunes the whole model. Sub-seeds are derived from `seed`.
pub fn train_deep(
    code_dims: &[usize],
    front: &Topology,
    train_set: &[Pattern],
    training: &DeepTraining,
    seed: u64,
) -> Result<(DeepModel, DeepReports), DeepError> {
    let inputs: Vec<Vec<f64>> = train_set.iter().map(|p| p.input.clone()).collect();
    let (layers, ae_reports) = pretrain_stack(
        &inputs,
        code_dims,
        training.encoder_activation,
        &training.autoencoder,
        seed,
    )?;
    let stack: Vec<Encoder> = layers.iter().map(AutoencoderLayer::encoder).collect();
    let (front_net, front_report) = pretrain_front(
        &stack,
        train_set,
        front,
        &training.front,
        seed.wrapping_add(101),
    )?;
    let model = DeepModel::new(stack, front_net)?;
    let (model, ft) = fine_tune(&model, train_set, &training.fine_tune)?;
    Ok((
        model,
        DeepReports {
            autoencoders: ae_reports,
            front: front_report,
            fine_tune: ft,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(in_dim: usize, code: usize) -> Encoder {
        Encoder::from_parts(
            in_dim,
            code,
            Activation::Tanh,
            vec![0.1; in_dim * code],
            vec![0.0; code],
        )
        .unwrap()
    }

    #[test]
    fn chaining_is_enforced() {
        let front = Network::zeros(Topology::mlp(3, &[2])).unwrap();
        assert!(DeepModel::new(vec![enc(7, 5), enc(5, 3)], front.clone()).is_ok());
        assert!(matches!(
            DeepModel::new(vec![enc(7, 5), enc(4, 3)], front.clone()),
            Err(DeepError::Chain { layer: 1, .. })
        ));
        assert!(matches!(
            DeepModel::new(vec![enc(7, 4)], front.clone()),
            Err(DeepError::Chain { layer: 1, .. })
        ));
        assert!(DeepModel::new(vec![], front.clone()).is_err());
        assert!(DeepModel::new(vec![enc(7, 5), enc(5, 5), enc(5, 3)], front).is_err());
    }

    #[test]
    fn zero_front_predicts_zero() {
        let front = Network::zeros(Topology::cfmlp(3, &[2, 2])).unwrap();
        let m = DeepModel::new(vec![enc(7, 3)], front).unwrap();
        for x in [[0.0; 7], [1.0, -1.0, 0.5, 0.2, 0.3, -0.9, 0.0]] {
            assert_eq!(m.predict(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn predict_is_manual_composition() {
        let a = Encoder::from_parts(
            3,
            2,
            Activation::Tanh,
            vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6],
            vec![0.05, -0.05],
        )
        .unwrap();
        let b = Encoder::from_parts(
            2,
            2,
            Activation::Tanh,
            vec![1.0, 0.5, -0.5, 1.0],
            vec![0.0, 0.1],
        )
        .unwrap();
        let front = Network::init(Topology::mlp(2, &[3]), 9).unwrap();
        let m = DeepModel::new(vec![a.clone(), b.clone()], front.clone()).unwrap();
        let x = [0.3, -0.7, 0.9];
        let manual = front
            .predict(&b.encode(&a.encode(&x).unwrap()).unwrap())
            .unwrap();
        assert_eq!(m.predict(&x).unwrap(), manual);
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn front_dimension_mismatch() {
        let stack = vec![enc(2, 2)];
        let batch = vec![Pattern::scalar(vec![0.0, 1.0], 1.0)];
        let cfg = TrainConfig::for_algorithm(Algorithm::LM).with_max_epochs(2);
        assert!(matches!(
            pretrain_front(&stack, &batch, &Topology::mlp(3, &[2]), &cfg, 0),
            Err(DeepError::Chain { .. })
        ));
    }

    #[test]
    fn presets_match_their_classical_fronts() {
        for p in DeepPreset::ALL {
            assert_eq!(p.name().parse::<DeepPreset>().unwrap(), p);
            let f = p.front_topology();
            let c = p.classical_topology(7);
            assert_eq!((f.scheme, &f.hidden), (c.scheme, &c.hidden));
            assert_eq!(f.input_dim, *p.code_dims().last().unwrap());
            assert!(p.code_dims().iter().all(|d| (1..=MAX_CODE_DIM).contains(d)));
        }
        assert_eq!(DeepPreset::Cfmlp2.front_hidden(), vec![2, 9]);
    }
}
