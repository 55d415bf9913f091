use serde::{Deserialize, Serialize};

use crate::dataset::FEATURE_COUNT;
use crate::deepstack::{train_deep, DeepModel, DeepPreset, DeepTraining, UnrolledNetwork};
use crate::network::{Activation, Network, NetworkError, Pattern, Scheme, Topology};
use crate::optimizers::{train, Algorithm, TrainConfig, TrainReport};

use super::HarnessError;

/// A trained model's point forecast.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<f64, NetworkError>;
}

impl Predictor for Network {
    fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        Network::predict(self, x)
    }
}

impl Predictor for DeepModel {
    fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        DeepModel::predict(self, x)
    }
}

pub struct Fitted {
    pub predictor: Box<dyn Predictor>,
    /// Every trained parameter, in a fixed order.
    pub params: Vec<f64>,
    /// Training ended in a numerical failure.
    pub failed: bool,
}

/// Anything the protocol can train on a window and query on test months.
pub trait Forecaster: Sync {
    fn label(&self) -> String;

    /// Trains on normalized patterns with the given seed.
    fn fit(&self, train_set: &[Pattern], seed: u64) -> Result<Fitted, HarnessError>;
}

/// Stacked-autoencoder part of a deep model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSpec {
    pub code_dims: Vec<usize>,
    pub encoder_activation: Activation,
    pub autoencoder: TrainConfig,
    pub fine_tune: TrainConfig,
}

/// A classical network or a deep model, with everything needed to train it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub scheme: Scheme,
    pub hidden: Vec<usize>,
    /// Supervised training of the (front) network.
    pub train: TrainConfig,
    pub deep: Option<DeepSpec>,
}

impl ModelSpec {
    pub fn classical(scheme: Scheme, hidden: &[usize], algorithm: Algorithm) -> Self {
        let label = Topology::new(scheme, FEATURE_COUNT, hidden).label();
        Self {
            label: format!("{label} {algorithm}"),
            scheme,
            hidden: hidden.to_vec(),
            train: TrainConfig::for_algorithm(algorithm),
            deep: None,
        }
    }

    pub fn preset(preset: DeepPreset) -> Self {
        let t = DeepTraining::new(preset.algorithm());
        Self {
            label: preset.name().to_string(),
            scheme: preset.scheme(),
            hidden: preset.front_hidden(),
            train: t.front,
            deep: Some(DeepSpec {
                code_dims: preset.code_dims(),
                encoder_activation: t.encoder_activation,
                autoencoder: t.autoencoder,
                fine_tune: t.fine_tune,
            }),
        }
    }

    /// The preset's front block trained directly on raw features.
    pub fn classical_counterpart(preset: DeepPreset) -> Self {
        let mut s = Self::classical(preset.scheme(), &preset.front_hidden(), preset.algorithm());
        s.label = preset.classical_name().to_string();
        s
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn algorithm(&self) -> Algorithm {
        self.train.algorithm
    }

    pub fn total_neurons(&self) -> usize {
        self.hidden.iter().sum()
    }

    fn front_input(&self) -> usize {
        match &self.deep {
            Some(d) => *d.code_dims.last().unwrap_or(&FEATURE_COUNT),
            None => FEATURE_COUNT,
        }
    }

    pub fn front_topology(&self) -> Topology {
        Topology::new(self.scheme, self.front_input(), &self.hidden)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.front_topology().validate()?;
        self.train.validate()?;
        if let Some(d) = &self.deep {
            if d.code_dims.is_empty() || d.code_dims.len() > 2 {
                return Err(HarnessError::Config(
                    "a deep model needs 1 or 2 autoencoder layers".into(),
                ));
            }
            d.autoencoder.validate()?;
            if d.fine_tune.max_epochs > 0 {
                d.fine_tune.validate()?;
            }
        }
        Ok(())
    }
}

/// A trained classical or deep model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Classical(Network),
    Deep(DeepModel),
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        match self {
            TrainedModel::Classical(n) => n.predict(x),
            TrainedModel::Deep(d) => d.predict(x),
        }
    }

    /// Every trained parameter, encoders first for deep models.
    pub fn params(&self) -> Vec<f64> {
        match self {
            TrainedModel::Classical(n) => n.params().to_vec(),
            TrainedModel::Deep(d) => UnrolledNetwork::new(d).params().to_vec(),
        }
    }

    pub fn to_checkpoint(&self) -> String {
        match self {
            TrainedModel::Classical(n) => n.to_checkpoint(),
            TrainedModel::Deep(d) => d.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, HarnessError> {
        if text.starts_with("deep") {
            Ok(TrainedModel::Deep(DeepModel::from_checkpoint(text)?))
        } else {
            Ok(TrainedModel::Classical(Network::from_checkpoint(text)?))
        }
    }
}

impl ModelSpec {
    /// Trains from scratch on normalized patterns. Reports come in training
    /// order: autoencoders, front network, then fine-tuning if it ran.
    pub fn train_model(
        &self,
        train_set: &[Pattern],
        seed: u64,
    ) -> Result<(TrainedModel, Vec<TrainReport>), HarnessError> {
        let topology = self.front_topology();
        match &self.deep {
            None => {
                let net = Network::init(topology, seed)?;
                let (net, report) = train(&net, train_set, &self.train)?;
                Ok((TrainedModel::Classical(net), vec![report]))
            }
            Some(d) => {
                let training = DeepTraining {
                    autoencoder: d.autoencoder.clone(),
                    encoder_activation: d.encoder_activation,
                    front: self.train.clone(),
                    fine_tune: d.fine_tune.clone(),
                };
                let (model, reports) =
                    train_deep(&d.code_dims, &topology, train_set, &training, seed)?;
                let mut all = reports.autoencoders;
                all.push(reports.front);
                all.extend(reports.fine_tune);
                Ok((TrainedModel::Deep(model), all))
            }
        }
    }
}

impl Predictor for TrainedModel {
    fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        TrainedModel::predict(self, x)
    }
}

impl Forecaster for ModelSpec {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn fit(&self, train_set: &[Pattern], seed: u64) -> Result<Fitted, HarnessError> {
        let (model, reports) = self.train_model(train_set, seed)?;
        // A failed fine-tune is reverted, so only the earlier stages count.
        let stages = self.deep.as_ref().map_or(1, |d| d.code_dims.len() + 1);
        Ok(Fitted {
            params: model.params(),
            failed: reports[..stages].iter().any(TrainReport::is_failure),
            predictor: Box::new(model),
        })
    }
}
