//! The full comparison: architecture sweeps, optimizer sweeps and the
//! eight-model deep versus classical table.

use serde::{Deserialize, Serialize};

use crate::dataset::Series;
use crate::deepstack::DeepPreset;
use crate::network::Scheme;
use crate::optimizers::{Algorithm, TrainConfig};

use super::experiment::{run_experiments, Execution, ExperimentPlan, ExperimentResult};
use super::model::{Forecaster, ModelSpec};
use super::sweep::{sweep_architecture, sweep_optimizer, SweepOutcome};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub plan: ExperimentPlan,
    pub schemes: Vec<Scheme>,
    pub depth: usize,
    pub neurons: Vec<usize>,
    pub sweep_algorithm: Algorithm,
    /// Epoch cap applied to every supervised and autoencoder training
    /// run; `None` keeps each algorithm's default.
    pub max_epochs: Option<usize>,
    pub fine_tune_epochs: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            plan: ExperimentPlan::default(),
            schemes: vec![Scheme::Mlp, Scheme::Cfmlp],
            depth: 1,
            neurons: (1..=15).collect(),
            sweep_algorithm: Algorithm::LM,
            max_epochs: None,
            fine_tune_epochs: None,
        }
    }
}

impl PipelineOptions {
    fn cap(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(e) = self.max_epochs {
            c.max_epochs = e;
        }
        c
    }

    /// The eight Table-1 models: each preset's classical counterpart, then
    /// the preset itself.
    pub fn comparison_models(&self) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for p in DeepPreset::ALL {
            let mut c = ModelSpec::classical_counterpart(p);
            c.train = self.cap(c.train);
            let mut d = ModelSpec::preset(p);
            d.train = self.cap(d.train);
            if let Some(deep) = &mut d.deep {
                deep.autoencoder = self.cap(deep.autoencoder.clone());
                deep.fine_tune = self.cap(deep.fine_tune.clone());
                if let Some(e) = self.fine_tune_epochs {
                    deep.fine_tune.max_epochs = e;
                }
            }
            out.push(c);
            out.push(d);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepComparison {
    pub preset: String,
    pub classical: String,
    pub deep_mape: Option<f64>,
    pub classical_mape: Option<f64>,
    pub deep_wins: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub architecture: Vec<(Scheme, SweepOutcome)>,
    pub optimizer: Vec<(Scheme, SweepOutcome)>,
    /// Eight results in `comparison_models` order.
    pub comparison: Vec<ExperimentResult>,
    pub deep_vs_classical: Vec<DeepComparison>,
}

impl PipelineOutcome {
    pub fn deep_win_count(&self) -> usize {
        self.deep_vs_classical
            .iter()
            .filter(|c| c.deep_wins)
            .count()
    }

    pub fn all_results(&self) -> impl Iterator<Item = &ExperimentResult> {
        self.architecture
            .iter()
            .chain(&self.optimizer)
            .flat_map(|(_, s)| &s.results)
            .chain(&self.comparison)
    }
}

pub fn compare_deep_and_classical(comparison: &[ExperimentResult]) -> Vec<DeepComparison> {
    comparison
        .chunks(2)
        .map(|pair| {
            let c = pair[0].overall.map(|o| o.mape);
            let d = pair[1].overall.map(|o| o.mape);
            DeepComparison {
                preset: pair[1].model.clone(),
                classical: pair[0].model.clone(),
                deep_mape: d,
                classical_mape: c,
                deep_wins: matches!((d, c), (Some(d), Some(c)) if d <= c),
            }
        })
        .collect()
}

/// Sweeps the architecture for every scheme, sweeps all optimizers on each
/// scheme's winning architecture, then runs the eight comparison models.
pub fn run_pipeline(
    series: &Series,
    opts: &PipelineOptions,
    exec: Execution,
) -> Result<PipelineOutcome, HarnessError> {
    let sweep_train = opts.cap(TrainConfig::for_algorithm(opts.sweep_algorithm));
    let mut architecture = Vec::new();
    let mut optimizer = Vec::new();
    for &scheme in &opts.schemes {
        let arch = sweep_architecture(
            series,
            scheme,
            opts.depth,
            &opts.neurons,
            &sweep_train,
            &opts.plan,
            exec,
        )?;
        let best = arch.rows[0].hidden.clone();
        let opt = sweep_optimizer(series, scheme, &best, &opts.plan, exec, |c| opts.cap(c))?;
        architecture.push((scheme, arch));
        optimizer.push((scheme, opt));
    }
    let specs = opts.comparison_models();
    let models: Vec<&dyn Forecaster> = specs.iter().map(|s| s as &dyn Forecaster).collect();
    let comparison = run_experiments(series, &opts.plan, &models, exec)?;
    let deep_vs_classical = compare_deep_and_classical(&comparison);
    Ok(PipelineOutcome {
        architecture,
        optimizer,
        comparison,
        deep_vs_classical,
    })
}
