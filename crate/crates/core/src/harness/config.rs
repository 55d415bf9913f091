//! TOML run configuration. Every field is optional; unset fields fall back
//! to the defaults of the plan, model and training algorithm.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_synthetic, load_csv_with, load_yearly_csv, IngestOptions, Series, YearlyDrivers,
    YearlyExpansion,
};
use crate::deepstack::DeepPreset;
use crate::network::{Activation, Scheme};
use crate::optimizers::{Algorithm, TrainConfig};

use super::experiment::ExperimentPlan;
use super::model::{DeepSpec, ModelSpec};
use super::report::ReportFormat;
use super::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub plan: PlanSection,
    pub model: ModelSection,
    pub train: TrainOverrides,
    pub autoencoder: TrainOverrides,
    pub fine_tune: TrainOverrides,
    pub sweep: SweepSection,
    pub output: OutputSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Monthly series CSV; when absent a synthetic series is generated.
    pub path: Option<PathBuf>,
    pub gdp: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub co2: Option<PathBuf>,
    /// `step` or `linear`.
    pub expansion: Option<String>,
    pub synthetic_seed: Option<u64>,
    pub synthetic_months: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    /// Explicit window lengths; overrides the start/end range.
    pub windows: Option<Vec<usize>>,
    pub window_start: Option<usize>,
    pub window_end: Option<usize>,
    pub horizon: Option<usize>,
    pub runs: Option<usize>,
    pub base_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// A deep preset name, or a classical counterpart name (`MLP1` …).
    pub preset: Option<String>,
    pub scheme: Option<String>,
    pub hidden: Option<Vec<usize>>,
    pub algorithm: Option<String>,
    /// Autoencoder code sizes; makes the model deep.
    pub code_dims: Option<Vec<usize>>,
    pub encoder_activation: Option<String>,
    pub label: Option<String>,
}

/// Optional overrides applied on top of an algorithm's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub algorithm: Option<String>,
    pub max_epochs: Option<usize>,
    pub grad_tol: Option<f64>,
    pub loss_tol: Option<f64>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub lr_inc: Option<f64>,
    pub lr_dec: Option<f64>,
    pub max_loss_rise: Option<f64>,
    pub mu_init: Option<f64>,
    pub mu_inc: Option<f64>,
    pub mu_dec: Option<f64>,
    pub mu_max: Option<f64>,
    pub delta0: Option<f64>,
    pub delta_min: Option<f64>,
    pub delta_max: Option<f64>,
    pub eta_plus: Option<f64>,
    pub eta_minus: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub scheme: Option<String>,
    pub depth: Option<usize>,
    pub min_neurons: Option<usize>,
    pub max_neurons: Option<usize>,
    pub algorithm: Option<String>,
    /// Architecture for the optimizer sweep.
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; all cores when unset.
    pub threads: Option<usize>,
}

fn cfg_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

pub fn parse_algorithm(s: &str) -> Result<Algorithm, HarnessError> {
    s.parse().map_err(cfg_err)
}

pub fn parse_scheme(s: &str) -> Result<Scheme, HarnessError> {
    s.parse().map_err(cfg_err)
}

impl TrainOverrides {
    /// Defaults of the configured algorithm (or `fallback`) with every set
    /// field applied.
    pub fn resolve(&self, fallback: Algorithm) -> Result<TrainConfig, HarnessError> {
        let algorithm = match &self.algorithm {
            Some(a) => parse_algorithm(a)?,
            None => fallback,
        };
        let mut c = TrainConfig::for_algorithm(algorithm);
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        set!(
            max_epochs,
            grad_tol,
            loss_tol,
            lr,
            momentum,
            lr_inc,
            lr_dec,
            max_loss_rise,
            mu_init,
            mu_inc,
            mu_dec,
            mu_max,
            seed
        );
        macro_rules! set_rprop {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.rprop.$field = v; } )* };
        }
        set_rprop!(delta0, delta_min, delta_max, eta_plus, eta_minus);
        Ok(c)
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(cfg_err)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical text of the effective configuration, used for digests.
    pub fn canonical_text(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn plan(&self) -> Result<ExperimentPlan, HarnessError> {
        let d = ExperimentPlan::default();
        let p = &self.plan;
        let window_lengths = match (&p.windows, p.window_start, p.window_end) {
            (Some(w), _, _) => w.clone(),
            (None, None, None) => d.window_lengths,
            (None, s, e) => {
                let s = s.unwrap_or(d.window_lengths[0]);
                let e = e.unwrap_or(s.max(*d.window_lengths.last().unwrap()));
                if e < s {
                    return Err(cfg_err(format!(
                        "window_end {e} is before window_start {s}"
                    )));
                }
                (s..=e).collect()
            }
        };
        Ok(ExperimentPlan {
            window_lengths,
            horizon: p.horizon.unwrap_or(d.horizon),
            runs_per_window: p.runs.unwrap_or(d.runs_per_window),
            base_seed: p.base_seed.unwrap_or(d.base_seed),
        })
    }

    pub fn model_spec(&self) -> Result<ModelSpec, HarnessError> {
        let m = &self.model;
        let mut spec = match &m.preset {
            Some(name) => match name.parse::<DeepPreset>() {
                Ok(p) => ModelSpec::preset(p),
                Err(_) => DeepPreset::ALL
                    .into_iter()
                    .find(|p| p.classical_name().eq_ignore_ascii_case(name))
                    .map(ModelSpec::classical_counterpart)
                    .ok_or_else(|| cfg_err(format!("unknown preset `{name}`")))?,
            },
            None => ModelSpec::classical(Scheme::Mlp, &[5], Algorithm::LM),
        };
        if let Some(s) = &m.scheme {
            spec.scheme = parse_scheme(s)?;
        }
        if let Some(h) = &m.hidden {
            spec.hidden = h.clone();
        }
        let algorithm = match &m.algorithm {
            Some(a) => parse_algorithm(a)?,
            None => spec.algorithm(),
        };
        spec.train = self.train.resolve(algorithm)?;
        if let Some(dims) = &m.code_dims {
            let d = spec.deep.get_or_insert_with(|| DeepSpec {
                code_dims: dims.clone(),
                encoder_activation: Activation::Tanh,
                autoencoder: TrainConfig::for_algorithm(Algorithm::LM),
                fine_tune: TrainConfig::for_algorithm(algorithm),
            });
            d.code_dims = dims.clone();
        }
        let fine_tune_fallback = spec.algorithm();
        if let Some(d) = &mut spec.deep {
            if let Some(a) = &m.encoder_activation {
                d.encoder_activation = a.parse().map_err(cfg_err)?;
            }
            d.autoencoder = self.autoencoder.resolve(Algorithm::LM)?;
            d.fine_tune = self.fine_tune.resolve(fine_tune_fallback)?;
        }
        spec.label = match &m.label {
            Some(l) => l.clone(),
            None if m.preset.is_some()
                && m.hidden.is_none()
                && m.scheme.is_none()
                && m.algorithm.is_none() =>
            {
                spec.label
            }
            None => {
                let kind = if spec.deep.is_some() { "deep-" } else { "" };
                format!(
                    "{kind}{} {}",
                    spec.front_topology().label(),
                    spec.algorithm()
                )
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn report_format(&self) -> Result<ReportFormat, HarnessError> {
        self.output
            .format
            .as_deref()
            .map_or(Ok(ReportFormat::Both), str::parse)
    }

    /// Loads the configured CSV, or generates the synthetic series.
    pub fn load_series(&self) -> Result<Series, HarnessError> {
        let d = &self.data;
        let Some(path) = &d.path else {
            return Ok(generate_synthetic(
                d.synthetic_seed.unwrap_or(1),
                d.synthetic_months.unwrap_or(176),
            ));
        };
        let yearly = |p: &Option<PathBuf>| p.as_ref().map(load_yearly_csv).transpose();
        let expansion = match d.expansion.as_deref() {
            None | Some("step") => YearlyExpansion::StepHold,
            Some("linear") => YearlyExpansion::Linear,
            Some(other) => return Err(cfg_err(format!("unknown expansion `{other}`"))),
        };
        let options = IngestOptions {
            yearly: YearlyDrivers {
                gdp: yearly(&d.gdp)?,
                population: yearly(&d.population)?,
                co2: yearly(&d.co2)?,
            },
            expansion,
        };
        Ok(load_csv_with(path, &options)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c.plan().unwrap(), ExperimentPlan::default());
        let s = c.model_spec().unwrap();
        assert_eq!(s.algorithm(), Algorithm::LM);
        assert_eq!(s.train, TrainConfig::for_algorithm(Algorithm::LM));
    }

    #[test]
    fn nested_sections_and_overrides() {
        let c = Config::parse(
            r#"
            [plan]
            window_start = 133
            window_end = 152
            runs = 3
            [model]
            preset = "deep-CFMLP2"
            [train]
            max_epochs = 50
            [fine_tune]
            max_epochs = 0
            [train_unused]
            "#,
        );
        assert!(c.is_err(), "unknown sections are rejected");
        let c = Config::parse(
            "[plan]\nwindow_start = 133\nwindow_end = 152\nruns = 3\n[model]\npreset = \"deep-CFMLP2\"\n[train]\nmax_epochs = 50\n[fine_tune]\nmax_epochs = 0\n",
        )
        .unwrap();
        let plan = c.plan().unwrap();
        assert_eq!(plan.window_lengths.len(), 20);
        assert_eq!(plan.runs_per_window, 3);
        let s = c.model_spec().unwrap();
        assert_eq!(s.label, "deep-CFMLP2");
        assert_eq!(s.algorithm(), Algorithm::CGpr);
        assert_eq!(s.train.max_epochs, 50);
        assert_eq!(s.deep.unwrap().fine_tune.max_epochs, 0);
    }

    #[test]
    fn overrides_reach_rprop_fields() {
        let o = TrainOverrides {
            algorithm: Some("rbp".into()),
            eta_plus: Some(1.3),
            max_epochs: Some(7),
            ..Default::default()
        };
        let c = o.resolve(Algorithm::LM).unwrap();
        assert_eq!(
            (c.algorithm, c.rprop.eta_plus, c.max_epochs),
            (Algorithm::RBP, 1.3, 7)
        );
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = Config::default();
        c.plan.runs = Some(4);
        c.model.hidden = Some(vec![3, 2]);
        assert_eq!(Config::parse(&c.canonical_text()).unwrap(), c);
    }
}
