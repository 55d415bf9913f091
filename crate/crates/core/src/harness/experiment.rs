//! Expanding-window train-then-forecast protocol.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    fit_normalization, slice_window, NormalizationParams, Series, WindowSpec, DEFAULT_HORIZON,
};
use crate::network::Pattern;

use super::metrics::{mae, mape, rmse, Metrics};
use super::model::{Fitted, Forecaster};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub window_lengths: Vec<usize>,
    pub horizon: usize,
    pub runs_per_window: usize,
    pub base_seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            window_lengths: (120..=132).collect(),
            horizon: DEFAULT_HORIZON,
            runs_per_window: 10,
            base_seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self, series_len: usize) -> Result<(), HarnessError> {
        if self.window_lengths.is_empty() {
            return Err(HarnessError::Config("plan has no windows".into()));
        }
        if self.runs_per_window == 0 {
            return Err(HarnessError::Config(
                "plan needs at least one run per window".into(),
            ));
        }
        for &l in &self.window_lengths {
            WindowSpec::new(l, self.horizon).validate(series_len)?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.window_lengths
            .iter()
            .flat_map(|&l| (0..self.runs_per_window).map(move |r| (l, r)))
            .collect()
    }

    pub fn record_count(&self) -> usize {
        self.window_lengths.len() * self.runs_per_window * self.horizon
    }
}

/// Seed of run `r` on window `l`; the same for every model in a sweep.
pub fn cell_seed(base_seed: u64, l: usize, r: usize) -> u64 {
    base_seed
        .wrapping_add(1_000_003u64.wrapping_mul(l as u64))
        .wrapping_add(r as u64)
}

/// One test month of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub window: usize,
    pub run: usize,
    /// Months ahead of the window, 1-based.
    pub horizon: usize,
    /// 1-based month index of the forecast target.
    pub month_index: usize,
    pub actual: f64,
    pub predicted: f64,
    pub actual_norm: f64,
    pub predicted_norm: f64,
    pub failed: bool,
}

impl Record {
    /// Signed error `actual − predicted` in demand units.
    pub fn error(&self) -> f64 {
        self.actual - self.predicted
    }

    pub fn error_norm(&self) -> f64 {
        self.actual_norm - self.predicted_norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledErrors {
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub window: usize,
    pub run: usize,
    pub seed: u64,
    pub failed: bool,
    /// Demand scale; absent for failed runs.
    pub metrics: Option<Metrics>,
    pub metrics_norm: Option<ScaledErrors>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    pub horizon: usize,
    /// Successful runs contributing.
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    pub mae_norm: f64,
    pub rmse_norm: f64,
}

/// Per-run metrics averaged over successful runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub mape: f64,
    pub mae: f64,
    pub rmse: f64,
    pub mae_norm: f64,
    pub rmse_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub model: String,
    pub plan: ExperimentPlan,
    pub records: Vec<Record>,
    pub runs: Vec<RunSummary>,
    pub per_horizon: Vec<HorizonStats>,
    /// `None` when every run failed.
    pub overall: Option<OverallMetrics>,
    pub failed_runs: usize,
}

impl ExperimentResult {
    pub fn all_failed(&self) -> bool {
        self.failed_runs == self.runs.len()
    }
}

/// Normalized training patterns and test months of one window.
#[derive(Debug, Clone)]
pub struct WindowData {
    pub train_len: usize,
    pub normalization: NormalizationParams,
    pub train: Vec<Pattern>,
    pub test_inputs: Vec<Vec<f64>>,
    pub test_actual: Vec<f64>,
    pub test_month_index: Vec<usize>,
}

impl WindowData {
    /// Everything the model may see is fitted on months `1..=l`.
    pub fn prepare(
        series: &Series,
        train_len: usize,
        horizon: usize,
    ) -> Result<Self, HarnessError> {
        let (train, test) = slice_window(series, WindowSpec::new(train_len, horizon))?;
        let normalization = fit_normalization(series, train_len)?;
        let patterns = train
            .iter()
            .map(|s| {
                Pattern::scalar(
                    normalization.normalize_features(&s.features),
                    normalization.normalize_target(s.demand),
                )
            })
            .collect();
        Ok(Self {
            train_len,
            train: patterns,
            test_inputs: test
                .iter()
                .map(|s| normalization.normalize_features(&s.features))
                .collect(),
            test_actual: test.iter().map(|s| s.demand).collect(),
            test_month_index: test.iter().map(|s| s.month_index).collect(),
            normalization,
        })
    }
}

/// Trains `model` on window `l` with the given seed.
pub fn fit_window(
    series: &Series,
    train_len: usize,
    model: &dyn Forecaster,
    seed: u64,
) -> Result<Fitted, HarnessError> {
    let data = WindowData::prepare(series, train_len, 1)?;
    model.fit(&data.train, seed)
}

/// How the (model × window × run) grid is scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    /// Data-parallel over cells when the `parallel` feature is on,
    /// sequential otherwise.
    #[default]
    Parallel,
    Sequential,
}

fn map_cells<C: Sync, T: Send>(
    cells: &[C],
    exec: Execution,
    f: impl Fn(&C) -> T + Sync + Send,
) -> Vec<T> {
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            cells.par_iter().map(f).collect()
        }
        _ => cells.iter().map(f).collect(),
    }
}

/// Runs `f` on a pool of `threads` workers. Without the `parallel`
/// feature this simply calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

struct CellOutput {
    seed: u64,
    failed: bool,
    predicted_norm: Vec<f64>,
}

fn run_cell(
    model: &dyn Forecaster,
    data: &WindowData,
    seed: u64,
) -> Result<CellOutput, HarnessError> {
    let fitted = model.fit(&data.train, seed)?;
    let mut failed = fitted.failed;
    let mut predicted_norm = Vec::with_capacity(data.test_inputs.len());
    for x in &data.test_inputs {
        let p = fitted.predictor.predict(x)?;
        failed |= !p.is_finite();
        predicted_norm.push(p);
    }
    Ok(CellOutput {
        seed,
        failed,
        predicted_norm,
    })
}

pub fn run_experiment(
    series: &Series,
    plan: &ExperimentPlan,
    model: &dyn Forecaster,
) -> Result<ExperimentResult, HarnessError> {
    run_experiment_with(series, plan, model, Execution::default())
}

pub fn run_experiment_with(
    series: &Series,
    plan: &ExperimentPlan,
    model: &dyn Forecaster,
    exec: Execution,
) -> Result<ExperimentResult, HarnessError> {
    Ok(run_experiments(series, plan, &[model], exec)?.remove(0))
}

/// Runs several models over the same plan as one flat grid.
pub fn run_experiments(
    series: &Series,
    plan: &ExperimentPlan,
    models: &[&dyn Forecaster],
    exec: Execution,
) -> Result<Vec<ExperimentResult>, HarnessError> {
    plan.validate(series.len())?;
    let windows = plan
        .window_lengths
        .iter()
        .map(|&l| WindowData::prepare(series, l, plan.horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..models.len())
        .flat_map(|m| {
            (0..windows.len()).flat_map(move |w| (0..plan.runs_per_window).map(move |r| (m, w, r)))
        })
        .collect();
    let outputs = map_cells(&cells, exec, |&(m, w, r)| {
        run_cell(
            models[m],
            &windows[w],
            cell_seed(plan.base_seed, windows[w].train_len, r),
        )
    });
    let mut outputs = outputs.into_iter();
    let per_model = windows.len() * plan.runs_per_window;
    models
        .iter()
        .map(|m| {
            let chunk = outputs
                .by_ref()
                .take(per_model)
                .collect::<Result<Vec<_>, _>>()?;
            aggregate(m.label(), plan, &windows, chunk)
        })
        .collect()
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn aggregate(
    model: String,
    plan: &ExperimentPlan,
    windows: &[WindowData],
    cells: Vec<CellOutput>,
) -> Result<ExperimentResult, HarnessError> {
    let mut records = Vec::with_capacity(plan.record_count());
    let mut runs = Vec::with_capacity(cells.len());
    let mut cells = cells.into_iter();
    for w in windows {
        for r in 0..plan.runs_per_window {
            let cell = cells.next().expect("one output per cell");
            let predicted: Vec<f64> = cell
                .predicted_norm
                .iter()
                .map(|p| w.normalization.denormalize_target(*p))
                .collect();
            let actual_norm: Vec<f64> = w
                .test_actual
                .iter()
                .map(|y| w.normalization.normalize_target(*y))
                .collect();
            for h in 0..plan.horizon {
                records.push(Record {
                    window: w.train_len,
                    run: r,
                    horizon: h + 1,
                    month_index: w.test_month_index[h],
                    actual: w.test_actual[h],
                    predicted: predicted[h],
                    actual_norm: actual_norm[h],
                    predicted_norm: cell.predicted_norm[h],
                    failed: cell.failed,
                });
            }
            let (metrics, metrics_norm) = if cell.failed {
                (None, None)
            } else {
                (
                    Some(Metrics::compute(&w.test_actual, &predicted)?),
                    Some(ScaledErrors {
                        mae: mae(&actual_norm, &cell.predicted_norm)?,
                        rmse: rmse(&actual_norm, &cell.predicted_norm)?,
                    }),
                )
            };
            runs.push(RunSummary {
                window: w.train_len,
                run: r,
                seed: cell.seed,
                failed: cell.failed,
                metrics,
                metrics_norm,
            });
        }
    }
    let failed_runs = runs.iter().filter(|r| r.failed).count();
    let ok: Vec<&RunSummary> = runs.iter().filter(|r| !r.failed).collect();
    let overall = (!ok.is_empty()).then(|| OverallMetrics {
        mape: mean(ok.iter().map(|r| r.metrics.unwrap().mape)),
        mae: mean(ok.iter().map(|r| r.metrics.unwrap().mae)),
        rmse: mean(ok.iter().map(|r| r.metrics.unwrap().rmse)),
        mae_norm: mean(ok.iter().map(|r| r.metrics_norm.unwrap().mae)),
        rmse_norm: mean(ok.iter().map(|r| r.metrics_norm.unwrap().rmse)),
    });
    let per_horizon = (1..=plan.horizon)
        .map(|h| {
            let rs: Vec<&Record> = records
                .iter()
                .filter(|r| r.horizon == h && !r.failed)
                .collect();
            let y: Vec<f64> = rs.iter().map(|r| r.actual).collect();
            let p: Vec<f64> = rs.iter().map(|r| r.predicted).collect();
            let yn: Vec<f64> = rs.iter().map(|r| r.actual_norm).collect();
            let pn: Vec<f64> = rs.iter().map(|r| r.predicted_norm).collect();
            let or_nan = |v: Result<f64, _>| v.unwrap_or(f64::NAN);
            HorizonStats {
                horizon: h,
                count: rs.len(),
                mae: or_nan(mae(&y, &p)),
                rmse: or_nan(rmse(&y, &p)),
                mape: or_nan(mape(&y, &p)),
                mae_norm: or_nan(mae(&yn, &pn)),
                rmse_norm: or_nan(rmse(&yn, &pn)),
            }
        })
        .collect();
    Ok(ExperimentResult {
        model,
        plan: plan.clone(),
        records,
        runs,
        per_horizon,
        overall,
        failed_runs,
    })
}
