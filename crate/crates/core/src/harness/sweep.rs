use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::Series;
use crate::network::Scheme;
use crate::optimizers::{Algorithm, TrainConfig};

use super::experiment::{
    run_experiments, Execution, ExperimentPlan, ExperimentResult, OverallMetrics,
};
use super::model::{Forecaster, ModelSpec};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// 1-based position after ranking.
    pub rank: usize,
    pub model: String,
    pub scheme: Scheme,
    pub hidden: Vec<usize>,
    pub algorithm: Algorithm,
    pub overall: Option<OverallMetrics>,
    pub failed_runs: usize,
    pub runs: usize,
}

impl SweepRow {
    pub fn mape(&self) -> f64 {
        self.overall.map_or(f64::NAN, |o| o.mape)
    }

    pub fn total_neurons(&self) -> usize {
        self.hidden.iter().sum()
    }
}

/// Lower MAPE first, then fewer hidden neurons, then lower RMSE. Rows
/// without metrics sort last.
pub fn compare_rows(a: &SweepRow, b: &SweepRow) -> Ordering {
    let key = |r: &SweepRow| {
        r.overall
            .map(|o| (o.mape, o.rmse))
            .filter(|(m, _)| !m.is_nan())
    };
    match (key(a), key(b)) {
        (None, None) => a.total_neurons().cmp(&b.total_neurons()),
        (None, Some(_)) => Ordering::Greater,
        (Some(_), None) => Ordering::Less,
        (Some((ma, ra)), Some((mb, rb))) => ma
            .total_cmp(&mb)
            .then(a.total_neurons().cmp(&b.total_neurons()))
            .then(ra.total_cmp(&rb)),
    }
}

/// Sorts in place and renumbers ranks.
pub fn rank_rows(rows: &mut [SweepRow]) {
    rows.sort_by(compare_rows);
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Ranked best first.
    pub rows: Vec<SweepRow>,
    /// Full results in candidate order.
    pub results: Vec<ExperimentResult>,
}

fn run_sweep(
    series: &Series,
    plan: &ExperimentPlan,
    specs: Vec<ModelSpec>,
    exec: Execution,
) -> Result<SweepOutcome, HarnessError> {
    for s in &specs {
        s.validate()?;
    }
    let models: Vec<&dyn Forecaster> = specs.iter().map(|s| s as &dyn Forecaster).collect();
    let results = run_experiments(series, plan, &models, exec)?;
    let mut rows: Vec<SweepRow> = specs
        .iter()
        .zip(&results)
        .map(|(s, r)| SweepRow {
            rank: 0,
            model: s.label.clone(),
            scheme: s.scheme,
            hidden: s.hidden.clone(),
            algorithm: s.algorithm(),
            overall: r.overall,
            failed_runs: r.failed_runs,
            runs: r.runs.len(),
        })
        .collect();
    rank_rows(&mut rows);
    Ok(SweepOutcome { rows, results })
}

/// Hidden-layer shapes for one or two layers drawn from `neurons`.
pub fn architecture_candidates(
    depth: usize,
    neurons: &[usize],
) -> Result<Vec<Vec<usize>>, HarnessError> {
    if neurons.is_empty() {
        return Err(HarnessError::Config("empty neuron range".into()));
    }
    match depth {
        1 => Ok(neurons.iter().map(|&n| vec![n]).collect()),
        2 => Ok(neurons
            .iter()
            .flat_map(|&a| neurons.iter().map(move |&b| vec![a, b]))
            .collect()),
        d => Err(HarnessError::Config(format!(
            "depth must be 1 or 2, got {d}"
        ))),
    }
}

/// Every hidden-layer shape of the given depth, one experiment each.
pub fn sweep_architecture(
    series: &Series,
    scheme: Scheme,
    depth: usize,
    neurons: &[usize],
    train: &TrainConfig,
    plan: &ExperimentPlan,
    exec: Execution,
) -> Result<SweepOutcome, HarnessError> {
    let specs = architecture_candidates(depth, neurons)?
        .into_iter()
        .map(|h| {
            let mut s = ModelSpec::classical(scheme, &h, train.algorithm);
            s.train = train.clone();
            s
        })
        .collect();
    run_sweep(series, plan, specs, exec)
}

/// One experiment per training algorithm on a fixed architecture. Every
/// algorithm sees the same initial weights in each cell. `configure`
/// adjusts each algorithm's default config.
pub fn sweep_optimizer(
    series: &Series,
    scheme: Scheme,
    hidden: &[usize],
    plan: &ExperimentPlan,
    exec: Execution,
    configure: impl Fn(TrainConfig) -> TrainConfig,
) -> Result<SweepOutcome, HarnessError> {
    let specs = Algorithm::ALL
        .into_iter()
        .map(|a| {
            let mut s = ModelSpec::classical(scheme, hidden, a);
            s.train = configure(TrainConfig::for_algorithm(a));
            s
        })
        .collect();
    run_sweep(series, plan, specs, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mape: f64, hidden: Vec<usize>, rmse: f64) -> SweepRow {
        SweepRow {
            rank: 0,
            model: format!("{hidden:?}"),
            scheme: Scheme::Mlp,
            hidden,
            algorithm: Algorithm::LM,
            overall: Some(OverallMetrics {
                mape,
                mae: 0.0,
                rmse,
                mae_norm: 0.0,
                rmse_norm: 0.0,
            }),
            failed_runs: 0,
            runs: 1,
        }
    }

    #[test]
    fn ranking_breaks_ties() {
        let mut rows = vec![
            row(5.0, vec![3], 1.0),
            row(4.0, vec![9], 2.0),
            row(4.0, vec![2, 2], 3.0),
            row(4.0, vec![4], 1.0),
            row(f64::NAN, vec![1], 0.0),
        ];
        rows[4].overall = None;
        rank_rows(&mut rows);
        let order: Vec<Vec<usize>> = rows.iter().map(|r| r.hidden.clone()).collect();
        assert_eq!(order, vec![vec![4], vec![2, 2], vec![9], vec![3], vec![1]]);
        assert_eq!(
            rows.iter().map(|r| r.rank).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
        let mut again = rows.clone();
        again.reverse();
        rank_rows(&mut again);
        assert_eq!(again, rows);
    }

    #[test]
    fn candidate_counts() {
        let range: Vec<usize> = (1..=15).collect();
        assert_eq!(architecture_candidates(1, &[4]).unwrap(), vec![vec![4]]);
        assert_eq!(architecture_candidates(2, &range).unwrap().len(), 225);
        assert!(architecture_candidates(3, &range).is_err());
        assert!(architecture_candidates(1, &[]).is_err());
    }
}
