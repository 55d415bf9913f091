//! Tables, per-horizon curves, raw records and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Series;

use super::experiment::{cell_seed, ExperimentPlan, ExperimentResult};
use super::sweep::SweepRow;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Both,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "both" => Ok(ReportFormat::Both),
            other => Err(HarnessError::Config(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub window: usize,
    pub run: usize,
    pub seed: u64,
}

/// What is needed to reproduce a set of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    /// sha256 of the series' canonical bytes.
    pub data_digest: String,
    /// sha256 of the canonical config text.
    pub config_digest: String,
    /// sha256 over both digests.
    pub digest: String,
    pub seed_schedule: String,
    pub seeds: Vec<SeedEntry>,
    pub models: Vec<String>,
    pub config: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Combined digest of a series and a config text.
pub fn manifest_digest(series: &Series, config_text: &str) -> String {
    let d = sha256_hex(&series.canonical_bytes());
    let c = sha256_hex(config_text.as_bytes());
    sha256_hex(format!("{d}\n{c}\n").as_bytes())
}

impl Manifest {
    pub fn new(
        series: &Series,
        config_text: &str,
        plan: &ExperimentPlan,
        models: Vec<String>,
    ) -> Self {
        let seeds = plan
            .cells()
            .into_iter()
            .map(|(window, run)| SeedEntry {
                window,
                run,
                seed: cell_seed(plan.base_seed, window, run),
            })
            .collect();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            data_digest: sha256_hex(&series.canonical_bytes()),
            config_digest: sha256_hex(config_text.as_bytes()),
            digest: manifest_digest(series, config_text),
            seed_schedule: format!("{} + 1000003*l + r", plan.base_seed),
            seeds,
            models,
            config: config_text.to_string(),
        }
    }
}

/// Results together with their manifest, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub manifest: Manifest,
    pub results: Vec<ExperimentResult>,
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_file(
            path,
            serde_json::to_string_pretty(self)
                .expect("serializable")
                .as_bytes(),
        )
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), num)
}

/// Model × {MAPE, RMSE, MAE}; RMSE and MAE on the normalized scale.
pub fn table1_csv(results: &[ExperimentResult]) -> Vec<u8> {
    let header = ["model", "mape", "rmse_norm", "mae_norm"].map(String::from);
    csv_bytes(
        &header,
        results.iter().map(|r| {
            vec![
                r.model.clone(),
                opt(r.overall.map(|o| o.mape)),
                opt(r.overall.map(|o| o.rmse_norm)),
                opt(r.overall.map(|o| o.mae_norm)),
            ]
        }),
    )
}

/// Overall metrics on both scales plus failure counts.
pub fn overall_csv(results: &[ExperimentResult]) -> Vec<u8> {
    let header = [
        "model",
        "runs",
        "failed_runs",
        "mape",
        "mae",
        "rmse",
        "mae_norm",
        "rmse_norm",
    ]
    .map(String::from);
    csv_bytes(
        &header,
        results.iter().map(|r| {
            vec![
                r.model.clone(),
                r.runs.len().to_string(),
                r.failed_runs.to_string(),
                opt(r.overall.map(|o| o.mape)),
                opt(r.overall.map(|o| o.mae)),
                opt(r.overall.map(|o| o.rmse)),
                opt(r.overall.map(|o| o.mae_norm)),
                opt(r.overall.map(|o| o.rmse_norm)),
            ]
        }),
    )
}

/// One row per horizon, three error columns per model.
pub fn per_horizon_csv(results: &[ExperimentResult]) -> Vec<u8> {
    let mut header = vec!["horizon".to_string()];
    for r in results {
        for m in ["mape", "mae_norm", "rmse_norm"] {
            header.push(format!("{}:{m}", r.model));
        }
    }
    let horizon = results.first().map_or(0, |r| r.plan.horizon);
    csv_bytes(
        &header,
        (0..horizon).map(|h| {
            let mut row = vec![(h + 1).to_string()];
            for r in results {
                let s = &r.per_horizon[h];
                row.extend([num(s.mape), num(s.mae_norm), num(s.rmse_norm)]);
            }
            row
        }),
    )
}

pub fn records_csv(result: &ExperimentResult) -> Vec<u8> {
    let header = [
        "window",
        "run",
        "horizon",
        "month_index",
        "actual",
        "predicted",
        "error",
        "actual_norm",
        "predicted_norm",
        "error_norm",
        "failed",
    ]
    .map(String::from);
    csv_bytes(
        &header,
        result.records.iter().map(|r| {
            vec![
                r.window.to_string(),
                r.run.to_string(),
                r.horizon.to_string(),
                r.month_index.to_string(),
                num(r.actual),
                num(r.predicted),
                num(r.error()),
                num(r.actual_norm),
                num(r.predicted_norm),
                num(r.error_norm()),
                r.failed.to_string(),
            ]
        }),
    )
}

pub fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    let header = [
        "rank",
        "model",
        "scheme",
        "hidden",
        "algorithm",
        "mape",
        "rmse",
        "mae_norm",
        "rmse_norm",
        "failed_runs",
    ]
    .map(String::from);
    csv_bytes(
        &header,
        rows.iter().map(|r| {
            let hidden: Vec<String> = r.hidden.iter().map(|h| h.to_string()).collect();
            vec![
                r.rank.to_string(),
                r.model.clone(),
                r.scheme.name().to_string(),
                hidden.join("-"),
                r.algorithm.name().to_string(),
                opt(r.overall.map(|o| o.mape)),
                opt(r.overall.map(|o| o.rmse)),
                opt(r.overall.map(|o| o.mae_norm)),
                opt(r.overall.map(|o| o.rmse_norm)),
                r.failed_runs.to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    model: &'a str,
    runs: usize,
    failed_runs: usize,
    overall: Option<super::experiment::OverallMetrics>,
    per_horizon: &'a [super::experiment::HorizonStats],
}

/// Writes the overall table, Table-1 table, per-horizon curves and the
/// manifest into `dir`, returning the paths written.
pub fn write_report(
    dir: &Path,
    results: &[ExperimentResult],
    manifest: &Manifest,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Config("nothing to report".into()));
    }
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), HarnessError> {
        let p = dir.join(name);
        write_file(&p, &bytes)?;
        written.push(p);
        Ok(())
    };
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        emit("table1.csv", table1_csv(results))?;
        emit("overall.csv", overall_csv(results))?;
        emit("per_horizon.csv", per_horizon_csv(results))?;
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let summary: Vec<JsonSummary> = results
            .iter()
            .map(|r| JsonSummary {
                model: &r.model,
                runs: r.runs.len(),
                failed_runs: r.failed_runs,
                overall: r.overall,
                per_horizon: &r.per_horizon,
            })
            .collect();
        emit(
            "summary.json",
            serde_json::to_vec_pretty(&summary).expect("serializable"),
        )?;
    }
    emit(
        "manifest.json",
        serde_json::to_vec_pretty(manifest).expect("serializable"),
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    #[test]
    fn digest_tracks_data_and_config() {
        let s = generate_synthetic(1, 60);
        let base = manifest_digest(&s, "a = 1");
        assert_eq!(base, manifest_digest(&generate_synthetic(1, 60), "a = 1"));
        assert_ne!(base, manifest_digest(&s, "a = 2"));
        let sample = &s.samples()[10];
        let poisoned =
            s.with_sample_replaced(sample.month_index, sample.features, sample.demand + 1.0);
        assert_ne!(base, manifest_digest(&poisoned, "a = 1"));
        assert_eq!(base.len(), 64);
    }

    #[test]
    fn format_names() {
        assert_eq!("CSV".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
