use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{column_name, DataError, MonthlySample, Series, YearMonth, FEATURE_COUNT};

/// How a once-per-year driver is spread over the months of its year.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum YearlyExpansion {
    /// Every month carries its calendar year's value.
    #[default]
    StepHold,
    /// Linear ramp from this year's value towards next year's; the last
    /// covered year is held.
    Linear,
}

/// Yearly series that replace the monthly `gdp`, `population` and `co2`
/// columns when present.
#[derive(Debug, Clone, Default)]
pub struct YearlyDrivers {
    pub gdp: Option<Vec<(i32, f64)>>,
    pub population: Option<Vec<(i32, f64)>>,
    pub co2: Option<Vec<(i32, f64)>>,
}

impl YearlyDrivers {
    fn by_column(&self, c: usize) -> Option<&[(i32, f64)]> {
        match c {
            0 => self.gdp.as_deref(),
            1 => self.population.as_deref(),
            2 => self.co2.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub yearly: YearlyDrivers,
    pub expansion: YearlyExpansion,
}

/// Step-hold expansion of yearly values onto months.
pub fn expand_yearly(yearly: &[(i32, f64)], months: &[YearMonth]) -> Result<Vec<f64>, DataError> {
    expand_yearly_with(yearly, months, YearlyExpansion::StepHold)
}

pub fn expand_yearly_with(
    yearly: &[(i32, f64)],
    months: &[YearMonth],
    mode: YearlyExpansion,
) -> Result<Vec<f64>, DataError> {
    let table: BTreeMap<i32, f64> = yearly.iter().copied().collect();
    months
        .iter()
        .map(|m| {
            let v = *table.get(&m.year).ok_or(DataError::Coverage(m.year))?;
            Ok(match (mode, table.get(&(m.year + 1))) {
                (YearlyExpansion::Linear, Some(next)) => {
                    v + (m.month as f64 - 1.0) / 12.0 * (next - v)
                }
                _ => v,
            })
        })
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a complete monthly file (all nine columns required).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Series, DataError> {
    load_csv_with(path, &IngestOptions::default())
}

pub fn load_csv_with(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Series, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_csv(file, options)
}

/// Parses a monthly table. Header order is free; rows may come in any
/// order. Driver columns covered by `options.yearly` may be omitted.
/// Row numbers in errors count data rows from 1.
pub fn parse_csv<R: Read>(reader: R, options: &IngestOptions) -> Result<Series, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let month_col = position("month").ok_or_else(|| DataError::MissingColumn("month".into()))?;
    let mut cols = [None; FEATURE_COUNT + 1];
    for (c, slot) in cols.iter_mut().enumerate() {
        *slot = position(column_name(c));
        if slot.is_none() && options.yearly.by_column(c).is_none() {
            return Err(DataError::MissingColumn(column_name(c).into()));
        }
    }

    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        let month: YearMonth = cell(month_col)
            .parse()
            .map_err(|message| DataError::Parse {
                row,
                column: "month".into(),
                message,
            })?;
        let mut values = [0.0; FEATURE_COUNT + 1];
        for (c, idx) in cols.iter().enumerate() {
            if let Some(idx) = idx {
                let raw = cell(*idx);
                values[c] = raw.parse().map_err(|_| DataError::Parse {
                    row,
                    column: column_name(c).into(),
                    message: format!("not a number: `{raw}`"),
                })?;
            }
        }
        let mut features = [0.0; FEATURE_COUNT];
        features.copy_from_slice(&values[..FEATURE_COUNT]);
        samples.push(MonthlySample {
            month_index: 0,
            month,
            features,
            demand: values[FEATURE_COUNT],
        });
    }

    // Duplicate/gap detection needs calendar order first.
    let mut series = Series::from_samples(samples)?;
    let months = series.months();
    for c in 0..3 {
        if let Some(yearly) = options.yearly.by_column(c) {
            let expanded = expand_yearly_with(yearly, &months, options.expansion)?;
            for (s, v) in series.samples.iter_mut().zip(expanded) {
                s.features[c] = v;
            }
        }
    }
    Series::from_samples(series.samples)
}

pub fn load_yearly_csv(path: impl AsRef<Path>) -> Result<Vec<(i32, f64)>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_yearly_csv(file)
}

/// Parses a `year,value` table.
pub fn parse_yearly_csv<R: Read>(reader: R) -> Result<Vec<(i32, f64)>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let year_col = headers
        .iter()
        .position(|h| h == "year")
        .ok_or_else(|| DataError::MissingColumn("year".into()))?;
    let value_col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| DataError::MissingColumn("value".into()))?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let parse_err = |column: &str, raw: &str| DataError::Parse {
            row: i + 1,
            column: column.into(),
            message: format!("not a number: `{raw}`"),
        };
        let y = record.get(year_col).unwrap_or("");
        let v = record.get(value_col).unwrap_or("");
        out.push((
            y.parse().map_err(|_| parse_err("year", y))?,
            v.parse().map_err(|_| parse_err("value", v))?,
        ));
    }
    Ok(out)
}

/// Writes the full nine-column schema. Values use shortest round-trip
/// formatting, so `parse_csv(write_csv(s)) == s`.
pub fn write_csv<W: Write>(series: &Series, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["month"];
    header.extend((0..=FEATURE_COUNT).map(column_name));
    w.write_record(&header)?;
    for s in series.samples() {
        let mut row = vec![s.month.to_string()];
        row.extend((0..=FEATURE_COUNT).map(|c| s.column(c).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}
