//! Monthly multivariate series: ingestion, yearly-driver alignment,
//! window-local normalization and train/test slicing.

mod ingest;
mod normalize;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    expand_yearly, expand_yearly_with, load_csv, load_csv_with, load_yearly_csv, parse_csv,
    parse_yearly_csv, write_csv, IngestOptions, YearlyDrivers, YearlyExpansion,
};
pub use normalize::{fit_normalization, NormalizationParams, TARGET_COLUMN};
pub use synthetic::generate_synthetic;

/// Number of driver variables per month.
pub const FEATURE_COUNT: usize = 7;

/// Driver column names in feature-vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "gdp",
    "population",
    "co2",
    "precipitation",
    "temp_avg",
    "temp_min",
    "temp_max",
];

/// Default number of months predicted past every training window.
pub const DEFAULT_HORIZON: usize = 24;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("duplicate month {0}")]
    DuplicateMonth(YearMonth),
    #[error("gap in monthly series: {after} is followed by {next}")]
    Gap { after: YearMonth, next: YearMonth },
    #[error("no yearly value covers year {0}")]
    Coverage(i32),
    #[error("column `{0}` is constant over the training window")]
    DegenerateColumn(String),
    #[error("window of {train_len} months plus {horizon} test months exceeds series length {len}")]
    Range {
        train_len: usize,
        horizon: usize,
        len: usize,
    },
    #[error("non-finite value in column `{column}` at month {month}")]
    NonFinite { column: String, month: YearMonth },
    #[error("empty series")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Months elapsed since January of year 0; handy for differences.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got `{s}`"))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(format!("expected YYYY-MM, got `{s}`"));
        }
        let year: i32 = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in `{s}`"))?;
        YearMonth::new(year, month).ok_or_else(|| format!("month out of range in `{s}`"))
    }
}

impl TryFrom<String> for YearMonth {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

/// One month of drivers plus the demand target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySample {
    /// 1-based position in the series.
    pub month_index: usize,
    pub month: YearMonth,
    pub features: [f64; FEATURE_COUNT],
    /// GWh per month.
    pub demand: f64,
}

impl MonthlySample {
    /// Value of column `c`, where columns `0..7` are features and `7` is demand.
    pub fn column(&self, c: usize) -> f64 {
        if c < FEATURE_COUNT {
            self.features[c]
        } else {
            self.demand
        }
    }
}

/// Chronologically ordered, gap-free monthly series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    samples: Vec<MonthlySample>,
}

impl Series {
    /// Builds a series from samples in any order. Months must be unique,
    /// contiguous and finite; `month_index` is reassigned as `1..=N`.
    pub fn from_samples(mut samples: Vec<MonthlySample>) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        samples.sort_by_key(|s| s.month);
        for pair in samples.windows(2) {
            if pair[0].month == pair[1].month {
                return Err(DataError::DuplicateMonth(pair[0].month));
            }
            if pair[0].month.succ() != pair[1].month {
                return Err(DataError::Gap {
                    after: pair[0].month,
                    next: pair[1].month,
                });
            }
        }
        for (i, s) in samples.iter_mut().enumerate() {
            s.month_index = i + 1;
            for c in 0..=FEATURE_COUNT {
                if !s.column(c).is_finite() {
                    return Err(DataError::NonFinite {
                        column: column_name(c).to_string(),
                        month: s.month,
                    });
                }
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[MonthlySample] {
        &self.samples
    }

    pub fn months(&self) -> Vec<YearMonth> {
        self.samples.iter().map(|s| s.month).collect()
    }

    pub fn demand(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.demand).collect()
    }

    /// Replaces the sample at 1-based `month_index`, keeping its calendar slot.
    pub fn with_sample_replaced(
        &self,
        month_index: usize,
        features: [f64; FEATURE_COUNT],
        demand: f64,
    ) -> Self {
        let mut samples = self.samples.clone();
        let s = &mut samples[month_index - 1];
        s.features = features;
        s.demand = demand;
        Self { samples }
    }

    /// Canonical little-endian byte image used for manifest digests.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * 80);
        for s in &self.samples {
            out.extend_from_slice(&s.month.year.to_le_bytes());
            out.extend_from_slice(&s.month.month.to_le_bytes());
            for v in s.features.iter().chain(std::iter::once(&s.demand)) {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }
}

/// Column name for index `c` (`7` is the demand target).
pub fn column_name(c: usize) -> &'static str {
    if c < FEATURE_COUNT {
        FEATURE_NAMES[c]
    } else {
        "demand"
    }
}

/// Training window length plus test horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub train_len: usize,
    pub horizon: usize,
}

impl WindowSpec {
    pub fn new(train_len: usize, horizon: usize) -> Self {
        Self { train_len, horizon }
    }

    pub fn validate(&self, series_len: usize) -> Result<(), DataError> {
        if self.train_len == 0 || self.horizon == 0 || self.train_len + self.horizon > series_len {
            return Err(DataError::Range {
                train_len: self.train_len,
                horizon: self.horizon,
                len: series_len,
            });
        }
        Ok(())
    }
}

/// Splits into months `1..=l` and `l+1..=l+horizon`.
pub fn slice_window(
    series: &Series,
    spec: WindowSpec,
) -> Result<(&[MonthlySample], &[MonthlySample]), DataError> {
    spec.validate(series.len())?;
    let s = series.samples();
    Ok((
        &s[..spec.train_len],
        &s[spec.train_len..spec.train_len + spec.horizon],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> Series {
        let mut m = YearMonth::new(1999, 1).unwrap();
        let mut v = Vec::new();
        for i in 0..n {
            v.push(MonthlySample {
                month_index: 0,
                month: m,
                features: [i as f64; FEATURE_COUNT],
                demand: 100.0 + i as f64,
            });
            m = m.succ();
        }
        Series::from_samples(v).unwrap()
    }

    #[test]
    fn year_month_parse_and_order() {
        let a: YearMonth = "1999-12".parse().unwrap();
        assert_eq!(a.succ().to_string(), "2000-01");
        assert!(a < a.succ());
        assert!("1999-13".parse::<YearMonth>().is_err());
        assert!("99-01".parse::<YearMonth>().is_err());
    }

    #[test]
    fn paper_window_slices() {
        let s = tiny(176);
        let (train, test) = slice_window(&s, WindowSpec::new(120, 24)).unwrap();
        assert_eq!(train.first().unwrap().month_index, 1);
        assert_eq!(train.last().unwrap().month_index, 120);
        assert_eq!(test.first().unwrap().month_index, 121);
        assert_eq!(test.last().unwrap().month_index, 144);

        let (_, test) = slice_window(&s, WindowSpec::new(152, 24)).unwrap();
        assert_eq!(test.first().unwrap().month_index, 153);
        assert_eq!(test.last().unwrap().month_index, 176);

        assert!(matches!(
            slice_window(&s, WindowSpec::new(160, 24)),
            Err(DataError::Range { .. })
        ));
        assert!(slice_window(&s, WindowSpec::new(0, 24)).is_err());
    }

    #[test]
    fn gaps_and_duplicates_rejected() {
        let s = tiny(3);
        let mut v = s.samples().to_vec();
        v[2].month = v[2].month.succ();
        assert!(matches!(
            Series::from_samples(v),
            Err(DataError::Gap { .. })
        ));
        let mut v = s.samples().to_vec();
        v[2].month = v[1].month;
        assert!(matches!(
            Series::from_samples(v),
            Err(DataError::DuplicateMonth(_))
        ));
        let mut v = s.samples().to_vec();
        v[0].demand = f64::NAN;
        assert!(matches!(
            Series::from_samples(v),
            Err(DataError::NonFinite { .. })
        ));
    }
}
