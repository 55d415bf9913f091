use serde::{Deserialize, Serialize};

use super::{column_name, DataError, MonthlySample, Series, FEATURE_COUNT};

/// Column index of the demand target inside [`NormalizationParams`].
pub const TARGET_COLUMN: usize = FEATURE_COUNT;

/// Per-column affine map onto `[-1, 1]`, fitted on a training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: [f64; FEATURE_COUNT + 1],
    pub max: [f64; FEATURE_COUNT + 1],
}

impl NormalizationParams {
    /// Fits on the given samples. Every column must vary.
    pub fn fit(samples: &[MonthlySample]) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Empty);
        }
        let mut min = [f64::INFINITY; FEATURE_COUNT + 1];
        let mut max = [f64::NEG_INFINITY; FEATURE_COUNT + 1];
        for s in samples {
            for c in 0..=FEATURE_COUNT {
                min[c] = min[c].min(s.column(c));
                max[c] = max[c].max(s.column(c));
            }
        }
        for c in 0..=FEATURE_COUNT {
            if max[c] <= min[c] {
                return Err(DataError::DegenerateColumn(column_name(c).into()));
            }
        }
        Ok(Self { min, max })
    }

    pub fn normalize(&self, column: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[column], self.max[column]);
        2.0 * (v - lo) / (hi - lo) - 1.0
    }

    pub fn denormalize(&self, column: usize, z: f64) -> f64 {
        let (lo, hi) = (self.min[column], self.max[column]);
        (z + 1.0) * 0.5 * (hi - lo) + lo
    }

    pub fn normalize_features(&self, x: &[f64; FEATURE_COUNT]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, &v)| self.normalize(c, v))
            .collect()
    }

    pub fn normalize_target(&self, y: f64) -> f64 {
        self.normalize(TARGET_COLUMN, y)
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        self.denormalize(TARGET_COLUMN, z)
    }
}

/// Fits min/max on months `1..=l` only.
pub fn fit_normalization(series: &Series, l: usize) -> Result<NormalizationParams, DataError> {
    if l == 0 || l > series.len() {
        return Err(DataError::Range {
            train_len: l,
            horizon: 0,
            len: series.len(),
        });
    }
    NormalizationParams::fit(&series.samples()[..l])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, YearMonth};
    use proptest::prelude::*;

    fn two_point(a: f64, b: f64) -> Vec<MonthlySample> {
        let m = YearMonth::new(2000, 1).unwrap();
        vec![
            MonthlySample {
                month_index: 1,
                month: m,
                features: [a, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                demand: a,
            },
            MonthlySample {
                month_index: 2,
                month: m.succ(),
                features: [b, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
                demand: b,
            },
        ]
    }

    #[test]
    fn affine_endpoints_and_midpoint() {
        let p = NormalizationParams::fit(&two_point(0.0, 10.0)).unwrap();
        assert_eq!(p.min[0], 0.0);
        assert_eq!(p.max[0], 10.0);
        assert_eq!(p.normalize(0, 5.0), 0.0);
        assert_eq!(p.normalize(0, 10.0), 1.0);
        assert_eq!(p.normalize(0, 0.0), -1.0);
        // 2 * 20 / 10 - 1
        assert_eq!(p.normalize(0, 20.0), 3.0);
    }

    #[test]
    fn constant_column_rejected() {
        let mut s = two_point(0.0, 10.0);
        s[1].features[4] = 0.0;
        match NormalizationParams::fit(&s) {
            Err(DataError::DegenerateColumn(c)) => assert_eq!(c, "temp_avg"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn locality_ignores_test_months() {
        let s = generate_synthetic(5, 60);
        let before = fit_normalization(&s, 40).unwrap();
        let poisoned = s.with_sample_replaced(50, [1e9; FEATURE_COUNT], -1e9);
        assert_eq!(before, fit_normalization(&poisoned, 40).unwrap());
    }

    #[test]
    fn round_trip_on_synthetic_columns() {
        let s = generate_synthetic(11, 176);
        let p = fit_normalization(&s, 120).unwrap();
        for sample in s.samples() {
            for c in 0..=FEATURE_COUNT {
                let v = sample.column(c);
                let back = p.denormalize(c, p.normalize(c, v));
                assert!(
                    (back - v).abs() <= 1e-12 * v.abs().max(1.0),
                    "column {c}: {v} -> {back}"
                );
            }
        }
    }

    proptest! {
        // Holds whenever |v| is within two decades of the column's scale,
        // which covers every real driver series.
        #[test]
        fn round_trip(lo in -1e6f64..1e6, span in 1e-3f64..1e6, t in -1.0f64..2.0) {
            let v = lo + t * span;
            prop_assume!(v.abs() >= (lo.abs() + span) / 100.0);
            let p = NormalizationParams::fit(&two_point(lo, lo + span)).unwrap();
            let back = p.denormalize(0, p.normalize(0, v));
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}
