use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} actual values vs {1} predictions")]
    Shape(usize, usize),
    #[error("no values to score")]
    Empty,
    #[error("percentage error undefined: actual value at position {0} is zero")]
    ZeroTarget(usize),
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<(), MetricError> {
    if y.len() != y_hat.len() {
        return Err(MetricError::Shape(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat)?;
    Ok((y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricError> {
    check(y, y_hat)?;
    if let Some(i) = y.iter().position(|v| *v == 0.0) {
        return Err(MetricError::ZeroTarget(i));
    }
    Ok(100.0
        * y.iter()
            .zip(y_hat)
            .map(|(a, b)| ((a - b) / a).abs())
            .sum::<f64>()
        / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

impl Metrics {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self, MetricError> {
        Ok(Self {
            mae: mae(y, y_hat)?,
            rmse: rmse(y, y_hat)?,
            mape: mape(y, y_hat)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 1.0]).unwrap(), 1.5);
        assert_eq!(mae(&[4.0, 5.0], &[4.0, 5.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355339059327378).abs() < 1e-15);
        assert_eq!(rmse(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap(), 50.0);
        assert_eq!(mape(&[7.0, 9.0], &[7.0, 9.0]).unwrap(), 0.0);
        assert!((mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::Shape(1, 2)));
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        assert_eq!(
            mape(&[1.0, 0.0], &[1.0, 1.0]),
            Err(MetricError::ZeroTarget(1))
        );
    }
}
