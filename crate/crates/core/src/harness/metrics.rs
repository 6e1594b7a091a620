use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MaxAE, RMSE and MAE of an estimate against truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub max_ae: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl Metrics {
    pub fn scaled(self, k: f64) -> Self {
        Self {
            max_ae: self.max_ae * k,
            rmse: self.rmse * k,
            mae: self.mae * k,
        }
    }
}

pub fn compute_metrics(truth: &[f64], estimate: &[f64]) -> Result<Metrics> {
    if truth.len() != estimate.len() {
        return Err(Error::domain(format!(
            "length mismatch: {} truth vs {} estimate samples",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::domain("cannot compute metrics of an empty series"));
    }
    let n = truth.len() as f64;
    let (mut max_ae, mut sum_abs, mut sum_sq) = (0.0f64, 0.0, 0.0);
    for (t, e) in truth.iter().zip(estimate) {
        let d = (t - e).abs();
        max_ae = max_ae.max(d);
        sum_abs += d;
        sum_sq += d * d;
    }
    let mae = sum_abs / n;
    let rmse = (sum_sq / n).sqrt();
    // rounding can invert the orderings by an ulp when all errors are equal
    let rmse = rmse.clamp(mae, max_ae);
    Ok(Metrics { max_ae, rmse, mae })
}
