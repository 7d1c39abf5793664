use serde::{Deserialize, Serialize};

use super::EvalError;

/// R² reported when the target has zero variance but predictions miss it.
pub const R2_SENTINEL: f64 = -1e18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub n_points: usize,
    /// Set when `y_true` has zero variance and `r2` is the sentinel or 1.
    #[serde(default)]
    pub r2_degenerate: bool,
}

pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let (mut sse, mut sae, mut sst) = (0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = t - p;
        sse += e * e;
        sae += e.abs();
        sst += (t - mean) * (t - mean);
    }
    let mse = sse / n;
    let (r2, degenerate) = if sst == 0.0 {
        (if sse == 0.0 { 1.0 } else { R2_SENTINEL }, true)
    } else {
        (1.0 - sse / sst, false)
    };
    Ok(MetricsReport {
        mse,
        rmse: mse.sqrt(),
        mae: sae / n,
        r2,
        n_points: y_true.len(),
        r2_degenerate: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let y = [0.1, 0.5, 0.9];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!((m.mse, m.rmse, m.mae, m.r2), (0.0, 0.0, 0.0, 1.0));
        assert!(!m.r2_degenerate);
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let y = [1.0, 2.0, 3.0, 6.0];
        let m = regression_metrics(&y, &[3.0; 4]).unwrap();
        assert_eq!(m.r2, 0.0);
    }

    #[test]
    fn near_constant_target_is_hugely_negative() {
        let mut y = vec![0.0; 1000];
        y[0] = 1e-4;
        let m = regression_metrics(&y, &vec![0.01; 1000]).unwrap();
        assert!(m.r2 < -1e6 && !m.r2_degenerate);
    }

    #[test]
    fn zero_variance_target() {
        let m = regression_metrics(&[0.0; 5], &[0.0; 5]).unwrap();
        assert!(m.r2 == 1.0 && m.r2_degenerate);
        let m = regression_metrics(&[0.0; 5], &[0.1; 5]).unwrap();
        assert!(m.r2 == R2_SENTINEL && m.r2_degenerate);
    }

    #[test]
    fn errors() {
        assert!(matches!(regression_metrics(&[1.0], &[]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(regression_metrics(&[], &[]), Err(EvalError::EmptyInput)));
    }

    proptest! {
        #[test]
        fn rmse_and_mae_relations(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..60)) {
            let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = regression_metrics(&t, &p).unwrap();
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-12 * m.mse.max(1.0));
            prop_assert!(m.mae <= m.rmse + 1e-12);
            prop_assert!(m.mse >= 0.0 && m.r2 <= 1.0);
        }
    }
}
