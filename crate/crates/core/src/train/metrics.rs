use crate::error::{CoreError, Result};

/// Population-weighted agreement metrics between observed and predicted
/// concentrations.
#[derive(Clone, Debug)]
pub struct EvalMetrics {
    /// Mean fractional bias.
    pub mfb: f64,
    /// Mean fractional error.
    pub mfe: f64,
    /// Mean prediction error relative to the prediction.
    pub mpe: f64,
    /// Weighted Pearson correlation.
    pub pearson: f64,
    /// Coefficient of determination (1 - residual/total weighted variance).
    pub r2: f64,
    /// Squared weighted correlation, logged alongside for comparison.
    pub r2_correlation: f64,
    pub n_used: usize,
    /// Stations dropped because a fraction-based metric is undefined there
    /// (prediction zero, or observation and prediction cancelling).
    pub n_excluded: usize,
}

pub fn evaluate(targets: &[f64], preds: &[f64], weights: &[f64]) -> Result<EvalMetrics> {
    if targets.len() != preds.len() || targets.len() != weights.len() {
        return Err(CoreError::Invalid(format!(
            "metric inputs disagree in length: {} targets, {} predictions, {} weights",
            targets.len(),
            preds.len(),
            weights.len()
        )));
    }
    let mut used: Vec<usize> = Vec::with_capacity(targets.len());
    let mut n_excluded = 0;
    for i in 0..targets.len() {
        if preds[i] == 0.0 || targets[i] + preds[i] == 0.0 {
            n_excluded += 1;
        } else {
            used.push(i);
        }
    }
    if used.len() < 2 {
        return Err(CoreError::Invalid(format!(
            "only {} stations usable for metrics after excluding {n_excluded}",
            used.len()
        )));
    }
    let n = used.len() as f64;
    let mut mfb = 0.0;
    let mut mfe = 0.0;
    let mut mpe = 0.0;
    for &i in &used {
        let (y, p, w) = (targets[i], preds[i], weights[i]);
        mfb += w * 2.0 * (y - p) / (y + p);
        mfe += w * 2.0 * (y - p).abs() / (y + p);
        mpe += w * (y - p).abs() / p;
    }
    mfb /= n;
    mfe /= n;
    mpe /= n;

    let w_sum: f64 = used.iter().map(|&i| weights[i]).sum();
    let y_bar: f64 = used.iter().map(|&i| weights[i] * targets[i]).sum::<f64>() / w_sum;
    let p_bar: f64 = used.iter().map(|&i| weights[i] * preds[i]).sum::<f64>() / w_sum;
    let mut cov = 0.0;
    let mut var_y = 0.0;
    let mut var_p = 0.0;
    let mut sse = 0.0;
    for &i in &used {
        let (dy, dp, w) = (targets[i] - y_bar, preds[i] - p_bar, weights[i]);
        cov += w * dy * dp;
        var_y += w * dy * dy;
        var_p += w * dp * dp;
        sse += w * (targets[i] - preds[i]).powi(2);
    }
    if var_y == 0.0 || var_p == 0.0 {
        return Err(CoreError::Invalid(
            "correlation is undefined on constant observations or predictions".into(),
        ));
    }
    let pearson = cov / (var_y * var_p).sqrt();
    let r2 = 1.0 - sse / var_y;
    Ok(EvalMetrics {
        mfb,
        mfe,
        mpe,
        pearson,
        r2,
        r2_correlation: pearson * pearson,
        n_used: used.len(),
        n_excluded,
    })
}
