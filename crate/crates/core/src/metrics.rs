//! Evaluation metrics for occurrence and severity predictions.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::glm::{Family, PROB_CLIP};
use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::invalid("empty input"));
    }
    Ok(())
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Gini from the Lorenz curve of observed losses ordered by decreasing prediction.
///
/// Rows with tied predictions form one Lorenz segment. The cumulative exposure
/// share is `i / n`, or the exposure-weighted share when `exposure` is given.
pub fn gini(y: &[f64], y_hat: &[f64], exposure: Option<&[f64]>) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    if let Some(e) = exposure {
        check_lengths(y.len(), e.len())?;
    }
    let ex = |i: usize| exposure.map_or(1.0, |e| e[i]);
    let total_loss: f64 = {
        let mut v = y.to_vec();
        v.sort_by(f64::total_cmp);
        v.iter().sum()
    };
    if !(total_loss > 0.0) {
        return Err(Error::InsufficientData("gini undefined: observed losses sum to zero".into()));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    // Canonical order inside tie groups keeps the sums permutation-invariant.
    order.sort_by(|&a, &b| {
        y_hat[b]
            .total_cmp(&y_hat[a])
            .then(y[a].total_cmp(&y[b]))
            .then(ex(a).total_cmp(&ex(b)))
    });
    let total_exp: f64 = {
        let mut v: Vec<f64> = order.iter().map(|&i| ex(i)).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum()
    };
    let (mut cum_e, mut cum_l) = (0.0, 0.0);
    let (mut prev_p, mut prev_r) = (0.0, 0.0);
    let mut area = 0.0;
    let mut k = 0;
    while k < order.len() {
        let v = y_hat[order[k]];
        while k < order.len() && y_hat[order[k]].total_cmp(&v) == Ordering::Equal {
            cum_e += ex(order[k]);
            cum_l += y[order[k]];
            k += 1;
        }
        let (p, r) = if k == order.len() { (1.0, 1.0) } else { (cum_e / total_exp, cum_l / total_loss) };
        area += (p - prev_p) * (r + prev_r) / 2.0;
        prev_p = p;
        prev_r = r;
    }
    Ok(2.0 * area - 1.0)
}

/// Mean binary cross-entropy with predictions clipped to `[1e-12, 1 - 1e-12]`.
pub fn logloss(y: &[f64], p: &[f64]) -> Result<f64> {
    check_lengths(y.len(), p.len())?;
    let s: f64 = y
        .iter()
        .zip(p)
        .map(|(&y, &p)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-s / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiResult {
    pub csi: f64,
    /// Rows with `p >= threshold` are classified positive.
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

fn csi_from_counts(tp: u64, fp: u64, positives: u64, threshold: f64) -> CsiResult {
    let fneg = positives - tp;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    CsiResult {
        csi: ratio(tp, tp + fp + fneg),
        threshold,
        recall: ratio(tp, positives),
        precision: ratio(tp, tp + fp),
    }
}

fn count_positives(y: &[f64]) -> Result<u64> {
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::invalid("CSI needs a 0/1 target"));
    }
    let pos = y.iter().filter(|v| **v == 1.0).count() as u64;
    if pos == 0 {
        return Err(Error::InsufficientData("CSI undefined without positives".into()));
    }
    Ok(pos)
}

/// Critical success index `TP / (TP + FP + FN)` when classifying `p >= threshold` as positive.
pub fn csi_at(y: &[f64], p: &[f64], threshold: f64) -> Result<CsiResult> {
    check_lengths(y.len(), p.len())?;
    let positives = count_positives(y)?;
    let (mut tp, mut fp) = (0, 0);
    for (&yi, &pi) in y.iter().zip(p) {
        if pi >= threshold {
            if yi == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(csi_from_counts(tp, fp, positives, threshold))
}

/// Best CSI over every cut between distinct predicted values.
///
/// The returned threshold is the midpoint between the last included distinct
/// value and the next lower one (the lowest value itself when every row is
/// positive). Equal CSI values resolve to the smallest threshold.
pub fn csi_sweep(y: &[f64], p: &[f64]) -> Result<CsiResult> {
    check_lengths(y.len(), p.len())?;
    let positives = count_positives(y)?;
    if p.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN prediction"));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best: Option<(u64, u64, usize)> = None;
    let mut k = 0;
    while k < order.len() {
        let v = p[order[k]];
        while k < order.len() && p[order[k]] == v {
            if y[order[k]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        // Exact rational comparison of tp / (fp + positives); ">=" moves to smaller thresholds on ties.
        let better = match best {
            None => true,
            Some((btp, bfp, _)) => u128::from(tp) * u128::from(bfp + positives) >= u128::from(btp) * u128::from(fp + positives),
        };
        if better {
            best = Some((tp, fp, k));
        }
    }
    let (tp, fp, end) = best.expect("non-empty input");
    let lower = p[order[end - 1]];
    let threshold = if end < order.len() { 0.5 * (lower + p[order[end]]) } else { lower };
    Ok(csi_from_counts(tp, fp, positives, threshold))
}

/// Pearson residuals: `(y - p) / sqrt(p (1 - p))` or, for gamma with unit dispersion, `(y - mu) / mu`.
pub fn pearson_residuals(family: Family, y: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    check_lengths(y.len(), mu.len())?;
    y.iter()
        .zip(mu)
        .map(|(&y, &m)| match family {
            Family::BernoulliLogit => {
                if !(m > 0.0 && m < 1.0) {
                    return Err(Error::invalid(format!("bernoulli residual needs p in (0, 1), got {m}")));
                }
                Ok((y - m) / (m * (1.0 - m)).sqrt())
            }
            Family::GammaLog => {
                if !(m > 0.0) {
                    return Err(Error::invalid(format!("gamma residual needs mu > 0, got {m}")));
                }
                Ok((y - m) / m)
            }
        })
        .collect()
}

/// Metrics of one model on one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub fold: String,
    pub rmse: f64,
    pub gini: f64,
    pub deviance: f64,
    pub logloss: Option<f64>,
    pub csi_max: Option<f64>,
    pub csi_threshold: Option<f64>,
    pub recall_at_csi: Option<f64>,
    pub precision_at_csi: Option<f64>,
    pub n_params: usize,
}

impl MetricReport {
    /// Computes every metric that applies to `family` (CSI and log-loss are occurrence-only).
    pub fn compute(model: &str, fold: &str, family: Family, y: &[f64], pred: &[f64], n_params: usize) -> Result<Self> {
        let (logloss, csi) = match family {
            Family::BernoulliLogit => (Some(logloss(y, pred)?), Some(csi_sweep(y, pred)?)),
            Family::GammaLog => (None, None),
        };
        Ok(MetricReport {
            model: model.to_string(),
            fold: fold.to_string(),
            rmse: rmse(y, pred)?,
            gini: gini(y, pred, None)?,
            deviance: crate::glm::deviance(family, y, pred, None)?,
            logloss,
            csi_max: csi.map(|c| c.csi),
            csi_threshold: csi.map(|c| c.threshold),
            recall_at_csi: csi.map(|c| c.recall),
            precision_at_csi: csi.map(|c| c.precision),
            n_params,
        })
    }

    /// Field-wise mean of several reports (used for the fold-average row).
    pub fn mean(model: &str, fold: &str, reports: &[MetricReport]) -> Option<MetricReport> {
        let n = reports.len() as f64;
        let first = reports.first()?;
        let avg = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&MetricReport) -> Option<f64>| {
            reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        Some(MetricReport {
            model: model.to_string(),
            fold: fold.to_string(),
            rmse: avg(&|r| r.rmse),
            gini: avg(&|r| r.gini),
            deviance: avg(&|r| r.deviance),
            logloss: avg_opt(&|r| r.logloss),
            csi_max: avg_opt(&|r| r.csi_max),
            csi_threshold: avg_opt(&|r| r.csi_threshold),
            recall_at_csi: avg_opt(&|r| r.recall_at_csi),
            precision_at_csi: avg_opt(&|r| r.precision_at_csi),
            n_params: first.n_params,
        })
    }
}

/// Percent change `100 (m - b) / |b|`; `None` when either side is missing or the baseline is 0.
pub fn relative_delta(m: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (m, b) {
        (Some(m), Some(b)) if b != 0.0 => Some(100.0 * (m - b) / b.abs()),
        _ => None,
    }
}

/// Percent changes of each metric against a baseline report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeDeltas {
    pub rmse_pct: Option<f64>,
    pub gini_pct: Option<f64>,
    pub deviance_pct: Option<f64>,
    pub logloss_pct: Option<f64>,
    pub csi_pct: Option<f64>,
    pub recall_pct: Option<f64>,
    pub precision_pct: Option<f64>,
}

impl RelativeDeltas {
    pub fn between(report: &MetricReport, baseline: &MetricReport) -> Self {
        RelativeDeltas {
            rmse_pct: relative_delta(Some(report.rmse), Some(baseline.rmse)),
            gini_pct: relative_delta(Some(report.gini), Some(baseline.gini)),
            deviance_pct: relative_delta(Some(report.deviance), Some(baseline.deviance)),
            logloss_pct: relative_delta(report.logloss, baseline.logloss),
            csi_pct: relative_delta(report.csi_max, baseline.csi_max),
            recall_pct: relative_delta(report.recall_at_csi, baseline.recall_at_csi),
            precision_pct: relative_delta(report.precision_at_csi, baseline.precision_at_csi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0.0, 1.0, 0.0, 3.0], &[0.2; 4], None).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 0.0, 0.0, 1.0], &[0.1, 0.2, 0.3, 0.9], None).unwrap(), 0.75);
        assert!(gini(&[0.0, 0.0], &[0.1, 0.2], None).is_err());
    }

    #[test]
    fn logloss_examples() {
        assert!((logloss(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(logloss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() < 1e-11);
    }

    #[test]
    fn csi_examples() {
        let y = [0.0, 0.0, 1.0, 1.0];
        let r = csi_sweep(&y, &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert_eq!((r.csi, r.recall, r.precision), (1.0, 1.0, 1.0));
        assert_eq!(r.threshold, 0.5);
        assert_eq!(csi_at(&y, &[0.1, 0.2, 0.8, 0.9], 0.95).unwrap().csi, 0.0);
        assert!(csi_sweep(&[0.0, 0.0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn csi_ties_pick_the_smallest_threshold() {
        // thresholds 0.9 -> tp 1, fp 0, fn 1: 1/2; 0.5 -> tp 2, fp 2: 2/4.
        let y = [1.0, 0.0, 0.0, 1.0];
        let r = csi_sweep(&y, &[0.9, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(r.csi, 0.5);
        assert_eq!(r.threshold, 0.5);
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_residuals(Family::BernoulliLogit, &[1.0], &[0.5]).unwrap(), vec![1.0]);
        assert_eq!(pearson_residuals(Family::GammaLog, &[4.0, 3.0], &[2.0, 3.0]).unwrap(), vec![1.0, 0.0]);
        assert!(pearson_residuals(Family::BernoulliLogit, &[1.0], &[1.0]).is_err());
    }
}
