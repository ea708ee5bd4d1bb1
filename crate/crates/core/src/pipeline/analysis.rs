//! Post-fit analyses: LRT importance, grouped calibration, residual maps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Building, ColumnData, FeatureTable};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, likelihood_ratio_test, Family, FitOptions, FittedGlm, ModelSpec};
use crate::metrics::pearson_residuals;

/// `log10(0.05)`, the significance line of the importance plot.
pub const LOG10_ALPHA: f64 = -1.301_029_995_663_981_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceStatus {
    Tested,
    Untestable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub term: String,
    pub status: ImportanceStatus,
    pub df: usize,
    pub statistic: Option<f64>,
    pub log10_p: Option<f64>,
    pub significant: Option<bool>,
    pub log10_alpha: f64,
    pub note: String,
}

fn untestable(term: String, df: usize, note: String) -> ImportanceRow {
    ImportanceRow {
        term,
        status: ImportanceStatus::Untestable,
        df,
        statistic: None,
        log10_p: None,
        significant: None,
        log10_alpha: LOG10_ALPHA,
        note,
    }
}

/// One likelihood-ratio test per term of `spec`, each restricted model
/// dropping every encoded column of that term. Rows are sorted by ascending
/// `log10_p`, then term name; untestable terms come last.
pub fn importance_ranking(table: &FeatureTable, spec: &ModelSpec, full: &FittedGlm, opts: &FitOptions) -> Result<Vec<ImportanceRow>> {
    if !full.converged {
        return Err(Error::invalid("importance ranking needs a converged full model"));
    }
    let mut rows: Vec<ImportanceRow> = spec
        .terms
        .par_iter()
        .map(|term| {
            let name = term.to_string();
            let restricted = match fit_glm(table, &spec.without_term(term), None, opts) {
                Ok((m, _)) => m,
                Err(e) => return untestable(name, 0, format!("refit failed: {e}")),
            };
            if restricted.n_obs != full.n_obs {
                return untestable(name, 0, "restricted fit used different rows".into());
            }
            match likelihood_ratio_test(full, &restricted) {
                Ok(lrt) if lrt.df == 0 => untestable(name, 0, "term adds no estimable column (rank deficient)".into()),
                Ok(lrt) => ImportanceRow {
                    term: name,
                    status: ImportanceStatus::Tested,
                    df: lrt.df,
                    statistic: Some(lrt.statistic),
                    log10_p: Some(lrt.log10_p),
                    significant: Some(lrt.log10_p < LOG10_ALPHA),
                    log10_alpha: LOG10_ALPHA,
                    note: if restricted.converged { String::new() } else { "restricted fit not converged".into() },
                },
                Err(e) => untestable(name, 0, e.to_string()),
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.log10_p, b.log10_p) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.term.cmp(&b.term)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.term.cmp(&b.term),
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n_rows: usize,
    pub exposure: f64,
    pub observed_mean: f64,
    pub predicted_mean: f64,
}

fn quantile_labels(values: &[f64], n_bins: usize) -> Vec<String> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let edges: Vec<f64> = (1..n_bins).map(|k| sorted[(k * n / n_bins).min(n - 1)]).collect();
    values
        .iter()
        .map(|v| format!("q{:02}", 1 + edges.iter().filter(|e| v >= *e).count()))
        .collect()
}

/// Exposure-weighted observed and predicted means per group.
///
/// Categorical columns group by level; numeric columns are cut into `n_bins`
/// quantile bins labelled `q01`, `q02`, ... Several variables form composite
/// groups joined by `|`. Bins left empty by ties are omitted.
pub fn grouped_observed_vs_predicted(table: &FeatureTable, predictions: &[f64], group_vars: &[&str], n_bins: usize) -> Result<Vec<GroupRow>> {
    if predictions.len() != table.n_rows() {
        return Err(Error::invalid("prediction count does not match the table"));
    }
    if group_vars.is_empty() || n_bins == 0 {
        return Err(Error::invalid("grouping needs at least one variable and one bin"));
    }
    let mut labels = vec![String::new(); table.n_rows()];
    for (g, var) in group_vars.iter().enumerate() {
        let col = table
            .column(var)
            .ok_or_else(|| Error::Config(format!("group variable `{var}` not in the table")))?;
        let part: Vec<String> = match &col.data {
            ColumnData::Numeric(v) => quantile_labels(v, n_bins),
            ColumnData::Categorical { levels, codes } => codes.iter().map(|&c| levels[c as usize].clone()).collect(),
        };
        for (l, p) in labels.iter_mut().zip(part) {
            if g > 0 {
                l.push('|');
            }
            l.push_str(&p);
        }
    }
    let mut acc: BTreeMap<&str, (usize, f64, f64, f64)> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        let e = table.exposure[i];
        let a = acc.entry(l.as_str()).or_default();
        a.0 += 1;
        a.1 += e;
        a.2 += e * table.target[i];
        a.3 += e * predictions[i];
    }
    if n_bins > 1 && group_vars.len() == 1 && acc.len() < n_bins && table.column(group_vars[0]).is_some_and(|c| matches!(c.data, ColumnData::Numeric(_))) {
        log::warn!("{} of {n_bins} bins of `{}` are empty and omitted", n_bins - acc.len(), group_vars[0]);
    }
    Ok(acc
        .into_iter()
        .map(|(g, (n, e, o, p))| GroupRow {
            group: g.to_string(),
            n_rows: n,
            exposure: e,
            observed_mean: o / e,
            predicted_mean: p / e,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualMapRow {
    pub municipality_code: String,
    pub median_pearson_residual: f64,
    pub n_rows: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median Pearson residual per municipality, sorted by municipality code.
pub fn residual_map(table: &FeatureTable, predictions: &[f64], family: Family) -> Result<Vec<ResidualMapRow>> {
    let r = pearson_residuals(family, &table.target, predictions)?;
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (k, v) in table.keys.iter().zip(r) {
        groups.entry(k.municipality_code.as_str()).or_default().push(v);
    }
    Ok(groups
        .into_iter()
        .map(|(m, mut v)| ResidualMapRow {
            municipality_code: m.to_string(),
            n_rows: v.len(),
            median_pearson_residual: median(&mut v),
        })
        .collect())
}

/// Mean building location `(lat, lon)` per municipality.
pub fn municipality_centroids(buildings: &[Building]) -> BTreeMap<String, (f64, f64)> {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for b in buildings {
        let a = acc.entry(b.municipality_code.as_str()).or_default();
        a.0 += b.lat;
        a.1 += b.lon;
        a.2 += 1;
    }
    acc.into_iter()
        .map(|(m, (lat, lon, n))| (m.to_string(), (lat / n as f64, lon / n as f64)))
        .collect()
}

/// Point-geometry GeoJSON of a residual map; municipalities without a centroid are skipped.
pub fn residual_geojson(rows: &[ResidualMapRow], centroids: &BTreeMap<String, (f64, f64)>) -> serde_json::Value {
    let features: Vec<serde_json::Value> = rows
        .iter()
        .filter_map(|r| {
            let Some(&(lat, lon)) = centroids.get(&r.municipality_code) else {
                log::warn!("no centroid for municipality {}", r.municipality_code);
                return None;
            };
            Some(serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {
                    "municipality_code": r.municipality_code,
                    "median_pearson_residual": r.median_pearson_residual,
                    "n_rows": r.n_rows,
                }
            }))
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features})
}

/// Expected annual loss `p * s` per row.
pub fn pure_premium(occurrence: &[f64], severity: &[f64]) -> Result<Vec<f64>> {
    if occurrence.len() != severity.len() {
        return Err(Error::invalid("occurrence and severity predictions differ in length"));
    }
    occurrence
        .iter()
        .zip(severity)
        .map(|(&p, &s)| {
            if !(0.0..=1.0).contains(&p) || !(s > 0.0) {
                return Err(Error::invalid(format!("invalid prediction pair ({p}, {s})")));
            }
            Ok(p * s)
        })
        .collect()
}

impl FittedGlm {
    /// Pure premium of the rows of `table` from an occurrence and a severity model;
    /// `table` must carry the columns of both.
    pub fn pure_premium_with(&self, severity: &FittedGlm, table: &FeatureTable) -> Result<Vec<f64>> {
        if self.family != Family::BernoulliLogit || severity.family != Family::GammaLog {
            return Err(Error::invalid("pure premium needs an occurrence and a severity model"));
        }
        pure_premium(&self.predict(table)?, &severity.predict(table)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [-1.0, 0.0, 4.0]), 0.0);
        assert_eq!(median(&mut [3.0, 1.0]), 2.0);
    }

    #[test]
    fn quantile_bins_cover_values() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let l = quantile_labels(&v, 10);
        assert_eq!(l[0], "q01");
        assert_eq!(l[99], "q10");
        assert_eq!(l.iter().filter(|s| *s == "q05").count(), 10);
    }

    #[test]
    fn pure_premium_checks_inputs() {
        assert_eq!(pure_premium(&[0.5], &[100.0]).unwrap(), vec![50.0]);
        assert!(pure_premium(&[1.5], &[100.0]).is_err());
    }
}
