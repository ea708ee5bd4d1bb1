//! Weighted generalized linear models fitted by IRLS.

mod design;
mod family;
mod irls;
pub mod linalg;
mod lrt;

pub use design::{build_design, encode_for_scoring, ColumnEncoder, DesignMatrix, Encoding, ModelSpec, Term, WeightScheme, INTERCEPT};
pub use family::{deviance, Family, PROB_CLIP};
pub use irls::{fit_irls, log_likelihood, score, Coefficient, FitOptions, FittedGlm, IrlsFit};
pub use lrt::{chi2_log10_sf, likelihood_ratio_test, ln_gamma_q, LrtResult};

use crate::data_model::FeatureTable;
use crate::error::{Error, Result};

/// Balanced class weights `(w0, w1)` with `w_c = n / (2 n_c)`.
pub fn class_weights(y: &[f64]) -> Result<(f64, f64)> {
    let n1 = y.iter().filter(|v| **v == 1.0).count();
    let n0 = y.iter().filter(|v| **v == 0.0).count();
    if n0 + n1 != y.len() {
        return Err(Error::invalid("class weights need a 0/1 target"));
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::InsufficientData("class weights need both classes present".into()));
    }
    let n = y.len() as f64;
    Ok((n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)))
}

/// Prior weights for `spec` over the rows flagged by `mask` (other rows get 0).
/// Class weights are computed on the masked rows only.
pub fn prior_weights(spec: &ModelSpec, y: &[f64], exposure: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let inside = |i: usize| mask.is_none_or(|m| m[i]);
    let class = match spec.weight_scheme {
        WeightScheme::None => None,
        WeightScheme::ClassBalanced => {
            let sub: Vec<f64> = (0..y.len()).filter(|&i| inside(i)).map(|i| y[i]).collect();
            Some(class_weights(&sub)?)
        }
    };
    Ok((0..y.len())
        .map(|i| {
            if !inside(i) {
                return 0.0;
            }
            let cw = class.map_or(1.0, |(w0, w1)| if y[i] == 1.0 { w1 } else { w0 });
            let ew = if spec.exposure_weights { exposure[i] } else { 1.0 };
            cw * ew
        })
        .collect())
}

/// Builds the design and fits `spec` on `table` (restricted to `mask` rows when given).
pub fn fit_glm(table: &FeatureTable, spec: &ModelSpec, mask: Option<&[bool]>, opts: &FitOptions) -> Result<(FittedGlm, DesignMatrix)> {
    let w = prior_weights(spec, &table.target, &table.exposure, mask)?;
    let design = build_design(table, spec, Some(&w))?;
    let cols: Vec<usize> = (0..design.n_cols()).collect();
    let fit = fit_irls(&design, &cols, &table.target, &w, spec.family, opts)?;
    Ok((FittedGlm::from_irls(&design, spec, &fit), design))
}
