use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::design::{encode_for_scoring, DesignMatrix, Encoding, ModelSpec, Term, WeightScheme, COLLINEARITY_TOL};
use super::linalg::{independent_columns, inverse_spd, mat_vec, outer_sum, solve_spd, weighted_cross};
use super::Family;
use crate::data_model::FeatureTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative deviance change declaring convergence.
    pub tol: f64,
    /// Drop collinear columns with a warning instead of failing.
    pub prune_collinear: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            tol: 1e-8,
            prune_collinear: true,
        }
    }
}

/// Raw IRLS output over a column subset of a design.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    /// Design column indices actually fitted.
    pub cols: Vec<usize>,
    pub beta: Vec<f64>,
    /// Covariance of `beta` (row-major); sandwich form when prior weights are not all 0/1.
    pub cov: Vec<f64>,
    pub deviance: f64,
    pub dispersion: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub robust: bool,
    /// Requested columns dropped as collinear.
    pub dropped: Vec<usize>,
}

struct State {
    eta: Vec<f64>,
    mu: Vec<f64>,
    dev: f64,
}

fn evaluate(x: &DesignMatrix, cols: &[usize], beta: &[f64], y: &[f64], w: &[f64], family: Family) -> State {
    let eta = mat_vec(&x.data, x.n_cols(), cols, beta, x.n_rows);
    let mu: Vec<f64> = eta.iter().map(|&e| family.linkinv(e)).collect();
    let mut dev = 0.0;
    for i in 0..y.len() {
        if w[i] != 0.0 {
            dev += w[i] * family.unit_deviance(y[i], mu[i]);
        }
    }
    if !dev.is_finite() || mu.iter().any(|m| !m.is_finite() || *m <= 0.0) {
        dev = f64::INFINITY;
    }
    State { eta, mu, dev }
}

/// Fits a GLM by iteratively reweighted least squares on design columns `cols`.
///
/// Prior weights `w` multiply the working weights; rows with zero weight are
/// ignored. Deviance increases trigger step-halving. Gamma fits weight by the
/// observed rather than expected information.
pub fn fit_irls(x: &DesignMatrix, cols: &[usize], y: &[f64], w: &[f64], family: Family, opts: &FitOptions) -> Result<IrlsFit> {
    let n = x.n_rows;
    if y.len() != n || w.len() != n {
        return Err(Error::invalid("targets and weights must match the design rows"));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("prior weights must be finite and >= 0"));
    }
    let n_obs = w.iter().filter(|v| **v > 0.0).count();
    if n_obs == 0 {
        return Err(Error::InsufficientData("no rows with positive weight".into()));
    }
    let active: Vec<f64> = y.iter().zip(w).filter(|(_, w)| **w > 0.0).map(|(y, _)| *y).collect();
    family.validate_targets(&active)?;

    // Rank check on the weighted Gram of the requested columns.
    let (gram, _) = weighted_cross(&x.data, x.n_cols(), cols, w, &vec![0.0; n]);
    let keep_local = independent_columns(&gram, cols.len(), COLLINEARITY_TOL);
    let dropped: Vec<usize> = (0..cols.len()).filter(|j| !keep_local.contains(j)).map(|j| cols[j]).collect();
    if !dropped.is_empty() {
        let names: Vec<String> = dropped.iter().map(|&j| x.names[j].clone()).collect();
        if !opts.prune_collinear {
            return Err(Error::RankDeficient { columns: names });
        }
        log::debug!("dropping collinear columns for this fit: {}", names.join(", "));
    }
    let cols: Vec<usize> = keep_local.iter().map(|&j| cols[j]).collect();
    let p = cols.len();

    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let mut beta = vec![0.0; p];
    if let Some(k) = cols.iter().position(|&c| x.names[c] == super::design::INTERCEPT) {
        beta[k] = match family {
            Family::BernoulliLogit => family.link(ybar.clamp(1e-6, 1.0 - 1e-6)),
            Family::GammaLog => family.link(ybar),
        };
    }
    let mut st = evaluate(x, &cols, &beta, y, w, family);
    let mut converged = false;
    let mut iterations = 0;
    let mut polish = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut ww = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            match family {
                // Observed information: Newton steps instead of scoring.
                Family::GammaLog => {
                    ww[i] = w[i] * y[i] / st.mu[i];
                    z[i] = st.eta[i] + (y[i] - st.mu[i]) / y[i];
                }
                Family::BernoulliLogit => {
                    let d = family.mu_eta(st.mu[i]);
                    ww[i] = w[i] * d * d / family.variance(st.mu[i]);
                    z[i] = st.eta[i] + (y[i] - st.mu[i]) / d;
                }
            }
        }
        let (a, b) = weighted_cross(&x.data, x.n_cols(), &cols, &ww, &z);
        let mut cand = solve_spd(&a, &b, p).map_err(|j| Error::RankDeficient {
            columns: vec![x.names[cols[j]].clone()],
        })?;
        let mut next = evaluate(x, &cols, &cand, y, w, family);
        let mut halvings = 0;
        while next.dev > st.dev * (1.0 + 1e-12) && halvings < 30 {
            for (c, b0) in cand.iter_mut().zip(&beta) {
                *c = 0.5 * (*c + b0);
            }
            next = evaluate(x, &cols, &cand, y, w, family);
            halvings += 1;
        }
        if next.dev > st.dev * (1.0 + 1e-12) {
            // No descent direction left at working precision.
            break;
        }
        let rel = (st.dev - next.dev).abs() / (next.dev.abs() + 0.1);
        beta = cand;
        st = next;
        if converged {
            polish += 1;
            if polish >= 2 || rel == 0.0 {
                break;
            }
        } else if rel < opts.tol {
            converged = true;
        }
    }
    if !converged {
        log::warn!("IRLS did not converge in {} iterations", opts.max_iter);
    }

    // Information and covariance at the final estimate.
    let mut ww = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut pearson = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let d = family.mu_eta(st.mu[i]);
        let v = family.variance(st.mu[i]);
        ww[i] = w[i] * d * d / v;
        u[i] = w[i] * (y[i] - st.mu[i]) * d / v;
        pearson += w[i] * (y[i] - st.mu[i]).powi(2) / v;
    }
    let dispersion = match family {
        Family::BernoulliLogit => 1.0,
        Family::GammaLog => pearson / (n_obs as f64 - p as f64).max(1.0),
    };
    let (info, _) = weighted_cross(&x.data, x.n_cols(), &cols, &ww, &vec![0.0; n]);
    let bread = inverse_spd(&info, p).map_err(|j| Error::RankDeficient {
        columns: vec![x.names[cols[j]].clone()],
    })?;
    let robust = w.iter().any(|&v| v != 0.0 && v != 1.0);
    let cov = if robust {
        let meat = outer_sum(&x.data, x.n_cols(), &cols, &u);
        sandwich(&bread, &meat, p)
    } else {
        bread.iter().map(|v| v * dispersion).collect()
    };
    let log_likelihood = log_likelihood(family, y, &st.mu, w, dispersion);
    Ok(IrlsFit {
        cols,
        beta,
        cov,
        deviance: st.dev.max(0.0),
        dispersion,
        log_likelihood,
        n_obs,
        converged,
        iterations,
        robust,
        dropped,
    })
}

fn sandwich(bread: &[f64], meat: &[f64], p: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let b = bread[i * p + k];
            if b != 0.0 {
                for j in 0..p {
                    tmp[i * p + j] += b * meat[k * p + j];
                }
            }
        }
    }
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let t = tmp[i * p + k];
            for j in 0..p {
                out[i * p + j] += t * bread[k * p + j];
            }
        }
    }
    out
}

/// Weighted log-likelihood; `dispersion` is used by the gamma family only.
pub fn log_likelihood(family: Family, y: &[f64], mu: &[f64], w: &[f64], dispersion: f64) -> f64 {
    let mut ll = 0.0;
    match family {
        Family::BernoulliLogit => {
            for i in 0..y.len() {
                if w[i] != 0.0 {
                    ll += w[i] * (y[i] * mu[i].ln() + (1.0 - y[i]) * (1.0 - mu[i]).ln());
                }
            }
        }
        Family::GammaLog => {
            let nu = 1.0 / dispersion;
            let lg = ln_gamma(nu);
            for i in 0..y.len() {
                if w[i] != 0.0 {
                    let r = y[i] / mu[i];
                    ll += w[i] * (nu * (nu * r).ln() - nu * r - y[i].ln() - lg);
                }
            }
        }
    }
    ll
}

/// Gradient of the weighted log-likelihood in `beta` (unit dispersion).
pub fn score(x: &DesignMatrix, cols: &[usize], beta: &[f64], y: &[f64], w: &[f64], family: Family) -> Vec<f64> {
    let eta = mat_vec(&x.data, x.n_cols(), cols, beta, x.n_rows);
    let mut g = vec![0.0; cols.len()];
    for i in 0..x.n_rows {
        if w[i] == 0.0 {
            continue;
        }
        let mu = family.linkinv(eta[i]);
        let r = w[i] * (y[i] - mu) * family.mu_eta(mu) / family.variance(mu);
        let row = x.row(i);
        for (gj, &c) in g.iter_mut().zip(cols) {
            *gj += r * row[c];
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub beta: f64,
    pub std_error: f64,
}

/// A fitted model with everything needed to score new tables (`model.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGlm {
    pub family: Family,
    pub terms: Vec<Term>,
    pub weight_scheme: WeightScheme,
    pub exposure_weights: bool,
    pub encoding: Encoding,
    pub coefficients: Vec<Coefficient>,
    pub deviance: f64,
    pub log_likelihood: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub dispersion: f64,
    pub robust_se: bool,
    pub converged: bool,
    pub iterations: usize,
    pub pruned_columns: Vec<String>,
}

impl FittedGlm {
    pub fn from_irls(design: &DesignMatrix, spec: &ModelSpec, fit: &IrlsFit) -> Self {
        let p = fit.cols.len();
        let mut pruned = design.pruned.clone();
        pruned.extend(fit.dropped.iter().map(|&j| design.names[j].clone()));
        FittedGlm {
            family: spec.family,
            terms: spec.terms.clone(),
            weight_scheme: spec.weight_scheme,
            exposure_weights: spec.exposure_weights,
            encoding: design.encoding.clone(),
            coefficients: fit
                .cols
                .iter()
                .enumerate()
                .map(|(k, &c)| Coefficient {
                    name: design.names[c].clone(),
                    beta: fit.beta[k],
                    std_error: fit.cov[k * p + k].max(0.0).sqrt(),
                })
                .collect(),
            deviance: fit.deviance,
            log_likelihood: fit.log_likelihood,
            n_params: p,
            n_obs: fit.n_obs,
            dispersion: fit.dispersion,
            robust_se: fit.robust,
            converged: fit.converged,
            iterations: fit.iterations,
            pruned_columns: pruned,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.beta).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Fitted means on a design containing every model column.
    pub fn predict_design(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        let index = design.column_index();
        let cols: Vec<usize> = self
            .coefficients
            .iter()
            .map(|c| {
                index
                    .get(c.name.as_str())
                    .copied()
                    .ok_or_else(|| Error::Config(format!("design lacks model column `{}`", c.name)))
            })
            .collect::<Result<_>>()?;
        let eta = mat_vec(&design.data, design.n_cols(), &cols, &self.beta(), design.n_rows);
        Ok(eta.into_iter().map(|e| self.family.linkinv(e)).collect())
    }

    /// Fitted means for a feature table, re-encoded with the model's encoders.
    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let names: Vec<String> = self.coefficients.iter().map(|c| c.name.clone()).collect();
        let design = encode_for_scoring(table, &self.terms, &self.encoding, &names)?;
        self.predict_design(&design)
    }
}
