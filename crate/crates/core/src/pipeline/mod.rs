//! Layered cross-validated evaluation of occurrence and severity models.

mod analysis;
mod bundle;

pub use analysis::{
    grouped_observed_vs_predicted, importance_ranking, municipality_centroids, pure_premium, residual_geojson,
    residual_map, GroupRow, ImportanceRow, ImportanceStatus, ResidualMapRow, LOG10_ALPHA,
};
pub use bundle::{building_tail_clusters, BuildingCluster, FeatureBundle, FeatureOptions};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{FeatureTable, Layer, Task};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family, FitOptions, FittedGlm, ModelSpec, Term, WeightScheme};
use crate::metrics::{MetricReport, RelativeDeltas};

pub const DEFAULT_FOLDS: usize = 5;
pub const BASELINE_MODEL: &str = "GLM ins";
pub const DUMMY_MODEL: &str = "Dummy";

/// Fold index (`0..k`) per row.
///
/// With `stratify`, rows with target 1 and the remaining rows are shuffled
/// separately and dealt round-robin, positives first, so each fold gets
/// `floor` or `ceil` of both class counts and of the total.
pub fn stratified_folds(y: &[f64], k: usize, seed: u64, stratify: bool) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if y.len() < k {
        return Err(Error::InsufficientData(format!("{} rows cannot fill {k} folds", y.len())));
    }
    let classes: Vec<Vec<usize>> = if stratify {
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1.0).collect();
        if pos.len() < k {
            return Err(Error::InsufficientData(format!("{} positives cannot cover {k} folds", pos.len())));
        }
        let neg = (0..y.len()).filter(|&i| y[i] != 1.0).collect();
        vec![pos, neg]
    } else {
        vec![(0..y.len()).collect()]
    };
    let mut folds = vec![0; y.len()];
    let mut next = 0;
    for (stream, mut rows) in classes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        rows.shuffle(&mut rng);
        for i in rows {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Interaction terms of the default layer models.
pub fn default_interactions(task: Task) -> [(&'static str, &'static str); 3] {
    match task {
        Task::Occurrence => [("ann_milre", "nb_catnat"), ("wctrii", "ann_milre"), ("amenity_elmt", "ann_milre")],
        Task::Severity => [("mov_assets", "milre"), ("milre", "nb_catnat"), ("wctrii", "milre")],
    }
}

/// Main effects of every column in `layer`, followed by the default
/// interactions whose two columns both belong to it.
pub fn default_terms(task: Task, layer: Layer) -> Vec<Term> {
    use crate::data_model::{rainfall_columns, LayerTag, BUILDING_COLUMNS, CLIMATE_COLUMNS, INS_COLUMNS};
    let mut cols: Vec<&str> = Vec::new();
    for tag in layer.tags() {
        match tag {
            LayerTag::Ins => cols.extend(INS_COLUMNS),
            LayerTag::Climate => cols.extend(CLIMATE_COLUMNS),
            LayerTag::Rainfall => cols.extend(rainfall_columns(task)),
            LayerTag::Building => cols.extend(BUILDING_COLUMNS),
        }
    }
    let mut terms: Vec<Term> = cols.iter().map(|c| Term::main(c)).collect();
    for (a, b) in default_interactions(task) {
        if cols.contains(&a) && cols.contains(&b) {
            terms.push(Term::interaction(a, b));
        }
    }
    terms
}

/// Family and weighting per task: class-balanced, exposure-weighted logistic
/// for occurrence; unweighted gamma for severity.
pub fn default_spec(task: Task, terms: Vec<Term>) -> ModelSpec {
    match task {
        Task::Occurrence => ModelSpec {
            weight_scheme: WeightScheme::ClassBalanced,
            exposure_weights: true,
            ..ModelSpec::new(Family::BernoulliLogit, terms)
        },
        Task::Severity => ModelSpec::new(Family::GammaLog, terms),
    }
}

pub fn family_of(task: Task) -> Family {
    match task {
        Task::Occurrence => Family::BernoulliLogit,
        Task::Severity => Family::GammaLog,
    }
}

pub fn model_name(layer: Layer) -> String {
    format!("GLM {layer}")
}

/// Cross-validated run of one model.
#[derive(Debug, Clone)]
pub struct LayerRun {
    pub name: String,
    /// `None` for the dummy benchmark.
    pub layer: Option<Layer>,
    pub task: Task,
    pub spec: Option<ModelSpec>,
    pub fold_models: Vec<FittedGlm>,
    pub oof_predictions: Vec<f64>,
    /// Metrics on the pooled out-of-fold predictions.
    pub report: MetricReport,
    pub fold_reports: Vec<MetricReport>,
    /// Refit on every row; source of the training deviance.
    pub full_model: Option<FittedGlm>,
    pub train_deviance: f64,
    pub converged: bool,
}

fn n_folds(folds: &[usize]) -> Result<usize> {
    let k = folds.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::invalid("fold assignment has fewer than 2 folds"));
    }
    Ok(k)
}

fn fold_rows(folds: &[usize], f: usize) -> Vec<usize> {
    (0..folds.len()).filter(|&i| folds[i] == f).collect()
}

fn take(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| v[i]).collect()
}

/// Fits one model per fold on the other folds, predicts the held-out rows and
/// refits on all rows. Non-convergence is flagged, not fatal.
pub fn run_layer(table: &FeatureTable, spec: &ModelSpec, name: &str, layer: Option<Layer>, folds: &[usize], opts: &FitOptions) -> Result<LayerRun> {
    if folds.len() != table.n_rows() {
        return Err(Error::invalid("fold assignment does not match the table"));
    }
    let k = n_folds(folds)?;
    let per_fold: Vec<(FittedGlm, Vec<usize>, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let mask: Vec<bool> = folds.iter().map(|&g| g != f).collect();
            let (model, design) = fit_glm(table, spec, Some(&mask), opts)
                .map_err(|e| Error::InsufficientData(format!("{name}, fold {}: {e}", f + 1)))?;
            let all = model.predict_design(&design)?;
            let rows = fold_rows(folds, f);
            let pred = take(&all, &rows);
            Ok((model, rows, pred))
        })
        .collect::<Result<_>>()?;
    let (full_model, _) = fit_glm(table, spec, None, opts)?;
    if !full_model.pruned_columns.is_empty() {
        log::warn!("{name}: dropped constant or collinear columns {}", full_model.pruned_columns.join(", "));
    }

    let mut oof = vec![f64::NAN; table.n_rows()];
    let mut fold_models = Vec::with_capacity(k);
    let mut fold_reports = Vec::with_capacity(k);
    for (f, (model, rows, pred)) in per_fold.into_iter().enumerate() {
        for (&i, &p) in rows.iter().zip(&pred) {
            oof[i] = p;
        }
        let y = take(&table.target, &rows);
        fold_reports.push(MetricReport::compute(name, &(f + 1).to_string(), spec.family, &y, &pred, model.n_params)?);
        fold_models.push(model);
    }
    debug_assert!(oof.iter().all(|p| p.is_finite()));
    let converged = full_model.converged && fold_models.iter().all(|m| m.converged);
    if !converged {
        log::warn!("{name}: at least one fit did not converge");
    }
    let report = MetricReport::compute(name, "pooled", spec.family, &table.target, &oof, full_model.n_params)?;
    Ok(LayerRun {
        name: name.to_string(),
        layer,
        task: table.task,
        spec: Some(spec.clone()),
        fold_models,
        oof_predictions: oof,
        report,
        fold_reports,
        train_deviance: full_model.deviance,
        full_model: Some(full_model),
        converged,
    })
}

/// Severity benchmark predicting the mean claim amount of the table for every
/// row; constant predictions give a Gini of exactly 0.
pub fn run_dummy(table: &FeatureTable, folds: &[usize]) -> Result<LayerRun> {
    let k = n_folds(folds)?;
    let family = family_of(table.task);
    let mut sorted = table.target.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let pred = vec![mean; table.n_rows()];
    let fold_reports = (0..k)
        .map(|f| {
            let rows = fold_rows(folds, f);
            MetricReport::compute(DUMMY_MODEL, &(f + 1).to_string(), family, &take(&table.target, &rows), &take(&pred, &rows), 1)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricReport::compute(DUMMY_MODEL, "pooled", family, &table.target, &pred, 1)?;
    Ok(LayerRun {
        name: DUMMY_MODEL.to_string(),
        layer: None,
        task: table.task,
        spec: None,
        fold_models: Vec::new(),
        train_deviance: report.deviance,
        oof_predictions: pred,
        report,
        fold_reports,
        full_model: None,
        converged: true,
    })
}

/// One row of the comparison table (`metrics.csv`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub n_params: usize,
    pub rmse: f64,
    pub gini: f64,
    pub deviance: f64,
    pub logloss: Option<f64>,
    pub csi_max: Option<f64>,
    pub csi_threshold: Option<f64>,
    pub recall_at_csi: Option<f64>,
    pub precision_at_csi: Option<f64>,
    pub rmse_delta_pct: Option<f64>,
    pub gini_delta_pct: Option<f64>,
    pub deviance_delta_pct: Option<f64>,
    pub logloss_delta_pct: Option<f64>,
    pub csi_delta_pct: Option<f64>,
    pub recall_delta_pct: Option<f64>,
    pub precision_delta_pct: Option<f64>,
}

/// Per-model training summary (`layer_report.csv`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReportRow {
    pub model: String,
    pub task: Task,
    pub n_rows: usize,
    pub n_params: usize,
    pub train_deviance: f64,
    pub converged: bool,
    pub pruned_columns: usize,
}

/// Runs of several layers on shared folds.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub task: Task,
    pub folds: Vec<usize>,
    pub runs: Vec<LayerRun>,
}

impl Evaluation {
    /// Evaluates `layers` in order on `table`, which must hold every column
    /// they use. Severity runs start with the dummy benchmark.
    pub fn run(table: &FeatureTable, layers: &[Layer], k: usize, seed: u64, opts: &FitOptions) -> Result<Self> {
        let task = table.task;
        let specs: Vec<(Layer, ModelSpec)> = layers.iter().map(|&l| (l, default_spec(task, default_terms(task, l)))).collect();
        Self::run_specs(table, &specs, k, seed, opts)
    }

    /// Same as [`Evaluation::run`] with explicit model specifications.
    pub fn run_specs(table: &FeatureTable, specs: &[(Layer, ModelSpec)], k: usize, seed: u64, opts: &FitOptions) -> Result<Self> {
        let task = table.task;
        let folds = stratified_folds(&table.target, k, seed, task == Task::Occurrence)?;
        let mut runs = Vec::new();
        if task == Task::Severity {
            runs.push(run_dummy(table, &folds)?);
        }
        for (layer, spec) in specs {
            runs.push(run_layer(table, spec, &model_name(*layer), Some(*layer), &folds, opts)?);
        }
        Ok(Evaluation { task, folds, runs })
    }

    pub fn run_named(&self, name: &str) -> Option<&LayerRun> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn converged(&self) -> bool {
        self.runs.iter().all(|r| r.converged)
    }

    /// Pooled metrics with percent changes against the `GLM ins` run when present.
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let base = self.run_named(BASELINE_MODEL).map(|r| &r.report);
        self.runs
            .iter()
            .map(|r| {
                let m = &r.report;
                let d = base.map(|b| RelativeDeltas::between(m, b));
                MetricRow {
                    model: r.name.clone(),
                    n_params: m.n_params,
                    rmse: m.rmse,
                    gini: m.gini,
                    deviance: m.deviance,
                    logloss: m.logloss,
                    csi_max: m.csi_max,
                    csi_threshold: m.csi_threshold,
                    recall_at_csi: m.recall_at_csi,
                    precision_at_csi: m.precision_at_csi,
                    rmse_delta_pct: d.as_ref().and_then(|d| d.rmse_pct),
                    gini_delta_pct: d.as_ref().and_then(|d| d.gini_pct),
                    deviance_delta_pct: d.as_ref().and_then(|d| d.deviance_pct),
                    logloss_delta_pct: d.as_ref().and_then(|d| d.logloss_pct),
                    csi_delta_pct: d.as_ref().and_then(|d| d.csi_pct),
                    recall_delta_pct: d.as_ref().and_then(|d| d.recall_pct),
                    precision_delta_pct: d.as_ref().and_then(|d| d.precision_pct),
                }
            })
            .collect()
    }

    /// Per-fold reports followed by the fold-mean row of each model.
    pub fn fold_rows(&self) -> Vec<MetricReport> {
        let mut out = Vec::new();
        for r in &self.runs {
            out.extend(r.fold_reports.iter().cloned());
            out.extend(MetricReport::mean(&r.name, "mean", &r.fold_reports));
        }
        out
    }

    pub fn layer_report(&self) -> Vec<LayerReportRow> {
        self.runs
            .iter()
            .map(|r| LayerReportRow {
                model: r.name.clone(),
                task: r.task,
                n_rows: r.oof_predictions.len(),
                n_params: r.report.n_params,
                train_deviance: r.train_deviance,
                converged: r.converged,
                pruned_columns: r.full_model.as_ref().map_or(0, |m| m.pruned_columns.len()),
            })
            .collect()
    }
}
