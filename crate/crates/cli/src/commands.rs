//! Subcommand implementations. Each one reads its inputs from disk, writes
//! its artifacts and returns a key=value summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use floodrisk_core::data_model::io::write_records;
use floodrisk_core::data_model::{assemble_features, ingest_portfolio, ingest_rain_grid};
use floodrisk_core::geo::GeoLayers;
use floodrisk_core::pipeline::{
    grouped_observed_vs_predicted, importance_ranking, municipality_centroids, residual_geojson, residual_map, run_layer,
    stratified_folds, LayerRun,
};
use floodrisk_core::synthetic::generate;
use floodrisk_core::{Error, Evaluation, FeatureBundle, FeatureTable, Layer, Portfolio, RainGrid, Task};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.sha256";

/// Ordered key=value lines printed between markers on stdout.
#[derive(Debug, Default)]
pub struct Summary(Vec<(String, String)>);

impl Summary {
    fn new(command: &str) -> Self {
        let mut s = Summary::default();
        s.add("command", command);
        s
    }

    fn add(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn print(&self) {
        println!("=== summary ===");
        for (k, v) in &self.0 {
            println!("{k}={v}");
        }
        println!("=== end ===");
    }
}

fn layer_slug(layer: Layer) -> &'static str {
    match layer {
        Layer::Ins => "ins",
        Layer::InsC => "ins_c",
        Layer::InsR => "ins_r",
        Layer::All => "all",
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// SHA-256 of every file under `dir` keyed by relative path, skipping `skip`.
fn checksums(dir: &Path, skip: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    fn walk(root: &Path, dir: &Path, skip: &[&str], out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            if skip.contains(&rel.as_str()) {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, skip, out)?;
            } else {
                out.insert(rel, format!("{:x}", Sha256::digest(std::fs::read(&path)?)));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, skip, &mut out).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(out)
}

fn combined_digest(sums: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (path, sum) in sums {
        h.update(format!("{sum}  {path}\n"));
    }
    format!("{:x}", h.finalize())
}

fn load_inputs(cfg: &RunConfig) -> Result<(RainGrid, Portfolio), CliError> {
    cfg.check_inputs()?;
    let grid = ingest_rain_grid(&cfg.rain_grid_path())?;
    let portfolio = ingest_portfolio(&cfg.portfolio_paths(), cfg.claim_floor)?;
    Ok((grid, portfolio))
}

pub fn simulate(cfg: &RunConfig) -> Result<Summary, CliError> {
    let sc = cfg.scenario_config()?;
    log::info!("generating scenario: {} towns x {} buildings, {}-{}", sc.n_towns, sc.buildings_per_town, sc.start_year, sc.end_year);
    let scenario = generate(&sc)?;
    create_dir(&cfg.data_dir)?;
    scenario.write(&cfg.data_dir)?;
    let c = &scenario.truth.calibration;
    let mut s = Summary::new("simulate");
    s.add("data_dir", cfg.data_dir.display());
    s.add("seed", sc.seed);
    s.add("grid_points", scenario.grid.points().len());
    s.add("days", scenario.grid.n_days());
    s.add("buildings", scenario.portfolio.buildings.len());
    s.add("policy_years", c.n_policy_years);
    s.add("claims", c.n_claims);
    s.add("realized_rate", c.realized_rate);
    s.add("ann_milre_separation", c.separation);
    s.add("checksum", combined_digest(&checksums(&cfg.data_dir, &[])?));
    Ok(s)
}

pub fn ingest(cfg: &RunConfig) -> Result<Summary, CliError> {
    let (grid, portfolio) = load_inputs(cfg)?;
    let mut s = Summary::new("ingest");
    s.add("grid_points", grid.points().len());
    s.add("days", grid.n_days());
    s.add("buildings", portfolio.buildings.len());
    s.add("policy_years", portfolio.policies.len());
    s.add("claims", portfolio.claims.len());
    s.add("rejected_claims", portfolio.rejected_claims);
    s.add("positive_rate", portfolio.positive_rate());
    Ok(s)
}

pub fn features(cfg: &RunConfig) -> Result<Summary, CliError> {
    let (grid, portfolio) = load_inputs(cfg)?;
    let layers = if cfg.geo_features {
        Some(GeoLayers::load(&cfg.geo_dir())?)
    } else {
        None
    };
    let bundle = FeatureBundle::compute(&portfolio, &grid, layers.as_ref(), &cfg.features)?;
    let dir = cfg.features_dir();
    bundle.write(&dir)?;
    let mut s = Summary::new("features");
    s.add("features_dir", dir.display());
    s.add("annual_indicators", bundle.indicators.annual.len());
    s.add("event_indicators", bundle.indicators.event.len());
    s.add("tail_points", bundle.tail.len());
    s.add("geo_rows", bundle.geo.as_ref().map_or(0, |g| g.len()));
    s.add("checksum", combined_digest(&checksums(&dir, &[])?));
    Ok(s)
}

/// Inputs plus computed features, ready for table assembly.
struct Workspace {
    portfolio: Portfolio,
    bundle: FeatureBundle,
}

impl Workspace {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let (_, portfolio) = load_inputs(cfg)?;
        let dir = cfg.features_dir();
        if !dir.join("indicators.csv").is_file() {
            return Err(CliError::Usage(format!("no features in {}; run `features` first", dir.display())));
        }
        Ok(Workspace {
            portfolio,
            bundle: FeatureBundle::load(&dir)?,
        })
    }

    /// Table holding every column of the widest requested layer.
    fn table(&self, cfg: &RunConfig, task: Task, layers: &[Layer]) -> Result<FeatureTable, CliError> {
        let widest = *layers.iter().max().expect("at least one layer");
        Ok(assemble_features(&self.portfolio, &self.bundle.sources(cfg.indicator_encoding), task, widest)?)
    }
}

fn task_dir(cfg: &RunConfig, task: Task) -> PathBuf {
    cfg.output_dir.join(task.as_str())
}

fn write_evaluation(cfg: &RunConfig, ev: &Evaluation) -> Result<(), CliError> {
    let dir = task_dir(cfg, ev.task);
    create_dir(&dir)?;
    write_records(&dir.join("metrics.csv"), &ev.metric_rows())?;
    write_records(&dir.join("metrics_folds.csv"), &ev.fold_rows())?;
    write_records(&dir.join("layer_report.csv"), &ev.layer_report())?;
    for run in &ev.runs {
        if let (Some(layer), Some(model)) = (run.layer, &run.full_model) {
            let d = dir.join(layer_slug(layer));
            create_dir(&d)?;
            write_json(&d.join("model.json"), model)?;
        }
    }
    Ok(())
}

fn evaluate_task(cfg: &RunConfig, ws: &Workspace, task: Task, layers: &[Layer]) -> Result<(FeatureTable, Evaluation), CliError> {
    let table = ws.table(cfg, task, layers)?;
    let specs: Vec<_> = layers.iter().map(|&l| (l, cfg.spec(task, l))).collect();
    let ev = Evaluation::run_specs(&table, &specs, cfg.folds, cfg.seed(), &cfg.fit)?;
    write_evaluation(cfg, &ev)?;
    Ok((table, ev))
}

fn not_converged(ev: &Evaluation) -> Vec<String> {
    ev.runs.iter().filter(|r| !r.converged).map(|r| format!("{} ({})", r.name, ev.task)).collect()
}

fn add_metrics(s: &mut Summary, ev: &Evaluation) {
    for row in ev.metric_rows() {
        let key = format!("{}.{}", ev.task, row.model.replace(' ', "_"));
        s.add(&format!("{key}.gini"), row.gini);
        s.add(&format!("{key}.deviance"), row.deviance);
        if let Some(c) = row.csi_max {
            s.add(&format!("{key}.csi_max"), c);
        }
    }
}

fn strict_check(strict: bool, failed: Vec<String>) -> Result<(), CliError> {
    if failed.is_empty() {
        return Ok(());
    }
    log::warn!("fits did not converge: {}", failed.join(", "));
    if strict {
        return Err(CliError::NotConverged(failed));
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig, task: Task, layers: &[Layer], strict: bool) -> Result<Summary, CliError> {
    let ws = Workspace::load(cfg)?;
    let (_, ev) = evaluate_task(cfg, &ws, task, layers)?;
    let mut s = Summary::new("fit");
    s.add("task", task);
    s.add("layers", layers.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(","));
    s.add("output_dir", task_dir(cfg, task).display());
    s.add("converged", ev.converged());
    add_metrics(&mut s, &ev);
    strict_check(strict, not_converged(&ev))?;
    Ok(s)
}

pub fn evaluate(cfg: &RunConfig, task: Option<Task>, strict: bool) -> Result<Summary, CliError> {
    let ws = Workspace::load(cfg)?;
    let tasks = task.map_or(vec![Task::Occurrence, Task::Severity], |t| vec![t]);
    let mut s = Summary::new("evaluate");
    let mut failed = Vec::new();
    for t in tasks {
        let (_, ev) = evaluate_task(cfg, &ws, t, &Layer::ALL)?;
        add_metrics(&mut s, &ev);
        failed.extend(not_converged(&ev));
    }
    s.add("converged", failed.is_empty());
    strict_check(strict, failed)?;
    Ok(s)
}

fn write_importance(cfg: &RunConfig, table: &FeatureTable, run: &LayerRun, layer: Layer) -> Result<usize, CliError> {
    let full = run
        .full_model
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{} has no full model", run.name)))?;
    let rows = importance_ranking(table, &cfg.spec(table.task, layer), full, &cfg.fit)?;
    let dir = task_dir(cfg, table.task).join(layer_slug(layer));
    create_dir(&dir)?;
    write_records(&dir.join("importance.csv"), &rows)?;
    Ok(rows.iter().filter(|r| r.significant == Some(true)).count())
}

fn write_residuals(cfg: &RunConfig, ws: &Workspace, table: &FeatureTable, run: &LayerRun, layer: Layer) -> Result<usize, CliError> {
    let dir = task_dir(cfg, table.task).join(layer_slug(layer));
    create_dir(&dir)?;
    let preds = &run.oof_predictions;
    let map = residual_map(table, preds, floodrisk_core::pipeline::family_of(table.task))?;
    write_records(&dir.join("residual_map.csv"), &map)?;
    let geojson = residual_geojson(&map, &municipality_centroids(&ws.portfolio.buildings));
    write_json(&dir.join("residual_map.geojson"), &geojson)?;
    let mut grouped = Vec::new();
    for vars in &cfg.group_vars {
        if let Some(missing) = vars.iter().find(|v| table.column(v).is_none()) {
            log::info!("grouped table: skipping {} ({missing} not in layer {layer})", vars.join("|"));
            continue;
        }
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        grouped.extend(grouped_observed_vs_predicted(table, preds, &names, cfg.group_bins)?);
    }
    write_records(&dir.join("grouped.csv"), &grouped)?;
    Ok(map.len())
}

/// Single-layer cross-validated run on the standard folds.
fn single_run(cfg: &RunConfig, table: &FeatureTable, layer: Layer) -> Result<LayerRun, CliError> {
    let folds = stratified_folds(&table.target, cfg.folds, cfg.seed(), table.task == Task::Occurrence)?;
    let spec = cfg.spec(table.task, layer);
    Ok(run_layer(table, &spec, &floodrisk_core::pipeline::model_name(layer), Some(layer), &folds, &cfg.fit)?)
}

pub fn importance(cfg: &RunConfig, task: Task, layers: &[Layer]) -> Result<Summary, CliError> {
    let ws = Workspace::load(cfg)?;
    let table = ws.table(cfg, task, layers)?;
    let mut s = Summary::new("importance");
    s.add("task", task);
    for &layer in layers {
        let run = single_run(cfg, &table, layer)?;
        let n = write_importance(cfg, &table, &run, layer)?;
        s.add(&format!("{}.significant_terms", layer_slug(layer)), n);
    }
    Ok(s)
}

pub fn residuals(cfg: &RunConfig, task: Task, layers: &[Layer]) -> Result<Summary, CliError> {
    let ws = Workspace::load(cfg)?;
    let table = ws.table(cfg, task, layers)?;
    let mut s = Summary::new("residuals");
    s.add("task", task);
    for &layer in layers {
        let run = single_run(cfg, &table, layer)?;
        let n = write_residuals(cfg, &ws, &table, &run, layer)?;
        s.add(&format!("{}.municipalities", layer_slug(layer)), n);
    }
    Ok(s)
}

#[derive(Serialize)]
struct TaskReport {
    metrics: Vec<floodrisk_core::pipeline::MetricRow>,
    converged: bool,
}

#[derive(Serialize)]
struct Report {
    seed: u64,
    folds: usize,
    tasks: BTreeMap<Task, TaskReport>,
}

pub fn report(cfg: &RunConfig, strict: bool) -> Result<Summary, CliError> {
    let ws = Workspace::load(cfg)?;
    let mut s = Summary::new("report");
    let mut tasks = BTreeMap::new();
    let mut failed = Vec::new();
    for task in [Task::Occurrence, Task::Severity] {
        let (table, ev) = evaluate_task(cfg, &ws, task, &Layer::ALL)?;
        let widest = ev.runs.last().expect("four layer runs");
        write_importance(cfg, &table, widest, Layer::All)?;
        write_residuals(cfg, &ws, &table, widest, Layer::All)?;
        add_metrics(&mut s, &ev);
        failed.extend(not_converged(&ev));
        tasks.insert(
            task,
            TaskReport {
                metrics: ev.metric_rows(),
                converged: ev.converged(),
            },
        );
    }
    write_json(
        &cfg.output_dir.join("report.json"),
        &Report {
            seed: cfg.seed(),
            folds: cfg.folds,
            tasks,
        },
    )?;
    let sums = checksums(&cfg.output_dir, &[MANIFEST])?;
    let manifest: String = sums.iter().map(|(p, h)| format!("{h}  {p}\n")).collect();
    let path = cfg.output_dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    s.add("artifacts", sums.len());
    s.add("checksum", combined_digest(&sums));
    s.add("converged", failed.is_empty());
    strict_check(strict, failed)?;
    Ok(s)
}
