//! JSON run configuration and command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use floodrisk_core::data_model::{IndicatorEncoding, PortfolioPaths, DEFAULT_CLAIM_FLOOR};
use floodrisk_core::pipeline::{default_spec, default_terms, DEFAULT_FOLDS};
use floodrisk_core::{FeatureOptions, FitOptions, Layer, ModelSpec, ScenarioConfig, Task, Term};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Input files; unset entries default to the standard names under `data_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub rain_grid: Option<PathBuf>,
    pub policies: Option<PathBuf>,
    pub claims: Option<PathBuf>,
    pub buildings: Option<PathBuf>,
    pub hazard: Option<PathBuf>,
    /// Directory with `watercourses.csv` and the raster tiles.
    pub geo_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory; drives the scenario generator and the fold assignment.
    pub seed: Option<u64>,
    pub data_dir: PathBuf,
    pub inputs: InputPaths,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/features`.
    pub features_dir: Option<PathBuf>,
    pub scenario_profile: String,
    /// Full scenario definition; replaces the profile when set. Its seed is
    /// overwritten by the run seed.
    pub scenario: Option<ScenarioConfig>,
    pub features: FeatureOptions,
    pub geo_features: bool,
    pub indicator_encoding: IndicatorEncoding,
    pub claim_floor: f64,
    pub folds: usize,
    pub fit: FitOptions,
    /// Term lists per task and layer; missing entries use the built-in models.
    pub models: BTreeMap<Task, BTreeMap<Layer, Vec<Term>>>,
    /// Column sets for the grouped observed-vs-predicted table.
    pub group_vars: Vec<Vec<String>>,
    pub group_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            data_dir: PathBuf::from("data"),
            inputs: InputPaths::default(),
            output_dir: PathBuf::from("out"),
            features_dir: None,
            scenario_profile: "ci".into(),
            scenario: None,
            features: FeatureOptions::default(),
            geo_features: true,
            indicator_encoding: IndicatorEncoding::Continuous,
            claim_floor: DEFAULT_CLAIM_FLOOR,
            folds: DEFAULT_FOLDS,
            fit: FitOptions::default(),
            models: BTreeMap::new(),
            group_vars: vec![vec!["wctrii".into()], vec!["tail_cluster".into()], vec!["clim_region".into()]],
            group_bins: 10,
        }
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub features_dir: Option<PathBuf>,
    pub folds: Option<usize>,
    pub profile: Option<String>,
    pub no_geo: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let o = overrides.clone();
        cfg.seed = o.seed.or(cfg.seed);
        cfg.data_dir = o.data_dir.unwrap_or(cfg.data_dir);
        cfg.output_dir = o.output_dir.unwrap_or(cfg.output_dir);
        cfg.features_dir = o.features_dir.or(cfg.features_dir);
        cfg.folds = o.folds.unwrap_or(cfg.folds);
        cfg.scenario_profile = o.profile.unwrap_or(cfg.scenario_profile);
        cfg.geo_features &= !o.no_geo;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::Usage("missing required field `seed` (set it in the config or pass --seed)".into()));
        }
        if self.folds < 2 {
            return Err(CliError::Usage(format!("`folds` must be at least 2, got {}", self.folds)));
        }
        if self.features.windows.is_empty() || self.features.windows.contains(&0) {
            return Err(CliError::Usage("`features.windows` must list positive window lengths".into()));
        }
        if self.group_bins < 2 {
            return Err(CliError::Usage("`group_bins` must be at least 2".into()));
        }
        self.features.geo.wctrii.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.features_dir.clone().unwrap_or_else(|| self.output_dir.join("features"))
    }

    pub fn rain_grid_path(&self) -> PathBuf {
        self.inputs.rain_grid.clone().unwrap_or_else(|| self.data_dir.join("rain_grid.csv"))
    }

    pub fn portfolio_paths(&self) -> PortfolioPaths {
        let d = PortfolioPaths::in_dir(&self.data_dir);
        let i = &self.inputs;
        PortfolioPaths {
            policies: i.policies.clone().unwrap_or(d.policies),
            claims: i.claims.clone().unwrap_or(d.claims),
            buildings: i.buildings.clone().unwrap_or(d.buildings),
            hazard: i.hazard.clone().unwrap_or(d.hazard),
        }
    }

    pub fn geo_dir(&self) -> PathBuf {
        self.inputs.geo_dir.clone().unwrap_or_else(|| self.data_dir.clone())
    }

    /// Paths every ingesting command needs.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let p = self.portfolio_paths();
        for path in [self.rain_grid_path(), p.policies, p.claims, p.buildings] {
            if !path.is_file() {
                return Err(CliError::Usage(format!("input file not found: {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig, CliError> {
        let mut sc = match &self.scenario {
            Some(s) => s.clone(),
            None => ScenarioConfig::profile(&self.scenario_profile, self.seed())?,
        };
        sc.seed = self.seed();
        Ok(sc)
    }

    pub fn spec(&self, task: Task, layer: Layer) -> ModelSpec {
        let terms = self
            .models
            .get(&task)
            .and_then(|m| m.get(&layer))
            .cloned()
            .unwrap_or_else(|| default_terms(task, layer));
        default_spec(task, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_names_the_field() {
        let err = RunConfig::load(None, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("`seed`"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "folds": 4, "output_dir": "a"}"#).unwrap();
        let o = Overrides {
            folds: Some(6),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&path), &o).unwrap();
        assert_eq!((cfg.seed, cfg.folds, cfg.output_dir.as_path()), (Some(3), 6, Path::new("a")));
        assert_eq!(cfg.features_dir(), Path::new("a").join("features"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "fold": 4}"#).unwrap();
        assert_eq!(RunConfig::load(Some(&path), &Overrides::default()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn custom_terms_replace_defaults() {
        let mut cfg = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        cfg.models
            .entry(Task::Severity)
            .or_default()
            .insert(Layer::Ins, vec![Term::main("mov_assets")]);
        assert_eq!(cfg.spec(Task::Severity, Layer::Ins).terms, vec![Term::main("mov_assets")]);
        assert_eq!(cfg.spec(Task::Occurrence, Layer::Ins).terms, default_terms(Task::Occurrence, Layer::Ins));
    }
}
