use floodrisk_core::data_model::{ingest_portfolio, ingest_rain_grid, PortfolioPaths, DEFAULT_CLAIM_FLOOR};
use floodrisk_core::geo::GeoLayers;
use floodrisk_core::synthetic::{generate, oracle_truth, read_scenario_config};
use floodrisk_core::{FeatureBundle, FeatureOptions, Scenario, ScenarioConfig};
use std::path::Path;

fn small(seed: u64) -> Scenario {
    generate(&ScenarioConfig::profile("small", seed).unwrap()).unwrap()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    small(7).write(a.path()).unwrap();
    small(7).write(b.path()).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert!(ta.len() > 10);
    assert_eq!(ta, tb);
}

#[test]
fn different_seeds_differ() {
    assert_ne!(small(1).portfolio.claims, small(2).portfolio.claims);
}

#[test]
fn written_scenario_reads_back() {
    let s = small(3);
    let dir = tempfile::tempdir().unwrap();
    s.write(dir.path()).unwrap();

    let grid = ingest_rain_grid(&dir.path().join("rain_grid.csv")).unwrap();
    assert_eq!(grid, s.grid);
    let portfolio = ingest_portfolio(&PortfolioPaths::in_dir(dir.path()), DEFAULT_CLAIM_FLOOR).unwrap();
    assert_eq!(portfolio, s.portfolio);

    let (cfg, cal) = read_scenario_config(dir.path()).unwrap();
    assert_eq!(cfg, s.config);
    assert_eq!(cal.n_claims, s.portfolio.claims.len());

    let truth = oracle_truth(&s.config, dir.path()).unwrap();
    assert_eq!(truth.geo, s.truth.geo);
    assert_eq!(truth.ann_milre, s.truth.ann_milre);
    assert_eq!(truth.milre, s.truth.milre);

    let mut other = s.config.clone();
    other.seed += 1;
    assert!(oracle_truth(&other, dir.path()).is_err());
}

#[test]
fn calibration_hits_the_target_rate() {
    let s = small(4);
    let cal = &s.truth.calibration;
    let target = s.config.target_rate * cal.n_policy_years as f64;
    assert!((cal.n_claims as f64 - target).abs() <= 1.0, "{} claims for target {target}", cal.n_claims);
}

#[test]
fn features_match_generator_truth() {
    let s = small(5);
    let dir = tempfile::tempdir().unwrap();
    s.write(dir.path()).unwrap();
    let layers = GeoLayers::load(dir.path()).unwrap();
    let f = FeatureBundle::compute(&s.portfolio, &s.grid, Some(&layers), &FeatureOptions::default()).unwrap();

    for t in &s.truth.ann_milre {
        let v = f.indicators.annual_value(&t.building_id, t.year).unwrap();
        assert_eq!(v, t.ann_milre, "{} {}", t.building_id, t.year);
    }
    for t in &s.truth.milre {
        let v = f.indicators.event_value(&t.building_id, t.flood_date).unwrap();
        assert_eq!(v, t.milre, "{} {}", t.building_id, t.flood_date);
    }
    let geo = f.geo.as_ref().unwrap();
    assert_eq!(geo.len(), s.truth.geo.len());
    for t in &s.truth.geo {
        let g = &geo[&t.building_id];
        assert_eq!(g.wctrii, t.wctrii);
        assert_eq!(g.nb_building_50m, t.nb_building_50m);
        assert_eq!(g.soil_type, t.soil_type);
        assert!((g.distance_watercourse - t.distance_watercourse).abs() < 1e-9);
        assert!((g.altitude_diffwatercourse - t.altitude_diffwatercourse).abs() < 1e-9);
        assert!((g.terrain_maxslope_50m - t.terrain_maxslope_50m).abs() < 1e-9);
        assert!((g.impervious_surface - t.impervious_surface).abs() < 1e-12);
    }
}

#[test]
fn missing_watercourse_layer_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = GeoLayers::load(dir.path()).unwrap_err();
    assert!(err.is_config(), "{err}");
}
