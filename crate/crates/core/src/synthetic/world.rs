//! Towns, rivers, rasters, buildings and hazard zoning.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{stream, Domain, ScenarioConfig};
use crate::data_model::{Building, HazardContext, PpriClass, TriClass};
use crate::geo::{AsciiGrid, Polyline};

const EARTH_RADIUS_M: f64 = 6_371_008.8;
const LAT0: f64 = 46.5;
const LON0: f64 = 2.0;
pub(super) const CELL_M: f64 = 25.0;
/// Tile half-width in cells (tiles are 2 km wide).
const HALF_CELLS: usize = 40;
const CORE_RADIUS_M: f64 = 150.0;
const OUTER_RADIUS_M: f64 = 650.0;

/// Equirectangular projection around the centre of the domain.
pub(super) fn project(lat: f64, lon: f64) -> (f64, f64) {
    let k = EARTH_RADIUS_M * PI / 180.0;
    (k * (lon - LON0) * LAT0.to_radians().cos(), k * (lat - LAT0))
}

pub(super) fn unproject(x: f64, y: f64) -> (f64, f64) {
    let k = EARTH_RADIUS_M * PI / 180.0;
    (LAT0 + y / k, LON0 + x / (k * LAT0.to_radians().cos()))
}

fn quantize(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

pub(super) struct Town {
    pub code: String,
    pub center: (f64, f64),
    pub river: Polyline,
    pub elevation: AsciiGrid,
    pub landcover: AsciiGrid,
    pub soil: AsciiGrid,
    pub hydro_zone: String,
    pub clim_region: String,
    pub catnat_rate: f64,
}

fn zone_index(cfg: &ScenarioConfig, lat: f64, lon: f64, rows: usize, cols: usize) -> usize {
    let fr = ((lat - cfg.lat_range[0]) / (cfg.lat_range[1] - cfg.lat_range[0]) * rows as f64) as usize;
    let fc = ((lon - cfg.lon_range[0]) / (cfg.lon_range[1] - cfg.lon_range[0]) * cols as f64) as usize;
    fr.min(rows - 1) * cols + fc.min(cols - 1)
}

/// Towns on a jittered lattice, far enough apart that their 2 km tiles never overlap.
pub(super) fn towns(cfg: &ScenarioConfig) -> Vec<Town> {
    let n_rows = (cfg.n_towns as f64).sqrt().ceil() as usize;
    let n_cols = cfg.n_towns.div_ceil(n_rows);
    let dlat = (cfg.lat_range[1] - cfg.lat_range[0]) / n_rows as f64;
    let dlon = (cfg.lon_range[1] - cfg.lon_range[0]) / n_cols as f64;
    (0..cfg.n_towns)
        .map(|t| {
            let mut rng = stream(cfg.seed, Domain::Town, t as u64);
            let (r, c) = (t / n_cols, t % n_cols);
            let lat = cfg.lat_range[0] + (r as f64 + 0.5 + 0.5 * (rng.random::<f64>() - 0.5)) * dlat;
            let lon = cfg.lon_range[0] + (c as f64 + 0.5 + 0.5 * (rng.random::<f64>() - 0.5)) * dlon;
            let center = project(lat, lon);
            build_town(cfg, t, lat, lon, center, &mut rng)
        })
        .collect()
}

fn build_town(cfg: &ScenarioConfig, t: usize, lat: f64, lon: f64, center: (f64, f64), rng: &mut ChaCha8Rng) -> Town {
    let base = 20.0 + 400.0 * rng.random::<f64>();
    let (gx, gy) = (0.02 * (rng.random::<f64>() - 0.5), 0.02 * (rng.random::<f64>() - 0.5));
    let theta = PI * rng.random::<f64>();
    let offset = 400.0 * (rng.random::<f64>() - 0.5);
    let phase = 2.0 * PI * rng.random::<f64>();
    let (dir, normal) = ((theta.cos(), theta.sin()), (-theta.sin(), theta.cos()));
    let trend = |x: f64, y: f64| base + gx * (x - center.0) + gy * (y - center.1);
    // Signed distance across the valley axis.
    let across = |x: f64, y: f64| (x - center.0) * normal.0 + (y - center.1) * normal.1 - offset;

    let mut vertices = Vec::new();
    let mut bed = Vec::new();
    for k in 0..=10 {
        let s = -1100.0 + 220.0 * k as f64;
        let wiggle = 30.0 * (s / 300.0 + phase).sin();
        let (x, y) = (
            center.0 + s * dir.0 + (offset + wiggle) * normal.0,
            center.1 + s * dir.1 + (offset + wiggle) * normal.1,
        );
        vertices.push((x, y));
        bed.push(quantize(trend(x, y) - 1.5));
    }

    let xll = (center.0 / CELL_M).round() * CELL_M - HALF_CELLS as f64 * CELL_M;
    let yll = (center.1 / CELL_M).round() * CELL_M - HALF_CELLS as f64 * CELL_M;
    let n = 2 * HALF_CELLS;
    let top = yll + n as f64 * CELL_M;
    let soil_blocks: Vec<f64> = (0..25).map(|_| f64::from(10 + rng.random_range(0..5u8))).collect();
    let (mut elev, mut land, mut soil) = (Vec::with_capacity(n * n), Vec::with_capacity(n * n), Vec::with_capacity(n * n));
    for row in 0..n {
        for col in 0..n {
            let (x, y) = (xll + (col as f64 + 0.5) * CELL_M, top - (row as f64 + 0.5) * CELL_M);
            elev.push(quantize(trend(x, y) + 0.03 * across(x, y).abs() + 0.5 * rng.random::<f64>()));
            let r = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
            let code = if rng.random::<f64>() < 0.7 * (-r / 350.0).exp() {
                1.0
            } else {
                f64::from(2 + rng.random_range(0..4u8))
            };
            land.push(code);
            soil.push(soil_blocks[(row * 5 / n) * 5 + col * 5 / n]);
        }
    }
    let grid = |data| AsciiGrid::new(n, n, xll, yll, CELL_M, data).expect("consistent tile");
    Town {
        code: format!("M{t:03}"),
        center,
        river: Polyline {
            id: format!("W{t:03}"),
            vertices,
            bed,
        },
        elevation: grid(elev),
        landcover: grid(land),
        soil: grid(soil),
        hydro_zone: format!("HZ{:02}", zone_index(cfg, lat, lon, 4, 6) + 1),
        clim_region: format!("CR{:02}", zone_index(cfg, lat, lon, 2, 5) + 1),
        catnat_rate: 6.0 * rng.random::<f64>(),
    }
}

const PERIODS: [&str; 4] = ["before_1945", "1945_1974", "1975_1999", "after_2000"];
const WALLS: [&str; 4] = ["stone", "brick", "concrete", "wood"];

/// Buildings of town `t`: a dense core and a sparser ring.
pub(super) fn buildings(cfg: &ScenarioConfig, t: usize, town: &Town) -> Vec<Building> {
    let mut rng = stream(cfg.seed, Domain::Building, t as u64);
    let n = cfg.buildings_per_town;
    let n_core = n * 3 / 5;
    (0..n)
        .map(|k| {
            let r = if k < n_core {
                CORE_RADIUS_M * rng.random::<f64>().sqrt()
            } else {
                CORE_RADIUS_M + (OUTER_RADIUS_M - CORE_RADIUS_M) * rng.random::<f64>().sqrt()
            };
            let a = 2.0 * PI * rng.random::<f64>();
            let (x, y) = (town.center.0 + r * a.cos(), town.center.1 + r * a.sin());
            let (lat, lon) = unproject(x, y);
            let adjoining = rng.random::<f64>() < 0.3;
            let outbuilding = rng.random::<f64>() < 0.4;
            Building {
                building_id: format!("B{:06}", t * n + k),
                lat,
                lon,
                x_m: x,
                y_m: y,
                municipality_code: town.code.clone(),
                living_surface: (50.0 + 150.0 * rng.random::<f64>().powf(1.5)).round(),
                house_value: (1500.0 + 3000.0 * rng.random::<f64>()).round(),
                construction_period: PERIODS[rng.random_range(0..PERIODS.len())].to_string(),
                nb_floors: rng.random_range(0..4),
                wall_material: WALLS[rng.random_range(0..WALLS.len())].to_string(),
                outbuilding_surface: if outbuilding { (5.0 + 40.0 * rng.random::<f64>()).round() } else { 0.0 },
                pres_adjoining: adjoining,
                length_partywall: if adjoining { (40.0 + 100.0 * rng.random::<f64>()).round() / 10.0 } else { 0.0 },
            }
        })
        .collect()
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[(T, f64)]) -> T {
    let mut u = rng.random::<f64>();
    for &(v, p) in options {
        if u < p {
            return v;
        }
        u -= p;
    }
    options.last().expect("non-empty options").0
}

/// Zoning of one building; overflow-TRI class depends on the river distance.
pub(super) fn hazard(cfg: &ScenarioConfig, index: usize, building: &Building, town: &Town, river_distance: f64) -> HazardContext {
    use TriClass::*;
    let mut rng = stream(cfg.seed, Domain::Hazard, index as u64);
    let tri_overflow = if river_distance < 100.0 {
        pick(&mut rng, &[(High, 0.5), (Medium, 0.3), (Low, 0.2)])
    } else if river_distance < 300.0 {
        pick(&mut rng, &[(Medium, 0.3), (Low, 0.4), (None, 0.3)])
    } else {
        pick(&mut rng, &[(None, 0.85), (Low, 0.15)])
    };
    let tri_runoff = pick(&mut rng, &[(None, 0.7), (Low, 0.15), (Medium, 0.1), (High, 0.05)]);
    let ppri = if rng.random::<f64>() < 0.6 {
        PpriClass::None
    } else {
        PpriClass::ALL[1 + rng.random_range(0..6)]
    };
    let nb_catnat = Poisson::new(town.catnat_rate.max(1e-3)).expect("positive rate").sample(&mut rng) as u32;
    HazardContext {
        building_id: building.building_id.clone(),
        tri_overflow,
        tri_runoff,
        ppri,
        hydro_zone: town.hydro_zone.clone(),
        clim_region: town.clim_region.clone(),
        nb_catnat,
    }
}
