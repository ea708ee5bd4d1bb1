//! Daily rainfall with seasonal wet-day frequency and GPD-tailed wet-day depths.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rayon::prelude::*;

use super::{stream, Domain, ScenarioConfig, TailRegime};
use crate::data_model::{RainGrid, RainGridPoint};
use crate::error::Result;

/// Depths are multiples of 1/64 mm, so every window sum is exact in f64.
pub(super) const QUANTUM: f64 = 64.0;

/// Inverse-CDF GPD draw.
pub(super) fn gpd_draw(u: f64, t: &TailRegime) -> f64 {
    if t.xi.abs() < 1e-12 {
        -t.sigma * (1.0 - u).ln()
    } else {
        t.sigma / t.xi * ((1.0 - u).powf(-t.xi) - 1.0)
    }
}

pub(super) fn regime_of(cfg: &ScenarioConfig, lat: f64) -> (&'static str, TailRegime) {
    if lat < cfg.regime_boundary_lat {
        ("south", cfg.south)
    } else {
        ("north", cfg.north)
    }
}

/// Grid point coordinates, row-major from the south-west corner.
pub(super) fn grid_coordinates(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    let dlat = (cfg.lat_range[1] - cfg.lat_range[0]) / cfg.grid_rows as f64;
    let dlon = (cfg.lon_range[1] - cfg.lon_range[0]) / cfg.grid_cols as f64;
    (0..cfg.grid_rows)
        .flat_map(|r| {
            (0..cfg.grid_cols).map(move |c| {
                (
                    cfg.lat_range[0] + (r as f64 + 0.5) * dlat,
                    cfg.lon_range[0] + (c as f64 + 0.5) * dlon,
                )
            })
        })
        .collect()
}

pub(super) fn point_id(i: usize) -> String {
    format!("G{i:05}")
}

/// One independent stream per grid point; dry days get sub-millimetre drizzle.
pub(super) fn generate_grid(cfg: &ScenarioConfig) -> Result<RainGrid> {
    let start = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1).expect("valid start year");
    let end = NaiveDate::from_ymd_opt(cfg.end_year, 12, 31).expect("valid end year");
    let n_days = (end - start).num_days() as usize + 1;
    let seasonal: Vec<f64> = (0..n_days)
        .map(|d| {
            let doy = (start + chrono::Days::new(d as u64)).ordinal() as f64;
            (cfg.wet_probability + cfg.seasonal_amplitude * (2.0 * PI * (doy - 80.0) / 365.25).sin()).clamp(0.0, 1.0)
        })
        .collect();
    let points: Vec<RainGridPoint> = grid_coordinates(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(i, (lat, lon))| {
            let (_, regime) = regime_of(cfg, lat);
            let mut rng = stream(cfg.seed, Domain::Rain, i as u64);
            let series = seasonal
                .iter()
                .map(|&p| {
                    let (wet, u): (f64, f64) = (rng.random(), rng.random());
                    if wet < p {
                        ((1.0 + gpd_draw(u, &regime)) * QUANTUM).ceil() / QUANTUM
                    } else {
                        (u * QUANTUM).floor() / QUANTUM
                    }
                })
                .collect();
            RainGridPoint {
                point_id: point_id(i),
                lat,
                lon,
                series,
            }
        })
        .collect();
    RainGrid::new(start, n_days, points)
}
