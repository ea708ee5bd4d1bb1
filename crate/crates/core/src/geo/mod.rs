//! Building and surrounding-context features from planar geometry layers.

mod raster;
mod watercourse;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Building, HazardContext, TriClass};
use crate::error::{Error, Result};

pub use raster::{AsciiGrid, RasterMosaic};
pub use watercourse::{segment_nearest, NearestBed, Polyline, VertexRow, WatercourseLayer, WATERCOURSE_HEADER};

/// Landcover code marking impervious cells; every other code is pervious.
pub const IMPERVIOUS_CODE: f64 = 1.0;

/// Distance and relative-altitude thresholds behind the WCTRII proximity band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WctriiThresholds {
    /// Below this distance (m) a building is "near".
    pub near_m: f64,
    /// Above this distance (m) a building is "far".
    pub far_m: f64,
    /// Buildings higher than this above the nearest bed drop one band toward "far".
    pub demote_above_m: f64,
}

impl Default for WctriiThresholds {
    fn default() -> Self {
        WctriiThresholds {
            near_m: 100.0,
            far_m: 500.0,
            demote_above_m: 10.0,
        }
    }
}

impl WctriiThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.near_m >= 0.0 && self.far_m > self.near_m && self.demote_above_m.is_finite()) {
            return Err(Error::Config(format!(
                "WCTRII thresholds must satisfy 0 <= near_m < far_m (got {} / {})",
                self.near_m, self.far_m
            )));
        }
        Ok(())
    }
}

pub fn tri_band(tri: TriClass) -> u8 {
    match tri {
        TriClass::None => 0,
        TriClass::Low | TriClass::Medium => 1,
        TriClass::High => 2,
    }
}

/// 0 = far or elevated, 1 = intermediate, 2 = near and low.
pub fn proximity_band(distance: f64, altitude_diff: f64, t: &WctriiThresholds) -> u8 {
    let band: u8 = if distance < t.near_m {
        2
    } else if distance <= t.far_m {
        1
    } else {
        0
    };
    if altitude_diff > t.demote_above_m {
        band.saturating_sub(1)
    } else {
        band
    }
}

/// Composite exposure class in `1..=9`.
pub fn wctrii(tri: TriClass, distance: f64, altitude_diff: f64, t: &WctriiThresholds) -> Result<u8> {
    if !(distance >= 0.0) || !altitude_diff.is_finite() {
        return Err(Error::invalid(format!("invalid WCTRII inputs: distance {distance}, altitude diff {altitude_diff}")));
    }
    Ok(3 * tri_band(tri) + proximity_band(distance, altitude_diff, t) + 1)
}

/// Uniform-grid index over building centers for fixed-radius neighbor counts.
pub struct PointIndex {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
    points: Vec<(f64, f64)>,
}

impl PointIndex {
    pub fn new(points: Vec<(f64, f64)>, radius: f64) -> Self {
        let cell = radius.max(1e-9);
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            cells
                .entry(((x / cell).floor() as i64, (y / cell).floor() as i64))
                .or_default()
                .push(i as u32);
        }
        PointIndex { cell, cells, points }
    }

    /// Other points within `radius` (inclusive) of point `i`. `radius` must not exceed the index cell.
    pub fn count_within(&self, i: usize, radius: f64) -> usize {
        debug_assert!(radius <= self.cell);
        let (x, y) = self.points[i];
        let (cx, cy) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let r2 = radius * radius;
        let mut n = 0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(v) = self.cells.get(&(cx + dx, cy + dy)) {
                    n += v
                        .iter()
                        .filter(|&&j| {
                            let (px, py) = self.points[j as usize];
                            j as usize != i && (px - x) * (px - x) + (py - y) * (py - y) <= r2
                        })
                        .count();
                }
            }
        }
        n
    }
}

/// Number of other buildings whose centers lie within `radius` of each building.
pub fn count_buildings_radius(points: &[(f64, f64)], radius: f64) -> Vec<usize> {
    let index = PointIndex::new(points.to_vec(), radius);
    (0..points.len()).into_par_iter().map(|i| index.count_within(i, radius)).collect()
}

/// Largest absolute elevation difference between in-buffer cells and `z0`.
pub fn max_slope_buffer(raster: &AsciiGrid, x: f64, y: f64, z0: f64, radius: f64) -> Result<f64> {
    let mut best = 0.0f64;
    raster.for_each_in_buffer(x, y, radius, |z| best = best.max((z - z0).abs()))?;
    Ok(best)
}

pub fn impervious_fraction(raster: &AsciiGrid, x: f64, y: f64, radius: f64) -> Result<f64> {
    let (mut imp, mut total) = (0usize, 0usize);
    raster.for_each_in_buffer(x, y, radius, |c| {
        total += 1;
        if c == IMPERVIOUS_CODE {
            imp += 1;
        }
    })?;
    if total == 0 {
        return Err(Error::InsufficientData(format!("empty {radius} m buffer around ({x}, {y})")));
    }
    Ok(imp as f64 / total as f64)
}

/// Most frequent soil code in the buffer; ties go to the smallest code.
pub fn predominant_soil(raster: &AsciiGrid, x: f64, y: f64, radius: f64) -> Result<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    raster.for_each_in_buffer(x, y, radius, |c| *counts.entry(c as i64).or_default() += 1)?;
    counts
        .iter()
        .fold(None, |best: Option<(i64, usize)>, (&k, &n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((k, n)),
        })
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InsufficientData(format!("empty {radius} m soil buffer around ({x}, {y})")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoConfig {
    pub slope_radius_m: f64,
    pub density_radius_m: f64,
    pub impervious_radius_m: f64,
    pub soil_radius_m: f64,
    pub wctrii: WctriiThresholds,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            slope_radius_m: 50.0,
            density_radius_m: 50.0,
            impervious_radius_m: 200.0,
            soil_radius_m: 200.0,
            wctrii: WctriiThresholds::default(),
        }
    }
}

/// Input layers for geo features.
#[derive(Debug, Clone)]
pub struct GeoLayers {
    pub elevation: RasterMosaic,
    pub landcover: RasterMosaic,
    pub soil: RasterMosaic,
    pub watercourses: WatercourseLayer,
}

impl GeoLayers {
    /// Reads `watercourses.csv` plus the `elevation`, `landcover` and `soil` rasters from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let wc = dir.join("watercourses.csv");
        if !wc.is_file() {
            return Err(Error::Config(format!("watercourse layer not found: {}", wc.display())));
        }
        Ok(GeoLayers {
            elevation: RasterMosaic::load(dir, "elevation")?,
            landcover: RasterMosaic::load(dir, "landcover")?,
            soil: RasterMosaic::load(dir, "soil")?,
            watercourses: WatercourseLayer::read(&wc)?,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.watercourses.write(&dir.join("watercourses.csv"))?;
        self.elevation.write(dir, "elevation")?;
        self.landcover.write(dir, "landcover")?;
        self.soil.write(dir, "soil")
    }
}

/// One row of `geo_features.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoFeatureRow {
    pub building_id: String,
    pub distance_watercourse: f64,
    pub altitude_diffwatercourse: f64,
    pub terrain_maxslope_50m: f64,
    pub nb_building_50m: u32,
    pub impervious_surface: f64,
    pub soil_type: String,
    pub wctrii: u8,
}

pub fn soil_label(code: i64) -> String {
    format!("soil_{code}")
}

/// Geo features for every building, in input order.
pub fn compute_geo_features(
    buildings: &[Building],
    hazard: &BTreeMap<String, HazardContext>,
    layers: &GeoLayers,
    cfg: &GeoConfig,
) -> Result<Vec<GeoFeatureRow>> {
    cfg.wctrii.validate()?;
    let points: Vec<(f64, f64)> = buildings.iter().map(|b| (b.x_m, b.y_m)).collect();
    let density = count_buildings_radius(&points, cfg.density_radius_m);
    buildings
        .par_iter()
        .zip(density)
        .map(|(b, nb)| {
            let ctx = |e: Error| Error::validation(format!("geo features of building {}", b.building_id), e.to_string());
            let (x, y) = (b.x_m, b.y_m);
            let elev = layers.elevation.tile_for(x, y, cfg.slope_radius_m).map_err(ctx)?;
            let z0 = elev.value_at(x, y).map_err(ctx)?;
            let slope = max_slope_buffer(elev, x, y, z0, cfg.slope_radius_m).map_err(ctx)?;
            let lc = layers.landcover.tile_for(x, y, cfg.impervious_radius_m).map_err(ctx)?;
            let imp = impervious_fraction(lc, x, y, cfg.impervious_radius_m).map_err(ctx)?;
            let soil_tile = layers.soil.tile_for(x, y, cfg.soil_radius_m).map_err(ctx)?;
            let soil = predominant_soil(soil_tile, x, y, cfg.soil_radius_m).map_err(ctx)?;
            let near = layers.watercourses.nearest(x, y);
            let alt_diff = z0 - near.bed_altitude;
            let tri = hazard.get(&b.building_id).map(|h| h.tri_overflow).unwrap_or_default();
            Ok(GeoFeatureRow {
                building_id: b.building_id.clone(),
                distance_watercourse: near.distance,
                altitude_diffwatercourse: alt_diff,
                terrain_maxslope_50m: slope,
                nb_building_50m: nb as u32,
                impervious_surface: imp,
                soil_type: soil_label(soil),
                wctrii: wctrii(tri, near.distance, alt_diff, &cfg.wctrii)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wctrii_corners_and_bijection() {
        let t = WctriiThresholds::default();
        assert_eq!(wctrii(TriClass::None, 2000.0, 30.0, &t).unwrap(), 1);
        assert_eq!(wctrii(TriClass::High, 20.0, -5.0, &t).unwrap(), 9);
        let mut seen = std::collections::BTreeSet::new();
        for tri in [TriClass::None, TriClass::Low, TriClass::High] {
            for d in [1000.0, 300.0, 10.0] {
                seen.insert(wctrii(tri, d, 0.0, &t).unwrap());
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), (1..=9).collect::<Vec<u8>>());
        assert!(wctrii(TriClass::Low, -1.0, 0.0, &t).is_err());
    }

    #[test]
    fn demotion_moves_one_band_toward_far() {
        let t = WctriiThresholds::default();
        assert_eq!(proximity_band(50.0, 0.0, &t), 2);
        assert_eq!(proximity_band(50.0, 11.0, &t), 1);
        assert_eq!(proximity_band(800.0, 11.0, &t), 0);
    }

    #[test]
    fn density_boundary_is_inclusive() {
        let pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 49.0), (-51.0, 0.0)];
        assert_eq!(count_buildings_radius(&pts, 50.0)[0], 2);
        assert_eq!(count_buildings_radius(&[(5.0, 5.0)], 50.0), vec![0]);
        assert_eq!(count_buildings_radius(&[(0.0, 0.0), (50.0, 0.0)], 50.0), vec![1, 1]);
    }

    #[test]
    fn buffer_features_on_simple_rasters() {
        let flat = AsciiGrid::new(20, 20, 0.0, 0.0, 25.0, vec![100.0; 400]).unwrap();
        assert_eq!(max_slope_buffer(&flat, 250.0, 250.0, 100.0, 50.0).unwrap(), 0.0);
        let mut bump = flat.clone();
        bump.data[10 * 20 + 10] = 112.0;
        assert_eq!(max_slope_buffer(&bump, 250.0, 250.0, 100.0, 50.0).unwrap(), 12.0);
        assert!(max_slope_buffer(&flat, 20.0, 250.0, 100.0, 50.0).is_err());

        let all_imp = AsciiGrid::new(40, 40, 0.0, 0.0, 25.0, vec![IMPERVIOUS_CODE; 1600]).unwrap();
        assert_eq!(impervious_fraction(&all_imp, 500.0, 500.0, 200.0).unwrap(), 1.0);
        let none = AsciiGrid::new(40, 40, 0.0, 0.0, 25.0, vec![2.0; 1600]).unwrap();
        assert_eq!(impervious_fraction(&none, 500.0, 500.0, 200.0).unwrap(), 0.0);
        let checker: Vec<f64> = (0..160_000).map(|i| if (i / 400 + i % 400) % 2 == 0 { 1.0 } else { 2.0 }).collect();
        let big = AsciiGrid::new(400, 400, 0.0, 0.0, 5.0, checker).unwrap();
        let f = impervious_fraction(&big, 1000.0, 1000.0, 800.0).unwrap();
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn soil_mode_breaks_ties_low() {
        let g = AsciiGrid::new(2, 1, 0.0, 0.0, 1.0, vec![3.0, 2.0]).unwrap();
        assert_eq!(predominant_soil(&g, 1.0, 0.5, 0.5).unwrap(), 2);
    }
}
