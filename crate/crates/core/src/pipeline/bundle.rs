//! Computed feature files: indicators, tail scores, building clusters, geo features.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::io::{read_records, write_records};
use crate::data_model::{Building, FeatureSources, IndicatorEncoding, Portfolio, RainGrid};
use crate::error::{Error, Result};
use crate::geo::{compute_geo_features, GeoConfig, GeoFeatureRow, GeoLayers};
use crate::rainfall::{nearest_four, IndicatorRow, IndicatorSet, DEFAULT_WINDOWS};
use crate::tail::{TailAnalysis, TailConfig, TailRow};

const INDICATOR_HEADER: [&str; 5] = ["building_id", "year_or_date", "window", "prob", "milre_or_annmilre"];
const TAIL_HEADER: [&str; 7] = ["point_id", "threshold", "n_exc", "xi", "sigma", "score", "cluster_id"];
const CLUSTER_HEADER: [&str; 3] = ["building_id", "point_id", "cluster_id"];
const GEO_HEADER: [&str; 8] = [
    "building_id",
    "distance_watercourse",
    "altitude_diffwatercourse",
    "terrain_maxslope_50m",
    "nb_building_50m",
    "impervious_surface",
    "soil_type",
    "wctrii",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub windows: Vec<u32>,
    pub tail: TailConfig,
    pub geo: GeoConfig,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            windows: DEFAULT_WINDOWS.to_vec(),
            tail: TailConfig::default(),
            geo: GeoConfig::default(),
        }
    }
}

/// Tail cluster of a building, taken from its nearest grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingCluster {
    pub building_id: String,
    pub point_id: String,
    pub cluster_id: usize,
}

pub fn building_tail_clusters(grid: &RainGrid, buildings: &[Building], tail: &[TailRow]) -> Result<Vec<BuildingCluster>> {
    let by_point: BTreeMap<&str, usize> = tail.iter().map(|t| (t.point_id.as_str(), t.cluster_id)).collect();
    buildings
        .iter()
        .map(|b| {
            let nearest = &grid.points()[nearest_four(grid, b.lat, b.lon)?[0]];
            let cluster_id = *by_point
                .get(nearest.point_id.as_str())
                .ok_or_else(|| Error::InsufficientData(format!("no tail cluster for grid point {}", nearest.point_id)))?;
            Ok(BuildingCluster {
                building_id: b.building_id.clone(),
                point_id: nearest.point_id.clone(),
                cluster_id,
            })
        })
        .collect()
}

/// Everything the rainfall and building layers need besides the portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub indicators: IndicatorSet,
    pub tail: Vec<TailRow>,
    pub clusters: Vec<BuildingCluster>,
    pub cluster_of: BTreeMap<String, usize>,
    /// Absent when no geo layers were supplied.
    pub geo: Option<BTreeMap<String, GeoFeatureRow>>,
}

impl FeatureBundle {
    fn new(indicators: IndicatorSet, tail: Vec<TailRow>, clusters: Vec<BuildingCluster>, geo: Option<Vec<GeoFeatureRow>>) -> Self {
        let cluster_of = clusters.iter().map(|c| (c.building_id.clone(), c.cluster_id)).collect();
        FeatureBundle {
            indicators,
            tail,
            clusters,
            cluster_of,
            geo: geo.map(|g| g.into_iter().map(|r| (r.building_id.clone(), r)).collect()),
        }
    }

    /// Annual indicators for every policy-year, event indicators for every
    /// claim, tail analysis of the grid and, with `layers`, geo features.
    pub fn compute(portfolio: &Portfolio, grid: &RainGrid, layers: Option<&GeoLayers>, opts: &FeatureOptions) -> Result<Self> {
        let years: Vec<(String, i32)> = portfolio
            .policies
            .iter()
            .map(|p| (p.building_id.clone(), p.year))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let events: Vec<_> = portfolio
            .claims
            .iter()
            .map(|c| (c.building_id.clone(), c.flood_date))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let indicators = IndicatorSet::compute(grid, &opts.windows, &portfolio.buildings, &years, &events)?;
        log::info!("indicators: {} policy-years, {} claim events", indicators.annual.len(), indicators.event.len());
        let tail = TailAnalysis::run(grid, &opts.tail)?.rows();
        let clusters = building_tail_clusters(grid, &portfolio.buildings, &tail)?;
        let geo = layers
            .map(|l| compute_geo_features(&portfolio.buildings, &portfolio.hazard, l, &opts.geo))
            .transpose()?;
        Ok(Self::new(indicators, tail, clusters, geo))
    }

    pub fn sources(&self, encoding: IndicatorEncoding) -> FeatureSources<'_> {
        FeatureSources {
            indicators: Some(&self.indicators),
            geo: self.geo.as_ref(),
            tail_cluster: Some(&self.cluster_of),
            indicator_encoding: encoding,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_records(&dir.join("indicators.csv"), &self.indicators.rows())?;
        write_records(&dir.join("tail_scores.csv"), &self.tail)?;
        write_records(&dir.join("building_clusters.csv"), &self.clusters)?;
        if let Some(geo) = &self.geo {
            let rows: Vec<&GeoFeatureRow> = geo.values().collect();
            write_records(&dir.join("geo_features.csv"), &rows)?;
        }
        Ok(())
    }

    /// Reads the files written by [`FeatureBundle::write`]; `geo_features.csv` is optional.
    pub fn load(dir: &Path) -> Result<Self> {
        let rows: Vec<IndicatorRow> = read_records(&dir.join("indicators.csv"), &INDICATOR_HEADER, &[])?;
        let tail: Vec<TailRow> = read_records(&dir.join("tail_scores.csv"), &TAIL_HEADER, &[])?;
        let clusters: Vec<BuildingCluster> = read_records(&dir.join("building_clusters.csv"), &CLUSTER_HEADER, &[])?;
        let geo_path = dir.join("geo_features.csv");
        let geo = if geo_path.exists() {
            Some(read_records::<GeoFeatureRow>(&geo_path, &GEO_HEADER, &[])?)
        } else {
            None
        };
        Ok(Self::new(IndicatorSet::from_rows(rows)?, tail, clusters, geo))
    }
}
