//! Peaks-over-threshold tail characterization of daily rainfall per grid point.

mod gpd;
mod kmeans1d;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::RainGrid;
use crate::error::{Error, Result};

pub use gpd::{fit_gpd, gpd_log_likelihood, FitMethod, GpdFit, GpdMethod, DEFAULT_MIN_EXCEEDANCES, XI_MAX, XI_MIN};
pub use kmeans1d::{kmeans_1d, Partition};

/// Days above this depth (mm) count as wet for threshold selection.
pub const WET_DAY_MM: f64 = 1.0;
pub const DEFAULT_QUANTILE: f64 = 0.95;
pub const DEFAULT_CLUSTERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub quantile: f64,
    pub min_exceedances: usize,
    pub clusters: usize,
    pub method: GpdMethod,
    /// Cluster on raw shape estimates instead of the 0-100 scores.
    pub cluster_on_shape: bool,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            quantile: DEFAULT_QUANTILE,
            min_exceedances: DEFAULT_MIN_EXCEEDANCES,
            clusters: DEFAULT_CLUSTERS,
            method: GpdMethod::Mle,
            cluster_on_shape: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub point_id: String,
    pub threshold: f64,
    pub fit: GpdFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailScore {
    pub point_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCluster {
    pub point_id: String,
    /// 1-based, increasing with centroid.
    pub cluster_id: usize,
}

/// Quantile `q` (linear interpolation between order statistics) of wet-day depths.
pub fn choose_threshold(series: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("threshold quantile {q} outside [0, 1]")));
    }
    let mut wet: Vec<f64> = series.iter().copied().filter(|v| *v > WET_DAY_MM).collect();
    if wet.is_empty() {
        return Err(Error::InsufficientData("no wet days (> 1 mm) in series".into()));
    }
    wet.sort_by(f64::total_cmp);
    let h = q * (wet.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(wet[lo] + (h - lo as f64) * (wet[hi] - wet[lo]))
}

/// Excesses `x - u` of the values strictly above `u`.
pub fn excesses(series: &[f64], u: f64) -> Vec<f64> {
    series.iter().filter(|v| **v > u).map(|v| v - u).collect()
}

/// Threshold choice plus GPD fit for one series.
pub fn fit_point(point_id: &str, series: &[f64], cfg: &TailConfig) -> Result<TailFit> {
    let u = choose_threshold(series, cfg.quantile)?;
    let fit = fit_gpd(&excesses(series, u), cfg.method, cfg.min_exceedances)
        .map_err(|e| Error::InsufficientData(format!("point {point_id}: {e}")))?;
    Ok(TailFit {
        point_id: point_id.to_string(),
        threshold: u,
        fit,
    })
}

/// Min-max map of the shape estimates onto `[0, 100]`.
pub fn rescale_scores(fits: &[TailFit]) -> Result<Vec<TailScore>> {
    let lo = fits.iter().map(|f| f.fit.shape).fold(f64::INFINITY, f64::min);
    let hi = fits.iter().map(|f| f.fit.shape).fold(f64::NEG_INFINITY, f64::max);
    if fits.len() < 2 || !(hi > lo) {
        return Err(Error::InsufficientData(
            "degenerate rescale: fewer than 2 distinct shape estimates".into(),
        ));
    }
    Ok(fits
        .iter()
        .map(|f| TailScore {
            point_id: f.point_id.clone(),
            score: 100.0 * (f.fit.shape - lo) / (hi - lo),
        })
        .collect())
}

/// Optimal 1-D k-means over the scores. Returns assignments and the `k` centroids.
pub fn cluster_1d(scores: &[TailScore], k: usize) -> Result<(Vec<TailCluster>, Vec<f64>)> {
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let p = kmeans_1d(&values, k)?;
    let clusters = scores
        .iter()
        .zip(&p.assignment)
        .map(|(s, &c)| TailCluster {
            point_id: s.point_id.clone(),
            cluster_id: c + 1,
        })
        .collect();
    Ok((clusters, p.centroids))
}

/// One row of `tail_scores.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub point_id: String,
    pub threshold: f64,
    pub n_exc: usize,
    pub xi: f64,
    pub sigma: f64,
    pub score: f64,
    pub cluster_id: usize,
}

/// Tail analysis of a whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TailAnalysis {
    pub fits: Vec<TailFit>,
    pub scores: Vec<TailScore>,
    pub clusters: Vec<TailCluster>,
    pub centroids: Vec<f64>,
}

impl TailAnalysis {
    /// Fits every grid point in parallel, then rescales and clusters.
    pub fn run(grid: &RainGrid, cfg: &TailConfig) -> Result<Self> {
        let fits: Vec<TailFit> = grid
            .points()
            .par_iter()
            .map(|p| {
                let present: Vec<f64> = p.series.iter().copied().filter(|v| !v.is_nan()).collect();
                fit_point(&p.point_id, &present, cfg)
            })
            .collect::<Result<_>>()?;
        let non_converged = fits.iter().filter(|f| !f.fit.converged).count();
        if non_converged > 0 {
            log::warn!("{non_converged} grid points fell back to moment estimates");
        }
        let scores = rescale_scores(&fits)?;
        let (clusters, centroids) = if cfg.cluster_on_shape {
            let raw: Vec<TailScore> = fits
                .iter()
                .map(|f| TailScore {
                    point_id: f.point_id.clone(),
                    score: f.fit.shape,
                })
                .collect();
            cluster_1d(&raw, cfg.clusters)?
        } else {
            cluster_1d(&scores, cfg.clusters)?
        };
        Ok(TailAnalysis {
            fits,
            scores,
            clusters,
            centroids,
        })
    }

    pub fn rows(&self) -> Vec<TailRow> {
        self.fits
            .iter()
            .zip(&self.scores)
            .zip(&self.clusters)
            .map(|((f, s), c)| TailRow {
                point_id: f.point_id.clone(),
                threshold: f.threshold,
                n_exc: f.fit.n_exceedances,
                xi: f.fit.shape,
                sigma: f.fit.scale,
                score: s.score,
                cluster_id: c.cluster_id,
            })
            .collect()
    }
}
