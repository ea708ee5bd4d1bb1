//! Synthetic world with a known data-generating process.
//!
//! Rainfall: wet days follow a seasonal frequency and have depth `1 + GPD`
//! with a southern and a northern tail regime. Claims: a logistic model on
//! true ann_MILRE, WCTRII, building density and amenity; costs: a gamma model
//! on true MILRE, movable assets and WCTRII. Truth tables are produced by the
//! code in `oracle`, which shares nothing with the pipeline.

mod oracle;
mod rain;
mod world;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::io::{read_records, write_records};
use crate::data_model::{write_portfolio, write_rain_grid, Building, ClaimRecord, PolicyYear, Portfolio, PortfolioPaths, PresAbs, RainGrid, TriClass, DEFAULT_CLAIM_FLOOR};
use crate::error::{Error, Result};
use crate::geo::{soil_label, GeoFeatureRow, GeoLayers, RasterMosaic, WatercourseLayer};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Domain {
    Rain = 1,
    Town = 2,
    Building = 3,
    Hazard = 4,
    Policy = 5,
    Claim = 6,
    Cost = 7,
    FloodDay = 8,
}

/// Counter-based stream: one ChaCha stream per (domain, entity), independent of scheduling.
pub(crate) fn stream(seed: u64, domain: Domain, entity: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(entity);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRegime {
    pub xi: f64,
    pub sigma: f64,
}

/// True occurrence effects on the logit scale; `wctrii[k]` is class `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceTruth {
    pub ann_milre: f64,
    pub nb_building_50m: f64,
    pub amenity_pres: f64,
    pub wctrii: [f64; 9],
}

/// True severity effects on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityTruth {
    pub milre: f64,
    pub mov_assets_per_10k: f64,
    pub wctrii: [f64; 9],
    pub shape: f64,
    pub target_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub lat_range: [f64; 2],
    pub lon_range: [f64; 2],
    pub start_year: i32,
    pub end_year: i32,
    pub n_towns: usize,
    pub buildings_per_town: usize,
    pub n_policy_years: usize,
    pub target_rate: f64,
    pub regime_boundary_lat: f64,
    pub south: TailRegime,
    pub north: TailRegime,
    pub wet_probability: f64,
    pub seasonal_amplitude: f64,
    pub occurrence: OccurrenceTruth,
    pub severity: SeverityTruth,
    /// Minimum claim-minus-non-claim gap in median ann_MILRE the scenario is built to exceed.
    pub separation_threshold: f64,
}

impl ScenarioConfig {
    /// Named presets: `ci` (2,500 points, 20 years, 100k policy-years),
    /// `desk_max` (same world over 1950-2024) and `small`.
    pub fn profile(name: &str, seed: u64) -> Result<Self> {
        let base = ScenarioConfig {
            seed,
            grid_rows: 50,
            grid_cols: 50,
            lat_range: [42.0, 51.0],
            lon_range: [-4.5, 8.0],
            start_year: 2005,
            end_year: 2024,
            n_towns: 100,
            buildings_per_town: 50,
            n_policy_years: 100_000,
            target_rate: 0.0022,
            regime_boundary_lat: 46.5,
            south: TailRegime { xi: 0.4, sigma: 5.0 },
            north: TailRegime { xi: 0.05, sigma: 7.0 },
            wet_probability: 0.35,
            seasonal_amplitude: 0.1,
            occurrence: OccurrenceTruth {
                ann_milre: 10.0,
                nb_building_50m: 0.08,
                amenity_pres: 0.7,
                wctrii: [0.0, 0.2, 0.5, 0.3, 0.6, 1.0, 0.7, 1.1, 1.5],
            },
            severity: SeverityTruth {
                milre: 3.0,
                mov_assets_per_10k: 0.15,
                wctrii: [0.0, 0.1, 0.25, 0.15, 0.3, 0.5, 0.35, 0.55, 0.75],
                shape: 2.0,
                target_mean: 5884.13,
            },
            separation_threshold: 0.15,
        };
        match name {
            "ci" => Ok(base),
            "desk_max" => Ok(ScenarioConfig {
                start_year: 1950,
                ..base
            }),
            "small" => Ok(ScenarioConfig {
                grid_rows: 12,
                grid_cols: 12,
                start_year: 2010,
                n_towns: 40,
                buildings_per_town: 25,
                n_policy_years: 15_000,
                target_rate: 0.02,
                ..base
            }),
            other => Err(Error::Config(format!("unknown scenario profile `{other}` (expected ci, desk_max or small)"))),
        }
    }

    pub fn n_buildings(&self) -> usize {
        self.n_towns * self.buildings_per_town
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.target_rate > 0.0 && self.target_rate < 0.05) {
            return bad(format!("target_rate must be in (0, 0.05), got {}", self.target_rate));
        }
        for (name, r) in [("south", self.south), ("north", self.north)] {
            if !(r.xi > -0.4 && r.xi < 0.9) || !(r.sigma > 0.0) {
                return bad(format!("{name} regime needs xi in (-0.4, 0.9) and sigma > 0"));
            }
        }
        if self.grid_rows * self.grid_cols < 4 {
            return bad("grid needs at least 4 points".into());
        }
        if self.end_year < self.start_year {
            return bad("end_year before start_year".into());
        }
        if self.n_towns == 0 || self.buildings_per_town == 0 {
            return bad("scenario needs towns and buildings".into());
        }
        let span = (self.end_year - self.start_year + 1) as usize;
        if self.n_policy_years < self.n_buildings() || self.n_policy_years > span * self.n_buildings() {
            return bad(format!(
                "n_policy_years must lie in [{}, {}] for {} buildings over {span} years",
                self.n_buildings(),
                span * self.n_buildings(),
                self.n_buildings()
            ));
        }
        if !(self.lat_range[0] < self.lat_range[1] && self.lon_range[0] < self.lon_range[1]) {
            return bad("empty lat/lon range".into());
        }
        if !(0.0..=1.0).contains(&self.wet_probability) || self.severity.shape <= 0.0 || self.severity.target_mean <= DEFAULT_CLAIM_FLOOR {
            return bad("invalid wet probability, gamma shape or target mean".into());
        }
        Ok(())
    }
}

/// Calibrated intercepts and realised summaries, recorded in `scenario.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub occurrence_intercept: f64,
    pub severity_intercept: f64,
    pub n_policy_years: usize,
    pub n_claims: usize,
    pub realized_rate: f64,
    pub median_ann_milre_claims: f64,
    pub median_ann_milre_no_claim: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub point_id: String,
    pub regime: String,
    pub xi: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnMilreTruth {
    pub building_id: String,
    pub year: i32,
    pub ann_milre: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilreTruth {
    pub policy_id: String,
    pub building_id: String,
    pub flood_date: NaiveDate,
    pub milre: f64,
}

/// Ground truth the pipeline is expected to recover.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub calibration: Calibration,
    pub regimes: Vec<RegimeRow>,
    pub ann_milre: Vec<AnnMilreTruth>,
    pub milre: Vec<MilreTruth>,
    pub geo: Vec<GeoFeatureRow>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: RainGrid,
    pub portfolio: Portfolio,
    pub layers: GeoLayers,
    pub truth: Truth,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    config: ScenarioConfig,
    calibration: Calibration,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Local (four-neighbour maximum) window series of one building.
struct LocalTruth {
    windows: Vec<Vec<Option<f64>>>,
}

impl LocalTruth {
    fn build(grid: &RainGrid, nn: [usize; 4], windows: &[u32]) -> Self {
        let series: Vec<&[f64]> = nn.iter().map(|&i| grid.points()[i].series.as_slice()).collect();
        LocalTruth {
            windows: windows.iter().map(|&w| oracle::local_max_series(&series, w as usize)).collect(),
        }
    }

    fn milre(&self, day: usize) -> f64 {
        self.windows
            .iter()
            .map(|s| {
                let x = s[day].expect("full window on the event day");
                oracle::rank_share(&oracle::sorted_present(s), x)
            })
            .fold(0.0, f64::max)
    }

    /// ann_MILRE for every year, given each year's `[lo, hi]` day range.
    fn ann_milre_all(&self, years: &[(i32, usize, usize)]) -> HashMap<i32, f64> {
        let mut out: HashMap<i32, f64> = years.iter().map(|y| (y.0, 0.0)).collect();
        for s in &self.windows {
            let maxima: Vec<(i32, f64)> = years
                .iter()
                .filter_map(|&(y, lo, hi)| {
                    s[lo..=hi].iter().flatten().copied().reduce(f64::max).map(|m| (y, m))
                })
                .collect();
            let mut sorted: Vec<f64> = maxima.iter().map(|m| m.1).collect();
            sorted.sort_by(f64::total_cmp);
            for (y, m) in maxima {
                let p = oracle::rank_share(&sorted, m);
                let e = out.get_mut(&y).expect("year present");
                *e = e.max(p);
            }
        }
        out
    }
}

const FLOOD_DAY_CANDIDATES: usize = 10;
const WINDOWS: [u32; 6] = [1, 3, 5, 7, 10, 30];
const FULL_WINDOW_START: usize = 29;

fn day_ranges(cfg: &ScenarioConfig) -> Vec<(i32, usize, usize)> {
    let start = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1).expect("valid year");
    (cfg.start_year..=cfg.end_year)
        .map(|y| {
            let lo = (NaiveDate::from_ymd_opt(y, 1, 1).unwrap() - start).num_days() as usize;
            let hi = (NaiveDate::from_ymd_opt(y, 12, 31).unwrap() - start).num_days() as usize;
            (y, lo, hi)
        })
        .collect()
}

/// Builds the whole scenario in memory.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let grid = rain::generate_grid(cfg)?;
    let regimes: Vec<RegimeRow> = grid
        .points()
        .iter()
        .map(|p| {
            let (name, r) = rain::regime_of(cfg, p.lat);
            RegimeRow {
                point_id: p.point_id.clone(),
                regime: name.to_string(),
                xi: r.xi,
                sigma: r.sigma,
            }
        })
        .collect();

    // Geography.
    let towns = world::towns(cfg);
    let mut buildings: Vec<Building> = Vec::with_capacity(cfg.n_buildings());
    let mut town_of: Vec<usize> = Vec::with_capacity(cfg.n_buildings());
    for (t, town) in towns.iter().enumerate() {
        buildings.extend(world::buildings(cfg, t, town));
        town_of.extend(std::iter::repeat_n(t, cfg.buildings_per_town));
    }
    let lines: Vec<(Vec<(f64, f64)>, Vec<f64>)> = towns.iter().map(|t| (t.river.vertices.clone(), t.river.bed.clone())).collect();
    let points: Vec<(f64, f64)> = buildings.iter().map(|b| (b.x_m, b.y_m)).collect();
    let counts = oracle::neighbor_counts(&points, 50.0);
    let beds: Vec<(f64, f64)> = points.par_iter().map(|&(x, y)| oracle::nearest_bed(&lines, x, y)).collect();
    let hazard: Vec<_> = buildings
        .iter()
        .enumerate()
        .map(|(i, b)| world::hazard(cfg, i, b, &towns[town_of[i]], beds[i].0))
        .collect();
    let geo: Vec<GeoFeatureRow> = buildings
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let town = &towns[town_of[i]];
            let (x, y) = (b.x_m, b.y_m);
            let z0 = oracle::cell_value(&town.elevation, x, y);
            let slope = oracle::cells_within(&town.elevation, x, y, 50.0)
                .into_iter()
                .map(|z| (z - z0).abs())
                .fold(0.0, f64::max);
            let land = oracle::cells_within(&town.landcover, x, y, 200.0);
            let impervious = land.iter().filter(|c| **c == 1.0).count() as f64 / land.len() as f64;
            let mut soil_counts: BTreeMap<i64, usize> = BTreeMap::new();
            for c in oracle::cells_within(&town.soil, x, y, 200.0) {
                *soil_counts.entry(c as i64).or_default() += 1;
            }
            let top = soil_counts.values().copied().max().unwrap_or(0);
            let soil = soil_counts.iter().find(|(_, n)| **n == top).map(|(k, _)| *k).unwrap_or(0);
            let (distance, bed) = beds[i];
            let tri_band = match hazard[i].tri_overflow {
                TriClass::None => 0,
                TriClass::Low | TriClass::Medium => 1,
                TriClass::High => 2,
            };
            GeoFeatureRow {
                building_id: b.building_id.clone(),
                distance_watercourse: distance,
                altitude_diffwatercourse: z0 - bed,
                terrain_maxslope_50m: slope,
                nb_building_50m: counts[i],
                impervious_surface: impervious,
                soil_type: soil_label(soil),
                wctrii: oracle::wctrii_table(tri_band, distance, z0 - bed),
            }
        })
        .collect();

    // Local climate truth per building (grouped by neighbour set).
    let grid_coords: Vec<(f64, f64)> = grid.points().iter().map(|p| (p.lat, p.lon)).collect();
    let nn: Vec<[usize; 4]> = buildings
        .par_iter()
        .map(|b| oracle::nearest_four_by_chord(&grid_coords, b.lat, b.lon))
        .collect();
    let mut by_nn: BTreeMap<[usize; 4], Vec<usize>> = BTreeMap::new();
    for (i, k) in nn.iter().enumerate() {
        by_nn.entry(*k).or_default().push(i);
    }
    let years = day_ranges(cfg);
    let span = years.len();
    let per_building = cfg.n_policy_years / cfg.n_buildings();
    let extra = cfg.n_policy_years % cfg.n_buildings();
    let insured = |i: usize| per_building + usize::from(i < extra);

    // Per building: ann_MILRE by year and the wettest local days of each year.
    struct Local {
        ann: HashMap<i32, f64>,
        peak: HashMap<i32, Vec<usize>>,
        climate_key: [usize; 4],
    }
    let locals: Vec<(usize, Local)> = by_nn
        .par_iter()
        .flat_map_iter(|(key, members)| {
            let lt = LocalTruth::build(&grid, *key, &WINDOWS);
            let ann = lt.ann_milre_all(&years);
            let one_day = oracle::local_max_series(
                &key.iter().map(|&i| grid.points()[i].series.as_slice()).collect::<Vec<_>>(),
                1,
            );
            let peak: HashMap<i32, Vec<usize>> = years
                .iter()
                .map(|&(y, lo, hi)| {
                    // Only days where every window is complete.
                    let mut days: Vec<usize> = (lo.max(FULL_WINDOW_START)..=hi).collect();
                    days.sort_by(|a, b| one_day[*b].unwrap().total_cmp(&one_day[*a].unwrap()).then(a.cmp(b)));
                    days.truncate(FLOOD_DAY_CANDIDATES);
                    (y, days)
                })
                .collect();
            members
                .iter()
                .map(|&i| {
                    (
                        i,
                        Local {
                            ann: ann.clone(),
                            peak: peak.clone(),
                            climate_key: *key,
                        },
                    )
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut local_of: Vec<Option<Local>> = (0..buildings.len()).map(|_| None).collect();
    for (i, l) in locals {
        local_of[i] = Some(l);
    }
    let local = |i: usize| local_of[i].as_ref().expect("every building has a local climate");

    // Policy-years.
    let mut policies: Vec<PolicyYear> = Vec::with_capacity(cfg.n_policy_years);
    let mut owner: Vec<usize> = Vec::with_capacity(cfg.n_policy_years);
    let mut uniforms: Vec<f64> = Vec::with_capacity(cfg.n_policy_years);
    for (i, b) in buildings.iter().enumerate() {
        let mut rng = stream(cfg.seed, Domain::Policy, i as u64);
        let amenity = PresAbs::from_bool(rng.random::<f64>() < 0.3);
        let mov_assets = (3000.0 + 25000.0 * rng.random::<f64>().powi(2)).round();
        let prec_obj = if rng.random::<f64>() < 0.6 { 0.0 } else { (500.0 + 4500.0 * rng.random::<f64>()).round() };
        let nb_rooms = ((b.living_surface / 25.0).round() as u32).clamp(1, 12);
        let mut claim_rng = stream(cfg.seed, Domain::Claim, i as u64);
        for &(year, _, _) in &years[span - insured(i)..] {
            let exposure = if rng.random::<f64>() < 0.9 { 1.0 } else { ((rng.random::<f64>() * 100.0).round() / 100.0).max(0.05) };
            policies.push(PolicyYear {
                policy_id: format!("P{:06}", i),
                building_id: b.building_id.clone(),
                year,
                exposure,
                nb_rooms,
                mov_assets,
                prec_obj,
                amenity_elmt: amenity,
                outbuilg_size: PresAbs::from_bool(b.outbuilding_surface > 0.0),
                claim_nb: 0,
            });
            owner.push(i);
            uniforms.push(claim_rng.random());
        }
    }

    // Occurrence: logistic on true features, intercept calibrated on common random numbers.
    let occ = &cfg.occurrence;
    let eta: Vec<f64> = policies
        .iter()
        .zip(&owner)
        .map(|(p, &i)| {
            occ.ann_milre * local(i).ann[&p.year]
                + occ.nb_building_50m * f64::from(geo[i].nb_building_50m)
                + if p.amenity_elmt == PresAbs::Pres { occ.amenity_pres } else { 0.0 }
                + occ.wctrii[usize::from(geo[i].wctrii) - 1]
        })
        .collect();
    let hits = |b0: f64| -> usize {
        policies
            .iter()
            .zip(&eta)
            .zip(&uniforms)
            .filter(|((p, e), u)| **u < logistic(b0 + **e) * p.exposure)
            .count()
    };
    let target = (cfg.target_rate * policies.len() as f64).round().max(1.0) as usize;
    let (mut lo, mut hi) = (-60.0, 20.0);
    if hits(hi) < target || hits(lo) > target {
        return Err(Error::Config(format!(
            "target rate {} infeasible: intercept range [{lo}, {hi}] gives {} to {} claims, need {target}",
            cfg.target_rate,
            hits(lo),
            hits(hi)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hits(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b0 = hi;
    for (k, p) in policies.iter_mut().enumerate() {
        if uniforms[k] < logistic(b0 + eta[k]) * p.exposure {
            p.claim_nb = 1;
        }
    }

    // Severity: the flood day is one of the year's wettest local days.
    let sev = &cfg.severity;
    let mut claim_rows: Vec<(usize, usize, NaiveDate, f64, f64)> = Vec::new();
    for (k, p) in policies.iter().enumerate() {
        if p.claim_nb == 1 {
            let i = owner[k];
            let candidates = &local(i).peak[&p.year];
            let day = candidates[stream(cfg.seed, Domain::FloodDay, k as u64).random_range(0..candidates.len())];
            let date = grid.date_at(day);
            let lt = LocalTruth::build(&grid, local(i).climate_key, &WINDOWS);
            let m = lt.milre(day);
            let lin = sev.milre * m + sev.mov_assets_per_10k * p.mov_assets / 1e4 + sev.wctrii[usize::from(geo[i].wctrii) - 1];
            claim_rows.push((k, i, date, m, lin));
        }
    }
    let mean_rest = claim_rows.iter().map(|c| c.4.exp()).sum::<f64>() / claim_rows.len().max(1) as f64;
    let g0 = sev.target_mean.ln() - mean_rest.ln();
    let mut claims = Vec::with_capacity(claim_rows.len());
    let mut milre_truth = Vec::with_capacity(claim_rows.len());
    for &(k, i, date, m, lin) in &claim_rows {
        let mu = (g0 + lin).exp();
        let gamma = Gamma::new(sev.shape, mu / sev.shape).map_err(|e| Error::Config(format!("gamma parameters: {e}")))?;
        let mut rng = stream(cfg.seed, Domain::Cost, k as u64);
        let mut amount = DEFAULT_CLAIM_FLOOR;
        for _ in 0..100 {
            let a = (gamma.sample(&mut rng) * 100.0).round() / 100.0;
            if a >= DEFAULT_CLAIM_FLOOR {
                amount = a;
                break;
            }
        }
        let p = &policies[k];
        claims.push(ClaimRecord {
            policy_id: p.policy_id.clone(),
            building_id: buildings[i].building_id.clone(),
            flood_date: date,
            amount,
        });
        milre_truth.push(MilreTruth {
            policy_id: p.policy_id.clone(),
            building_id: buildings[i].building_id.clone(),
            flood_date: date,
            milre: m,
        });
    }

    let ann_truth: Vec<AnnMilreTruth> = policies
        .iter()
        .zip(&owner)
        .map(|(p, &i)| AnnMilreTruth {
            building_id: p.building_id.clone(),
            year: p.year,
            ann_milre: local(i).ann[&p.year],
        })
        .collect();
    let (mut pos, mut neg): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for (p, a) in policies.iter().zip(&ann_truth) {
        if p.claim_nb == 1 {
            pos.push(a.ann_milre);
        } else {
            neg.push(a.ann_milre);
        }
    }
    let (mp, mn) = (median(&mut pos), median(&mut neg));
    let calibration = Calibration {
        occurrence_intercept: b0,
        severity_intercept: g0,
        n_policy_years: policies.len(),
        n_claims: claims.len(),
        realized_rate: claims.len() as f64 / policies.len() as f64,
        median_ann_milre_claims: mp,
        median_ann_milre_no_claim: mn,
        separation: mp - mn,
    };

    let layers = GeoLayers {
        elevation: RasterMosaic {
            tiles: towns.iter().map(|t| t.elevation.clone()).collect(),
        },
        landcover: RasterMosaic {
            tiles: towns.iter().map(|t| t.landcover.clone()).collect(),
        },
        soil: RasterMosaic {
            tiles: towns.iter().map(|t| t.soil.clone()).collect(),
        },
        watercourses: WatercourseLayer::new(towns.iter().map(|t| t.river.clone()).collect())?,
    };
    let portfolio = Portfolio::link(policies, claims, buildings, hazard, DEFAULT_CLAIM_FLOOR)?;
    Ok(Scenario {
        config: cfg.clone(),
        grid,
        portfolio,
        layers,
        truth: Truth {
            calibration,
            regimes,
            ann_milre: ann_truth,
            milre: milre_truth,
            geo,
        },
    })
}

const ANN_TRUTH_HEADER: [&str; 3] = ["building_id", "year", "ann_milre"];
const MILRE_TRUTH_HEADER: [&str; 4] = ["policy_id", "building_id", "flood_date", "milre"];
const REGIME_HEADER: [&str; 4] = ["point_id", "regime", "xi", "sigma"];
const GEO_TRUTH_HEADER: [&str; 8] = [
    "building_id",
    "distance_watercourse",
    "altitude_diffwatercourse",
    "terrain_maxslope_50m",
    "nb_building_50m",
    "impervious_surface",
    "soil_type",
    "wctrii",
];

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    occurrence_intercept: f64,
    occurrence: OccurrenceTruth,
    severity_intercept: f64,
    severity: SeverityTruth,
    south: TailRegime,
    north: TailRegime,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Scenario {
    /// Writes the inputs (`rain_grid.csv`, portfolio tables, geo layers),
    /// `scenario.json` and the `truth/` tables under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let truth_dir = dir.join("truth");
        std::fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
        write_rain_grid(&dir.join("rain_grid.csv"), &self.grid)?;
        write_portfolio(&PortfolioPaths::in_dir(dir), &self.portfolio)?;
        self.layers.write(dir)?;
        write_json(
            &dir.join("scenario.json"),
            &ScenarioFile {
                config: self.config.clone(),
                calibration: self.truth.calibration.clone(),
            },
        )?;
        let t = &self.truth;
        write_json(
            &truth_dir.join("coefficients.json"),
            &CoefficientFile {
                occurrence_intercept: t.calibration.occurrence_intercept,
                occurrence: self.config.occurrence.clone(),
                severity_intercept: t.calibration.severity_intercept,
                severity: self.config.severity.clone(),
                south: self.config.south,
                north: self.config.north,
            },
        )?;
        write_records(&truth_dir.join("regimes.csv"), &t.regimes)?;
        write_records(&truth_dir.join("ann_milre.csv"), &t.ann_milre)?;
        write_records(&truth_dir.join("milre.csv"), &t.milre)?;
        write_records(&truth_dir.join("geo_features.csv"), &t.geo)
    }
}

/// Reads the truth tables of a scenario written with `config`; a different
/// recorded configuration is an error.
pub fn oracle_truth(config: &ScenarioConfig, dir: &Path) -> Result<Truth> {
    let path = dir.join("scenario.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: ScenarioFile = serde_json::from_str(&text)?;
    if &file.config != config {
        return Err(Error::Config(format!("{} was generated with a different configuration", path.display())));
    }
    let truth_dir = dir.join("truth");
    Ok(Truth {
        calibration: file.calibration,
        regimes: read_records(&truth_dir.join("regimes.csv"), &REGIME_HEADER, &[])?,
        ann_milre: read_records(&truth_dir.join("ann_milre.csv"), &ANN_TRUTH_HEADER, &[])?,
        milre: read_records(&truth_dir.join("milre.csv"), &MILRE_TRUTH_HEADER, &[])?,
        geo: read_records(&truth_dir.join("geo_features.csv"), &GEO_TRUTH_HEADER, &[])?,
    })
}

/// Reads `scenario.json` back.
pub fn read_scenario_config(dir: &Path) -> Result<(ScenarioConfig, Calibration)> {
    let path = dir.join("scenario.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: ScenarioFile = serde_json::from_str(&text)?;
    Ok((file.config, file.calibration))
}
