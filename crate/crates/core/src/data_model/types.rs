use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A daily precipitation series on the grid calendar.
///
/// Values are dense over the grid's common date span. Missing days are stored
/// as `NaN` and counted as gaps; every present value is finite and `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RainGridPoint {
    pub point_id: String,
    pub lat: f64,
    pub lon: f64,
    pub series: Vec<f64>,
}

impl RainGridPoint {
    pub fn gap_count(&self) -> usize {
        self.series.iter().filter(|v| v.is_nan()).count()
    }
}

/// Gridded daily precipitation. All points share one calendar starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct RainGrid {
    start: NaiveDate,
    n_days: usize,
    points: Vec<RainGridPoint>,
}

impl RainGrid {
    pub fn new(start: NaiveDate, n_days: usize, points: Vec<RainGridPoint>) -> Result<Self> {
        for p in &points {
            if p.series.len() != n_days {
                return Err(Error::validation(
                    format!("grid point {}", p.point_id),
                    format!("series has {} days, grid calendar has {}", p.series.len(), n_days),
                ));
            }
            validate_lat_lon(&p.point_id, p.lat, p.lon)?;
            if let Some(v) = p.series.iter().find(|v| !v.is_nan() && (*v < &0.0 || v.is_infinite())) {
                return Err(Error::validation(
                    format!("grid point {}", p.point_id),
                    format!("invalid precipitation value {v}"),
                ));
            }
        }
        Ok(RainGrid {
            start,
            n_days,
            points,
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.n_days as i64 - 1)
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn points(&self) -> &[RainGridPoint] {
        &self.points
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    /// Index of `date` on the grid calendar, if covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.n_days).then_some(offset as usize)
    }

    /// Calendar years fully covered by the grid span.
    pub fn complete_years(&self) -> Vec<i32> {
        let first = if self.start.ordinal() == 1 {
            self.start.year()
        } else {
            self.start.year() + 1
        };
        let end = self.end();
        let last = if end.month() == 12 && end.day() == 31 {
            end.year()
        } else {
            end.year() - 1
        };
        (first..=last).collect()
    }

    pub fn gap_count(&self) -> usize {
        self.points.iter().map(RainGridPoint::gap_count).sum()
    }
}

pub(crate) fn validate_lat_lon(id: &str, lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::validation(
            format!("location of {id}"),
            format!("({lat}, {lon}) outside valid latitude/longitude range"),
        ));
    }
    Ok(())
}

/// Presence/absence flag used by several underwriting variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresAbs {
    Pres,
    Abs,
}

impl PresAbs {
    pub fn as_str(self) -> &'static str {
        match self {
            PresAbs::Pres => "pres",
            PresAbs::Abs => "abs",
        }
    }

    pub fn from_bool(present: bool) -> Self {
        if present {
            PresAbs::Pres
        } else {
            PresAbs::Abs
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub building_id: String,
    pub lat: f64,
    pub lon: f64,
    /// Planar coordinates (meters) in the local projection shared with the geometry layers.
    pub x_m: f64,
    pub y_m: f64,
    pub municipality_code: String,
    pub living_surface: f64,
    pub house_value: f64,
    pub construction_period: String,
    pub nb_floors: u32,
    pub wall_material: String,
    pub outbuilding_surface: f64,
    pub pres_adjoining: bool,
    pub length_partywall: f64,
}

impl Building {
    pub fn validate(&self) -> Result<()> {
        let ctx = || format!("building {}", self.building_id);
        validate_lat_lon(&self.building_id, self.lat, self.lon)?;
        if !(self.living_surface > 0.0) {
            return Err(Error::validation(ctx(), "living_surface must be > 0"));
        }
        if !(self.outbuilding_surface >= 0.0) || !(self.length_partywall >= 0.0) {
            return Err(Error::validation(
                ctx(),
                "outbuilding_surface and length_partywall must be >= 0",
            ));
        }
        if !self.x_m.is_finite() || !self.y_m.is_finite() || !self.house_value.is_finite() {
            return Err(Error::validation(ctx(), "non-finite numeric field"));
        }
        Ok(())
    }
}

/// Regulatory flood zoning class (TRI). `None` marks buildings outside any zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TriClass {
    #[default]
    None,
    Low,
    Medium,
    High,
}

impl TriClass {
    pub const ALL: [TriClass; 4] = [TriClass::None, TriClass::Low, TriClass::Medium, TriClass::High];

    pub fn as_str(self) -> &'static str {
        match self {
            TriClass::None => "none",
            TriClass::Low => "low",
            TriClass::Medium => "medium",
            TriClass::High => "high",
        }
    }
}

impl FromStr for TriClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TriClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown TRI class `{s}`")))
    }
}

/// Municipal flood prevention plan class; seven levels including `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PpriClass {
    #[default]
    None,
    Residual,
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl PpriClass {
    pub const ALL: [PpriClass; 7] = [
        PpriClass::None,
        PpriClass::Residual,
        PpriClass::VeryLow,
        PpriClass::Low,
        PpriClass::Medium,
        PpriClass::High,
        PpriClass::VeryHigh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PpriClass::None => "none",
            PpriClass::Residual => "residual",
            PpriClass::VeryLow => "very_low",
            PpriClass::Low => "low",
            PpriClass::Medium => "medium",
            PpriClass::High => "high",
            PpriClass::VeryHigh => "very_high",
        }
    }
}

pub const MAX_HYDRO_ZONES: usize = 24;
pub const MAX_CLIM_REGIONS: usize = 10;

fn none_level() -> String {
    "none".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardContext {
    pub building_id: String,
    #[serde(default)]
    pub tri_overflow: TriClass,
    #[serde(default)]
    pub tri_runoff: TriClass,
    #[serde(default)]
    pub ppri: PpriClass,
    #[serde(default = "none_level")]
    pub hydro_zone: String,
    #[serde(default = "none_level")]
    pub clim_region: String,
    #[serde(default)]
    pub nb_catnat: u32,
}

impl HazardContext {
    /// Context for a building with no hazard record: every zoning at its `none` level.
    pub fn none_for(building_id: &str) -> Self {
        HazardContext {
            building_id: building_id.to_string(),
            tri_overflow: TriClass::None,
            tri_runoff: TriClass::None,
            ppri: PpriClass::None,
            hydro_zone: none_level(),
            clim_region: none_level(),
            nb_catnat: 0,
        }
    }
}

fn default_exposure() -> f64 {
    1.0
}

/// One insured building for one calendar year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyYear {
    pub policy_id: String,
    pub building_id: String,
    pub year: i32,
    #[serde(default = "default_exposure")]
    pub exposure: f64,
    pub nb_rooms: u32,
    pub mov_assets: f64,
    pub prec_obj: f64,
    pub amenity_elmt: PresAbs,
    pub outbuilg_size: PresAbs,
    pub claim_nb: u8,
}

impl PolicyYear {
    pub fn validate(&self) -> Result<()> {
        let ctx = || format!("policy {} year {}", self.policy_id, self.year);
        if self.claim_nb > 1 {
            return Err(Error::validation(ctx(), "claim_nb must be 0 or 1"));
        }
        if !(self.exposure > 0.0 && self.exposure <= 1.0) {
            return Err(Error::validation(ctx(), format!("exposure {} outside (0, 1]", self.exposure)));
        }
        if !(self.mov_assets >= 0.0) || !(self.prec_obj >= 0.0) {
            return Err(Error::validation(ctx(), "mov_assets and prec_obj must be >= 0"));
        }
        Ok(())
    }
}

/// A flood claim with its inflation-adjusted cost in euros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub policy_id: String,
    pub building_id: String,
    pub flood_date: NaiveDate,
    pub amount: f64,
}

/// Modelling target: claim occurrence (frequency table) or claim cost (severity table).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Occurrence,
    Severity,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Occurrence => "occurrence",
            Task::Severity => "severity",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occurrence" | "frequency" => Ok(Task::Occurrence),
            "severity" | "cost" => Ok(Task::Severity),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}
