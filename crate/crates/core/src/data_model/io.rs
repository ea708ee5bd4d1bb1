//! CSV ingestion and persistence for the raw inputs.
//!
//! Every reader validates as it goes and reports the offending file line.
//! Writers produce exactly the layout their reader accepts, so that
//! `ingest -> persist -> re-ingest` is the identity on records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::{
    Building, ClaimRecord, HazardContext, PolicyYear, RainGrid, RainGridPoint, MAX_CLIM_REGIONS,
    MAX_HYDRO_ZONES,
};
use crate::error::{Error, Result};

pub const RAIN_GRID_HEADER: [&str; 5] = ["point_id", "lat", "lon", "date", "precip_mm"];

pub const BUILDING_HEADER: [&str; 14] = [
    "building_id",
    "lat",
    "lon",
    "x_m",
    "y_m",
    "municipality_code",
    "living_surface",
    "house_value",
    "construction_period",
    "nb_floors",
    "wall_material",
    "outbuilding_surface",
    "pres_adjoining",
    "length_partywall",
];

pub const POLICY_HEADER: [&str; 10] = [
    "policy_id",
    "building_id",
    "year",
    "exposure",
    "nb_rooms",
    "mov_assets",
    "prec_obj",
    "amenity_elmt",
    "outbuilg_size",
    "claim_nb",
];

pub const CLAIM_HEADER: [&str; 4] = ["policy_id", "building_id", "flood_date", "amount"];

pub const HAZARD_HEADER: [&str; 7] = [
    "building_id",
    "tri_overflow",
    "tri_runoff",
    "ppri",
    "hydro_zone",
    "clim_region",
    "nb_catnat",
];

/// Claims below this amount (euros) are dropped at ingestion.
pub const DEFAULT_CLAIM_FLOOR: f64 = 5.0;

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        csv::ErrorKind::Deserialize { err, .. } => parse_err(path, line, err.to_string()),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// Fast `YYYY-MM-DD` parser for the bulk rain file.
pub(crate) fn parse_ymd(bytes: &[u8]) -> Option<NaiveDate> {
    if bytes.len() != 10 || bytes[4] != b'-' || bytes[7] != b'-' {
        return None;
    }
    let num = |r: std::ops::Range<usize>| -> Option<u32> {
        bytes[r].iter().try_fold(0u32, |acc, &b| {
            b.is_ascii_digit().then(|| acc * 10 + u32::from(b - b'0'))
        })
    };
    NaiveDate::from_ymd_opt(num(0..4)? as i32, num(5..7)?, num(8..10)?)
}

pub(crate) fn format_ymd(date: NaiveDate) -> String {
    format!("{:04}-{:02}-{:02}", date.year(), date.month(), date.day())
}

fn check_header(path: &Path, found: &csv::StringRecord, required: &[&str], optional: &[&str]) -> Result<()> {
    let cols: Vec<&str> = found.iter().collect();
    for r in required {
        if !cols.contains(r) {
            return Err(parse_err(path, 1, format!("header is missing column `{r}`")));
        }
    }
    for c in &cols {
        if !required.contains(c) && !optional.contains(c) {
            return Err(parse_err(path, 1, format!("unexpected column `{c}` in header")));
        }
    }
    Ok(())
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Deserializes every row of a CSV file after checking its header.
pub fn read_records<T: DeserializeOwned>(path: &Path, required: &[&str], optional: &[&str]) -> Result<Vec<T>> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, required, optional)?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
}

/// Writes rows with a header; creates parent directories.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        wtr.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

struct PointAccumulator {
    point_id: String,
    lat: f64,
    lon: f64,
    last_day: Option<NaiveDate>,
    values: Vec<(NaiveDate, f64)>,
}

/// Reads `point_id,lat,lon,date,precip_mm` rows into a validated grid.
///
/// Rows of one point must appear with strictly increasing dates; points may be
/// interleaved. The grid calendar is the union of all dates, and days a point
/// lacks become gaps.
pub fn ingest_rain_grid(path: &Path) -> Result<RainGrid> {
    let mut rdr = open_reader(path)?;
    let header = rdr.byte_headers().map_err(|e| csv_err(path, e))?.clone();
    let names: Vec<&[u8]> = header.iter().collect();
    let expected: Vec<&[u8]> = RAIN_GRID_HEADER.iter().map(|s| s.as_bytes()).collect();
    if names != expected {
        return Err(parse_err(
            path,
            1,
            format!("header must be `{}`", RAIN_GRID_HEADER.join(",")),
        ));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut points: Vec<PointAccumulator> = Vec::new();
    let mut record = csv::ByteRecord::new();
    let mut line = 1u64;
    loop {
        let more = rdr.read_byte_record(&mut record).map_err(|e| csv_err(path, e))?;
        if !more {
            break;
        }
        line = record.position().map(|p| p.line()).unwrap_or(line + 1);
        if record.len() != 5 {
            return Err(parse_err(path, line, format!("expected 5 fields, found {}", record.len())));
        }
        let text = |i: usize| std::str::from_utf8(&record[i]).map_err(|_| parse_err(path, line, "invalid utf-8"));
        let number = |i: usize, what: &str| -> Result<f64> {
            text(i)?
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("malformed {what} `{}`", String::from_utf8_lossy(&record[i]))))
        };
        let id = text(0)?.trim();
        let lat = number(1, "lat")?;
        let lon = number(2, "lon")?;
        let date = parse_ymd(record[3].trim_ascii())
            .ok_or_else(|| parse_err(path, line, format!("malformed date `{}`", String::from_utf8_lossy(&record[3]))))?;
        let precip = number(4, "precip_mm")?;
        if !precip.is_finite() || precip < 0.0 {
            return Err(Error::validation(
                format!("{}:{line}", path.display()),
                format!("precipitation must be finite and >= 0, found {precip}"),
            ));
        }

        let slot = match index.get(id) {
            Some(&i) => i,
            None => {
                index.insert(id.to_string(), points.len());
                points.push(PointAccumulator {
                    point_id: id.to_string(),
                    lat,
                    lon,
                    last_day: None,
                    values: Vec::new(),
                });
                points.len() - 1
            }
        };
        let acc = &mut points[slot];
        if acc.lat != lat || acc.lon != lon {
            return Err(parse_err(path, line, format!("point {id} changes location")));
        }
        if let Some(prev) = acc.last_day {
            if date <= prev {
                return Err(parse_err(
                    path,
                    line,
                    format!("dates for point {id} must be strictly increasing ({date} after {prev})"),
                ));
            }
        }
        acc.last_day = Some(date);
        acc.values.push((date, precip));
    }

    if points.is_empty() {
        return Err(parse_err(path, line, "no grid rows"));
    }
    let start = points.iter().filter_map(|p| p.values.first().map(|v| v.0)).min().expect("non-empty");
    let end = points.iter().filter_map(|p| p.last_day).max().expect("non-empty");
    let n_days = (end - start).num_days() as usize + 1;
    let dense: Vec<RainGridPoint> = points
        .into_iter()
        .map(|acc| {
            let mut series = vec![f64::NAN; n_days];
            for (d, v) in acc.values {
                series[(d - start).num_days() as usize] = v;
            }
            RainGridPoint {
                point_id: acc.point_id,
                lat: acc.lat,
                lon: acc.lon,
                series,
            }
        })
        .collect();
    let grid = RainGrid::new(start, n_days, dense)?;
    let gaps = grid.gap_count();
    if gaps > 0 {
        log::warn!("{}: {gaps} missing point-days flagged as gaps", path.display());
    }
    log::info!(
        "{}: {} grid points, {} .. {} ({} days)",
        path.display(),
        grid.points().len(),
        grid.start(),
        grid.end(),
        grid.n_days()
    );
    Ok(grid)
}

/// Writes the grid in long format, skipping gap days.
pub fn write_rain_grid(path: &Path, grid: &RainGrid) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let dates: Vec<String> = (0..grid.n_days()).map(|i| format_ymd(grid.date_at(i))).collect();
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", RAIN_GRID_HEADER.join(",")).map_err(io)?;
    for p in grid.points() {
        let prefix = format!("{},{},{},", p.point_id, p.lat, p.lon);
        for (date, v) in dates.iter().zip(&p.series) {
            if v.is_nan() {
                continue;
            }
            w.write_all(prefix.as_bytes()).map_err(io)?;
            writeln!(w, "{date},{v}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Paths of the four portfolio tables.
#[derive(Debug, Clone)]
pub struct PortfolioPaths {
    pub policies: PathBuf,
    pub claims: PathBuf,
    pub buildings: PathBuf,
    pub hazard: PathBuf,
}

impl PortfolioPaths {
    pub fn in_dir(dir: &Path) -> Self {
        PortfolioPaths {
            policies: dir.join("policies.csv"),
            claims: dir.join("claims.csv"),
            buildings: dir.join("buildings.csv"),
            hazard: dir.join("hazard.csv"),
        }
    }
}

/// Validated, cross-linked portfolio tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub policies: Vec<PolicyYear>,
    pub claims: Vec<ClaimRecord>,
    pub buildings: Vec<Building>,
    /// Hazard context per building; buildings without a record get the `none` levels.
    pub hazard: BTreeMap<String, HazardContext>,
    pub rejected_claims: usize,
}

impl Portfolio {
    pub fn positive_rate(&self) -> f64 {
        let pos = self.policies.iter().filter(|p| p.claim_nb == 1).count();
        pos as f64 / self.policies.len().max(1) as f64
    }

    pub fn building_index(&self) -> HashMap<&str, &Building> {
        self.buildings.iter().map(|b| (b.building_id.as_str(), b)).collect()
    }

    /// Links records and checks every cross-table invariant.
    ///
    /// Claims under `claim_floor` are dropped and counted in `rejected_claims`.
    pub fn link(
        policies: Vec<PolicyYear>,
        claims: Vec<ClaimRecord>,
        buildings: Vec<Building>,
        hazard_rows: Vec<HazardContext>,
        claim_floor: f64,
    ) -> Result<Self> {
        let mut building_ids = HashSet::new();
        for b in &buildings {
            b.validate()?;
            if !building_ids.insert(b.building_id.as_str()) {
                return Err(Error::validation("buildings", format!("duplicate building_id {}", b.building_id)));
            }
        }

        let mut policy_keys: HashMap<(&str, i32), &PolicyYear> = HashMap::new();
        let mut dangling = Vec::new();
        for p in &policies {
            p.validate()?;
            if policy_keys.insert((p.policy_id.as_str(), p.year), p).is_some() {
                return Err(Error::validation(
                    "policies",
                    format!("duplicate policy-year {} {}", p.policy_id, p.year),
                ));
            }
            if !building_ids.contains(p.building_id.as_str()) {
                dangling.push(format!("{}->{}", p.policy_id, p.building_id));
            }
        }
        if !dangling.is_empty() {
            dangling.dedup();
            return Err(Error::Reference {
                context: "policies (unknown building_id)".into(),
                ids: dangling,
            });
        }

        let mut hazard = BTreeMap::new();
        let mut zones = HashSet::new();
        let mut regions = HashSet::new();
        for h in hazard_rows {
            if !building_ids.contains(h.building_id.as_str()) {
                dangling.push(h.building_id.clone());
                continue;
            }
            zones.insert(h.hydro_zone.clone());
            regions.insert(h.clim_region.clone());
            hazard.insert(h.building_id.clone(), h);
        }
        if !dangling.is_empty() {
            return Err(Error::Reference {
                context: "hazard (unknown building_id)".into(),
                ids: dangling,
            });
        }
        if zones.len() > MAX_HYDRO_ZONES || regions.len() > MAX_CLIM_REGIONS {
            return Err(Error::validation(
                "hazard",
                format!(
                    "{} hydro zones / {} climate regions exceed the {MAX_HYDRO_ZONES}/{MAX_CLIM_REGIONS} limits",
                    zones.len(),
                    regions.len()
                ),
            ));
        }
        let mut defaulted = 0;
        for b in &buildings {
            if !hazard.contains_key(&b.building_id) {
                hazard.insert(b.building_id.clone(), HazardContext::none_for(&b.building_id));
                defaulted += 1;
            }
        }
        if defaulted > 0 {
            log::info!("{defaulted} buildings without hazard context default to `none` levels");
        }

        let mut kept = Vec::with_capacity(claims.len());
        let mut rejected = 0;
        let mut claimed: HashSet<(&str, i32)> = HashSet::new();
        let mut inconsistent = Vec::new();
        for c in &claims {
            let key = (c.policy_id.as_str(), c.flood_date.year());
            match policy_keys.get(&key) {
                None => dangling.push(format!("{}@{}", c.policy_id, c.flood_date)),
                Some(p) => {
                    if p.building_id != c.building_id {
                        dangling.push(format!("{}:{}", c.policy_id, c.building_id));
                    } else if p.claim_nb == 0 {
                        inconsistent.push(format!("{}@{}", c.policy_id, c.flood_date));
                    }
                }
            }
        }
        if !dangling.is_empty() {
            return Err(Error::Reference {
                context: "claims (no matching policy-year)".into(),
                ids: dangling,
            });
        }
        if !inconsistent.is_empty() {
            return Err(Error::validation(
                "claims",
                format!("claim attached to policy-year with claim_nb=0: {}", inconsistent.join(", ")),
            ));
        }
        for c in claims {
            if !c.amount.is_finite() || c.amount <= 0.0 {
                return Err(Error::validation(
                    format!("claim {}@{}", c.policy_id, c.flood_date),
                    "amount must be > 0",
                ));
            }
            if c.amount < claim_floor {
                rejected += 1;
                continue;
            }
            kept.push(c);
        }
        for c in &kept {
            if !claimed.insert((c.policy_id.as_str(), c.flood_date.year())) {
                return Err(Error::validation(
                    "claims",
                    format!("more than one claim for {} in {}", c.policy_id, c.flood_date.year()),
                ));
            }
        }
        let unmatched = policies
            .iter()
            .filter(|p| p.claim_nb == 1 && !claimed.contains(&(p.policy_id.as_str(), p.year)))
            .count();
        if rejected > 0 {
            log::warn!("{rejected} claims below the {claim_floor} EUR floor were rejected");
        }
        if unmatched > 0 {
            log::warn!("{unmatched} policy-years with claim_nb=1 have no retained claim record");
        }

        Ok(Portfolio {
            policies,
            claims: kept,
            buildings,
            hazard,
            rejected_claims: rejected,
        })
    }
}

/// Loads and cross-validates the four portfolio tables.
pub fn ingest_portfolio(paths: &PortfolioPaths, claim_floor: f64) -> Result<Portfolio> {
    let policies: Vec<PolicyYear> =
        read_records(&paths.policies, &without(&POLICY_HEADER, "exposure"), &["exposure"])?;
    let claims: Vec<ClaimRecord> = read_records(&paths.claims, &CLAIM_HEADER, &[])?;
    let buildings: Vec<Building> = read_records(&paths.buildings, &BUILDING_HEADER, &[])?;
    let hazard: Vec<HazardContext> = read_records(&paths.hazard, &HAZARD_HEADER[..1], &HAZARD_HEADER[1..])?;
    let portfolio = Portfolio::link(policies, claims, buildings, hazard, claim_floor)?;
    log::info!(
        "portfolio: {} policy-years, {} claims, {} buildings, positive rate {:.4}%",
        portfolio.policies.len(),
        portfolio.claims.len(),
        portfolio.buildings.len(),
        100.0 * portfolio.positive_rate()
    );
    Ok(portfolio)
}

fn without<'a>(header: &[&'a str], skip: &str) -> Vec<&'a str> {
    header.iter().copied().filter(|h| *h != skip).collect()
}

/// Persists the portfolio in the layout `ingest_portfolio` reads.
pub fn write_portfolio(paths: &PortfolioPaths, portfolio: &Portfolio) -> Result<()> {
    write_records(&paths.policies, &portfolio.policies)?;
    write_records(&paths.claims, &portfolio.claims)?;
    write_records(&paths.buildings, &portfolio.buildings)?;
    let hazard: Vec<&HazardContext> = portfolio.hazard.values().collect();
    write_records(&paths.hazard, &hazard)
}
