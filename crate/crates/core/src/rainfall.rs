//! Rainfall accumulation windows, empirical-CDF transforms and the
//! MILRE / annual-MILRE extreme-event indicators.
//!
//! For a building, the local rainfall signal of window `nd` on day `d` is the
//! maximum, over the four nearest grid points, of the trailing `nd`-day sum
//! ending on `d`. MILRE maps the event-day value of every window to its
//! empirical probability within that window's full local history and keeps the
//! largest. The annual variant does the same on per-year maxima.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;

use crate::data_model::{Building, RainGrid};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOWS: [u32; 6] = [1, 3, 5, 7, 10, 30];

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Trailing-window rainfall sums for one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulationSeries {
    pub point_id: String,
    pub window: u32,
    /// Sum over the `window` days ending on each calendar day; `NaN` where the
    /// window is incomplete (series start or a gap inside it).
    pub values: Vec<f64>,
    /// Number of days with a full trailing window.
    pub valid_days: usize,
}

impl AccumulationSeries {
    /// False when no day has a full window, e.g. a window longer than the series.
    pub fn is_usable(&self) -> bool {
        self.valid_days > 0
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }
}

/// Rolling `window`-day sums of a daily series.
pub fn accumulate(point_id: &str, series: &[f64], window: u32) -> Result<AccumulationSeries> {
    if window == 0 {
        return Err(Error::invalid("accumulation window must be >= 1 day"));
    }
    let nd = window as usize;
    let mut values = vec![f64::NAN; series.len()];
    let mut valid_days = 0;
    if nd <= series.len() {
        for d in nd - 1..series.len() {
            let sum: f64 = series[d + 1 - nd..=d].iter().sum();
            if !sum.is_nan() {
                values[d] = sum;
                valid_days += 1;
            }
        }
    } else {
        log::warn!("point {point_id}: window {nd} exceeds the {}-day series, unusable", series.len());
    }
    Ok(AccumulationSeries {
        point_id: point_id.to_string(),
        window,
        values,
        valid_days,
    })
}

/// Share of `history` values `<= x_star`. `NaN` entries are not part of the sample.
pub fn empirical_prob(history: &[f64], x_star: f64) -> Result<f64> {
    if !x_star.is_finite() {
        return Err(Error::invalid(format!("event value {x_star} is not finite")));
    }
    let (mut m, mut below) = (0usize, 0usize);
    for &v in history {
        if v.is_nan() {
            continue;
        }
        m += 1;
        if v <= x_star {
            below += 1;
        }
    }
    if m == 0 {
        return Err(Error::InsufficientData("empirical probability of an empty history".into()));
    }
    Ok(below as f64 / m as f64)
}

/// Indices of the four grid points closest to `(lat, lon)`, nearest first.
/// Equal distances keep grid order.
pub fn nearest_four(grid: &RainGrid, lat: f64, lon: f64) -> Result<[usize; 4]> {
    let pts = grid.points();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "nearest-four lookup needs >= 4 grid points, grid has {}",
            pts.len()
        )));
    }
    let mut best: [(f64, usize); 4] = [(f64::INFINITY, usize::MAX); 4];
    for (i, p) in pts.iter().enumerate() {
        let d = haversine_m(lat, lon, p.lat, p.lon);
        if d < best[3].0 {
            let mut j = 3;
            while j > 0 && d < best[j - 1].0 {
                best[j] = best[j - 1];
                j -= 1;
            }
            best[j] = (d, i);
        }
    }
    Ok(best.map(|(_, i)| i))
}

/// Window-level local history: elementwise max of the four neighbors' sums.
#[derive(Debug, Clone)]
pub struct LocalWindow {
    pub window: u32,
    pub series: Vec<f64>,
    pub valid_days: usize,
    /// Annual maximum per complete calendar year.
    pub annual_max: BTreeMap<i32, f64>,
}

/// Everything needed to score events at locations sharing a neighbor set.
#[derive(Debug, Clone)]
pub struct LocalClimate {
    pub neighbors: [usize; 4],
    pub windows: Vec<LocalWindow>,
    start: NaiveDate,
    exclude_event: bool,
}

impl LocalClimate {
    pub fn build(grid: &RainGrid, neighbors: [usize; 4], windows: &[u32]) -> Result<Self> {
        // Complete years: inside the grid span with no raw gap at any neighbor.
        let years: Vec<(i32, usize, usize)> = grid
            .complete_years()
            .into_iter()
            .filter_map(|y| {
                let lo = grid.index_of(NaiveDate::from_ymd_opt(y, 1, 1)?)?;
                let hi = grid.index_of(NaiveDate::from_ymd_opt(y, 12, 31)?)?;
                let gap = neighbors
                    .iter()
                    .any(|&i| grid.points()[i].series[lo..=hi].iter().any(|v| v.is_nan()));
                (!gap).then_some((y, lo, hi))
            })
            .collect();
        let mut out = Vec::with_capacity(windows.len());
        for &w in windows {
            let mut local: Option<Vec<f64>> = None;
            for &i in &neighbors {
                let p = &grid.points()[i];
                let acc = accumulate(&p.point_id, &p.series, w)?;
                local = Some(match local {
                    None => acc.values,
                    Some(mut cur) => {
                        for (c, v) in cur.iter_mut().zip(acc.values) {
                            // NaN propagates: a day is valid only if all four points are.
                            *c = if c.is_nan() || v.is_nan() { f64::NAN } else { c.max(v) };
                        }
                        cur
                    }
                });
            }
            let series = local.expect("four neighbors");
            let valid_days = series.iter().filter(|v| !v.is_nan()).count();
            let mut annual_max = BTreeMap::new();
            for &(y, lo, hi) in &years {
                // Leading partial windows of the record are skipped, not padded.
                let max = series[lo..=hi]
                    .iter()
                    .copied()
                    .filter(|v| !v.is_nan())
                    .fold(f64::NEG_INFINITY, f64::max);
                if max.is_finite() {
                    annual_max.insert(y, max);
                }
            }
            out.push(LocalWindow {
                window: w,
                series,
                valid_days,
                annual_max,
            });
        }
        Ok(LocalClimate {
            neighbors,
            windows: out,
            start: grid.start(),
            exclude_event: false,
        })
    }

    /// Leave the scored day (or year) out of its own reference sample.
    /// The default keeps it, so a record event scores exactly 1.
    pub fn excluding_event(mut self, exclude: bool) -> Self {
        self.exclude_event = exclude;
        self
    }

    fn prob(&self, history: &[f64], x: f64) -> Result<f64> {
        if !self.exclude_event {
            return empirical_prob(history, x);
        }
        let m = history.iter().filter(|v| !v.is_nan()).count();
        let below = history.iter().filter(|v| **v <= x).count();
        if m < 2 {
            return Err(Error::InsufficientData("history has no values besides the event".into()));
        }
        Ok((below - 1) as f64 / (m - 1) as f64)
    }

    fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0).then_some(off as usize)
    }

    /// Per-window local accumulated value on `date`.
    pub fn values_on(&self, date: NaiveDate) -> Vec<(u32, f64)> {
        let idx = self.index_of(date);
        self.windows
            .iter()
            .map(|w| {
                let v = idx.and_then(|i| w.series.get(i).copied()).unwrap_or(f64::NAN);
                (w.window, v)
            })
            .collect()
    }

    /// MILRE for an event on `date`.
    pub fn milre(&self, date: NaiveDate) -> Result<MilreValue> {
        let idx = self.index_of(date);
        let mut per_window = Vec::with_capacity(self.windows.len());
        for w in &self.windows {
            let x = idx.and_then(|i| w.series.get(i).copied()).unwrap_or(f64::NAN);
            if x.is_nan() || w.valid_days == 0 {
                return Err(Error::InsufficientData(format!(
                    "window {}d has no full trailing accumulation on {date}",
                    w.window
                )));
            }
            per_window.push((w.window, self.prob(&w.series, x)?));
        }
        Ok(MilreValue::from_windows(per_window))
    }

    /// Annual MILRE for calendar `year`.
    pub fn ann_milre(&self, year: i32) -> Result<MilreValue> {
        let mut per_window = Vec::with_capacity(self.windows.len());
        for w in &self.windows {
            let Some(&y_star) = w.annual_max.get(&year) else {
                return Err(Error::InsufficientData(format!(
                    "year {year} is not a complete year of the {}d local series",
                    w.window
                )));
            };
            let maxima: Vec<f64> = w.annual_max.values().copied().collect();
            per_window.push((w.window, self.prob(&maxima, y_star)?));
        }
        Ok(MilreValue::from_windows(per_window))
    }
}

/// Per-window empirical probabilities and their maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilreValue {
    pub per_window: Vec<(u32, f64)>,
    pub value: f64,
}

impl MilreValue {
    pub fn from_windows(per_window: Vec<(u32, f64)>) -> Self {
        let value = per_window.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        MilreValue { per_window, value }
    }
}

/// Per-window maximum accumulated value among the four nearest grid points on `date`.
pub fn nearest_four_max(grid: &RainGrid, lat: f64, lon: f64, date: NaiveDate, windows: &[u32]) -> Result<Vec<(u32, f64)>> {
    let neighbors = nearest_four(grid, lat, lon)?;
    let idx = grid
        .index_of(date)
        .ok_or_else(|| Error::InsufficientData(format!("{date} outside the grid calendar")))?;
    windows
        .iter()
        .map(|&w| {
            let mut best = f64::NEG_INFINITY;
            for &i in &neighbors {
                let p = &grid.points()[i];
                let v = accumulate(&p.point_id, &p.series, w)?.values[idx];
                if v.is_nan() {
                    return Err(Error::InsufficientData(format!(
                        "window {w}d incomplete on {date} at point {}",
                        p.point_id
                    )));
                }
                best = best.max(v);
            }
            Ok((w, best))
        })
        .collect()
}

/// MILRE for a flood on `flood_date` at `building`.
pub fn milre(building: &Building, flood_date: NaiveDate, grid: &RainGrid, windows: &[u32]) -> Result<MilreValue> {
    let neighbors = nearest_four(grid, building.lat, building.lon)?;
    LocalClimate::build(grid, neighbors, windows)?.milre(flood_date)
}

/// Annual MILRE of `year` at `building`.
pub fn ann_milre(building: &Building, year: i32, grid: &RainGrid, windows: &[u32]) -> Result<MilreValue> {
    let neighbors = nearest_four(grid, building.lat, building.lon)?;
    LocalClimate::build(grid, neighbors, windows)?.ann_milre(year)
}

/// Indicator values for a whole portfolio.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorSet {
    /// `(building_id, year)` -> annual MILRE.
    pub annual: BTreeMap<(String, i32), MilreValue>,
    /// `(building_id, flood_date)` -> event MILRE.
    pub event: BTreeMap<(String, NaiveDate), MilreValue>,
}

/// One row of `indicators.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct IndicatorRow {
    pub building_id: String,
    pub year_or_date: String,
    pub window: u32,
    pub prob: f64,
    pub milre_or_annmilre: f64,
}

impl IndicatorSet {
    /// Computes annual MILRE for every `(building, year)` in `years` and event
    /// MILRE for every `(building, date)` in `events`.
    ///
    /// Buildings sharing the same four nearest grid points share one local
    /// climate, which is built once and dropped after use.
    pub fn compute(
        grid: &RainGrid,
        windows: &[u32],
        buildings: &[Building],
        years: &[(String, i32)],
        events: &[(String, NaiveDate)],
    ) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("window list is empty".into()));
        }
        let by_id: HashMap<&str, &Building> = buildings.iter().map(|b| (b.building_id.as_str(), b)).collect();
        let neighbors: Vec<Result<[usize; 4]>> = buildings
            .par_iter()
            .map(|b| nearest_four(grid, b.lat, b.lon))
            .collect();
        let mut nn_of: HashMap<&str, [usize; 4]> = HashMap::new();
        for (b, n) in buildings.iter().zip(neighbors) {
            nn_of.insert(b.building_id.as_str(), n?);
        }

        #[derive(Default)]
        struct Group<'s> {
            years: Vec<&'s (String, i32)>,
            events: Vec<&'s (String, NaiveDate)>,
        }
        let mut groups: BTreeMap<[usize; 4], Group> = BTreeMap::new();
        let lookup = |id: &str| -> Result<[usize; 4]> {
            if !by_id.contains_key(id) {
                return Err(Error::Reference {
                    context: "indicator subjects (unknown building)".into(),
                    ids: vec![id.to_string()],
                });
            }
            Ok(nn_of[id])
        };
        for y in years {
            groups.entry(lookup(&y.0)?).or_default().years.push(y);
        }
        for e in events {
            groups.entry(lookup(&e.0)?).or_default().events.push(e);
        }

        type Scored = (Vec<((String, i32), MilreValue)>, Vec<((String, NaiveDate), MilreValue)>);
        let scored: Vec<Result<Scored>> = groups
            .into_par_iter()
            .map(|(nn, g)| {
                let climate = LocalClimate::build(grid, nn, windows)?;
                let annual = g
                    .years
                    .iter()
                    .map(|(id, y)| {
                        climate
                            .ann_milre(*y)
                            .map(|v| ((id.clone(), *y), v))
                            .map_err(|e| Error::InsufficientData(format!("building {id}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let event = g
                    .events
                    .iter()
                    .map(|(id, d)| {
                        climate
                            .milre(*d)
                            .map(|v| ((id.clone(), *d), v))
                            .map_err(|e| Error::InsufficientData(format!("building {id}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((annual, event))
            })
            .collect();

        let mut set = IndicatorSet::default();
        for s in scored {
            let (annual, event) = s?;
            set.annual.extend(annual);
            set.event.extend(event);
        }
        Ok(set)
    }

    /// Long-format rows: one per subject and window.
    pub fn rows(&self) -> Vec<IndicatorRow> {
        let mut rows = Vec::new();
        for ((id, year), v) in &self.annual {
            for &(w, p) in &v.per_window {
                rows.push(IndicatorRow {
                    building_id: id.clone(),
                    year_or_date: year.to_string(),
                    window: w,
                    prob: p,
                    milre_or_annmilre: v.value,
                });
            }
        }
        for ((id, date), v) in &self.event {
            for &(w, p) in &v.per_window {
                rows.push(IndicatorRow {
                    building_id: id.clone(),
                    year_or_date: crate::data_model::io::format_ymd(*date),
                    window: w,
                    prob: p,
                    milre_or_annmilre: v.value,
                });
            }
        }
        rows
    }

    /// Rebuilds the set from `indicators.csv` rows. A 4-character key is a year,
    /// a 10-character key an event date.
    pub fn from_rows(rows: Vec<IndicatorRow>) -> Result<Self> {
        let mut annual: BTreeMap<(String, i32), Vec<(u32, f64)>> = BTreeMap::new();
        let mut event: BTreeMap<(String, NaiveDate), Vec<(u32, f64)>> = BTreeMap::new();
        for r in rows {
            let key = r.year_or_date.trim();
            if key.len() == 4 {
                let y: i32 = key
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad year `{key}` in indicators")))?;
                annual.entry((r.building_id, y)).or_default().push((r.window, r.prob));
            } else {
                let d = crate::data_model::io::parse_ymd(key.as_bytes())
                    .ok_or_else(|| Error::invalid(format!("bad date `{key}` in indicators")))?;
                event.entry((r.building_id, d)).or_default().push((r.window, r.prob));
            }
        }
        Ok(IndicatorSet {
            annual: annual.into_iter().map(|(k, v)| (k, MilreValue::from_windows(v))).collect(),
            event: event.into_iter().map(|(k, v)| (k, MilreValue::from_windows(v))).collect(),
        })
    }

    pub fn annual_value(&self, building_id: &str, year: i32) -> Option<f64> {
        self.annual.get(&(building_id.to_string(), year)).map(|v| v.value)
    }

    pub fn event_value(&self, building_id: &str, date: NaiveDate) -> Option<f64> {
        self.event.get(&(building_id.to_string(), date)).map(|v| v.value)
    }
}

/// Calendar year of a date; re-exported for callers building subject lists.
pub fn year_of(date: NaiveDate) -> i32 {
    date.year()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::RainGridPoint;
    use proptest::prelude::*;

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn accumulate_sums_trailing_window() {
        let acc = accumulate("p", &[1.0, 0.0, 2.0, 5.0], 3).unwrap();
        assert_eq!(acc.values[3], 7.0);
        assert_eq!(acc.values[2], 3.0);
        assert!(acc.values[0].is_nan() && acc.values[1].is_nan());
        assert_eq!(acc.valid_days, 2);
    }

    #[test]
    fn window_of_one_is_identity() {
        let s = [0.5, 3.25, 0.0, 9.0];
        let acc = accumulate("p", &s, 1).unwrap();
        assert_eq!(acc.values, s.to_vec());
        assert_eq!(acc.valid_days, 4);
    }

    #[test]
    fn window_longer_than_series_is_unusable() {
        let acc = accumulate("p", &[1.0, 2.0], 3).unwrap();
        assert!(!acc.is_usable());
        assert!(accumulate("p", &[1.0], 0).is_err());
    }

    #[test]
    fn gaps_invalidate_windows_that_contain_them() {
        let acc = accumulate("p", &[1.0, f64::NAN, 2.0, 3.0, 4.0], 2).unwrap();
        assert!(acc.values[1].is_nan() && acc.values[2].is_nan());
        assert_eq!(acc.values[3], 5.0);
        assert_eq!(acc.valid_days, 2);
    }

    #[test]
    fn accumulate_matches_prefix_sum_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let series: Vec<f64> = (0..365)
            .map(|_| if rng.random_bool(0.4) { rng.random_range(0.0..40.0) } else { 0.0 })
            .collect();
        let mut prefix = vec![0.0];
        for v in &series {
            prefix.push(prefix.last().unwrap() + v);
        }
        let acc = accumulate("p", &series, 10).unwrap();
        for d in 0..series.len() {
            if d < 9 {
                assert!(acc.values[d].is_nan());
            } else {
                let oracle = prefix[d + 1] - prefix[d - 9];
                assert!((acc.values[d] - oracle).abs() < 1e-9, "day {d}");
            }
        }
    }

    #[test]
    fn empirical_prob_examples() {
        let h = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_prob(&h, 4.0).unwrap(), 1.0);
        assert_eq!(empirical_prob(&h, 0.5).unwrap(), 0.0);
        assert_eq!(empirical_prob(&h, 2.5).unwrap(), 0.5);
        // non-strict inequality
        assert_eq!(empirical_prob(&h, 2.0).unwrap(), 0.5);
        assert!(empirical_prob(&[], 1.0).is_err());
        assert!(empirical_prob(&[f64::NAN], 1.0).is_err());
    }

    fn square_grid(values: [f64; 4]) -> RainGrid {
        // Four points at equal distance from (45, 2).
        let coords = [(45.1, 2.0), (44.9, 2.0), (45.0, 2.1414), (45.0, 1.8586)];
        let points = coords
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (&(lat, lon), v))| RainGridPoint {
                point_id: format!("g{i}"),
                lat,
                lon,
                series: vec![v; 3],
            })
            .collect();
        RainGrid::new(day(2000, 1, 1), 3, points).unwrap()
    }

    #[test]
    fn nearest_four_max_takes_the_largest_neighbor() {
        let grid = square_grid([1.0, 2.0, 3.0, 9.0]);
        let v = nearest_four_max(&grid, 45.0, 2.0, day(2000, 1, 3), &[1]).unwrap();
        assert_eq!(v, vec![(1, 9.0)]);
    }

    #[test]
    fn coincident_dominant_point_wins() {
        let mut grid_points = Vec::new();
        for (i, (lat, lon, v)) in [(45.0, 2.0, 20.0), (45.2, 2.0, 1.0), (45.0, 2.3, 2.0), (44.8, 2.0, 3.0), (46.0, 3.0, 50.0)]
            .into_iter()
            .enumerate()
        {
            grid_points.push(RainGridPoint {
                point_id: format!("g{i}"),
                lat,
                lon,
                series: vec![v; 2],
            });
        }
        let grid = RainGrid::new(day(2000, 1, 1), 2, grid_points).unwrap();
        assert_eq!(nearest_four(&grid, 45.0, 2.0).unwrap()[0], 0);
        let v = nearest_four_max(&grid, 45.0, 2.0, day(2000, 1, 2), &[1, 2]).unwrap();
        assert_eq!(v, vec![(1, 20.0), (2, 40.0)]);
    }

    #[test]
    fn nearest_four_needs_four_points() {
        let grid = RainGrid::new(
            day(2000, 1, 1),
            1,
            (0..3)
                .map(|i| RainGridPoint {
                    point_id: i.to_string(),
                    lat: 45.0 + i as f64,
                    lon: 2.0,
                    series: vec![0.0],
                })
                .collect(),
        )
        .unwrap();
        assert!(nearest_four(&grid, 45.0, 2.0).is_err());
    }

    #[test]
    fn milre_is_max_of_windows() {
        let v = MilreValue::from_windows(vec![(1, 0.40), (3, 0.90)]);
        assert_eq!(v.value, 0.90);
    }

    fn two_year_grid(event_boost: f64, event_year: i32) -> RainGrid {
        let start = day(2001, 1, 1);
        let n = (day(2004, 12, 31) - start).num_days() as usize + 1;
        let points = (0..4)
            .map(|i| {
                let series = (0..n)
                    .map(|d| {
                        let date = start + chrono::Duration::days(d as i64);
                        let base = ((d * 7 + i * 3) % 11) as f64 * 0.5;
                        if date.year() == event_year && date.ordinal() == 200 {
                            base + event_boost
                        } else {
                            base
                        }
                    })
                    .collect();
                RainGridPoint {
                    point_id: format!("g{i}"),
                    lat: 45.0 + (i / 2) as f64 * 0.1,
                    lon: 2.0 + (i % 2) as f64 * 0.1,
                    series,
                }
            })
            .collect();
        RainGrid::new(start, n, points).unwrap()
    }

    #[test]
    fn record_event_saturates_milre() {
        let grid = two_year_grid(500.0, 2003);
        let nn = nearest_four(&grid, 45.05, 2.05).unwrap();
        let c = LocalClimate::build(&grid, nn, &DEFAULT_WINDOWS).unwrap();
        let flood = NaiveDate::from_yo_opt(2003, 200).unwrap();
        let m = c.milre(flood).unwrap();
        assert_eq!(m.value, 1.0);
        assert_eq!(m.per_window[0], (1, 1.0));
        let a = c.ann_milre(2003).unwrap();
        assert_eq!(a.value, 1.0);
    }

    #[test]
    fn strict_minimum_year_has_zero_ann_milre() {
        let start = day(2001, 1, 1);
        let n = (day(2003, 12, 31) - start).num_days() as usize + 1;
        let points = (0..4)
            .map(|i| RainGridPoint {
                point_id: format!("g{i}"),
                lat: 45.0 + i as f64 * 0.01,
                lon: 2.0,
                series: (0..n)
                    .map(|d| {
                        let y = (start + chrono::Duration::days(d as i64)).year();
                        // 2002 is uniformly drier than any other year.
                        if y == 2002 { 0.0 } else { (d % 5) as f64 }
                    })
                    .collect(),
            })
            .collect();
        let grid = RainGrid::new(start, n, points).unwrap();
        let c = LocalClimate::build(&grid, [0, 1, 2, 3], &[1, 3]).unwrap();
        // 2002's maxima are below every other year's but count themselves.
        let v = c.ann_milre(2002).unwrap();
        assert!((v.value - 1.0 / 3.0).abs() < 1e-15);
        assert!(c.ann_milre(2000).is_err());
        // Against the other years only, it sits below everything.
        let c = c.excluding_event(true);
        assert_eq!(c.ann_milre(2002).unwrap().value, 0.0);
        assert_eq!(c.ann_milre(2001).unwrap().value, 1.0);
    }

    #[test]
    fn incomplete_year_is_rejected() {
        let start = day(2001, 3, 1);
        let n = 700;
        let points = (0..4)
            .map(|i| RainGridPoint {
                point_id: format!("g{i}"),
                lat: 45.0 + i as f64 * 0.01,
                lon: 2.0,
                series: vec![1.0; n],
            })
            .collect();
        let grid = RainGrid::new(start, n, points).unwrap();
        assert_eq!(grid.complete_years(), vec![2002]);
        let c = LocalClimate::build(&grid, [0, 1, 2, 3], &[1]).unwrap();
        assert!(c.ann_milre(2001).is_err());
        assert!(c.ann_milre(2002).is_ok());
        // Event before the first full 30-day window.
        let c30 = LocalClimate::build(&grid, [0, 1, 2, 3], &[30]).unwrap();
        assert!(c30.milre(day(2001, 3, 10)).is_err());
    }

    proptest! {
        #[test]
        fn empirical_prob_is_monotone(mut h in prop::collection::vec(0.0f64..100.0, 1..60), a in 0.0f64..100.0, b in 0.0f64..100.0) {
            h.push(a);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = empirical_prob(&h, lo).unwrap();
            let p_hi = empirical_prob(&h, hi).unwrap();
            prop_assert!(p_lo <= p_hi);
            prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        }

        #[test]
        fn milre_is_rank_invariant_under_scaling(
            seed in 0u64..1000,
            scale in 0.05f64..20.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let start = day(2001, 1, 1);
            let n = 3 * 365;
            let make = |factor: f64, rng_vals: &Vec<Vec<f64>>| {
                let points = (0..4)
                    .map(|i| RainGridPoint {
                        point_id: format!("g{i}"),
                        lat: 45.0 + i as f64 * 0.01,
                        lon: 2.0,
                        series: rng_vals[i].iter().map(|v| v * factor).collect(),
                    })
                    .collect();
                RainGrid::new(start, n, points).unwrap()
            };
            let vals: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..n).map(|_| if rng.random_bool(0.5) { rng.random_range(0.1..50.0) } else { 0.0 }).collect())
                .collect();
            let a = LocalClimate::build(&make(1.0, &vals), [0, 1, 2, 3], &[1, 3, 5]).unwrap();
            let b = LocalClimate::build(&make(scale, &vals), [0, 1, 2, 3], &[1, 3, 5]).unwrap();
            let date = day(2002, 6, 1 + (seed % 28) as u32);
            prop_assert_eq!(a.milre(date).unwrap().value, b.milre(date).unwrap().value);
            prop_assert_eq!(a.ann_milre(2002).unwrap().value, b.ann_milre(2002).unwrap().value);
        }

        #[test]
        fn adding_a_window_never_decreases_milre(seed in 0u64..500) {
            let grid = two_year_grid((seed % 50) as f64, 2002);
            let c1 = LocalClimate::build(&grid, [0, 1, 2, 3], &[1, 3]).unwrap();
            let c2 = LocalClimate::build(&grid, [0, 1, 2, 3], &[1, 3, 10]).unwrap();
            let d = NaiveDate::from_yo_opt(2002, 150 + (seed % 100) as u32).unwrap();
            let m1 = c1.milre(d).unwrap();
            let m2 = c2.milre(d).unwrap();
            prop_assert!(m2.value >= m1.value);
            for &(_, p) in &m2.per_window {
                prop_assert!(m2.value >= p);
            }
        }
    }
}
