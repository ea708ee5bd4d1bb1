//! Model-ready feature tables assembled from portfolio, indicator and geo data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::io::Portfolio;
use super::types::{PolicyYear, Task};
use crate::error::{Error, Result};
use crate::geo::GeoFeatureRow;
use crate::rainfall::IndicatorSet;

/// Data source group of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTag {
    Ins,
    Climate,
    Rainfall,
    Building,
}

impl LayerTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerTag::Ins => "ins",
            LayerTag::Climate => "climate",
            LayerTag::Rainfall => "rainfall",
            LayerTag::Building => "building",
        }
    }
}

/// The four nested model layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "ins")]
    Ins,
    #[serde(rename = "ins+c")]
    InsC,
    #[serde(rename = "ins+r")]
    InsR,
    #[serde(rename = "all")]
    All,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Ins, Layer::InsC, Layer::InsR, Layer::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Ins => "ins",
            Layer::InsC => "ins+c",
            Layer::InsR => "ins+r",
            Layer::All => "all",
        }
    }

    /// Column groups included in this layer. Each layer extends the previous one.
    pub fn tags(self) -> &'static [LayerTag] {
        use LayerTag::*;
        match self {
            Layer::Ins => &[Ins],
            Layer::InsC => &[Ins, Climate],
            Layer::InsR => &[Ins, Climate, Rainfall],
            Layer::All => &[Ins, Climate, Rainfall, Building],
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Layer::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown layer `{s}` (expected ins, ins+c, ins+r or all)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// `levels` are sorted; `codes[i]` indexes into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl ColumnData {
    pub fn categorical<S: AsRef<str>>(values: &[S]) -> Self {
        let levels: Vec<String> = values
            .iter()
            .map(|v| v.as_ref())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let index: HashMap<&str, u32> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
        let codes = values.iter().map(|v| index[v.as_ref()]).collect();
        ColumnData::Categorical { levels, codes }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn take(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&i| codes[i]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub tag: LayerTag,
    pub data: ColumnData,
}

/// Identifies the policy-year (and claim) behind a row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub policy_id: String,
    pub building_id: String,
    pub municipality_code: String,
    pub year: i32,
    pub flood_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub task: Task,
    pub keys: Vec<RowKey>,
    pub columns: Vec<Column>,
    /// `claim_nb` for occurrence, claim amount for severity.
    pub target: Vec<f64>,
    pub exposure: Vec<f64>,
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Columns whose tag belongs to `layer`.
    pub fn select_layer(&self, layer: Layer) -> FeatureTable {
        FeatureTable {
            task: self.task,
            keys: self.keys.clone(),
            columns: self.columns.iter().filter(|c| layer.tags().contains(&c.tag)).cloned().collect(),
            target: self.target.clone(),
            exposure: self.exposure.clone(),
        }
    }

    /// Row subset, keeping level dictionaries so encodings stay aligned.
    pub fn take_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            task: self.task,
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    tag: c.tag,
                    data: c.data.take(rows),
                })
                .collect(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            exposure: rows.iter().map(|&i| self.exposure[i]).collect(),
        }
    }

    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if column.data.len() != self.n_rows() {
            return Err(Error::Assembly(format!(
                "column `{}` has {} rows, table has {}",
                column.name,
                column.data.len(),
                self.n_rows()
            )));
        }
        if self.column(&column.name).is_some() {
            return Err(Error::Assembly(format!("duplicate column `{}`", column.name)));
        }
        if let ColumnData::Numeric(v) = &column.data {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Assembly(format!("column `{}` has a missing value at row {i}", column.name)));
            }
        }
        self.columns.push(column);
        Ok(())
    }
}

/// How MILRE-type indicators enter the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorEncoding {
    #[default]
    Continuous,
    /// Quantile classes (deciles) computed on the assembled rows.
    Deciles,
}

/// Inputs to feature assembly beyond the portfolio. Missing sources only fail
/// when a layer that needs them is requested.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureSources<'a> {
    pub indicators: Option<&'a IndicatorSet>,
    pub geo: Option<&'a BTreeMap<String, GeoFeatureRow>>,
    /// Tail-weight cluster id per building.
    pub tail_cluster: Option<&'a BTreeMap<String, usize>>,
    pub indicator_encoding: IndicatorEncoding,
}

pub const INS_COLUMNS: [&str; 5] = ["nb_rooms", "mov_assets", "prec_obj", "amenity_elmt", "outbuilg_size"];
pub const CLIMATE_COLUMNS: [&str; 6] = ["tri_overflow", "tri_runoff", "ppri", "hydro_zone", "clim_region", "nb_catnat"];
pub const BUILDING_COLUMNS: [&str; 15] = [
    "living_surface",
    "house_value",
    "construction_period",
    "nb_floors",
    "wall_material",
    "outbuilding_surface",
    "pres_adjoining",
    "length_partywall",
    "distance_watercourse",
    "altitude_diffwatercourse",
    "terrain_maxslope_50m",
    "nb_building_50m",
    "impervious_surface",
    "soil_type",
    "wctrii",
];

/// Rainfall columns for a task: the event indicator is only defined for claims.
pub fn rainfall_columns(task: Task) -> [&'static str; 2] {
    match task {
        Task::Occurrence => ["tail_cluster", "ann_milre"],
        Task::Severity => ["tail_cluster", "milre"],
    }
}

fn decile_labels(values: &[f64]) -> Vec<String> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let edges: Vec<f64> = (1..10).map(|k| sorted[(k * n / 10).min(n - 1)]).collect();
    values
        .iter()
        .map(|v| format!("q{:02}", 1 + edges.iter().filter(|e| v >= e).count()))
        .collect()
}

/// Builds the frequency (one row per policy-year) or severity (one row per
/// claim) table with every column of the requested layer.
pub fn assemble_features(portfolio: &Portfolio, sources: &FeatureSources, task: Task, layer: Layer) -> Result<FeatureTable> {
    let buildings = portfolio.building_index();
    let policy_by_year: HashMap<(&str, i32), &PolicyYear> =
        portfolio.policies.iter().map(|p| ((p.policy_id.as_str(), p.year), p)).collect();

    // Rows: (policy, flood date, target).
    let rows: Vec<(&PolicyYear, Option<NaiveDate>, f64)> = match task {
        Task::Occurrence => portfolio.policies.iter().map(|p| (p, None, f64::from(p.claim_nb))).collect(),
        Task::Severity => portfolio
            .claims
            .iter()
            .map(|c| {
                let p = policy_by_year
                    .get(&(c.policy_id.as_str(), c.flood_date.year()))
                    .ok_or_else(|| Error::Assembly(format!("claim of policy {} has no policy-year", c.policy_id)))?;
                Ok((*p, Some(c.flood_date), c.amount))
            })
            .collect::<Result<_>>()?,
    };
    let n = rows.len();
    if n == 0 {
        return Err(Error::Assembly(format!("{task} table has no rows")));
    }
    let keys: Vec<RowKey> = rows
        .iter()
        .map(|(p, d, _)| RowKey {
            policy_id: p.policy_id.clone(),
            building_id: p.building_id.clone(),
            municipality_code: buildings[p.building_id.as_str()].municipality_code.clone(),
            year: p.year,
            flood_date: *d,
        })
        .collect();
    let mut table = FeatureTable {
        task,
        keys,
        columns: Vec::new(),
        target: rows.iter().map(|r| r.2).collect(),
        exposure: match task {
            Task::Occurrence => rows.iter().map(|r| r.0.exposure).collect(),
            Task::Severity => vec![1.0; n],
        },
    };

    let num = |f: &dyn Fn(&PolicyYear) -> f64| ColumnData::Numeric(rows.iter().map(|r| f(r.0)).collect());
    let cat = |f: &dyn Fn(&PolicyYear) -> String| {
        let v: Vec<String> = rows.iter().map(|r| f(r.0)).collect();
        ColumnData::categorical(&v)
    };
    let tags = layer.tags();

    if tags.contains(&LayerTag::Ins) {
        let t = LayerTag::Ins;
        for (name, data) in [
            ("nb_rooms", num(&|p| f64::from(p.nb_rooms))),
            ("mov_assets", num(&|p| p.mov_assets)),
            ("prec_obj", num(&|p| p.prec_obj)),
            ("amenity_elmt", cat(&|p| p.amenity_elmt.as_str().to_string())),
            ("outbuilg_size", cat(&|p| p.outbuilg_size.as_str().to_string())),
        ] {
            table.push_column(Column {
                name: name.into(),
                tag: t,
                data,
            })?;
        }
    }

    if tags.contains(&LayerTag::Climate) {
        let h = |p: &PolicyYear| &portfolio.hazard[&p.building_id];
        let t = LayerTag::Climate;
        for (name, data) in [
            ("tri_overflow", cat(&|p| h(p).tri_overflow.as_str().to_string())),
            ("tri_runoff", cat(&|p| h(p).tri_runoff.as_str().to_string())),
            ("ppri", cat(&|p| h(p).ppri.as_str().to_string())),
            ("hydro_zone", cat(&|p| h(p).hydro_zone.clone())),
            ("clim_region", cat(&|p| h(p).clim_region.clone())),
            ("nb_catnat", num(&|p| f64::from(h(p).nb_catnat))),
        ] {
            table.push_column(Column {
                name: name.into(),
                tag: t,
                data,
            })?;
        }
    }

    if tags.contains(&LayerTag::Rainfall) {
        let [cluster_col, indicator_col] = rainfall_columns(task);
        let clusters = sources
            .tail_cluster
            .ok_or_else(|| Error::Assembly(format!("rainfall layer incomplete: column `{cluster_col}` missing")))?;
        let cl: Vec<String> = rows
            .iter()
            .map(|r| {
                clusters
                    .get(&r.0.building_id)
                    .map(|c| format!("c{c}"))
                    .ok_or_else(|| Error::Assembly(format!("rainfall layer incomplete: `{cluster_col}` missing for building {}", r.0.building_id)))
            })
            .collect::<Result<_>>()?;
        table.push_column(Column {
            name: cluster_col.into(),
            tag: LayerTag::Rainfall,
            data: ColumnData::categorical(&cl),
        })?;

        let ind = sources
            .indicators
            .ok_or_else(|| Error::Assembly(format!("rainfall layer incomplete: column `{indicator_col}` missing")))?;
        let values: Vec<f64> = rows
            .iter()
            .map(|(p, d, _)| {
                let v = match d {
                    None => ind.annual_value(&p.building_id, p.year),
                    Some(d) => ind.event_value(&p.building_id, *d),
                };
                v.ok_or_else(|| {
                    Error::Assembly(format!(
                        "rainfall layer incomplete: `{indicator_col}` missing for building {} ({})",
                        p.building_id,
                        d.map_or(p.year.to_string(), |d| d.to_string())
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let data = match sources.indicator_encoding {
            IndicatorEncoding::Continuous => ColumnData::Numeric(values),
            IndicatorEncoding::Deciles => ColumnData::categorical(&decile_labels(&values)),
        };
        table.push_column(Column {
            name: indicator_col.into(),
            tag: LayerTag::Rainfall,
            data,
        })?;
    }

    if tags.contains(&LayerTag::Building) {
        let geo = sources
            .geo
            .ok_or_else(|| Error::Assembly("building layer incomplete: geo features missing".into()))?;
        let g: Vec<&GeoFeatureRow> = rows
            .iter()
            .map(|r| {
                geo.get(&r.0.building_id)
                    .ok_or_else(|| Error::Assembly(format!("building layer incomplete: no geo features for building {}", r.0.building_id)))
            })
            .collect::<Result<_>>()?;
        let b = |i: usize| buildings[rows[i].0.building_id.as_str()];
        let bnum = |f: &dyn Fn(usize) -> f64| ColumnData::Numeric((0..n).map(f).collect());
        let bcat = |f: &dyn Fn(usize) -> String| ColumnData::categorical(&(0..n).map(f).collect::<Vec<_>>());
        for (name, data) in [
            ("living_surface", bnum(&|i| b(i).living_surface)),
            ("house_value", bnum(&|i| b(i).house_value)),
            ("construction_period", bcat(&|i| b(i).construction_period.clone())),
            ("nb_floors", bnum(&|i| f64::from(b(i).nb_floors))),
            ("wall_material", bcat(&|i| b(i).wall_material.clone())),
            ("outbuilding_surface", bnum(&|i| b(i).outbuilding_surface)),
            ("pres_adjoining", bcat(&|i| if b(i).pres_adjoining { "pres".into() } else { "abs".into() })),
            ("length_partywall", bnum(&|i| b(i).length_partywall)),
            ("distance_watercourse", bnum(&|i| g[i].distance_watercourse)),
            ("altitude_diffwatercourse", bnum(&|i| g[i].altitude_diffwatercourse)),
            ("terrain_maxslope_50m", bnum(&|i| g[i].terrain_maxslope_50m)),
            ("nb_building_50m", bnum(&|i| f64::from(g[i].nb_building_50m))),
            ("impervious_surface", bnum(&|i| g[i].impervious_surface)),
            ("soil_type", bcat(&|i| g[i].soil_type.clone())),
            ("wctrii", bcat(&|i| g[i].wctrii.to_string())),
        ] {
            table.push_column(Column {
                name: name.into(),
                tag: LayerTag::Building,
                data,
            })?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_are_strictly_nested() {
        for w in Layer::ALL.windows(2) {
            let (lo, hi) = (w[0].tags(), w[1].tags());
            assert!(lo.iter().all(|t| hi.contains(t)) && hi.len() > lo.len());
        }
        assert_eq!("ins+c".parse::<Layer>().unwrap(), Layer::InsC);
        assert!("ins+x".parse::<Layer>().unwrap_err().is_config());
    }

    #[test]
    fn deciles_cover_ten_classes() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        let labels = decile_labels(&v);
        let distinct: BTreeSet<&String> = labels.iter().collect();
        assert_eq!(distinct.len(), 10);
        assert_eq!(labels[0], "q01");
        assert_eq!(labels[999], "q10");
    }

    #[test]
    fn categorical_levels_are_sorted() {
        match ColumnData::categorical(&["b", "a", "b"]) {
            ColumnData::Categorical { levels, codes } => {
                assert_eq!(levels, vec!["a", "b"]);
                assert_eq!(codes, vec![1, 0, 1]);
            }
            _ => unreachable!(),
        }
    }
}
