use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::linalg::{independent_columns, weighted_cross};
use super::Family;
use crate::data_model::{ColumnData, FeatureTable};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

/// Relative residual-norm tolerance below which a design column counts as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-9;

/// A main effect or a pairwise interaction, written `a` or `a:b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Main(String),
    Interaction(String, String),
}

impl Term {
    pub fn main(name: &str) -> Self {
        Term::Main(name.to_string())
    }

    pub fn interaction(a: &str, b: &str) -> Self {
        Term::Interaction(a.to_string(), b.to_string())
    }

    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Main(a) => vec![a],
            Term::Interaction(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Main(a) => f.write_str(a),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl TryFrom<String> for Term {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [a] if !a.is_empty() => Ok(Term::main(a)),
            [a, b] if !a.is_empty() && !b.is_empty() && a != b => Ok(Term::interaction(a, b)),
            _ => Err(Error::Config(format!("invalid term `{s}`: expected `col` or `col_a:col_b`"))),
        }
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    None,
    ClassBalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub weight_scheme: WeightScheme,
    /// Multiply prior weights by the row exposure.
    #[serde(default)]
    pub exposure_weights: bool,
    /// Overrides of the default (most frequent) reference level.
    #[serde(default)]
    pub reference_levels: BTreeMap<String, String>,
}

impl ModelSpec {
    pub fn new(family: Family, terms: Vec<Term>) -> Self {
        ModelSpec {
            family,
            terms,
            weight_scheme: WeightScheme::None,
            exposure_weights: false,
            reference_levels: BTreeMap::new(),
        }
    }

    pub fn without_term(&self, term: &Term) -> ModelSpec {
        ModelSpec {
            terms: self.terms.iter().filter(|t| *t != term).cloned().collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoder {
    Numeric,
    Categorical { levels: Vec<String>, reference: String },
}

/// Per-column encoders fixed at fit time and reused for scoring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub columns: BTreeMap<String, ColumnEncoder>,
}

impl Encoding {
    /// Encoders for every column referenced by `spec`. Reference level is the
    /// most frequent level among the rows with positive weight (ties: first sorted level).
    pub fn fit(table: &FeatureTable, spec: &ModelSpec, row_mask: Option<&[f64]>) -> Result<Self> {
        let mut columns = BTreeMap::new();
        for term in &spec.terms {
            for name in term.columns() {
                if columns.contains_key(name) {
                    continue;
                }
                let col = table
                    .column(name)
                    .ok_or_else(|| Error::Config(format!("term `{term}` references unknown column `{name}`")))?;
                let enc = match &col.data {
                    ColumnData::Numeric(_) => ColumnEncoder::Numeric,
                    ColumnData::Categorical { levels, codes } => {
                        let reference = match spec.reference_levels.get(name) {
                            Some(r) if levels.contains(r) => r.clone(),
                            Some(r) => {
                                return Err(Error::Config(format!("reference level `{r}` is not a level of `{name}`")))
                            }
                            None => {
                                let mut counts = vec![0usize; levels.len()];
                                for (i, &c) in codes.iter().enumerate() {
                                    if row_mask.is_none_or(|m| m[i] > 0.0) {
                                        counts[c as usize] += 1;
                                    }
                                }
                                let best = (0..levels.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
                                levels[best].clone()
                            }
                        };
                        ColumnEncoder::Categorical {
                            levels: levels.clone(),
                            reference,
                        }
                    }
                };
                columns.insert(name.to_string(), enc);
            }
        }
        Ok(Encoding { columns })
    }
}

/// Dense row-major design with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub names: Vec<String>,
    /// Index into `terms` for each column; `None` for the intercept.
    pub term_of: Vec<Option<usize>>,
    pub terms: Vec<Term>,
    pub data: Vec<f64>,
    pub encoding: Encoding,
    /// Candidate columns removed as constant, empty or collinear.
    pub pruned: Vec<String>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols()..(i + 1) * self.n_cols()]
    }

    /// Column indices belonging to `term`.
    pub fn columns_of(&self, term: usize) -> Vec<usize> {
        (0..self.n_cols()).filter(|&j| self.term_of[j] == Some(term)).collect()
    }

    pub fn column_index(&self) -> HashMap<&str, usize> {
        self.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }
}

/// Encoded columns of one table column: `(name suffix, values)`.
fn encode_column(table: &FeatureTable, name: &str, enc: &ColumnEncoder) -> Result<Vec<(String, Vec<f64>)>> {
    let col = table
        .column(name)
        .ok_or_else(|| Error::Config(format!("column `{name}` missing from table")))?;
    match (enc, &col.data) {
        (ColumnEncoder::Numeric, ColumnData::Numeric(v)) => Ok(vec![(name.to_string(), v.clone())]),
        (ColumnEncoder::Categorical { levels, reference }, ColumnData::Categorical { levels: tl, codes }) => {
            let pos: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let mut seen = vec![false; tl.len()];
            codes.iter().for_each(|&c| seen[c as usize] = true);
            let mut map = vec![usize::MAX; tl.len()];
            for (c, l) in tl.iter().enumerate() {
                match pos.get(l.as_str()) {
                    Some(&p) => map[c] = p,
                    None if seen[c] => {
                        return Err(Error::UnseenLevel {
                            column: name.to_string(),
                            level: l.clone(),
                        })
                    }
                    None => {}
                }
            }
            Ok(levels
                .iter()
                .enumerate()
                .filter(|(_, l)| *l != reference)
                .map(|(li, l)| {
                    let v = codes.iter().map(|&c| if map[c as usize] == li { 1.0 } else { 0.0 }).collect();
                    (format!("{name}={l}"), v)
                })
                .collect())
        }
        _ => Err(Error::Config(format!("column `{name}` changed type since the model was fitted"))),
    }
}

/// Intercept plus every encoded term column, before pruning.
fn candidate_columns(table: &FeatureTable, terms: &[Term], encoding: &Encoding) -> Result<(Vec<String>, Vec<Option<usize>>, Vec<Vec<f64>>)> {
    let n = table.n_rows();
    let mut names = vec![INTERCEPT.to_string()];
    let mut term_of = vec![None];
    let mut cols = vec![vec![1.0; n]];
    let mut cache: HashMap<&str, Vec<(String, Vec<f64>)>> = HashMap::new();
    for term in terms {
        for c in term.columns() {
            if !cache.contains_key(c) {
                let enc = encoding
                    .columns
                    .get(c)
                    .ok_or_else(|| Error::Config(format!("no encoder for column `{c}`")))?;
                cache.insert(c, encode_column(table, c, enc)?);
            }
        }
    }
    for (t, term) in terms.iter().enumerate() {
        match term {
            Term::Main(a) => {
                for (name, v) in &cache[a.as_str()] {
                    names.push(name.clone());
                    term_of.push(Some(t));
                    cols.push(v.clone());
                }
            }
            Term::Interaction(a, b) => {
                for (na, va) in &cache[a.as_str()] {
                    for (nb, vb) in &cache[b.as_str()] {
                        names.push(format!("{na}:{nb}"));
                        term_of.push(Some(t));
                        cols.push(va.iter().zip(vb).map(|(x, y)| x * y).collect());
                    }
                }
            }
        }
    }
    Ok((names, term_of, cols))
}

fn to_row_major(cols: &[Vec<f64>], keep: &[usize], n: usize) -> Vec<f64> {
    let p = keep.len();
    let mut data = vec![0.0; n * p];
    for (j, &k) in keep.iter().enumerate() {
        for (i, v) in cols[k].iter().enumerate() {
            data[i * p + j] = *v;
        }
    }
    data
}

/// Builds the design for `spec`, pruning columns that are constant, empty or
/// linearly dependent on earlier columns among rows with positive `row_weights`.
pub fn build_design(table: &FeatureTable, spec: &ModelSpec, row_weights: Option<&[f64]>) -> Result<DesignMatrix> {
    let mut seen = std::collections::HashSet::new();
    if let Some(t) = spec.terms.iter().find(|t| !seen.insert(*t)) {
        return Err(Error::Config(format!("term `{t}` listed twice")));
    }
    let encoding = Encoding::fit(table, spec, row_weights)?;
    let n = table.n_rows();
    let (names, term_of, cols) = candidate_columns(table, &spec.terms, &encoding)?;
    let all: Vec<usize> = (0..names.len()).collect();
    let full = to_row_major(&cols, &all, n);
    let mask: Vec<f64> = match row_weights {
        Some(w) => w.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
        None => vec![1.0; n],
    };
    let (gram, _) = weighted_cross(&full, names.len(), &all, &mask, &vec![0.0; n]);
    let keep = independent_columns(&gram, names.len(), COLLINEARITY_TOL);
    let pruned: Vec<String> = all
        .iter()
        .filter(|j| !keep.contains(j))
        .map(|&j| names[j].clone())
        .collect();
    if !pruned.is_empty() {
        log::debug!("pruned {} constant or collinear design columns: {}", pruned.len(), pruned.join(", "));
    }
    let data = if pruned.is_empty() { full } else { to_row_major(&cols, &keep, n) };
    Ok(DesignMatrix {
        n_rows: n,
        names: keep.iter().map(|&j| names[j].clone()).collect(),
        term_of: keep.iter().map(|&j| term_of[j]).collect(),
        terms: spec.terms.clone(),
        data,
        encoding,
        pruned,
    })
}

/// Encodes `table` with a fitted encoding and keeps exactly `columns`, in that order.
pub fn encode_for_scoring(table: &FeatureTable, terms: &[Term], encoding: &Encoding, columns: &[String]) -> Result<DesignMatrix> {
    let n = table.n_rows();
    let (names, term_of, cols) = candidate_columns(table, terms, encoding)?;
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let keep: Vec<usize> = columns
        .iter()
        .map(|c| {
            index
                .get(c.as_str())
                .copied()
                .ok_or_else(|| Error::Config(format!("model column `{c}` cannot be rebuilt from the table")))
        })
        .collect::<Result<_>>()?;
    Ok(DesignMatrix {
        n_rows: n,
        names: columns.to_vec(),
        term_of: keep.iter().map(|&j| term_of[j]).collect(),
        terms: terms.to_vec(),
        data: to_row_major(&cols, &keep, n),
        encoding: encoding.clone(),
        pruned: Vec::new(),
    })
}
