//! Dataset ingestion: typed schemas with semantic column roles.
//!
//! Roles drive everything downstream. Proposition templates bind slots to
//! columns by role and the tag vocabulary is enumerated from geo/time values,
//! so the heuristics here are kept deterministic and configuration-free.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::Family;
use crate::value::{Value, DATE_FORMAT};

const TIME_WORDS: &[&str] = &["year", "date", "month", "quarter", "week"];
const GEO_WORDS: &[&str] = &["borough", "city", "country", "region", "destination", "area"];
const NUMERIC_SHARE: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("table name must not be empty")]
    EmptyName,
    #[error("table `{0}` has no data rows")]
    EmptyTable(String),
    #[error("table `{0}` is already registered")]
    DuplicateTable(String),
    #[error("malformed row at line {line}: expected {expected} fields, found {found}")]
    MalformedRow { line: u64, expected: usize, found: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload is not valid CSV: {0}")]
    Csv(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Integer,
    Real,
    Text,
    Date,
    /// Only produced by derived query columns, never by ingestion.
    Boolean,
}

impl DataKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataKind::Integer | DataKind::Real)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticRole {
    Geo,
    Time,
    Measure,
    Category,
    Entity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub data_kind: DataKind,
    pub semantic_role: SemanticRole,
    pub unit: Option<String>,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub table_name: String,
    pub columns: Vec<ColumnSpec>,
    pub row_count: usize,
    pub category_tags: BTreeSet<String>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn columns_with_role(&self, role: SemanticRole) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(move |c| c.semantic_role == role)
    }

    pub fn measures(&self) -> Vec<&ColumnSpec> {
        self.columns_with_role(SemanticRole::Measure).collect()
    }

    pub fn time_column(&self) -> Option<&ColumnSpec> {
        self.columns_with_role(SemanticRole::Time).next()
    }

    /// Columns that can label a mark: geo first, then entity, then category.
    pub fn label_columns(&self) -> Vec<&ColumnSpec> {
        let mut out: Vec<&ColumnSpec> = self.columns_with_role(SemanticRole::Geo).collect();
        out.extend(self.columns_with_role(SemanticRole::Entity));
        out.extend(self.columns_with_role(SemanticRole::Category));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("schema serializes")
    }
}

/// A registered table: schema plus column-major cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: TableSchema,
    columns: Vec<Vec<Value>>,
}

impl Table {
    pub fn name(&self) -> &str {
        &self.schema.table_name
    }

    pub fn row_count(&self) -> usize {
        self.schema.row_count
    }

    pub fn column_values(&self, name: &str) -> Option<&[Value]> {
        self.schema.column_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn cell(&self, row: usize, col: usize) -> &Value {
        &self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c[row].clone()).collect()
    }

    pub fn distinct_values(&self, name: &str) -> BTreeSet<String> {
        self.column_values(name)
            .map(|vals| vals.iter().filter(|v| !v.is_null()).map(Value::key).collect())
            .unwrap_or_default()
    }

    /// Sorted distinct non-null values of a column.
    pub fn distinct_sorted(&self, name: &str) -> Vec<Value> {
        let mut vals: Vec<Value> = self
            .column_values(name)
            .map(|v| v.iter().filter(|x| !x.is_null()).cloned().collect())
            .unwrap_or_default();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals.dedup_by(|a, b| a.total_cmp(b).is_eq());
        vals
    }

    /// Population variance of a numeric column over non-null cells.
    pub fn variance(&self, name: &str) -> f64 {
        let xs: Vec<f64> = self
            .column_values(name)
            .map(|v| v.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        if xs.is_empty() {
            return 0.0;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
    }
}

/// Tag keys and the values each may take for one or more tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocabulary {
    pub geo: BTreeSet<String>,
    pub topic: BTreeSet<String>,
    pub time: BTreeSet<String>,
    pub intent: BTreeSet<String>,
}

impl TagVocabulary {
    pub fn get(&self, key: &str) -> Option<&BTreeSet<String>> {
        match key {
            "geo" => Some(&self.geo),
            "topic" => Some(&self.topic),
            "time" => Some(&self.time),
            "intent" => Some(&self.intent),
            _ => None,
        }
    }

    pub fn as_map(&self) -> BTreeMap<&'static str, &BTreeSet<String>> {
        BTreeMap::from([
            ("geo", &self.geo),
            ("topic", &self.topic),
            ("time", &self.time),
            ("intent", &self.intent),
        ])
    }

    pub fn merge(&mut self, other: &TagVocabulary) {
        self.geo.extend(other.geo.iter().cloned());
        self.topic.extend(other.topic.iter().cloned());
        self.time.extend(other.time.iter().cloned());
        self.intent.extend(other.intent.iter().cloned());
    }
}

/// Registry of ingested tables. Tables are immutable once registered.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Arc<Table>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest_table(&mut self, bytes: &[u8], name: &str) -> Result<&TableSchema, CatalogError> {
        self.ingest_table_tagged(bytes, name, std::iter::empty::<String>())
    }

    pub fn ingest_table_tagged<I, S>(
        &mut self,
        bytes: &[u8],
        name: &str,
        category_tags: I,
    ) -> Result<&TableSchema, CatalogError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let name = name.trim();
        if name.is_empty() {
            return Err(CatalogError::EmptyName);
        }
        if self.tables.contains_key(name) {
            return Err(CatalogError::DuplicateTable(name.to_string()));
        }
        let tags = category_tags.into_iter().map(Into::into).collect();
        let table = parse_table(bytes, name, tags)?;
        let entry = self.tables.entry(name.to_string()).or_insert(Arc::new(table));
        Ok(&entry.schema)
    }

    pub fn table(&self, name: &str) -> Result<&Arc<Table>, CatalogError> {
        self.tables
            .get(name)
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn schema(&self, name: &str) -> Result<&TableSchema, CatalogError> {
        self.table(name).map(|t| &t.schema)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Arc<Table>> {
        self.tables.values()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn derive_tag_vocabulary(&self, name: &str) -> Result<TagVocabulary, CatalogError> {
        let table = self.table(name)?;
        Ok(tag_vocabulary(table))
    }

    /// Union of the vocabularies of every registered table.
    pub fn vocabulary(&self) -> TagVocabulary {
        let mut vocab = TagVocabulary {
            intent: Family::ALL.iter().map(|f| f.as_str().to_string()).collect(),
            ..Default::default()
        };
        for t in self.tables.values() {
            vocab.merge(&tag_vocabulary(t));
        }
        vocab
    }
}

pub fn tag_vocabulary(table: &Table) -> TagVocabulary {
    let schema = &table.schema;
    let mut vocab = TagVocabulary {
        intent: Family::ALL.iter().map(|f| f.as_str().to_string()).collect(),
        ..Default::default()
    };
    for col in &schema.columns {
        match col.semantic_role {
            SemanticRole::Geo => vocab.geo.extend(table.distinct_values(&col.name)),
            SemanticRole::Time => vocab.time.extend(table.distinct_values(&col.name)),
            SemanticRole::Measure => {
                vocab.topic.insert(col.name.clone());
            }
            _ => {}
        }
    }
    vocab.topic.extend(schema.category_tags.iter().cloned());
    vocab
}

fn name_tokens(name: &str) -> Vec<String> {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_table(bytes: &[u8], name: &str, category_tags: BTreeSet<String>) -> Result<Table, CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CatalogError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(CatalogError::MalformedHeader("empty column name".into()));
    }
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(CatalogError::MalformedHeader(format!("duplicate column `{h}`")));
        }
    }

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => CatalogError::MalformedRow {
                line: pos.as_ref().map(|p| p.line()).unwrap_or(0),
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => CatalogError::Csv(e.to_string()),
        })?;
        for (i, field) in record.iter().enumerate() {
            let f = field.trim();
            raw[i].push(if f.is_empty() { None } else { Some(f.to_string()) });
        }
    }
    let row_count = raw.first().map(Vec::len).unwrap_or(0);
    if row_count == 0 {
        return Err(CatalogError::EmptyTable(name.to_string()));
    }

    let mut specs = Vec::with_capacity(headers.len());
    let mut columns = Vec::with_capacity(headers.len());
    for (header, cells) in headers.iter().zip(raw) {
        let (kind, values) = infer_column(&cells);
        let cardinality = {
            let distinct: BTreeSet<String> =
                values.iter().filter(|v| !v.is_null()).map(Value::key).collect();
            distinct.len()
        };
        let role = assign_role(header, kind, &cells, cardinality, row_count);
        specs.push(ColumnSpec {
            name: header.clone(),
            data_kind: kind,
            semantic_role: role,
            unit: None,
            cardinality,
        });
        columns.push(values);
    }

    Ok(Table {
        schema: TableSchema {
            table_name: name.to_string(),
            columns: specs,
            row_count,
            category_tags,
        },
        columns,
    })
}

fn infer_column(cells: &[Option<String>]) -> (DataKind, Vec<Value>) {
    let present: Vec<&str> = cells.iter().flatten().map(String::as_str).collect();
    if present.is_empty() {
        return (DataKind::Text, vec![Value::Null; cells.len()]);
    }
    let n = present.len() as f64;
    let ints = present.iter().filter(|s| s.parse::<i64>().is_ok()).count() as f64;
    let reals = present.iter().filter(|s| parse_real(s).is_some()).count() as f64;

    if ints / n >= NUMERIC_SHARE {
        let vals = cells
            .iter()
            .map(|c| c.as_deref().and_then(|s| s.parse().ok()).map_or(Value::Null, Value::Int))
            .collect();
        return (DataKind::Integer, vals);
    }
    if reals / n >= NUMERIC_SHARE {
        let vals = cells
            .iter()
            .map(|c| c.as_deref().and_then(parse_real).map_or(Value::Null, Value::Real))
            .collect();
        return (DataKind::Real, vals);
    }
    if present.iter().all(|s| NaiveDate::parse_from_str(s, DATE_FORMAT).is_ok()) {
        let vals = cells
            .iter()
            .map(|c| {
                c.as_deref()
                    .and_then(|s| NaiveDate::parse_from_str(s, DATE_FORMAT).ok())
                    .map_or(Value::Null, Value::Date)
            })
            .collect();
        return (DataKind::Date, vals);
    }
    let vals = cells
        .iter()
        .map(|c| c.clone().map_or(Value::Null, Value::Text))
        .collect();
    (DataKind::Text, vals)
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn looks_like_year(s: &str) -> bool {
    s.len() == 4
        && s.bytes().all(|b| b.is_ascii_digit())
        && (1800..=2100).contains(&s.parse::<u32>().unwrap_or(0))
}

/// Largest distinct-value count a text column may have and still count as categorical.
pub fn category_threshold(row_count: usize) -> usize {
    20usize.max((row_count as f64 * 0.05).floor() as usize)
}

fn assign_role(
    name: &str,
    kind: DataKind,
    cells: &[Option<String>],
    cardinality: usize,
    row_count: usize,
) -> SemanticRole {
    let tokens = name_tokens(name);
    let has = |words: &[&str]| tokens.iter().any(|t| words.contains(&t.as_str()));
    let mut present = cells.iter().flatten().peekable();
    let all_years = present.peek().is_some() && present.all(|s| looks_like_year(s));

    if has(TIME_WORDS) || kind == DataKind::Date || (kind == DataKind::Integer && all_years) {
        return SemanticRole::Time;
    }
    if kind == DataKind::Text && has(GEO_WORDS) {
        return SemanticRole::Geo;
    }
    if kind.is_numeric() {
        return SemanticRole::Measure;
    }
    if cardinality <= category_threshold(row_count) {
        SemanticRole::Category
    } else {
        SemanticRole::Entity
    }
}
