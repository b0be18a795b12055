//! In-memory query engine for proposition and view plans.
//!
//! A plan runs its stages in a fixed order: filters, grouping, aggregation,
//! derived measures, sort, limit. Everything here is a pure function of the
//! plan and the table.

mod exec;
pub mod family;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::DataKind;
use crate::value::Value;

pub use exec::execute;
pub use family::{family_plan, Constraints, Family, PlanFocus, Slot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("missing binding for slot `{0}`")]
    MissingBinding(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "in")]
    In,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    List(Vec<Value>),
    Scalar(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: CmpOp,
    pub value: Literal,
}

impl Filter {
    pub fn eq(column: impl Into<String>, value: Value) -> Self {
        Self { column: column.into(), op: CmpOp::Eq, value: Literal::Scalar(value) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Sum,
    Mean,
    Count,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFn,
    pub column: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    pub column: String,
    pub direction: SortDirection,
}

/// Derived measures computed over the grouped result.
///
/// `PctChange`, `ShareOfTotal` and `Zscore` operate on the aggregate column.
/// `Ratio` and `Pearson` name their operands; when the plan groups, the
/// operands are aggregated with the plan's aggregate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Derived {
    PctChange { order_by: String },
    ShareOfTotal,
    Ratio { numerator: String, denominator: String },
    Zscore { threshold: f64 },
    Pearson { x: String, y: String },
}

impl Derived {
    pub fn output_columns(&self) -> &'static [&'static str] {
        match self {
            Derived::PctChange { .. } => &["pct_change"],
            Derived::ShareOfTotal => &["share"],
            Derived::Ratio { .. } => &["ratio"],
            Derived::Zscore { .. } => &["zscore", "is_outlier"],
            Derived::Pearson { .. } => &["pearson_r"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub table: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<Filter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<Derived>,
}

impl QueryPlan {
    pub fn scan(table: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            filters: Vec::new(),
            group_by: None,
            aggregate: None,
            sort: None,
            limit: None,
            derived: None,
        }
    }

    pub fn filter(mut self, f: Filter) -> Self {
        self.filters.push(f);
        self
    }

    pub fn group_by<I, S>(mut self, cols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.group_by = Some(cols.into_iter().map(Into::into).collect());
        self
    }

    pub fn aggregate(mut self, func: AggFn, column: impl Into<String>) -> Self {
        self.aggregate = Some(Aggregate { func, column: column.into() });
        self
    }

    pub fn sort(mut self, column: impl Into<String>, direction: SortDirection) -> Self {
        self.sort = Some(SortKey { column: column.into(), direction });
        self
    }

    pub fn limit(mut self, n: usize) -> Self {
        self.limit = Some(n);
        self
    }

    pub fn derived(mut self, d: Derived) -> Self {
        self.derived = Some(d);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultColumn {
    pub name: String,
    pub data_kind: DataKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn get(&self, row: usize, column: &str) -> Option<&Value> {
        let i = self.column_index(column)?;
        self.rows.get(row).map(|r| &r[i])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows as JSON objects keyed by column name, in column order.
    pub fn to_records(&self) -> Vec<serde_json::Value> {
        self.rows
            .iter()
            .map(|row| {
                let map: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.name.clone(), v.to_json()))
                    .collect();
                serde_json::Value::Object(map)
            })
            .collect()
    }
}
