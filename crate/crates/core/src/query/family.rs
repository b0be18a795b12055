//! Canonical plans for the six proposition families.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AggFn, Derived, Filter, QueryError, QueryPlan, SortDirection};
use crate::catalog::{SemanticRole, Table};
use crate::value::Value;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_MIN_TIMEPOINTS: usize = 2;
pub const DEFAULT_MIN_GROUPS: usize = 2;
pub const DEFAULT_Z_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ranking,
    TemporalChange,
    Composition,
    Outlier,
    PerCapita,
    Correlation,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Ranking,
        Family::TemporalChange,
        Family::Composition,
        Family::Outlier,
        Family::PerCapita,
        Family::Correlation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Ranking => "ranking",
            Family::TemporalChange => "temporal_change",
            Family::Composition => "composition",
            Family::Outlier => "outlier",
            Family::PerCapita => "per_capita",
            Family::Correlation => "correlation",
        }
    }

    pub fn is_measure_pair(self) -> bool {
        matches!(self, Family::PerCapita | Family::Correlation)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown proposition family `{s}`"))
    }
}

/// Template slots that bind to columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Metric,
    MetricA,
    MetricB,
    Label,
    Group,
    Time,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Metric => "metric",
            Slot::MetricA => "metric_a",
            Slot::MetricB => "metric_b",
            Slot::Label => "label",
            Slot::Group => "group",
            Slot::Time => "time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_timepoints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_groups: Option<usize>,
}

impl Constraints {
    pub fn defaults_for(family: Family) -> Self {
        match family {
            Family::TemporalChange => Constraints {
                top_k: Some(DEFAULT_TOP_K),
                min_timepoints: Some(DEFAULT_MIN_TIMEPOINTS),
                min_groups: None,
            },
            Family::Correlation => Constraints {
                top_k: None,
                min_timepoints: None,
                min_groups: Some(DEFAULT_MIN_GROUPS),
            },
            _ => Constraints {
                top_k: Some(DEFAULT_TOP_K),
                min_timepoints: None,
                min_groups: Some(DEFAULT_MIN_GROUPS),
            },
        }
    }
}

/// Per-instance focus: which time slice and which ranking direction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanFocus {
    pub time_value: Option<Value>,
    pub ascending: bool,
}

fn bound<'a>(bindings: &'a BTreeMap<Slot, String>, slot: Slot) -> Result<&'a str, QueryError> {
    bindings
        .get(&slot)
        .map(String::as_str)
        .ok_or_else(|| QueryError::MissingBinding(slot.as_str().to_string()))
}

fn role_check(table: &Table, column: &str, allowed: &[SemanticRole]) -> Result<(), QueryError> {
    let spec = table
        .schema
        .column(column)
        .ok_or_else(|| QueryError::UnknownColumn(column.to_string()))?;
    if allowed.contains(&spec.semantic_role) {
        Ok(())
    } else {
        Err(QueryError::TypeMismatch(format!(
            "column `{column}` has role {:?}, expected one of {allowed:?}",
            spec.semantic_role
        )))
    }
}

const LABEL_ROLES: &[SemanticRole] = &[SemanticRole::Geo, SemanticRole::Entity, SemanticRole::Category];

/// Builds the canonical plan for `family` over `table` with the given bindings.
pub fn family_plan(
    table: &Table,
    family: Family,
    bindings: &BTreeMap<Slot, String>,
    constraints: &Constraints,
    focus: &PlanFocus,
) -> Result<QueryPlan, QueryError> {
    let name = table.name().to_string();
    let time = bindings.get(&Slot::Time).map(String::as_str);
    if let Some(t) = time {
        role_check(table, t, &[SemanticRole::Time])?;
    }
    let time_filter = |plan: QueryPlan| match (time, &focus.time_value) {
        (Some(t), Some(v)) => plan.filter(Filter::eq(t, v.clone())),
        _ => plan,
    };
    let direction = if focus.ascending { SortDirection::Asc } else { SortDirection::Desc };
    let top_k = constraints.top_k.unwrap_or(DEFAULT_TOP_K);

    let check_groups = |col: &str| -> Result<(), QueryError> {
        if let Some(min) = constraints.min_groups {
            let n = table.distinct_values(col).len();
            if n < min {
                return Err(QueryError::ConstraintViolation(format!(
                    "`{col}` has {n} distinct groups, at least {min} required"
                )));
            }
        }
        Ok(())
    };

    let plan = match family {
        Family::Ranking => {
            let metric = bound(bindings, Slot::Metric)?;
            let label = bound(bindings, Slot::Label)?;
            role_check(table, metric, &[SemanticRole::Measure])?;
            role_check(table, label, LABEL_ROLES)?;
            check_groups(label)?;
            time_filter(QueryPlan::scan(name))
                .group_by([label])
                .aggregate(AggFn::Mean, metric)
                .sort(metric, direction)
                .limit(top_k)
        }
        Family::TemporalChange => {
            let metric = bound(bindings, Slot::Metric)?;
            let time = bound(bindings, Slot::Time)?;
            role_check(table, metric, &[SemanticRole::Measure])?;
            let points = table.distinct_values(time).len();
            let min = constraints.min_timepoints.unwrap_or(DEFAULT_MIN_TIMEPOINTS);
            if points < min {
                return Err(QueryError::ConstraintViolation(format!(
                    "`{time}` has {points} timepoints, at least {min} required"
                )));
            }
            let mut group = Vec::new();
            if let Some(label) = bindings.get(&Slot::Label) {
                role_check(table, label, LABEL_ROLES)?;
                group.push(label.clone());
            }
            group.push(time.to_string());
            QueryPlan::scan(name)
                .group_by(group)
                .aggregate(AggFn::Mean, metric)
                .derived(Derived::PctChange { order_by: time.to_string() })
        }
        Family::Composition => {
            let metric = bound(bindings, Slot::Metric)?;
            let group = bound(bindings, Slot::Group)?;
            role_check(table, metric, &[SemanticRole::Measure])?;
            role_check(table, group, LABEL_ROLES)?;
            check_groups(group)?;
            time_filter(QueryPlan::scan(name))
                .group_by([group])
                .aggregate(AggFn::Sum, metric)
                .derived(Derived::ShareOfTotal)
                .sort("share", SortDirection::Desc)
                .limit(top_k)
        }
        Family::Outlier => {
            let metric = bound(bindings, Slot::Metric)?;
            let label = bound(bindings, Slot::Label)?;
            role_check(table, metric, &[SemanticRole::Measure])?;
            role_check(table, label, LABEL_ROLES)?;
            check_groups(label)?;
            time_filter(QueryPlan::scan(name))
                .group_by([label])
                .aggregate(AggFn::Mean, metric)
                .derived(Derived::Zscore { threshold: DEFAULT_Z_THRESHOLD })
        }
        Family::PerCapita => {
            let a = bound(bindings, Slot::MetricA)?;
            let b = bound(bindings, Slot::MetricB)?;
            let label = bound(bindings, Slot::Label)?;
            role_check(table, a, &[SemanticRole::Measure])?;
            role_check(table, b, &[SemanticRole::Measure])?;
            role_check(table, label, LABEL_ROLES)?;
            if a == b {
                return Err(QueryError::ConstraintViolation("per_capita needs two distinct measures".into()));
            }
            time_filter(QueryPlan::scan(name))
                .group_by([label])
                .aggregate(AggFn::Mean, a)
                .derived(Derived::Ratio { numerator: a.into(), denominator: b.into() })
                .sort("ratio", direction)
                .limit(top_k)
        }
        Family::Correlation => {
            let a = bound(bindings, Slot::MetricA)?;
            let b = bound(bindings, Slot::MetricB)?;
            let label = bound(bindings, Slot::Label)?;
            role_check(table, a, &[SemanticRole::Measure])?;
            role_check(table, b, &[SemanticRole::Measure])?;
            role_check(table, label, LABEL_ROLES)?;
            check_groups(label)?;
            QueryPlan::scan(name)
                .group_by([label])
                .aggregate(AggFn::Mean, a)
                .derived(Derived::Pearson { x: a.into(), y: b.into() })
        }
    };
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::query::execute;

    fn crime() -> std::sync::Arc<Table> {
        let mut c = Catalog::new();
        c.ingest_table(
            b"borough,year,crime_rate,income\nCamden,2019,10.5,30\nCamden,2020,12.3,31\nHackney,2019,9.1,28\nHackney,2020,8.7,29\nIslington,2019,11.0,35\nIslington,2020,7.2,36\n",
            "crime",
        )
        .unwrap();
        c.table("crime").unwrap().clone()
    }

    #[test]
    fn ranking_top_one_matches_brute_force_max() {
        let t = crime();
        let bindings = BTreeMap::from([
            (Slot::Metric, "crime_rate".to_string()),
            (Slot::Label, "borough".to_string()),
            (Slot::Time, "year".to_string()),
        ]);
        let c = Constraints { top_k: Some(1), ..Default::default() };
        let focus = PlanFocus { time_value: Some(Value::Int(2020)), ascending: false };
        let plan = family_plan(&t, Family::Ranking, &bindings, &c, &focus).unwrap();
        assert_eq!(plan.limit, Some(1));
        assert_eq!(plan.sort.as_ref().unwrap().direction, SortDirection::Desc);
        let r = execute(&t, &plan).unwrap();

        // brute force over the raw rows
        let years = t.column_values("year").unwrap();
        let rates = t.column_values("crime_rate").unwrap();
        let boroughs = t.column_values("borough").unwrap();
        let (best, best_rate) = (0..t.row_count())
            .filter(|&i| years[i] == Value::Int(2020))
            .map(|i| (boroughs[i].display(), rates[i].as_f64().unwrap()))
            .fold(("".to_string(), f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_eq!(r.rows[0][0].display(), best);
        assert_eq!(r.rows[0][1].as_f64().unwrap(), best_rate);
    }

    #[test]
    fn temporal_change_needs_two_timepoints() {
        let mut c = Catalog::new();
        c.ingest_table(b"borough,year,crime_rate\nA,2020,1.5\nB,2020,2.5\n", "one").unwrap();
        let t = c.table("one").unwrap();
        let bindings = BTreeMap::from([
            (Slot::Metric, "crime_rate".to_string()),
            (Slot::Time, "year".to_string()),
        ]);
        let err = family_plan(
            t,
            Family::TemporalChange,
            &bindings,
            &Constraints::defaults_for(Family::TemporalChange),
            &PlanFocus::default(),
        )
        .unwrap_err();
        assert!(matches!(err, QueryError::ConstraintViolation(_)));
    }

    #[test]
    fn per_capita_with_one_measure_is_missing_binding() {
        let t = crime();
        let bindings = BTreeMap::from([
            (Slot::MetricA, "crime_rate".to_string()),
            (Slot::Label, "borough".to_string()),
        ]);
        let err = family_plan(&t, Family::PerCapita, &bindings, &Constraints::default(), &PlanFocus::default())
            .unwrap_err();
        assert_eq!(err, QueryError::MissingBinding("metric_b".into()));
    }

    #[test]
    fn every_family_plan_executes() {
        let t = crime();
        let all = BTreeMap::from([
            (Slot::Metric, "crime_rate".to_string()),
            (Slot::MetricA, "crime_rate".to_string()),
            (Slot::MetricB, "income".to_string()),
            (Slot::Label, "borough".to_string()),
            (Slot::Group, "borough".to_string()),
            (Slot::Time, "year".to_string()),
        ]);
        for f in Family::ALL {
            let plan = family_plan(&t, f, &all, &Constraints::defaults_for(f), &PlanFocus::default()).unwrap();
            let r = execute(&t, &plan).unwrap();
            assert!(!r.is_empty(), "{f} produced no rows");
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
    }
}
