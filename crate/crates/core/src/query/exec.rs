use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{
    AggFn, CmpOp, Derived, Literal, QueryError, QueryPlan, ResultColumn, ResultTable, SortDirection,
};
use crate::catalog::{DataKind, SemanticRole, Table};
use crate::value::Value;

/// Group key wrapper giving `Value` the total order used everywhere else.
#[derive(Debug, Clone)]
struct Key(Vec<Value>);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

pub fn execute(table: &Table, plan: &QueryPlan) -> Result<ResultTable, QueryError> {
    if plan.table != table.name() {
        return Err(QueryError::UnknownTable(plan.table.clone()));
    }
    validate(table, plan)?;

    let rows: Vec<usize> = (0..table.row_count())
        .filter(|&r| plan.filters.iter().all(|f| filter_matches(table, r, f)))
        .collect();

    let mut result = match &plan.aggregate {
        Some(_) => aggregate(table, plan, &rows)?,
        None => project(table, &rows),
    };

    if let Some(derived) = &plan.derived {
        apply_derived(&mut result, plan, derived)?;
    }

    if let Some(sort) = &plan.sort {
        let idx = result
            .column_index(&sort.column)
            .ok_or_else(|| QueryError::UnknownColumn(sort.column.clone()))?;
        let desc = sort.direction == SortDirection::Desc;
        result.rows.sort_by(|a, b| {
            let primary = match (a[idx].is_null(), b[idx].is_null()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                _ if desc => b[idx].total_cmp(&a[idx]),
                _ => a[idx].total_cmp(&b[idx]),
            };
            // Ties fall back to ascending order of the leading (label) columns.
            primary.then_with(|| Key(a.clone()).cmp(&Key(b.clone())))
        });
    }

    if let Some(limit) = plan.limit {
        result.rows.truncate(limit);
    }
    Ok(result)
}

fn column_kind(table: &Table, name: &str) -> Result<DataKind, QueryError> {
    table
        .schema
        .column(name)
        .map(|c| c.data_kind)
        .ok_or_else(|| QueryError::UnknownColumn(name.to_string()))
}

fn require_numeric(table: &Table, name: &str, why: &str) -> Result<(), QueryError> {
    if column_kind(table, name)?.is_numeric() {
        Ok(())
    } else {
        Err(QueryError::TypeMismatch(format!("{why} over non-numeric column `{name}`")))
    }
}

fn validate(table: &Table, plan: &QueryPlan) -> Result<(), QueryError> {
    for f in &plan.filters {
        column_kind(table, &f.column)?;
        if f.op == CmpOp::In && !matches!(f.value, Literal::List(_)) {
            return Err(QueryError::InvalidPlan("`in` filter needs a list literal".into()));
        }
    }
    let group_cols = plan.group_by.clone().unwrap_or_default();
    for g in &group_cols {
        column_kind(table, g)?;
    }
    if plan.group_by.is_some() && plan.aggregate.is_none() {
        return Err(QueryError::InvalidPlan("group_by requires an aggregate".into()));
    }
    if let Some(agg) = &plan.aggregate {
        column_kind(table, &agg.column)?;
        match agg.func {
            AggFn::Sum | AggFn::Mean => require_numeric(table, &agg.column, "sum/mean")?,
            AggFn::Min | AggFn::Max => {
                if column_kind(table, &agg.column)? == DataKind::Text {
                    return Err(QueryError::TypeMismatch(format!(
                        "min/max over text column `{}`",
                        agg.column
                    )));
                }
            }
            AggFn::Count => {}
        }
    }
    if plan.limit == Some(0) {
        return Err(QueryError::InvalidPlan("limit must be at least 1".into()));
    }
    match &plan.derived {
        Some(Derived::PctChange { order_by }) => {
            column_kind(table, order_by)?;
            if !group_cols.contains(order_by) {
                return Err(QueryError::InvalidPlan(format!(
                    "pct_change orders by `{order_by}`, which must be a group column"
                )));
            }
            need_aggregate(plan, "pct_change")?;
        }
        Some(Derived::ShareOfTotal) => need_aggregate(plan, "share_of_total")?,
        Some(Derived::Zscore { threshold }) => {
            need_aggregate(plan, "zscore")?;
            if !threshold.is_finite() || *threshold < 0.0 {
                return Err(QueryError::InvalidPlan("zscore threshold must be non-negative".into()));
            }
        }
        Some(Derived::Ratio { numerator, denominator }) => {
            require_numeric(table, numerator, "ratio")?;
            require_numeric(table, denominator, "ratio")?;
        }
        Some(Derived::Pearson { x, y }) => {
            for c in [x, y] {
                let spec = table
                    .schema
                    .column(c)
                    .ok_or_else(|| QueryError::UnknownColumn(c.clone()))?;
                if spec.semantic_role != SemanticRole::Measure {
                    return Err(QueryError::TypeMismatch(format!(
                        "pearson requires measure columns, `{c}` is not one"
                    )));
                }
            }
            if x == y {
                return Err(QueryError::InvalidPlan("pearson needs two distinct columns".into()));
            }
        }
        None => {}
    }
    Ok(())
}

fn need_aggregate(plan: &QueryPlan, what: &str) -> Result<(), QueryError> {
    if plan.aggregate.is_none() {
        return Err(QueryError::InvalidPlan(format!("{what} requires an aggregate")));
    }
    Ok(())
}

fn filter_matches(table: &Table, row: usize, f: &super::Filter) -> bool {
    let col = table.schema.column_index(&f.column).expect("validated");
    let cell = table.cell(row, col);
    if cell.is_null() {
        return false;
    }
    match (&f.op, &f.value) {
        (CmpOp::In, Literal::List(items)) => items.iter().any(|v| cell.loose_eq(v)),
        (_, Literal::List(_)) => false,
        (op, Literal::Scalar(v)) => {
            if v.is_null() {
                return false;
            }
            let ord = cell.total_cmp(v);
            match op {
                CmpOp::Eq => cell.loose_eq(v),
                CmpOp::Ne => !cell.loose_eq(v),
                CmpOp::Lt => ord == Ordering::Less,
                CmpOp::Le => ord != Ordering::Greater,
                CmpOp::Gt => ord == Ordering::Greater,
                CmpOp::Ge => ord != Ordering::Less,
                CmpOp::In => false,
            }
        }
    }
}

fn project(table: &Table, rows: &[usize]) -> ResultTable {
    ResultTable {
        columns: table
            .schema
            .columns
            .iter()
            .map(|c| ResultColumn { name: c.name.clone(), data_kind: c.data_kind })
            .collect(),
        rows: rows.iter().map(|&r| table.row(r)).collect(),
    }
}

fn value_columns(plan: &QueryPlan) -> Vec<String> {
    let group = plan.group_by.clone().unwrap_or_default();
    let mut cols = Vec::new();
    if let Some(agg) = &plan.aggregate {
        cols.push(agg.column.clone());
    }
    match &plan.derived {
        Some(Derived::Ratio { numerator, denominator }) => {
            cols.push(numerator.clone());
            cols.push(denominator.clone());
        }
        Some(Derived::Pearson { x, y }) => {
            cols.push(x.clone());
            cols.push(y.clone());
        }
        _ => {}
    }
    let mut out: Vec<String> = Vec::new();
    for c in cols {
        if !out.contains(&c) && !group.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn aggregate(table: &Table, plan: &QueryPlan, rows: &[usize]) -> Result<ResultTable, QueryError> {
    let agg = plan.aggregate.as_ref().expect("checked by caller");
    let group_cols = plan.group_by.clone().unwrap_or_default();
    let group_idx: Vec<usize> = group_cols
        .iter()
        .map(|g| table.schema.column_index(g).expect("validated"))
        .collect();
    let values = value_columns(plan);
    let value_idx: Vec<usize> = values
        .iter()
        .map(|v| table.schema.column_index(v).expect("validated"))
        .collect();

    let mut groups: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        let key = Key(group_idx.iter().map(|&c| table.cell(r, c).clone()).collect());
        groups.entry(key).or_default().push(r);
    }

    let mut columns: Vec<ResultColumn> = group_cols
        .iter()
        .zip(&group_idx)
        .map(|(g, &i)| ResultColumn {
            name: g.clone(),
            data_kind: table.schema.columns[i].data_kind,
        })
        .collect();
    for (name, &i) in values.iter().zip(&value_idx) {
        let src = table.schema.columns[i].data_kind;
        let kind = match agg.func {
            AggFn::Count => DataKind::Integer,
            AggFn::Mean => DataKind::Real,
            AggFn::Sum | AggFn::Min | AggFn::Max => src,
        };
        columns.push(ResultColumn { name: name.clone(), data_kind: kind });
    }

    let mut out_rows = Vec::new();
    for (key, members) in groups {
        let mut row = key.0;
        let mut primary_empty = false;
        for (pos, &ci) in value_idx.iter().enumerate() {
            let cells: Vec<&Value> = members
                .iter()
                .map(|&r| table.cell(r, ci))
                .filter(|v| !v.is_null())
                .collect();
            let v = reduce(agg.func, &cells);
            if pos == 0 && cells.is_empty() && agg.func != AggFn::Count {
                primary_empty = true;
            }
            row.push(v);
        }
        if !primary_empty {
            out_rows.push(row);
        }
    }
    Ok(ResultTable { columns, rows: out_rows })
}

fn reduce(func: AggFn, cells: &[&Value]) -> Value {
    match func {
        AggFn::Count => Value::Int(cells.len() as i64),
        _ if cells.is_empty() => Value::Null,
        AggFn::Sum => {
            if cells.iter().all(|v| matches!(v, Value::Int(_))) {
                Value::Int(cells.iter().map(|v| if let Value::Int(i) = v { *i } else { 0 }).sum())
            } else {
                let mut acc = 0.0;
                for v in cells {
                    acc += v.as_f64().unwrap_or(0.0);
                }
                Value::Real(acc)
            }
        }
        AggFn::Mean => {
            let mut acc = 0.0;
            for v in cells {
                acc += v.as_f64().unwrap_or(0.0);
            }
            Value::Real(acc / cells.len() as f64)
        }
        AggFn::Min => (*cells.iter().min_by(|a, b| a.total_cmp(b)).unwrap()).clone(),
        AggFn::Max => (*cells.iter().max_by(|a, b| a.total_cmp(b)).unwrap()).clone(),
    }
}

fn apply_derived(result: &mut ResultTable, plan: &QueryPlan, derived: &Derived) -> Result<(), QueryError> {
    let value_col = plan.aggregate.as_ref().map(|a| a.column.clone());
    let idx_of = |r: &ResultTable, name: &str| {
        r.column_index(name)
            .ok_or_else(|| QueryError::UnknownColumn(name.to_string()))
    };
    match derived {
        Derived::PctChange { order_by } => {
            let v = idx_of(result, value_col.as_deref().unwrap())?;
            let t = idx_of(result, order_by)?;
            let partition: Vec<usize> = (0..result.columns.len())
                .filter(|&i| {
                    i != t && plan.group_by.as_ref().is_some_and(|g| g.contains(&result.columns[i].name))
                })
                .collect();
            let part_key = |row: &Vec<Value>| Key(partition.iter().map(|&i| row[i].clone()).collect());
            result.rows.sort_by(|a, b| part_key(a).cmp(&part_key(b)).then(a[t].total_cmp(&b[t])));
            let mut prev: Option<(Key, Value)> = None;
            for row in result.rows.iter_mut() {
                let key = part_key(row);
                let cur = row[v].clone();
                let pct = match &prev {
                    Some((k, base)) if *k == key => pct_change(base, &cur),
                    _ => Value::Null,
                };
                prev = Some((key, cur));
                row.push(pct);
            }
            result.columns.push(ResultColumn { name: "pct_change".into(), data_kind: DataKind::Real });
        }
        Derived::ShareOfTotal => {
            let v = idx_of(result, value_col.as_deref().unwrap())?;
            let mut total = 0.0;
            for row in &result.rows {
                if let Some(x) = row[v].as_f64() {
                    total += x;
                }
            }
            for row in result.rows.iter_mut() {
                let share = match row[v].as_f64() {
                    Some(x) if total != 0.0 => Value::Real(x / total),
                    _ => Value::Null,
                };
                row.push(share);
            }
            result.columns.push(ResultColumn { name: "share".into(), data_kind: DataKind::Real });
        }
        Derived::Ratio { numerator, denominator } => {
            let a = idx_of(result, numerator)?;
            let b = idx_of(result, denominator)?;
            for row in result.rows.iter_mut() {
                let r = match (row[a].as_f64(), row[b].as_f64()) {
                    (Some(x), Some(y)) if y != 0.0 => Value::Real(x / y),
                    _ => Value::Null,
                };
                row.push(r);
            }
            result.columns.push(ResultColumn { name: "ratio".into(), data_kind: DataKind::Real });
        }
        Derived::Zscore { threshold } => {
            let v = idx_of(result, value_col.as_deref().unwrap())?;
            let xs: Vec<f64> = result.rows.iter().filter_map(|r| r[v].as_f64()).collect();
            let (mean, sd) = mean_sd(&xs);
            for row in result.rows.iter_mut() {
                let z = match row[v].as_f64() {
                    Some(x) if sd > 0.0 => Some((x - mean) / sd),
                    _ => None,
                };
                row.push(z.map_or(Value::Null, Value::Real));
                row.push(Value::Bool(z.is_some_and(|z| z.abs() > *threshold)));
            }
            result.columns.push(ResultColumn { name: "zscore".into(), data_kind: DataKind::Real });
            result
                .columns
                .push(ResultColumn { name: "is_outlier".into(), data_kind: DataKind::Boolean });
        }
        Derived::Pearson { x, y } => {
            let a = idx_of(result, x)?;
            let b = idx_of(result, y)?;
            let pairs: Vec<(f64, f64)> = result
                .rows
                .iter()
                .filter_map(|r| Some((r[a].as_f64()?, r[b].as_f64()?)))
                .collect();
            let r = pearson(&pairs).map_or(Value::Null, Value::Real);
            for row in result.rows.iter_mut() {
                row.push(r.clone());
            }
            result.columns.push(ResultColumn { name: "pearson_r".into(), data_kind: DataKind::Real });
        }
    }
    Ok(())
}

fn pct_change(base: &Value, cur: &Value) -> Value {
    match (base.as_f64(), cur.as_f64()) {
        (Some(b), Some(c)) if b != 0.0 => Value::Real((c - b) / b * 100.0),
        _ => Value::Null,
    }
}

/// Mean and population standard deviation.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
