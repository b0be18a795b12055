//! Schema-driven proposition templates and their grounded instances.
//!
//! Phrasings live in `data/proposition_templates.json`. Every filled value is
//! read from the result of the instance's own query plan.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{category_threshold, ColumnSpec, SemanticRole, Table};
use crate::query::{
    execute, family_plan, Constraints, Family, PlanFocus, QueryError, QueryPlan, ResultTable, Slot,
};
use crate::tags::{TagNormalizer, TagSet};
use crate::value::{format_real, Value};

const TEMPLATE_FILE: &str = include_str!("../data/proposition_templates.json");

/// Measure-pair families keep at most this many templates per table.
pub const PAIR_TEMPLATE_CAP: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropositionError {
    #[error("table `{0}` has no measure columns")]
    NoMeasureColumns(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// What a text slot is filled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    TimeValue,
    LabelValue,
    LabelName,
    GroupValue,
    MetricName,
    MetricAName,
    MetricBName,
    MetricValue,
    RankPosition,
    ChangeDirection,
    PctChange,
    PeriodStart,
    PeriodEnd,
    Share,
    Zscore,
    Ratio,
    CorrelationDirection,
    PearsonR,
}

impl SlotRole {
    /// Column slot a role draws from, if it is column-backed.
    fn column_slot(self) -> Option<Slot> {
        match self {
            SlotRole::TimeValue | SlotRole::PeriodStart | SlotRole::PeriodEnd => Some(Slot::Time),
            SlotRole::LabelValue | SlotRole::LabelName => Some(Slot::Label),
            SlotRole::GroupValue => Some(Slot::Group),
            SlotRole::MetricName | SlotRole::MetricValue => Some(Slot::Metric),
            SlotRole::MetricAName => Some(Slot::MetricA),
            SlotRole::MetricBName => Some(Slot::MetricB),
            _ => None,
        }
    }

    fn is_column_name(self) -> bool {
        matches!(
            self,
            SlotRole::MetricName | SlotRole::MetricAName | SlotRole::MetricBName | SlotRole::LabelName
        )
    }

    fn display(self, v: &Value) -> String {
        match (self, v) {
            (SlotRole::PctChange, Value::Real(x)) => format_real(x.abs()),
            (SlotRole::Share, Value::Real(x)) => format_real(x * 100.0),
            (SlotRole::PearsonR, Value::Real(x)) => format!("{x:.2}"),
            _ => v.display(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotBinding {
    pub role: SlotRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct TemplateSpec {
    family: Family,
    #[serde(default)]
    variant: Option<String>,
    text_template: String,
    #[serde(default)]
    untimed_text_template: Option<String>,
    slots: BTreeMap<String, SlotRole>,
}

fn template_specs() -> &'static [TemplateSpec] {
    static SPECS: OnceLock<Vec<TemplateSpec>> = OnceLock::new();
    SPECS.get_or_init(|| serde_json::from_str(TEMPLATE_FILE).expect("bundled proposition templates parse"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionTemplate {
    pub template_id: String,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub table: String,
    pub text_template: String,
    pub slot_bindings: BTreeMap<String, SlotBinding>,
    pub columns: BTreeMap<Slot, String>,
    pub constraints: Constraints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionInstance {
    pub instance_id: String,
    pub template_id: String,
    pub family: Family,
    pub filled_text: String,
    pub values: BTreeMap<String, Value>,
    pub tags: TagSet,
    pub plan: QueryPlan,
    pub grounding: BTreeMap<String, Value>,
}

fn slot_names(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\{([a-z0-9_]+)\}").unwrap());
    re.captures_iter(text).map(|c| c[1].to_string()).collect()
}

impl PropositionTemplate {
    /// Display strings for each slot.
    pub fn display_values(&self, values: &BTreeMap<String, Value>) -> BTreeMap<String, String> {
        values
            .iter()
            .filter_map(|(slot, v)| self.slot_bindings.get(slot).map(|b| (slot.clone(), b.role.display(v))))
            .collect()
    }

    pub fn fill(&self, values: &BTreeMap<String, Value>) -> Option<String> {
        let shown = self.display_values(values);
        let mut out = self.text_template.clone();
        for slot in slot_names(&self.text_template) {
            out = out.replacen(&format!("{{{slot}}}"), shown.get(&slot)?, 1);
        }
        Some(out)
    }

    /// Inverse of `fill` on display strings.
    pub fn extract(&self, text: &str) -> Option<BTreeMap<String, String>> {
        let mut pattern = String::from("^");
        let mut rest = self.text_template.as_str();
        let mut order: Vec<String> = Vec::new();
        let mut fixed = BTreeMap::new();
        while let Some(open) = rest.find('{') {
            let close = rest[open..].find('}')? + open;
            pattern.push_str(&regex::escape(&rest[..open]));
            let name = &rest[open + 1..close];
            if order.iter().any(|n| n == name) || fixed.contains_key(name) {
                return None;
            }
            let binding = self.slot_bindings.get(name)?;
            match (binding.role.is_column_name(), &binding.column) {
                // column names are fixed by the template, not by the instance
                (true, Some(col)) => {
                    pattern.push_str(&regex::escape(col));
                    fixed.insert(name.to_string(), col.clone());
                }
                _ => {
                    pattern.push_str(&format!("(?P<{name}>.+?)"));
                    order.push(name.to_string());
                }
            }
            rest = &rest[close + 1..];
        }
        pattern.push_str(&regex::escape(rest));
        pattern.push('$');
        let re = Regex::new(&pattern).ok()?;
        let caps = re.captures(text)?;
        let mut out = fixed;
        out.extend(order.into_iter().map(|n| (n.clone(), caps[n.as_str()].to_string())));
        Some(out)
    }
}

fn spec_id(spec: &TemplateSpec) -> String {
    match &spec.variant {
        Some(v) => format!("{}_{}", spec.family, v),
        None => spec.family.to_string(),
    }
}

fn build_template(
    table: &Table,
    spec: &TemplateSpec,
    columns: BTreeMap<Slot, String>,
) -> Option<PropositionTemplate> {
    let timed = columns.contains_key(&Slot::Time);
    let text = if timed || spec.family == Family::TemporalChange {
        spec.text_template.clone()
    } else {
        spec.untimed_text_template.clone().unwrap_or_else(|| spec.text_template.clone())
    };
    let mut text = text;
    // temporal change without a label column drops the label phrase
    if spec.family == Family::TemporalChange && !columns.contains_key(&Slot::Label) {
        text = spec.untimed_text_template.clone()?;
    }
    let mut slot_bindings = BTreeMap::new();
    for name in slot_names(&text) {
        let role = *spec.slots.get(&name)?;
        let column = match role.column_slot() {
            Some(slot) => Some(columns.get(&slot)?.clone()),
            None => None,
        };
        slot_bindings.insert(name, SlotBinding { role, column });
    }
    let mut id = spec_id(spec);
    for col in columns.values() {
        id.push(':');
        id.push_str(col);
    }
    Some(PropositionTemplate {
        template_id: id,
        family: spec.family,
        variant: spec.variant.clone(),
        table: table.name().to_string(),
        text_template: text,
        slot_bindings,
        columns,
        constraints: Constraints::defaults_for(spec.family),
    })
}

fn ordered_pairs<'a>(table: &Table, measures: &[&'a ColumnSpec], ordered: bool) -> Vec<(&'a str, &'a str)> {
    let mut pairs: Vec<(f64, &str, &str)> = Vec::new();
    for (i, a) in measures.iter().enumerate() {
        for (j, b) in measures.iter().enumerate() {
            if i == j || (!ordered && j < i) {
                continue;
            }
            let weight = table.variance(&a.name) + table.variance(&b.name);
            pairs.push((weight, &a.name, &b.name));
        }
    }
    // stable: equal weights keep schema order
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.truncate(PAIR_TEMPLATE_CAP);
    pairs.into_iter().map(|(_, a, b)| (a, b)).collect()
}

/// Every admissible template for the table, in deterministic order.
pub fn generate_templates(table: &Table) -> Result<Vec<PropositionTemplate>, PropositionError> {
    let schema = &table.schema;
    let measures = schema.measures();
    if measures.is_empty() {
        return Err(PropositionError::NoMeasureColumns(schema.table_name.clone()));
    }
    let min_groups = crate::query::family::DEFAULT_MIN_GROUPS;
    let min_points = crate::query::family::DEFAULT_MIN_TIMEPOINTS;
    let labels: Vec<&ColumnSpec> = schema.label_columns().into_iter().filter(|c| c.cardinality >= min_groups).collect();
    let time = schema.time_column().map(|c| c.name.clone());
    let threshold = category_threshold(schema.row_count);
    let groups: Vec<&ColumnSpec> = labels
        .iter()
        .copied()
        .filter(|c| match c.semantic_role {
            SemanticRole::Category => true,
            SemanticRole::Geo => c.cardinality <= threshold,
            _ => false,
        })
        .collect();
    let with_time = |mut m: BTreeMap<Slot, String>| {
        if let Some(t) = &time {
            m.insert(Slot::Time, t.clone());
        }
        m
    };

    let mut out = Vec::new();
    for spec in template_specs() {
        match spec.family {
            Family::Ranking | Family::Outlier => {
                for m in &measures {
                    for l in &labels {
                        let cols = with_time(BTreeMap::from([
                            (Slot::Metric, m.name.clone()),
                            (Slot::Label, l.name.clone()),
                        ]));
                        out.extend(build_template(table, spec, cols));
                    }
                }
            }
            Family::TemporalChange => {
                let Some(t) = &time else { continue };
                if schema.column(t).map(|c| c.cardinality).unwrap_or(0) < min_points {
                    continue;
                }
                for m in &measures {
                    let base = BTreeMap::from([(Slot::Metric, m.name.clone()), (Slot::Time, t.clone())]);
                    if labels.is_empty() {
                        out.extend(build_template(table, spec, base));
                    } else {
                        for l in &labels {
                            let mut cols = base.clone();
                            cols.insert(Slot::Label, l.name.clone());
                            out.extend(build_template(table, spec, cols));
                        }
                    }
                }
            }
            Family::Composition => {
                for m in &measures {
                    for g in &groups {
                        let cols = with_time(BTreeMap::from([
                            (Slot::Metric, m.name.clone()),
                            (Slot::Group, g.name.clone()),
                        ]));
                        out.extend(build_template(table, spec, cols));
                    }
                }
            }
            Family::PerCapita | Family::Correlation => {
                let Some(label) = labels.first() else { continue };
                let ordered = spec.family == Family::PerCapita;
                for (a, b) in ordered_pairs(table, &measures, ordered) {
                    let mut cols = BTreeMap::from([
                        (Slot::MetricA, a.to_string()),
                        (Slot::MetricB, b.to_string()),
                        (Slot::Label, label.name.clone()),
                    ]);
                    if ordered {
                        cols = with_time(cols);
                    }
                    out.extend(build_template(table, spec, cols));
                }
            }
        }
    }
    Ok(out)
}

fn position_word(rank: usize, variant: &str) -> String {
    let ord = match rank {
        1 => "",
        2 => "second ",
        3 => "third ",
        4 => "fourth ",
        5 => "fifth ",
        _ => return format!("#{rank} {variant}"),
    };
    format!("{ord}{variant}")
}

struct Builder<'a> {
    table: &'a Table,
    template: &'a PropositionTemplate,
    tagger: &'a TagNormalizer,
    out: Vec<PropositionInstance>,
}

impl Builder<'_> {
    fn name_values(&self) -> BTreeMap<String, Value> {
        let mut values = BTreeMap::new();
        for (slot, b) in &self.template.slot_bindings {
            if b.role.is_column_name() {
                values.insert(slot.clone(), Value::Text(b.column.clone().unwrap_or_default()));
            }
        }
        values
    }

    fn slot_for(&self, role: SlotRole) -> Option<String> {
        self.template.slot_bindings.iter().find(|(_, b)| b.role == role).map(|(s, _)| s.clone())
    }

    fn set(&self, values: &mut BTreeMap<String, Value>, role: SlotRole, v: Value) {
        if let Some(slot) = self.slot_for(role) {
            values.insert(slot, v);
        }
    }

    fn push(&mut self, suffix: &str, values: BTreeMap<String, Value>, plan: QueryPlan, grounding: BTreeMap<String, Value>) {
        let Some(filled_text) = self.template.fill(&values) else { return };
        let instance_id = if suffix.is_empty() {
            self.template.template_id.clone()
        } else {
            format!("{}@{}", self.template.template_id, suffix)
        };
        self.out.push(PropositionInstance {
            instance_id,
            template_id: self.template.template_id.clone(),
            family: self.template.family,
            tags: self.tagger.normalize(&filled_text),
            filled_text,
            values,
            plan,
            grounding,
        });
    }

    fn plan(&self, focus: &PlanFocus) -> Result<Option<(QueryPlan, ResultTable)>, QueryError> {
        match family_plan(self.table, self.template.family, &self.template.columns, &self.template.constraints, focus) {
            Ok(plan) => {
                let result = execute(self.table, &plan)?;
                Ok(Some((plan, result)))
            }
            Err(QueryError::ConstraintViolation(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn time_slices(&self) -> Vec<Option<Value>> {
        match self.template.columns.get(&Slot::Time) {
            Some(t) if self.template.family != Family::TemporalChange && self.template.family != Family::Correlation => {
                self.table.distinct_sorted(t).into_iter().map(Some).collect()
            }
            _ => vec![None],
        }
    }

    fn col(&self, slot: Slot) -> &str {
        self.template.columns.get(&slot).map(String::as_str).unwrap_or("")
    }

    fn run(&mut self) -> Result<(), QueryError> {
        match self.template.family {
            Family::Ranking => self.ranking(),
            Family::TemporalChange => self.temporal(),
            Family::Composition => self.composition(),
            Family::Outlier => self.outlier(),
            Family::PerCapita => self.per_capita(),
            Family::Correlation => self.correlation(),
        }
    }

    fn time_suffix(t: &Option<Value>) -> String {
        t.as_ref().map(Value::key).unwrap_or_else(|| "all".into())
    }

    fn ranking(&mut self) -> Result<(), QueryError> {
        let variant = self.template.variant.clone().unwrap_or_else(|| "highest".into());
        let ascending = variant == "lowest";
        let (label, metric) = (self.col(Slot::Label).to_string(), self.col(Slot::Metric).to_string());
        for t in self.time_slices() {
            let focus = PlanFocus { time_value: t.clone(), ascending };
            let Some((plan, result)) = self.plan(&focus)? else { continue };
            let top_k = self.template.constraints.top_k.unwrap_or(usize::MAX);
            for (i, row) in result.rows.iter().enumerate().take(top_k) {
                let v = row[result.column_index(&metric).unwrap()].clone();
                if v.is_null() {
                    continue;
                }
                let mut values = self.name_values();
                if let Some(t) = &t {
                    self.set(&mut values, SlotRole::TimeValue, t.clone());
                }
                self.set(&mut values, SlotRole::LabelValue, row[result.column_index(&label).unwrap()].clone());
                self.set(&mut values, SlotRole::RankPosition, Value::Text(position_word(i + 1, &variant)));
                self.set(&mut values, SlotRole::MetricValue, v);
                let grounding = BTreeMap::from([
                    ("rank".to_string(), Value::Int(i as i64 + 1)),
                    ("groups".to_string(), Value::Int(result.len() as i64)),
                ]);
                self.push(&format!("{}#{}", Self::time_suffix(&t), i + 1), values, plan.clone(), grounding);
            }
        }
        Ok(())
    }

    fn temporal(&mut self) -> Result<(), QueryError> {
        let Some((plan, result)) = self.plan(&PlanFocus::default())? else { return Ok(()) };
        let time = self.col(Slot::Time).to_string();
        let metric = self.col(Slot::Metric).to_string();
        let label = self.template.columns.get(&Slot::Label).cloned();
        let ti = result.column_index(&time).unwrap();
        let mi = result.column_index(&metric).unwrap();
        let pi = result.column_index("pct_change").unwrap();
        let li = label.as_ref().and_then(|l| result.column_index(l));

        // partition rows by label, each sorted by time
        let mut parts: BTreeMap<String, Vec<&Vec<Value>>> = BTreeMap::new();
        for row in &result.rows {
            let key = li.map(|i| row[i].key()).unwrap_or_default();
            parts.entry(key).or_default().push(row);
        }
        // (t0, t1) -> candidates
        let mut periods: BTreeMap<(String, String), Vec<(f64, Value, Value, Value, Value, Option<Value>)>> = BTreeMap::new();
        for rows in parts.values_mut() {
            rows.sort_by(|a, b| a[ti].total_cmp(&b[ti]));
            for w in rows.windows(2) {
                let (prev, cur) = (w[0], w[1]);
                let Some(pct) = cur[pi].as_f64() else { continue };
                if pct == 0.0 {
                    continue;
                }
                periods.entry((prev[ti].key(), cur[ti].key())).or_default().push((
                    pct,
                    prev[ti].clone(),
                    cur[ti].clone(),
                    prev[mi].clone(),
                    cur[mi].clone(),
                    li.map(|i| cur[i].clone()),
                ));
            }
        }
        let top_k = self.template.constraints.top_k.unwrap_or(usize::MAX);
        for ((k0, k1), mut cands) in periods {
            cands.sort_by(|a, b| {
                b.0.abs()
                    .total_cmp(&a.0.abs())
                    .then_with(|| a.5.as_ref().map(Value::key).cmp(&b.5.as_ref().map(Value::key)))
            });
            for (pct, t0, t1, v0, v1, lab) in cands.into_iter().take(top_k) {
                let mut values = self.name_values();
                let suffix = match &lab {
                    Some(l) => format!("{k0}-{k1}:{}", l.key()),
                    None => format!("{k0}-{k1}"),
                };
                if let Some(l) = lab {
                    self.set(&mut values, SlotRole::LabelValue, l);
                }
                let dir = if pct > 0.0 { "rose" } else { "fell" };
                self.set(&mut values, SlotRole::ChangeDirection, Value::Text(dir.into()));
                self.set(&mut values, SlotRole::PctChange, Value::Real(pct));
                self.set(&mut values, SlotRole::PeriodStart, t0);
                self.set(&mut values, SlotRole::PeriodEnd, t1);
                let grounding = BTreeMap::from([("start_value".to_string(), v0), ("end_value".to_string(), v1)]);
                self.push(&suffix, values, plan.clone(), grounding);
            }
        }
        Ok(())
    }

    fn composition(&mut self) -> Result<(), QueryError> {
        let group = self.col(Slot::Group).to_string();
        let metric = self.col(Slot::Metric).to_string();
        for t in self.time_slices() {
            let focus = PlanFocus { time_value: t.clone(), ascending: false };
            let Some((plan, result)) = self.plan(&focus)? else { continue };
            let (gi, mi, si) = (
                result.column_index(&group).unwrap(),
                result.column_index(&metric).unwrap(),
                result.column_index("share").unwrap(),
            );
            for (i, row) in result.rows.iter().enumerate() {
                if row[si].is_null() {
                    continue;
                }
                let mut values = self.name_values();
                if let Some(t) = &t {
                    self.set(&mut values, SlotRole::TimeValue, t.clone());
                }
                self.set(&mut values, SlotRole::GroupValue, row[gi].clone());
                self.set(&mut values, SlotRole::Share, row[si].clone());
                let grounding = BTreeMap::from([("group_total".to_string(), row[mi].clone())]);
                self.push(&format!("{}#{}", Self::time_suffix(&t), i + 1), values, plan.clone(), grounding);
            }
        }
        Ok(())
    }

    fn outlier(&mut self) -> Result<(), QueryError> {
        let label = self.col(Slot::Label).to_string();
        let metric = self.col(Slot::Metric).to_string();
        for t in self.time_slices() {
            let focus = PlanFocus { time_value: t.clone(), ascending: false };
            let Some((plan, result)) = self.plan(&focus)? else { continue };
            let (li, mi, zi, oi) = (
                result.column_index(&label).unwrap(),
                result.column_index(&metric).unwrap(),
                result.column_index("zscore").unwrap(),
                result.column_index("is_outlier").unwrap(),
            );
            for row in &result.rows {
                if row[oi] != Value::Bool(true) {
                    continue;
                }
                let mut values = self.name_values();
                if let Some(t) = &t {
                    self.set(&mut values, SlotRole::TimeValue, t.clone());
                }
                self.set(&mut values, SlotRole::LabelValue, row[li].clone());
                self.set(&mut values, SlotRole::Zscore, row[zi].clone());
                let grounding = BTreeMap::from([("value".to_string(), row[mi].clone())]);
                let suffix = format!("{}:{}", Self::time_suffix(&t), row[li].key());
                self.push(&suffix, values, plan.clone(), grounding);
            }
        }
        Ok(())
    }

    fn per_capita(&mut self) -> Result<(), QueryError> {
        let label = self.col(Slot::Label).to_string();
        for t in self.time_slices() {
            let focus = PlanFocus { time_value: t.clone(), ascending: false };
            let Some((plan, result)) = self.plan(&focus)? else { continue };
            let (li, ri) = (result.column_index(&label).unwrap(), result.column_index("ratio").unwrap());
            for (i, row) in result.rows.iter().enumerate() {
                if row[ri].is_null() {
                    continue;
                }
                let mut values = self.name_values();
                if let Some(t) = &t {
                    self.set(&mut values, SlotRole::TimeValue, t.clone());
                }
                self.set(&mut values, SlotRole::LabelValue, row[li].clone());
                self.set(&mut values, SlotRole::Ratio, row[ri].clone());
                let grounding = BTreeMap::from([("rank".to_string(), Value::Int(i as i64 + 1))]);
                self.push(&format!("{}#{}", Self::time_suffix(&t), i + 1), values, plan.clone(), grounding);
            }
        }
        Ok(())
    }

    fn correlation(&mut self) -> Result<(), QueryError> {
        let Some((plan, result)) = self.plan(&PlanFocus::default())? else { return Ok(()) };
        let Some(r) = result.get(0, "pearson_r").and_then(Value::as_f64) else { return Ok(()) };
        let mut values = self.name_values();
        let dir = if r >= 0.0 { "positively" } else { "negatively" };
        self.set(&mut values, SlotRole::CorrelationDirection, Value::Text(dir.into()));
        self.set(&mut values, SlotRole::PearsonR, Value::Real(r));
        let grounding = BTreeMap::from([("n".to_string(), Value::Int(result.len() as i64))]);
        self.push("", values, plan, grounding);
        Ok(())
    }
}

/// Instances of one template. Constraint violations yield no instances.
pub fn instantiate(
    table: &Table,
    template: &PropositionTemplate,
    tagger: &TagNormalizer,
) -> Result<Vec<PropositionInstance>, PropositionError> {
    let mut b = Builder { table, template, tagger, out: Vec::new() };
    b.run()?;
    Ok(b.out)
}

/// All instances for a table, ordered by template id then slot values.
pub fn all_instances(table: &Table, tagger: &TagNormalizer) -> Result<Vec<PropositionInstance>, PropositionError> {
    let mut templates = generate_templates(table)?;
    templates.sort_by(|a, b| a.template_id.cmp(&b.template_id));
    let mut out = Vec::new();
    for t in &templates {
        out.extend(instantiate(table, t, tagger)?);
    }
    let mut seen = BTreeSet::new();
    out.retain(|i| seen.insert(i.instance_id.clone()));
    Ok(out)
}

/// Finds the template that produced an instance.
pub fn template_for<'a>(templates: &'a [PropositionTemplate], instance: &PropositionInstance) -> Option<&'a PropositionTemplate> {
    templates.iter().find(|t| t.template_id == instance.template_id)
}
