//! Chart templates, Vega-Lite rendering and dashboards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::catalog::{DataKind, Table, TableSchema};
use crate::llm::{Gateway, Prompt, Task};
use crate::llm::prompts::sha256_hex;
use crate::query::{AggFn, Family, Filter, QueryPlan, ResultTable, SortDirection};
use crate::tags::{TagNormalizer, TagSet};
use crate::value::Value;

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";
pub const MAX_DASHBOARD_VIEWS: usize = 4;

const LIBRARY: &str = include_str!("../data/chart_templates.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewError {
    #[error("result does not fit the {kind} format: {reason}")]
    FormatMismatch { kind: ChartKind, reason: String },
    #[error("a dashboard holds at most {MAX_DASHBOARD_VIEWS} views, got {0}")]
    TooManyViews(usize),
    #[error("a dashboard needs at least one view")]
    EmptyViews,
    #[error("duplicate view id `{0}` in dashboard")]
    DuplicateView(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Bar,
    GroupedBar,
    Line,
    MultiLine,
    Scatter,
    Heatmap,
    Histogram,
}

impl ChartKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Bar => "bar",
            ChartKind::GroupedBar => "grouped_bar",
            ChartKind::Line => "line",
            ChartKind::MultiLine => "multi_line",
            ChartKind::Scatter => "scatter",
            ChartKind::Heatmap => "heatmap",
            ChartKind::Histogram => "histogram",
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingRole {
    Labels,
    Values,
    X,
    Y,
    Group,
    Series,
    Color,
}

#[derive(Debug, Clone, Deserialize)]
struct BaseTemplate {
    kind: ChartKind,
    caption_noun: String,
    required: Vec<EncodingRole>,
    optional: Vec<EncodingRole>,
    compatible_families: BTreeSet<Family>,
}

fn library() -> &'static [BaseTemplate] {
    static LIB: OnceLock<Vec<BaseTemplate>> = OnceLock::new();
    LIB.get_or_init(|| serde_json::from_str(LIBRARY).expect("bundled chart library parses"))
}

fn base(kind: ChartKind) -> &'static BaseTemplate {
    library().iter().find(|b| b.kind == kind).expect("every kind is in the library")
}

/// Declared (family, chart kind) compatibility.
pub fn compatible_kinds(family: Family) -> Vec<ChartKind> {
    library().iter().filter(|b| b.compatible_families.contains(&family)).map(|b| b.kind).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartTemplate {
    pub template_id: String,
    pub chart_kind: ChartKind,
    pub table: String,
    pub expected_format: BTreeMap<EncodingRole, String>,
    pub caption: String,
    pub tags: TagSet,
    pub compatible_families: BTreeSet<Family>,
}

impl ChartTemplate {
    fn new(kind: ChartKind, table: &str, format: BTreeMap<EncodingRole, String>) -> Self {
        let b = base(kind);
        let mut id = format!("{}:{}", kind, table);
        for (role, col) in &format {
            id.push_str(&format!(":{}={}", serde_json::to_value(role).unwrap().as_str().unwrap(), col));
        }
        let caption = fallback_caption(kind, &format);
        ChartTemplate {
            template_id: id,
            chart_kind: kind,
            table: table.to_string(),
            expected_format: format,
            caption,
            tags: TagSet::default(),
            compatible_families: b.compatible_families.clone(),
        }
    }

    pub fn column(&self, role: EncodingRole) -> Option<&str> {
        self.expected_format.get(&role).map(String::as_str)
    }

    /// Measure column the chart displays.
    pub fn measure(&self) -> Option<&str> {
        match self.chart_kind {
            ChartKind::Bar | ChartKind::GroupedBar => self.column(EncodingRole::Values),
            ChartKind::Heatmap => self.column(EncodingRole::Color),
            ChartKind::Histogram => self.column(EncodingRole::X),
            _ => self.column(EncodingRole::Y),
        }
    }

    /// Query feeding an adapted template; `time` optionally slices the table.
    pub fn plan(&self, table: &TableSchema, time: Option<&Value>) -> QueryPlan {
        let mut plan = QueryPlan::scan(&self.table);
        let time_col = table.time_column().map(|c| c.name.clone());
        let col = |r| self.column(r).unwrap_or_default().to_string();
        let slice = |p: QueryPlan| match (&time_col, time) {
            (Some(t), Some(v)) => p.filter(Filter::eq(t.clone(), v.clone())),
            _ => p,
        };
        match self.chart_kind {
            ChartKind::Bar => {
                plan = slice(plan)
                    .group_by([col(EncodingRole::Labels)])
                    .aggregate(AggFn::Mean, col(EncodingRole::Values))
                    .sort(col(EncodingRole::Values), SortDirection::Desc);
            }
            ChartKind::GroupedBar => {
                plan = plan
                    .group_by([col(EncodingRole::Labels), col(EncodingRole::Group)])
                    .aggregate(AggFn::Mean, col(EncodingRole::Values));
            }
            ChartKind::Line => {
                plan = plan.group_by([col(EncodingRole::X)]).aggregate(AggFn::Mean, col(EncodingRole::Y));
            }
            ChartKind::MultiLine => {
                plan = plan
                    .group_by([col(EncodingRole::Series), col(EncodingRole::X)])
                    .aggregate(AggFn::Mean, col(EncodingRole::Y));
            }
            ChartKind::Heatmap => {
                plan = plan
                    .group_by([col(EncodingRole::Y), col(EncodingRole::X)])
                    .aggregate(AggFn::Mean, col(EncodingRole::Color));
            }
            ChartKind::Scatter | ChartKind::Histogram => plan = slice(plan),
        }
        plan
    }
}

/// "⟨kind⟩ of ⟨measure⟩ by ⟨dimensions⟩".
pub fn fallback_caption(kind: ChartKind, format: &BTreeMap<EncodingRole, String>) -> String {
    let noun = &base(kind).caption_noun;
    let get = |r: EncodingRole| format.get(&r).map(String::as_str).unwrap_or("?");
    match kind {
        ChartKind::Bar => format!("{noun} of {} by {}", get(EncodingRole::Values), get(EncodingRole::Labels)),
        ChartKind::GroupedBar => format!(
            "{noun} of {} by {} and {}",
            get(EncodingRole::Values),
            get(EncodingRole::Labels),
            get(EncodingRole::Group)
        ),
        ChartKind::Line => format!("{noun} of {} by {}", get(EncodingRole::Y), get(EncodingRole::X)),
        ChartKind::MultiLine => format!(
            "{noun} of {} by {} and {}",
            get(EncodingRole::Y),
            get(EncodingRole::X),
            get(EncodingRole::Series)
        ),
        ChartKind::Scatter => format!("{noun} of {} by {}", get(EncodingRole::Y), get(EncodingRole::X)),
        ChartKind::Heatmap => format!(
            "{noun} of {} by {} and {}",
            get(EncodingRole::Color),
            get(EncodingRole::X),
            get(EncodingRole::Y)
        ),
        ChartKind::Histogram => format!("{noun} of {}", get(EncodingRole::X)),
    }
}

fn llm_caption(gateway: &Gateway, t: &ChartTemplate) -> Option<String> {
    let prompt = Prompt {
        task: Task::ViewCaption,
        system: "Write a one-line descriptive caption for a chart. Return JSON {\"caption\": \"...\"}.".into(),
        user: json!({ "chart_kind": t.chart_kind, "encoding": t.expected_format, "table": t.table }).to_string(),
    };
    let ex = gateway.chat(&prompt).ok()?;
    ex.parsed["caption"].as_str().map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

/// Binds every base template to the columns of `table`.
pub fn adapt_templates(table: &Table, tagger: &TagNormalizer, gateway: &Gateway) -> Vec<ChartTemplate> {
    let schema = &table.schema;
    let name = table.name();
    let measures: Vec<&str> = schema.measures().iter().map(|c| c.name.as_str()).collect();
    let labels: Vec<&str> = schema.label_columns().iter().map(|c| c.name.as_str()).collect();
    let time = schema.time_column().map(|c| c.name.as_str());
    let f = |pairs: &[(EncodingRole, &str)]| -> BTreeMap<EncodingRole, String> {
        pairs.iter().map(|(r, c)| (*r, c.to_string())).collect()
    };
    use EncodingRole::*;
    let mut out = Vec::new();
    for &m in &measures {
        for &l in &labels {
            out.push(ChartTemplate::new(ChartKind::Bar, name, f(&[(Labels, l), (Values, m)])));
        }
        if let Some(t) = time {
            for &l in &labels {
                out.push(ChartTemplate::new(ChartKind::GroupedBar, name, f(&[(Labels, l), (Values, m), (Group, t)])));
            }
            out.push(ChartTemplate::new(ChartKind::Line, name, f(&[(X, t), (Y, m)])));
            for &l in &labels {
                out.push(ChartTemplate::new(ChartKind::MultiLine, name, f(&[(X, t), (Y, m), (Series, l)])));
                out.push(ChartTemplate::new(ChartKind::Heatmap, name, f(&[(X, t), (Y, l), (Color, m)])));
            }
        }
        out.push(ChartTemplate::new(ChartKind::Histogram, name, f(&[(X, m)])));
    }
    for (i, &a) in measures.iter().enumerate() {
        for &b in &measures[i + 1..] {
            let mut fmt = f(&[(X, a), (Y, b)]);
            if let Some(&l) = labels.first() {
                fmt.insert(Group, l.to_string());
            }
            out.push(ChartTemplate::new(ChartKind::Scatter, name, fmt));
        }
    }
    for t in &mut out {
        if let Some(c) = llm_caption(gateway, t) {
            t.caption = c;
        }
        let mut tags = tagger.normalize(&t.caption);
        tags.intent.extend(t.compatible_families.iter().map(|f| f.as_str().to_string()));
        t.tags = tags;
    }
    out
}

/// Chart for the canonical result of a proposition family.
pub fn template_for_family(
    family: Family,
    kind: ChartKind,
    table: &str,
    columns: &BTreeMap<crate::query::Slot, String>,
) -> Option<ChartTemplate> {
    use crate::query::Slot;
    use EncodingRole::*;
    if !compatible_kinds(family).contains(&kind) {
        return None;
    }
    let c = |s: Slot| columns.get(&s).cloned();
    let mut fmt = BTreeMap::new();
    let mut put = |r: EncodingRole, v: Option<String>| -> Option<()> {
        fmt.insert(r, v?);
        Some(())
    };
    match (family, kind) {
        (Family::Ranking, ChartKind::Bar) => {
            put(Labels, c(Slot::Label))?;
            put(Values, c(Slot::Metric))?;
        }
        (Family::Composition, ChartKind::Bar) => {
            put(Labels, c(Slot::Group))?;
            put(Values, Some("share".into()))?;
        }
        (Family::PerCapita, ChartKind::Bar) => {
            put(Labels, c(Slot::Label))?;
            put(Values, Some("ratio".into()))?;
        }
        (Family::TemporalChange, ChartKind::GroupedBar) => {
            put(Labels, c(Slot::Label))?;
            put(Values, c(Slot::Metric))?;
            put(Group, c(Slot::Time))?;
        }
        (Family::TemporalChange, ChartKind::Line) => {
            put(X, c(Slot::Time))?;
            put(Y, c(Slot::Metric))?;
        }
        (Family::TemporalChange, ChartKind::MultiLine) => {
            put(X, c(Slot::Time))?;
            put(Y, c(Slot::Metric))?;
            put(Series, c(Slot::Label))?;
        }
        (Family::TemporalChange, ChartKind::Heatmap) => {
            put(X, c(Slot::Time))?;
            put(Y, c(Slot::Label))?;
            put(Color, c(Slot::Metric))?;
        }
        (Family::Outlier, ChartKind::Scatter) => {
            put(X, c(Slot::Metric))?;
            put(Y, Some("zscore".into()))?;
            put(Group, c(Slot::Label))?;
            put(Color, Some("is_outlier".into()))?;
        }
        (Family::Outlier, ChartKind::Histogram) => {
            put(X, c(Slot::Metric))?;
        }
        (Family::Correlation, ChartKind::Scatter) => {
            put(X, c(Slot::MetricA))?;
            put(Y, c(Slot::MetricB))?;
            put(Group, c(Slot::Label))?;
        }
        _ => return None,
    }
    Some(ChartTemplate::new(kind, table, fmt))
}

/// Preferred chart for a family's result.
pub fn default_kind(family: Family, has_label: bool) -> ChartKind {
    match family {
        Family::Ranking | Family::Composition | Family::PerCapita => ChartKind::Bar,
        Family::TemporalChange if has_label => ChartKind::MultiLine,
        Family::TemporalChange => ChartKind::Line,
        Family::Outlier | Family::Correlation => ChartKind::Scatter,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view_id: String,
    pub template_id: String,
    pub chart_kind: ChartKind,
    pub grammar_spec: Json,
    pub title: String,
    pub description: String,
    pub source_plan: QueryPlan,
    #[serde(default)]
    pub linked_sentence_ids: BTreeSet<String>,
}

impl ViewSpec {
    pub fn data_values(&self) -> &[Json] {
        self.grammar_spec["data"]["values"].as_array().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn field_name(col: &str) -> String {
    // Vega-Lite treats dots and brackets in field names as nested access
    col.replace('.', "\\.").replace('[', "\\[").replace(']', "\\]")
}

fn field_type(kind: DataKind) -> &'static str {
    match kind {
        DataKind::Integer | DataKind::Real => "quantitative",
        DataKind::Date => "temporal",
        DataKind::Text | DataKind::Boolean => "nominal",
    }
}

/// Renders a result into a Vega-Lite spec. Pure: equal inputs give equal output.
pub fn render_view(
    template: &ChartTemplate,
    result: &ResultTable,
    plan: &QueryPlan,
    title: &str,
    description: &str,
) -> Result<ViewSpec, ViewError> {
    let b = base(template.chart_kind);
    let mismatch = |reason: String| ViewError::FormatMismatch { kind: template.chart_kind, reason };
    let mut required_cols = Vec::new();
    for role in &b.required {
        let col = template
            .column(*role)
            .ok_or_else(|| mismatch(format!("template binds no column for {role:?}")))?;
        if result.column_index(col).is_none() {
            return Err(mismatch(format!("result has no column `{col}` for {role:?}")));
        }
        required_cols.push(col);
    }
    let distinct: BTreeSet<_> = required_cols.iter().collect();
    if distinct.len() != required_cols.len() {
        return Err(mismatch("required roles must use distinct columns".into()));
    }
    let optional = |role: EncodingRole| -> Option<&str> {
        b.optional
            .contains(&role)
            .then(|| template.column(role))
            .flatten()
            .filter(|c| result.column_index(c).is_some())
    };
    let enc = |col: &str, ty: &str| json!({ "field": field_name(col), "type": ty, "title": col });
    let tooltip: Vec<Json> = result
        .columns
        .iter()
        .map(|c| enc(&c.name, field_type(c.data_kind)))
        .collect();
    let col = |r: EncodingRole| template.column(r).unwrap();

    let (mark, mut encoding) = match template.chart_kind {
        ChartKind::Bar => (
            json!({ "type": "bar", "tooltip": true }),
            json!({
                "x": { "field": field_name(col(EncodingRole::Labels)), "type": "nominal", "sort": null, "title": col(EncodingRole::Labels) },
                "y": enc(col(EncodingRole::Values), "quantitative"),
            }),
        ),
        ChartKind::GroupedBar => (
            json!({ "type": "bar", "tooltip": true }),
            json!({
                "x": enc(col(EncodingRole::Labels), "nominal"),
                "xOffset": enc(col(EncodingRole::Group), "nominal"),
                "y": enc(col(EncodingRole::Values), "quantitative"),
                "color": enc(col(EncodingRole::Group), "nominal"),
            }),
        ),
        ChartKind::Line => (
            json!({ "type": "line", "point": true, "tooltip": true }),
            json!({
                "x": enc(col(EncodingRole::X), "ordinal"),
                "y": enc(col(EncodingRole::Y), "quantitative"),
            }),
        ),
        ChartKind::MultiLine => (
            json!({ "type": "line", "point": true, "tooltip": true }),
            json!({
                "x": enc(col(EncodingRole::X), "ordinal"),
                "y": enc(col(EncodingRole::Y), "quantitative"),
                "color": enc(col(EncodingRole::Series), "nominal"),
            }),
        ),
        ChartKind::Scatter => {
            let mut e = json!({
                "x": enc(col(EncodingRole::X), "quantitative"),
                "y": enc(col(EncodingRole::Y), "quantitative"),
            });
            if let Some(c) = optional(EncodingRole::Color) {
                e["color"] = enc(c, "nominal");
            } else if let Some(g) = optional(EncodingRole::Group) {
                e["color"] = enc(g, "nominal");
            }
            (json!({ "type": "point", "filled": true, "tooltip": true }), e)
        }
        ChartKind::Heatmap => (
            json!({ "type": "rect", "tooltip": true }),
            json!({
                "x": enc(col(EncodingRole::X), "ordinal"),
                "y": enc(col(EncodingRole::Y), "nominal"),
                "color": enc(col(EncodingRole::Color), "quantitative"),
            }),
        ),
        ChartKind::Histogram => (
            json!({ "type": "bar", "tooltip": true }),
            json!({
                "x": { "field": field_name(col(EncodingRole::X)), "type": "quantitative", "bin": true, "title": col(EncodingRole::X) },
                "y": { "aggregate": "count", "type": "quantitative" },
            }),
        ),
    };
    if template.chart_kind != ChartKind::Histogram {
        encoding["tooltip"] = Json::Array(tooltip);
    }
    encoding["opacity"] = json!({ "condition": { "param": "select", "value": 1 }, "value": 0.35 });

    let records = result.to_records();
    let spec = json!({
        "$schema": VEGA_LITE_SCHEMA,
        "title": title,
        "description": description,
        "data": { "values": records },
        "mark": mark,
        "params": [ { "name": "select", "select": { "type": "point", "on": "click" } } ],
        "encoding": encoding,
        "width": "container",
        "height": 240,
    });
    let digest = sha256_hex(format!("{}|{}|{}", template.template_id, title, spec).as_bytes());
    Ok(ViewSpec {
        view_id: format!("v{}", &digest[..12]),
        template_id: template.template_id.clone(),
        chart_kind: template.chart_kind,
        grammar_spec: spec,
        title: title.to_string(),
        description: description.to_string(),
        source_plan: plan.clone(),
        linked_sentence_ids: BTreeSet::new(),
    })
}

fn escape_refs(v: &mut Json) {
    match v {
        Json::Object(map) => {
            for (k, child) in map.iter_mut() {
                if k == "$ref" {
                    if let Json::String(r) = child {
                        let mut out = String::with_capacity(r.len());
                        for ch in r.chars() {
                            if ch.is_ascii_alphanumeric() || "-._~/#".contains(ch) {
                                out.push(ch);
                            } else {
                                let mut buf = [0u8; 4];
                                for b in ch.encode_utf8(&mut buf).bytes() {
                                    out.push_str(&format!("%{b:02X}"));
                                }
                            }
                        }
                        *r = out;
                    }
                } else {
                    escape_refs(child);
                }
            }
        }
        Json::Array(xs) => xs.iter_mut().for_each(escape_refs),
        _ => {}
    }
}

/// Validator for the bundled Vega-Lite v5 schema.
pub fn vega_lite_validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let mut schema: Json = serde_json::from_str(include_str!("../testdata/vega-lite-v5.schema.json"))
            .expect("bundled Vega-Lite schema parses");
        // definition names such as `MarkPropDef<(Gradient|string|null)>` are not valid URI fragments
        escape_refs(&mut schema);
        jsonschema::validator_for(&schema).expect("bundled Vega-Lite schema compiles")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub dashboard_id: String,
    pub views: Vec<ViewSpec>,
    pub layout: GridLayout,
}

pub fn compose_dashboard(views: Vec<ViewSpec>) -> Result<Dashboard, ViewError> {
    let layout = match views.len() {
        0 => return Err(ViewError::EmptyViews),
        1 => GridLayout { rows: 1, columns: 1 },
        2 => GridLayout { rows: 1, columns: 2 },
        3 | 4 => GridLayout { rows: 2, columns: 2 },
        n => return Err(ViewError::TooManyViews(n)),
    };
    let mut seen = BTreeSet::new();
    for v in &views {
        if !seen.insert(v.view_id.clone()) {
            return Err(ViewError::DuplicateView(v.view_id.clone()));
        }
    }
    let ids: Vec<&str> = views.iter().map(|v| v.view_id.as_str()).collect();
    let digest = sha256_hex(ids.join("|").as_bytes());
    Ok(Dashboard { dashboard_id: format!("d{}", &digest[..12]), views, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{tag_vocabulary, Catalog, SemanticRole};
    use crate::query::{execute, family_plan, Constraints, PlanFocus, ResultColumn, Slot};
    use std::sync::Arc;

    const CRIME: &[u8] = b"borough,year,crime_rate,income\nCamden,2019,10.5,30\nCamden,2020,12.3,31\nHackney,2019,9.1,28\nHackney,2020,8.7,29\nIslington,2019,11.0,35\nIslington,2020,7.2,36\n";

    fn table() -> Arc<Table> {
        let mut c = Catalog::new();
        c.ingest_table(CRIME, "crime").unwrap();
        c.table("crime").unwrap().clone()
    }

    fn adapted(t: &Table) -> Vec<ChartTemplate> {
        adapt_templates(t, &TagNormalizer::new(&tag_vocabulary(t)), &Gateway::offline())
    }

    fn vega_validator() -> &'static jsonschema::Validator {
        vega_lite_validator()
    }

    fn toy_result() -> ResultTable {
        ResultTable {
            columns: vec![
                ResultColumn { name: "label".into(), data_kind: DataKind::Text },
                ResultColumn { name: "value".into(), data_kind: DataKind::Integer },
            ],
            rows: vec![vec![Value::Text("A".into()), Value::Int(1)], vec![Value::Text("B".into()), Value::Int(2)]],
        }
    }

    fn bar(labels: &str, values: &str) -> ChartTemplate {
        ChartTemplate::new(
            ChartKind::Bar,
            "t",
            BTreeMap::from([(EncodingRole::Labels, labels.into()), (EncodingRole::Values, values.into())]),
        )
    }

    #[test]
    fn fallback_caption_format() {
        assert_eq!(bar("borough", "crime_rate").caption, "bar chart of crime_rate by borough");
    }

    #[test]
    fn bar_render_keeps_rows() {
        let r = toy_result();
        let v = render_view(&bar("label", "value"), &r, &QueryPlan::scan("t"), "Toy", "").unwrap();
        assert_eq!(v.data_values(), r.to_records().as_slice());
        assert_eq!(v.grammar_spec["$schema"], VEGA_LITE_SCHEMA);
        assert_eq!(v.grammar_spec["encoding"]["x"]["field"], "label");
        assert_eq!(v.grammar_spec["encoding"]["y"]["field"], "value");
    }

    #[test]
    fn scatter_on_one_column_is_mismatch() {
        let one = ResultTable {
            columns: vec![ResultColumn { name: "x".into(), data_kind: DataKind::Real }],
            rows: vec![vec![Value::Real(1.0)]],
        };
        let t = ChartTemplate::new(
            ChartKind::Scatter,
            "t",
            BTreeMap::from([(EncodingRole::X, "x".into()), (EncodingRole::Y, "y".into())]),
        );
        assert!(matches!(
            render_view(&t, &one, &QueryPlan::scan("t"), "", ""),
            Err(ViewError::FormatMismatch { .. })
        ));
        let same = ChartTemplate::new(
            ChartKind::Scatter,
            "t",
            BTreeMap::from([(EncodingRole::X, "x".into()), (EncodingRole::Y, "x".into())]),
        );
        assert!(render_view(&same, &one, &QueryPlan::scan("t"), "", "").is_err());
    }

    #[test]
    fn validator_rejects_bad_specs() {
        let v = vega_validator();
        assert!(!v.is_valid(&json!({ "mark": "blob", "data": { "values": [] } })));
        assert!(!v.is_valid(&json!({ "mark": "bar", "data": { "values": [] }, "encoding": { "x": { "field": "a", "type": "sideways" } } })));
        assert!(v.is_valid(&json!({ "mark": "bar", "data": { "values": [] }, "encoding": { "x": { "field": "a", "type": "nominal" } } })));
    }

    #[test]
    fn render_is_pure() {
        let r = toy_result();
        let a = render_view(&bar("label", "value"), &r, &QueryPlan::scan("t"), "T", "d").unwrap();
        let b = render_view(&bar("label", "value"), &r, &QueryPlan::scan("t"), "T", "d").unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn adapt_binds_by_schema() {
        let t = table();
        let a = adapted(&t);
        assert!(a.iter().any(|x| x.chart_kind == ChartKind::Scatter
            && x.column(EncodingRole::X) == Some("crime_rate")
            && x.column(EncodingRole::Y) == Some("income")));
        assert!(a.iter().all(|x| !x.caption.is_empty()));

        let mut c = Catalog::new();
        c.ingest_table(b"borough,crime_rate,income\nA,1.5,3\nB,2.5,4\n", "flat").unwrap();
        let flat = c.table("flat").unwrap();
        let a = adapted(flat);
        assert!(a.iter().all(|x| !matches!(x.chart_kind, ChartKind::Line | ChartKind::MultiLine)));
    }

    #[test]
    fn dashboard_layouts() {
        let r = toy_result();
        let views: Vec<ViewSpec> = (0..5)
            .map(|i| render_view(&bar("label", "value"), &r, &QueryPlan::scan("t"), &format!("T{i}"), "").unwrap())
            .collect();
        assert_eq!(compose_dashboard(views[..1].to_vec()).unwrap().layout, GridLayout { rows: 1, columns: 1 });
        assert_eq!(compose_dashboard(views[..2].to_vec()).unwrap().layout, GridLayout { rows: 1, columns: 2 });
        let d3 = compose_dashboard(views[..3].to_vec()).unwrap();
        assert_eq!(d3.layout, GridLayout { rows: 2, columns: 2 });
        assert_eq!(d3.layout.rows * d3.layout.columns - d3.views.len(), 1);
        assert_eq!(compose_dashboard(views.clone()).unwrap_err(), ViewError::TooManyViews(5));
        assert_eq!(compose_dashboard(vec![]).unwrap_err(), ViewError::EmptyViews);
    }

    #[test]
    fn compatibility_matrix_renders_and_validates() {
        let t = table();
        let validator = vega_validator();
        let cols = BTreeMap::from([
            (Slot::Metric, "crime_rate".to_string()),
            (Slot::MetricA, "crime_rate".to_string()),
            (Slot::MetricB, "income".to_string()),
            (Slot::Label, "borough".to_string()),
            (Slot::Group, "borough".to_string()),
            (Slot::Time, "year".to_string()),
        ]);
        let mut rendered = 0;
        for family in Family::ALL {
            let plan = family_plan(&t, family, &cols, &Constraints::defaults_for(family), &PlanFocus::default()).unwrap();
            let result = execute(&t, &plan).unwrap();
            for kind in compatible_kinds(family) {
                let tpl = template_for_family(family, kind, "crime", &cols)
                    .unwrap_or_else(|| panic!("{family} x {kind} has no binding"));
                let v = render_view(&tpl, &result, &plan, "title", "desc")
                    .unwrap_or_else(|e| panic!("{family} x {kind}: {e}"));
                let errs: Vec<String> = validator.iter_errors(&v.grammar_spec).map(|e| e.to_string()).collect();
                assert!(errs.is_empty(), "{family} x {kind}: {errs:?}");
                rendered += 1;
            }
        }
        assert!(rendered >= 10);
    }

    #[test]
    fn adapted_templates_render_valid_specs() {
        let t = table();
        let validator = vega_validator();
        for tpl in adapted(&t) {
            let plan = tpl.plan(&t.schema, None);
            let result = execute(&t, &plan).unwrap();
            let v = render_view(&tpl, &result, &plan, &tpl.caption, "").unwrap();
            assert!(validator.is_valid(&v.grammar_spec), "{}", tpl.template_id);
        }
        assert!(t.schema.columns.iter().any(|c| c.semantic_role == SemanticRole::Geo));
    }
}
