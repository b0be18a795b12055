//! Narrative-driven data exploration engine.

pub mod alignment;
pub mod capture;
pub mod catalog;
pub mod inquiry;
pub mod llm;
pub mod narrative;
pub mod propositions;
pub mod query;
pub mod session;
pub mod story;
pub mod tags;
pub mod timeline;
pub mod value;
pub mod views;

pub use catalog::{Catalog, ColumnSpec, DataKind, SemanticRole, Table, TableSchema, TagVocabulary};
pub use query::{execute, family_plan, Family, QueryPlan, ResultTable};
pub use value::Value;
pub use session::{Actor, Operation, Outcome, Session, SessionError, SessionSnapshot, Shown};
pub use story::{DataStory, StoryPoint};

/// The bundled travel-destinations table used by the demo and the benches.
pub const DEMO_DATASET: &str = include_str!("../data/travel_destinations.csv");
