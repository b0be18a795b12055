//! HTTP routes. Handlers translate requests into session operations; the
//! session work itself runs on the blocking pool because model calls block.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use chrono::Utc;
use narrascope_core::capture::{CaptureSuggestion, InteractionEvent};
use narrascope_core::inquiry::Status;
use narrascope_core::llm::Gateway;
use narrascope_core::session::ErrorClass;
use narrascope_core::{Actor, Operation, Outcome, Session, SessionError, SessionSnapshot};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};

use crate::openapi;
use crate::store::Store;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into() }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session `{id}`"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "ValidationFailed", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e.class() {
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Invalid => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::Upstream => StatusCode::BAD_GATEWAY,
        };
        ApiError { status, code: e.code(), message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"code": self.code, "message": self.message}}))).into_response()
    }
}

/// JSON body whose rejections use the service's error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e @ JsonRejection::MissingJsonContentType(_)) => {
                Err(ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "UnsupportedMediaType", e.body_text()))
            }
            Err(e) => Err(ApiError::invalid(e.body_text())),
        }
    }
}

type ApiResult<T = JsonValue> = Result<Json<T>, ApiError>;

struct Inner {
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    gateway: Gateway,
    fallback: Gateway,
    store: Option<Arc<Store>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(gateway: Gateway, store: Option<Store>) -> Self {
        AppState(Arc::new(Inner {
            sessions: RwLock::new(BTreeMap::new()),
            gateway,
            fallback: Gateway::disabled(),
            store: store.map(Arc::new),
        }))
    }

    /// Restores every stored session by replaying its log.
    pub fn load_stored(&self) -> anyhow::Result<usize> {
        let Some(store) = &self.0.store else { return Ok(0) };
        let snaps = store.load_all()?;
        let n = snaps.len();
        for snap in snaps {
            let s = Session::from_snapshot(&snap)
                .map_err(|e| anyhow::anyhow!("session {}: {e}", snap.session_id))?;
            self.insert(s);
        }
        Ok(n)
    }

    fn insert(&self, s: Session) {
        self.0.sessions.write().unwrap().insert(s.id().to_string(), Arc::new(Mutex::new(s)));
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.0.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    fn gateway(&self, mode: &ModeQuery) -> Result<Gateway, ApiError> {
        match mode.mode.as_deref() {
            None | Some("model") => Ok(self.0.gateway.clone()),
            Some("fallback") => Ok(self.0.fallback.clone()),
            Some(other) => Err(ApiError::invalid(format!("unknown mode `{other}` (expected fallback)"))),
        }
    }

    async fn mutate(&self, id: &str, mode: &ModeQuery, op: Operation) -> Result<Outcome, ApiError> {
        let session = self.session(id)?;
        let gw = self.gateway(mode)?;
        let store = self.0.store.clone();
        blocking(move || {
            let mut s = session.lock().unwrap();
            let out = s.apply(op, Actor::User, &gw)?;
            if let Some(store) = store {
                store.save(&s.snapshot()).map_err(|e| ApiError::internal(format!("persisting session: {e}")))?;
            }
            Ok(out)
        })
        .await
    }

    async fn read<T: Send + 'static>(
        &self,
        id: &str,
        mode: &ModeQuery,
        f: impl FnOnce(&Session, &Gateway) -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let session = self.session(id)?;
        let gw = self.gateway(mode)?;
        blocking(move || f(&session.lock().unwrap(), &gw)).await
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Debug, Default, Deserialize)]
pub struct ModeQuery {
    mode: Option<String>,
}

pub fn router(state: AppState) -> Router {
    let s = "/sessions/{id}";
    Router::new()
        .route("/openapi.json", get(|| async { Json(openapi::document()) }))
        .route("/sessions", post(create_session).get(list_sessions))
        .route(s, delete(delete_session))
        .route(&format!("{s}/datasets"), post(upload_dataset))
        .route(&format!("{s}/sentences"), post(append_sentence).get(list_sentences))
        .route(&format!("{s}/sentences/{{sid}}"), patch(update_sentence).delete(delete_sentence))
        .route(&format!("{s}/sentences/{{sid}}/insert"), post(insert_sentence))
        .route(&format!("{s}/sentences/{{sid}}/branch"), post(create_branch))
        .route(&format!("{s}/sentences/{{sid}}/show_view"), post(show_view))
        .route(&format!("{s}/branches/{{fork_child}}"), delete(delete_branch))
        .route(&format!("{s}/views/{{view_id}}"), get(get_view))
        .route(&format!("{s}/events"), post(record_event))
        .route(&format!("{s}/capture"), post(capture))
        .route(&format!("{s}/capture/accept"), post(accept_capture))
        .route(&format!("{s}/timeline"), get(timeline))
        .route(&format!("{s}/timeline/{{node}}/restore"), post(restore))
        .route(&format!("{s}/timeline/{{node}}/reflections"), get(reflections))
        .route(&format!("{s}/inquiry"), get(inquiry))
        .route(&format!("{s}/story"), get(story))
        .route(&format!("{s}/snapshot"), get(get_snapshot).put(put_snapshot))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "UnknownRoute", "no such route") })
        .with_state(state)
}

fn to_json<T: serde::Serialize>(v: &T) -> JsonValue {
    serde_json::to_value(v).expect("response serializes")
}

fn outcome_json(out: Outcome) -> JsonValue {
    match out {
        Outcome::Schema(s) => to_json(&s),
        Outcome::Sentence(s) => to_json(&s),
        Outcome::Shown { shown, .. } => to_json(&shown),
        Outcome::Done => json!({"ok": true}),
    }
}

async fn create_session(State(st): State<AppState>) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(&id, Utc::now());
    if let Some(store) = st.0.store.clone() {
        let snap = session.snapshot();
        blocking(move || store.save(&snap).map_err(|e| ApiError::internal(e.to_string()))).await?;
    }
    st.insert(session);
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn list_sessions(State(st): State<AppState>) -> Json<JsonValue> {
    let ids: Vec<String> = st.0.sessions.read().unwrap().keys().cloned().collect();
    Json(json!({ "sessions": ids }))
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    st.0.sessions.write().unwrap().remove(&id).ok_or_else(|| ApiError::unknown_session(&id))?;
    if let Some(store) = st.0.store.clone() {
        blocking(move || store.delete(&id).map_err(|e| ApiError::internal(e.to_string()))).await?;
    }
    Ok(Json(json!({"ok": true})))
}

#[derive(Deserialize)]
struct DatasetQuery {
    name: String,
    #[serde(default)]
    tags: Option<String>,
    #[serde(default)]
    mode: Option<String>,
}

/// Raw CSV body; the table name comes from `?name=`.
async fn upload_dataset(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DatasetQuery>, axum::extract::rejection::QueryRejection>,
    csv: String,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let Query(q) = q.map_err(|e| ApiError::invalid(e.body_text()))?;
    let category_tags = q
        .tags
        .map(|t| t.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    let op = Operation::IngestDataset { name: q.name, csv, category_tags };
    let out = st.mutate(&id, &ModeQuery { mode: q.mode }, op).await?;
    Ok((StatusCode::CREATED, Json(outcome_json(out))))
}

#[derive(Deserialize)]
struct ContentBody {
    content: String,
}

async fn append_sentence(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(mode): Query<ModeQuery>,
    Body(b): Body<ContentBody>,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let out = st.mutate(&id, &mode, Operation::AppendSentence { content: b.content }).await?;
    Ok((StatusCode::CREATED, Json(outcome_json(out))))
}

async fn list_sentences(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let v = st
        .read(&id, &ModeQuery::default(), |s, _| {
            let tree = s.tree();
            Ok(json!({
                "active_path": to_json(&tree.active_path().unwrap_or_default()),
                "cursor": tree.cursor_id(),
                "sentences": to_json(&tree.depth_first()),
                "leaves": tree.leaves(),
            }))
        })
        .await?;
    Ok(Json(v))
}

async fn insert_sentence(
    State(st): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(mode): Query<ModeQuery>,
    Body(b): Body<ContentBody>,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let out = st.mutate(&id, &mode, Operation::InsertSentence { anchor: sid, content: b.content }).await?;
    Ok((StatusCode::CREATED, Json(outcome_json(out))))
}

async fn update_sentence(
    State(st): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(mode): Query<ModeQuery>,
    Body(b): Body<ContentBody>,
) -> ApiResult {
    let out = st.mutate(&id, &mode, Operation::UpdateSentence { sentence_id: sid, content: b.content }).await?;
    Ok(Json(outcome_json(out)))
}

async fn delete_sentence(
    State(st): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(mode): Query<ModeQuery>,
) -> ApiResult {
    Ok(Json(outcome_json(st.mutate(&id, &mode, Operation::DeleteSentence { sentence_id: sid }).await?)))
}

async fn create_branch(
    State(st): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(mode): Query<ModeQuery>,
) -> ApiResult {
    Ok(Json(outcome_json(st.mutate(&id, &mode, Operation::CreateBranch { from: sid }).await?)))
}

async fn delete_branch(
    State(st): State<AppState>,
    Path((id, fork_child)): Path<(String, String)>,
    Query(mode): Query<ModeQuery>,
) -> ApiResult {
    Ok(Json(outcome_json(st.mutate(&id, &mode, Operation::DeleteBranch { fork_child }).await?)))
}

async fn show_view(
    State(st): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    Query(mode): Query<ModeQuery>,
) -> ApiResult {
    Ok(Json(outcome_json(st.mutate(&id, &mode, Operation::ShowView { sentence_id: sid }).await?)))
}

async fn get_view(State(st): State<AppState>, Path((id, view_id)): Path<(String, String)>) -> ApiResult {
    let v = st
        .read(&id, &ModeQuery::default(), move |s, _| {
            s.views().get(&view_id).map(to_json).ok_or_else(|| SessionError::UnknownView(view_id).into())
        })
        .await?;
    Ok(Json(v))
}

async fn record_event(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Body(event): Body<InteractionEvent>,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let out = st.mutate(&id, &ModeQuery::default(), Operation::RecordEvent { event }).await?;
    Ok((StatusCode::CREATED, Json(outcome_json(out))))
}

async fn capture(State(st): State<AppState>, Path(id): Path<String>, Query(mode): Query<ModeQuery>) -> ApiResult {
    let v = st.read(&id, &mode, |s, gw| Ok(to_json(&s.capture(gw).0))).await?;
    Ok(Json(v))
}

async fn accept_capture(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(mode): Query<ModeQuery>,
    Body(suggestion): Body<CaptureSuggestion>,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let out = st.mutate(&id, &mode, Operation::AcceptCapture { suggestion }).await?;
    Ok((StatusCode::CREATED, Json(outcome_json(out))))
}

async fn timeline(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(st.read(&id, &ModeQuery::default(), |s, _| Ok(to_json(&s.timeline_nodes()))).await?))
}

async fn restore(State(st): State<AppState>, Path((id, node)): Path<(String, u64)>) -> ApiResult {
    Ok(Json(st.read(&id, &ModeQuery::default(), move |s, _| Ok(to_json(&s.restore(node)?))).await?))
}

async fn reflections(
    State(st): State<AppState>,
    Path((id, node)): Path<(String, u64)>,
    Query(mode): Query<ModeQuery>,
) -> ApiResult {
    let v = st.read(&id, &mode, move |s, gw| Ok(json!({ "reflect": to_json(&s.reflections(node, gw)?) }))).await?;
    Ok(Json(v))
}

#[derive(Deserialize)]
struct InquiryQuery {
    status: Option<String>,
    mode: Option<String>,
}

/// Issues grouped by status, each in the prompt contracts' field names.
async fn inquiry(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<InquiryQuery>) -> ApiResult {
    let filter: Option<Status> = match q.status.as_deref() {
        None | Some("") => None,
        Some(s) => Some(s.parse().map_err(ApiError::invalid)?),
    };
    let v = st
        .read(&id, &ModeQuery { mode: q.mode }, move |s, _| {
            let mut groups: BTreeMap<&str, Vec<JsonValue>> =
                ["open", "resolved", "stalled"].into_iter().map(|k| (k, Vec::new())).collect();
            for item in s.ibis().export().as_array().into_iter().flatten() {
                let status = item["status"].as_str().unwrap_or("open");
                if filter.is_some_and(|f| to_json(&f) != status) {
                    continue;
                }
                if let Some(g) = groups.get_mut(status) {
                    g.push(item.clone());
                }
            }
            if let Some(f) = filter {
                let keep = to_json(&f);
                groups.retain(|k, _| keep == *k);
            }
            Ok(to_json(&groups))
        })
        .await?;
    Ok(Json(v))
}

#[derive(Deserialize)]
struct StoryQuery {
    mode: Option<String>,
    format: Option<String>,
}

async fn story(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<StoryQuery>) -> Result<Response, ApiError> {
    let markdown = match q.format.as_deref() {
        None | Some("json") => false,
        Some("markdown") => true,
        Some(other) => return Err(ApiError::invalid(format!("unknown format `{other}`"))),
    };
    st.read(&id, &ModeQuery { mode: q.mode }, move |s, gw| {
        let (story, _) = s.story(gw)?;
        Ok(if markdown {
            narrascope_core::story::to_markdown(&story, s.tree()).into_response()
        } else {
            Json(to_json(&story)).into_response()
        })
    })
    .await
}

async fn get_snapshot(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionSnapshot> {
    Ok(Json(st.read(&id, &ModeQuery::default(), |s, _| Ok(s.snapshot())).await?))
}

/// Replaces (or creates) a session from a snapshot; the log is replayed and
/// must reproduce the snapshot's state.
async fn put_snapshot(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Body(snap): Body<SessionSnapshot>,
) -> ApiResult {
    if snap.session_id != id {
        return Err(ApiError::invalid(format!("snapshot is for session `{}`, not `{id}`", snap.session_id)));
    }
    let store = st.0.store.clone();
    let session = blocking(move || {
        let s = Session::from_snapshot(&snap)?;
        if let Some(store) = store {
            store.delete(s.id()).and_then(|_| store.save(&s.snapshot())).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        Ok(s)
    })
    .await?;
    let hash = session.snapshot().hash();
    st.insert(session);
    Ok(Json(json!({ "session_id": id, "hash": hash })))
}
