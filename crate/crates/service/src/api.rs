//! HTTP routes. Every body, including errors, carries `schema_version`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use insightlens_core::eventlog::EventRecord;
use insightlens_core::model::{Note, NoteId, NoteLabels, ParticipantId, SessionId, Taxonomy};
use insightlens_core::{EntityRef, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::state::{note_id, recent_vector, session_id, AppState, Data, Op, WriteError};
use crate::store::{NoteFilter, RecommendMode};

pub type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-request", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    fn unknown_note(id: &NoteId) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-note", format!("no note {id}"))
    }

    fn unknown_session(id: &SessionId) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session {id}"))
    }

    fn no_model() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no-model-loaded", "no characterization model is loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), "bad-body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

type ApiResult = Result<(StatusCode, Json<Value>), ApiError>;

fn ok(status: StatusCode, mut body: Value) -> ApiResult {
    body["schema_version"] = json!(SCHEMA_VERSION);
    Ok((status, Json(body)))
}

fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// Run a journalled write off the async runtime (it ends in an fsync).
async fn write<T: Send + 'static>(
    state: &Shared,
    prepare: impl FnOnce(&Data) -> Result<(Op, T), ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || state.write(prepare))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| match e {
            WriteError::Rejected(e) => e,
            WriteError::Storage(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
        })
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", post(append_events))
        .route("/notes", post(create_note).get(list_notes))
        .route("/notes/{id}", get(get_note).put(update_note).delete(delete_note))
        .route("/notes/{id}/discussion", get(discussion))
        .route("/scent", get(scent))
        .route("/characterize", post(characterize))
        .route("/recommend", get(recommend))
        .route("/taxonomy", get(taxonomy))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such route") })
        .with_state(state)
}

async fn auth(State(state): State<Shared>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(request).await
}

async fn health() -> ApiResult {
    ok(StatusCode::OK, json!({ "status": "ok" }))
}

async fn taxonomy() -> ApiResult {
    let t = Taxonomy::global();
    let actions: Vec<&str> = t.actions.iter().map(|a| a.id.as_str()).collect();
    ok(StatusCode::OK, json!({ "checksum": t.checksum(), "actions": actions }))
}

// ---------------------------------------------------------------- sessions

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenSession {
    participant_id: String,
    #[serde(default)]
    created_at: Option<i64>,
}

async fn open_session(State(state): State<Shared>, body: Result<Json<OpenSession>, JsonRejection>) -> ApiResult {
    let Json(body) = body?;
    if body.participant_id.trim().is_empty() {
        return Err(ApiError::invalid("participant_id must be nonempty"));
    }
    let created_at = body.created_at.unwrap_or_else(now_ms);
    let participant_id = ParticipantId::new(body.participant_id);
    let id = write(&state, move |data| {
        let id = session_id(data.next_session);
        Ok((Op::OpenSession { id: id.clone(), participant_id, created_at }, id))
    })
    .await?;
    let data = state.data.read();
    ok(StatusCode::CREATED, json!({ "session": session_view(&data, &id) }))
}

fn session_view(data: &Data, id: &SessionId) -> Value {
    let s = &data.sessions[id];
    json!({
        "id": s.id,
        "participant_id": s.participant_id,
        "created_at": s.created_at,
        "events": s.events.len(),
        "dropped_short_hovers": s.dropped_short_hovers,
    })
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let id = SessionId::new(id);
    let data = state.data.read();
    if !data.sessions.contains_key(&id) {
        return Err(ApiError::unknown_session(&id));
    }
    ok(StatusCode::OK, json!({ "session": session_view(&data, &id) }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventIn {
    ts: i64,
    action: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    duration_ms: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventBatch {
    events: Vec<EventIn>,
}

async fn append_events(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<EventBatch>, JsonRejection>,
) -> ApiResult {
    let Json(batch) = body?;
    let id = SessionId::new(id);
    let hover_min = state.hover_min_ms;
    let sid = id.clone();
    let (accepted, dropped) = write(&state, move |data| {
        let session = data.sessions.get(&sid).ok_or_else(|| ApiError::unknown_session(&sid))?;
        let mut kept = Vec::new();
        let mut dropped = 0;
        for (i, e) in batch.events.into_iter().enumerate() {
            let record = EventRecord {
                v: insightlens_core::eventlog::EVENT_SCHEMA_VERSION,
                ts: e.ts,
                participant: session.participant_id.0.clone(),
                session: sid.0.clone(),
                action: e.action,
                target: e.target,
                duration_ms: e.duration_ms,
            };
            let event = record
                .clone()
                .into_event(i + 1)
                .map_err(|err| ApiError::invalid(format!("event {i}: {err}").replace("line ", "record ")))?;
            if event.action.is_hover() && event.duration_ms.unwrap_or(0) < hover_min {
                dropped += 1;
            } else {
                kept.push(record);
            }
        }
        let accepted = kept.len();
        Ok((Op::AppendEvents { session: sid.clone(), events: kept, dropped_short_hovers: dropped }, (accepted, dropped)))
    })
    .await?;
    let data = state.data.read();
    ok(
        StatusCode::OK,
        json!({ "accepted": accepted, "dropped_short_hovers": dropped, "session": session_view(&data, &id) }),
    )
}

// ---------------------------------------------------------------- notes

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoteIn {
    author: String,
    text: String,
    refs: Vec<EntityRef>,
    #[serde(default)]
    labels: Option<NoteLabels>,
    #[serde(default)]
    created_at: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NotePatch {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    refs: Option<Vec<EntityRef>>,
    #[serde(default)]
    labels: Option<NoteLabels>,
    #[serde(default)]
    updated_at: Option<i64>,
}

/// Shape rules plus: cited notes must exist and a note cannot cite itself.
fn check_note(data: &Data, note: &Note) -> Result<(), ApiError> {
    note.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
    for r in &note.refs {
        if let Some(target) = &r.note_id {
            if target == &note.id {
                return Err(ApiError::invalid(format!("note {} cites itself", note.id)));
            }
            if data.store.get(target).is_none() {
                return Err(ApiError::invalid(format!("cited note {target} does not exist")));
            }
        }
    }
    Ok(())
}

async fn create_note(State(state): State<Shared>, body: Result<Json<NoteIn>, JsonRejection>) -> ApiResult {
    let Json(input) = body?;
    if input.author.trim().is_empty() {
        return Err(ApiError::invalid("author must be nonempty"));
    }
    let at = input.created_at.unwrap_or_else(now_ms);
    let note = write(&state, move |data| {
        let note = Note {
            id: note_id(data.next_note),
            author: ParticipantId::new(input.author),
            text: input.text,
            refs: input.refs,
            created_at: at,
            updated_at: at,
            labels: input.labels.unwrap_or_default(),
        };
        check_note(data, &note)?;
        Ok((Op::PutNote { note: note.clone() }, note))
    })
    .await?;
    ok(StatusCode::CREATED, json!({ "note": note }))
}

async fn get_note(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let id = NoteId::new(id);
    let data = state.data.read();
    let note = data.store.get(&id).ok_or_else(|| ApiError::unknown_note(&id))?;
    ok(StatusCode::OK, json!({ "note": note }))
}

async fn update_note(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<NotePatch>, JsonRejection>,
) -> ApiResult {
    let Json(patch) = body?;
    let id = NoteId::new(id);
    let note = write(&state, move |data| {
        let mut note = data.store.get(&id).ok_or_else(|| ApiError::unknown_note(&id))?.clone();
        if let Some(text) = patch.text {
            note.text = text;
        }
        if let Some(refs) = patch.refs {
            note.refs = refs;
        }
        if let Some(labels) = patch.labels {
            note.labels = labels;
        }
        note.updated_at = patch.updated_at.unwrap_or_else(|| now_ms().max(note.created_at));
        check_note(data, &note)?;
        Ok((Op::PutNote { note: note.clone() }, note))
    })
    .await?;
    ok(StatusCode::OK, json!({ "note": note }))
}

async fn delete_note(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let id = NoteId::new(id);
    let deleted = write(&state, move |data| {
        data.store.get(&id).ok_or_else(|| ApiError::unknown_note(&id))?;
        Ok((Op::DeleteNote { id: id.clone() }, id))
    })
    .await?;
    ok(StatusCode::OK, json!({ "deleted": deleted }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ListQuery {
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    year: Option<u16>,
    #[serde(default)]
    mine_only: Option<bool>,
    #[serde(default)]
    participant: Option<String>,
}

async fn list_notes(State(state): State<Shared>, query: Result<Query<ListQuery>, QueryRejection>) -> ApiResult {
    let Query(q) = query?;
    let country = q
        .country
        .map(|c| c.parse().map_err(|e: insightlens_core::model::InvalidCountryCode| ApiError::bad_request(e.to_string())))
        .transpose()?;
    let author = match (q.mine_only.unwrap_or(false), q.participant) {
        (true, Some(p)) => Some(ParticipantId::new(p)),
        (true, None) => return Err(ApiError::bad_request("mine_only=true needs participant=<id>")),
        (false, _) => None,
    };
    let data = state.data.read();
    let notes = data.store.list(&NoteFilter { country, year: q.year, author });
    ok(StatusCode::OK, json!({ "notes": notes }))
}

async fn discussion(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let id = NoteId::new(id);
    let data = state.data.read();
    let thread = data.store.discussion(&id).ok_or_else(|| ApiError::unknown_note(&id))?;
    ok(StatusCode::OK, json!({ "thread": thread }))
}

async fn scent(State(state): State<Shared>) -> ApiResult {
    let data = state.data.read();
    let s = data.store.scent();
    let countries: BTreeMap<&str, usize> = s.countries.iter().map(|(c, n)| (c.as_str(), *n)).collect();
    ok(StatusCode::OK, json!({ "countries": countries, "years": s.years }))
}

// ---------------------------------------------------------------- models

#[derive(Serialize)]
struct ClassProbability {
    class: String,
    probability: f64,
}

fn probabilities(classes: &[String], p: &[f64]) -> Vec<ClassProbability> {
    classes.iter().zip(p).map(|(c, &probability)| ClassProbability { class: c.clone(), probability }).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CharacterizeIn {
    features: BTreeMap<String, f64>,
}

async fn characterize(State(state): State<Shared>, body: Result<Json<CharacterizeIn>, JsonRejection>) -> ApiResult {
    let model = state.model.clone().ok_or_else(ApiError::no_model)?;
    let Json(input) = body?;
    let clf = model.classifier();
    let names = clf.feature_names();
    for (name, v) in &input.features {
        if !names.contains(name) {
            return Err(ApiError::invalid(format!("model has no feature {name:?}")));
        }
        if !v.is_finite() {
            return Err(ApiError::invalid(format!("feature {name:?} is not finite")));
        }
    }
    let x: Vec<f64> = names.iter().map(|n| input.features.get(n).copied().unwrap_or(0.0)).collect();
    let p = clf.predict_proba(&x);
    let predicted = &clf.classes()[clf.predict(&x)];
    ok(
        StatusCode::OK,
        json!({
            "target": model.document.target,
            "feature_kind": model.document.feature_kind,
            "predicted": predicted,
            "probabilities": probabilities(clf.classes(), &p),
            "band": model.band,
        }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendQuery {
    session: Option<String>,
    mode: Option<String>,
    k: Option<usize>,
}

async fn recommend(State(state): State<Shared>, query: Result<Query<RecommendQuery>, QueryRejection>) -> ApiResult {
    let model = state.model.clone().ok_or_else(ApiError::no_model)?;
    let Query(q) = query?;
    let mode: RecommendMode = q.mode.as_deref().unwrap_or("similar").parse().map_err(ApiError::bad_request)?;
    let k = q.k.unwrap_or(5);
    let session = SessionId::new(q.session.ok_or_else(|| ApiError::bad_request("session=<id> is required"))?);
    let data = state.data.read();
    let s = data.sessions.get(&session).ok_or_else(|| ApiError::unknown_session(&session))?;
    let x = recent_vector(&model, &data, s).map_err(ApiError::invalid)?;
    let clf = model.classifier();
    let p = clf.predict_proba(&x);
    let predicted = clf.classes()[clf.predict(&x)].clone();
    let notes = data.store.recommend(model.document.target, &predicted, mode, k);
    ok(
        StatusCode::OK,
        json!({
            "mode": mode,
            "predicted": predicted,
            "probabilities": probabilities(clf.classes(), &p),
            "notes": notes,
        }),
    )
}
