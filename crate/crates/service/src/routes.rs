use std::collections::HashMap;
use std::ops::Range;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use dgsnap_core::model::{LayerRecord, SnapshotId};
use dgsnap_core::projection::{project, ProjectionConfig};
use dgsnap_core::{ChangeThresholds, GenerationSession, Link, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{sha256_hex, DatasetFiles};
use crate::error::ApiError;
use crate::state::{AppState, LiveSession};
use crate::views;

type ApiResult = Result<Response, ApiError>;

/// Serialize `body` and add `schema_version` at the top level.
pub fn versioned<T: Serialize>(body: &T) -> Result<Value, ApiError> {
    let mut v = serde_json::to_value(body).map_err(ApiError::internal)?;
    if let Value::Object(m) = &mut v {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    Ok(v)
}

fn reply(status: StatusCode, body: Value) -> Response {
    (status, Json(body)).into_response()
}

/// JSON reply tagged with `etag`, or 304 if the client already holds it.
fn reply_tagged(headers: &HeaderMap, etag: &str, body: Value) -> Response {
    let tag = format!("\"{etag}\"");
    let tag_value = HeaderValue::from_str(&tag).ok();
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag || t.trim() == "*"));
    let mut resp = if matches {
        StatusCode::NOT_MODIFIED.into_response()
    } else {
        reply(StatusCode::OK, body)
    };
    if let Some(v) = tag_value {
        resp.headers_mut().insert(header::ETAG, v);
    }
    resp
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(b)| b)
        .map_err(|e| ApiError::new(e.status(), "InvalidBody", e.body_text()))
}

fn range_invalid(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::RANGE_NOT_SATISFIABLE, "RangeInvalid", message)
}

pub async fn health() -> Response {
    reply(
        StatusCode::OK,
        json!({ "schema_version": SCHEMA_VERSION, "status": "ok" }),
    )
}

pub async fn upload_dataset(State(state): State<AppState>, mut form: Multipart) -> ApiResult {
    let mut files = DatasetFiles::default();
    let mut tracking = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("InvalidMultipart", e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request("InvalidMultipart", e.body_text()))?
            .to_vec();
        match name.as_str() {
            "tracking" => tracking = Some(bytes),
            "links" => files.links = Some(bytes),
            "events" => files.events = Some(bytes),
            "config" => {
                files.config = serde_json::from_slice(&bytes)
                    .map_err(|e| ApiError::bad_request("InvalidConfig", e.to_string()))?
            }
            other => {
                return Err(ApiError::bad_request(
                    "UnknownField",
                    format!("unexpected field `{other}`"),
                ))
            }
        }
    }
    files.tracking = tracking
        .ok_or_else(|| ApiError::bad_request("MissingField", "field `tracking` is required"))?;
    let dataset = state.ingest(files).await?;
    Ok(reply(StatusCode::CREATED, versioned(&dataset.descriptor)?))
}

pub async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let d = state.dataset(&id).await?;
    Ok(reply(StatusCode::OK, versioned(&d.descriptor)?))
}

fn query_usize(q: &HashMap<String, String>, key: &str) -> Result<Option<usize>, ApiError> {
    q.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| range_invalid(format!("`{key}` must be a frame index, got `{v}`")))
        })
        .transpose()
}

pub async fn get_matrix(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let d = state.dataset(&id).await?;
    let last = d.frames.len() - 1;
    let from = query_usize(&q, "from")?.unwrap_or(0);
    let to = query_usize(&q, "to")?.unwrap_or(last);
    let m = views::matrix(&d.frames, &d.universe, from, to)
        .ok_or_else(|| range_invalid(format!("frames {from}..={to} are not within 0..={last}")))?;
    Ok(reply(StatusCode::OK, versioned(&m)?))
}

fn projection_config(q: &HashMap<String, String>) -> Result<ProjectionConfig, ApiError> {
    fn parse<T: std::str::FromStr>(
        q: &HashMap<String, String>,
        key: &str,
    ) -> Result<Option<T>, ApiError> {
        q.get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "InvalidProjectionConfig",
                        format!("`{key}` has invalid value `{v}`"),
                    )
                })
            })
            .transpose()
    }
    let mut cfg = ProjectionConfig::default();
    if let Some(p) = parse(q, "perplexity")? {
        cfg.perplexity = p;
    }
    if let Some(s) = parse(q, "seed")? {
        cfg.seed = s;
    }
    if let Some(i) = parse(q, "iters")? {
        cfg.iterations = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn frame_id(i: usize) -> String {
    format!("F{i}")
}

pub async fn get_projection(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let cfg = projection_config(&q)?;
    let d = state.dataset(&id).await?;
    let key = sha256_hex(
        serde_json::to_string(&cfg)
            .map_err(ApiError::internal)?
            .as_bytes(),
    )[..16]
        .to_string();
    let store = state.store().clone();
    let bytes = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, ApiError> {
        if let Some(b) = store.cached_projection(d.id(), &key)? {
            return Ok(b);
        }
        let vectors = d.vectors()?;
        let ids: Vec<String> = (0..vectors.len()).map(frame_id).collect();
        let points = project(vectors, &ids, &cfg)?;
        let body = versioned(&json!({ "dataset_id": d.id(), "config": cfg, "points": points }))?;
        let bytes = serde_json::to_vec(&body).map_err(ApiError::internal)?;
        store.cache_projection(d.id(), &key, &bytes)?;
        Ok(bytes)
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

pub async fn get_events(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let d = state.dataset(&id).await?;
    let body = json!({
        "dataset_id": d.id(),
        "timeline": views::score_timeline(&d.events),
        "events": d.events,
    });
    Ok(reply(StatusCode::OK, versioned(&body)?))
}

/// Frames containing a player (`?player=`) or a link (`?a=&b=`).
pub async fn get_membership(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let d = state.dataset(&id).await?;
    let ordinal = |key: &str| -> Result<u32, ApiError> {
        let name = &q[key];
        d.universe
            .ordinal(name)
            .ok_or_else(|| ApiError::not_found(format_args!("player {name}")))
    };
    let frames = match (
        q.contains_key("player"),
        q.contains_key("a") && q.contains_key("b"),
    ) {
        (true, false) => views::frames_with_player(&d.frames, ordinal("player")?),
        (false, true) => {
            let link = Link::new(ordinal("a")?, ordinal("b")?).ok_or_else(|| {
                ApiError::bad_request("InvalidQuery", "a link needs two distinct players")
            })?;
            views::frames_with_link(&d.frames, link)
        }
        _ => {
            return Err(ApiError::bad_request(
                "InvalidQuery",
                "pass either `player` or both `a` and `b`",
            ))
        }
    };
    let ids: Vec<String> = frames.iter().copied().map(frame_id).collect();
    Ok(reply(
        StatusCode::OK,
        versioned(&json!({ "dataset_id": d.id(), "frames": frames, "frame_ids": ids }))?,
    ))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum FrameRef {
    Index(usize),
    Id(String),
}

/// Inclusive frame range, or an explicit list of frames that must be contiguous.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Selection {
    Range { from: usize, to: usize },
    Frames(Vec<FrameRef>),
}

impl Selection {
    pub fn resolve(&self) -> Result<Range<usize>, ApiError> {
        let unprocessable =
            |code: &str, msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, msg);
        match self {
            Selection::Range { from, to } if from <= to => Ok(*from..to + 1),
            Selection::Range { from, to } => {
                Err(range_invalid(format!("empty range {from}..={to}")))
            }
            Selection::Frames(list) => {
                let mut idx = list
                    .iter()
                    .map(|f| match f {
                        FrameRef::Index(i) => Ok(*i),
                        FrameRef::Id(s) => s
                            .strip_prefix('F')
                            .and_then(|n| n.parse().ok())
                            .ok_or_else(|| {
                                unprocessable("InvalidFrameId", format!("`{s}` is not a frame id"))
                            }),
                    })
                    .collect::<Result<Vec<usize>, _>>()?;
                idx.sort_unstable();
                idx.dedup();
                let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
                    return Err(unprocessable("EmptySelection", "no frames selected".into()));
                };
                if last - first + 1 != idx.len() {
                    return Err(unprocessable(
                        "NonContiguousSelection",
                        format!("{} frames between {first} and {last} leave gaps", idx.len()),
                    ));
                }
                Ok(first..last + 1)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    pub selection: Selection,
}

fn session_body(id: &str, live: &LiveSession) -> Result<Value, ApiError> {
    let tree = live.session.tree();
    let sel = tree.selection();
    versioned(&json!({
        "session_id": id,
        "dataset_id": live.dataset.id(),
        "selection": { "from": sel.start, "to": sel.end - 1 },
        "tree": tree.record(),
        "history": live.session.history(),
    }))
}

pub async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult {
    let req = json_body(body)?;
    let range = req.selection.resolve()?;
    let dataset = state.dataset(&req.dataset_id).await?;
    let (frames, universe, cfg) = (
        dataset.frames.clone(),
        dataset.universe.clone(),
        dataset.descriptor.config.features,
    );
    let session =
        tokio::task::spawn_blocking(move || GenerationSession::new(frames, universe, range, &cfg))
            .await
            .map_err(ApiError::internal)??;
    let (id, slot) = state
        .create_session(LiveSession { dataset, session })
        .await?;
    let guard = slot.lock().await;
    let live = guard
        .as_ref()
        .ok_or_else(|| ApiError::internal("session vanished"))?;
    let mut resp = reply(StatusCode::CREATED, session_body(&id, live)?);
    if let Ok(v) = HeaderValue::from_str(&format!("\"{}\"", live.session.tree().digest())) {
        resp.headers_mut().insert(header::ETAG, v);
    }
    Ok(resp)
}

pub async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let guard = state.session(&id).await?;
    let live = guard
        .as_ref()
        .ok_or_else(|| ApiError::internal("session not loaded"))?;
    Ok(reply_tagged(
        &headers,
        &live.session.tree().digest(),
        session_body(&id, live)?,
    ))
}

pub async fn get_session_log(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let guard = state.session(&id).await?;
    let live = guard
        .as_ref()
        .ok_or_else(|| ApiError::internal("session not loaded"))?;
    let body = versioned(&json!({
        "session_id": id,
        "dataset_id": live.dataset.id(),
        "log": live.session.log_record(),
    }))?;
    Ok(reply_tagged(&headers, &live.session.tree().digest(), body))
}

#[derive(Debug, Deserialize)]
pub struct LayerRequest {
    pub thresholds: ChangeThresholds,
    /// Defaults to the current top layer.
    #[serde(default)]
    pub from_layer: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct RegenerateRequest {
    pub thresholds: ChangeThresholds,
}

#[derive(Debug, Serialize)]
struct TreeDelta {
    session_id: String,
    op: &'static str,
    top_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    layer: Option<LayerRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    removed_layer: Option<usize>,
    tree_digest: String,
    history_len: usize,
}

enum Mutation {
    Generate(Option<usize>, ChangeThresholds),
    Regenerate(ChangeThresholds),
    DeleteTop,
}

/// Apply `op` to a copy of the session, persist it, then commit.
async fn mutate(state: &AppState, id: &str, op: Mutation) -> ApiResult {
    let mut guard = state.session(id).await?;
    let live = guard
        .as_mut()
        .ok_or_else(|| ApiError::internal("session not loaded"))?;
    let mut next = live.session.clone();
    let old_top = next.tree().top_index();
    let (name, removed) = match op {
        Mutation::Generate(from, th) => {
            th.validate()?;
            next.generate(from.unwrap_or(old_top), th)?;
            ("generate", None)
        }
        Mutation::Regenerate(th) => {
            th.validate()?;
            next.regenerate_top(th)?;
            ("regenerate", None)
        }
        Mutation::DeleteTop => {
            next.delete_top()?;
            ("delete_top", Some(old_top))
        }
    };
    let candidate = LiveSession {
        dataset: live.dataset.clone(),
        session: next,
    };
    state.persist(id, &candidate).await?;
    *live = candidate;
    let tree = live.session.tree();
    let top = tree.top_index();
    let delta = TreeDelta {
        session_id: id.to_string(),
        op: name,
        top_index: top,
        layer: removed
            .is_none()
            .then(|| tree.record().layers.swap_remove(top)),
        removed_layer: removed,
        tree_digest: tree.digest(),
        history_len: live.session.history().len(),
    };
    Ok(reply(StatusCode::OK, versioned(&delta)?))
}

pub async fn post_layer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<LayerRequest>, JsonRejection>,
) -> ApiResult {
    let req = json_body(body)?;
    mutate(
        &state,
        &id,
        Mutation::Generate(req.from_layer, req.thresholds),
    )
    .await
}

pub async fn put_top_layer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<RegenerateRequest>, JsonRejection>,
) -> ApiResult {
    let req = json_body(body)?;
    mutate(&state, &id, Mutation::Regenerate(req.thresholds)).await
}

pub async fn delete_top_layer(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    mutate(&state, &id, Mutation::DeleteTop).await
}

pub async fn get_snapshot(
    State(state): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult {
    let sid: SnapshotId = sid
        .parse()
        .map_err(|e: String| ApiError::bad_request("InvalidSnapshotId", e))?;
    let guard = state.session(&id).await?;
    let live = guard
        .as_ref()
        .ok_or_else(|| ApiError::internal("session not loaded"))?;
    let tree = live.session.tree();
    let s = tree
        .snapshot(sid)
        .ok_or_else(|| ApiError::not_found(format_args!("snapshot {sid}")))?;
    let mut body = versioned(&views::snapshot_detail(s, &live.dataset.universe))?;
    body["session_id"] = json!(id);
    Ok(reply_tagged(&headers, &tree.digest(), body))
}
