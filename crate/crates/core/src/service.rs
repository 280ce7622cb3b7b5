//! HTTP/JSON task queue for live annotators, backed by the workflow engine.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/v1/tasks/next?annotator=ID` | lease the next task, 204 when none |
//! | POST | `/api/v1/tasks/{id}/label` | submit `{"label": ...}` for a leased task |
//! | GET | `/api/v1/metrics` | counters, metrics, queue depth |
//! | GET | `/api/v1/images/{item}` | the item's image as binary PGM |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::workflow::{AuditRecord, Engine, MetricsSnapshot, Step, TaskKind, WorkItem};

pub const DEFAULT_LEASE_TTL: Duration = Duration::from_secs(600);

#[derive(Clone, Debug)]
struct Lease {
    annotator: String,
    expires: Instant,
}

#[derive(Clone, Debug)]
struct Task {
    item: String,
    kind: TaskKind,
    lease: Option<Lease>,
}

/// Everything behind the service's single lock.
pub struct Annotation {
    engine: Engine,
    ttl: Duration,
    tasks: BTreeMap<u64, Task>,
    next_task: u64,
    images: HashMap<String, Vec<u8>>,
    touched: HashMap<String, HashSet<String>>,
    audit: Vec<AuditRecord>,
}

/// Item to label together with its image bytes.
pub struct ServiceItem {
    pub item: WorkItem,
    pub image: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: u64,
    pub item: String,
    pub image: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_label: Option<String>,
    pub annotator: String,
    pub lease_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_label: Option<String>,
}

#[derive(Debug, PartialEq)]
pub enum ServiceError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ServiceError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ServiceError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ServiceError::Conflict(m) => (StatusCode::CONFLICT, m),
            ServiceError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (code, Json(json!({ "error": msg }))).into_response()
    }
}

fn valid_annotator(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.@".contains(c))
}

impl Annotation {
    /// Routes every item through the engine. Auto-accepted items finish at
    /// once, the rest are queued in input order.
    pub fn new(engine: Engine, items: Vec<ServiceItem>, ttl: Duration) -> Result<Self> {
        let mut s = Self {
            engine,
            ttl,
            tasks: BTreeMap::new(),
            next_task: 1,
            images: HashMap::new(),
            touched: HashMap::new(),
            audit: Vec::new(),
        };
        for ServiceItem { item, image } in items {
            if s.images.insert(item.id.clone(), image).is_some() {
                return Err(Error::DuplicateId(item.id));
            }
            let id = item.id.clone();
            match s.engine.begin(item)? {
                Step::Done(r) => s.audit.push(r),
                Step::Awaiting(kind) => s.enqueue(id, kind),
            }
        }
        Ok(s)
    }

    fn enqueue(&mut self, item: String, kind: TaskKind) {
        self.tasks.insert(self.next_task, Task { item, kind, lease: None });
        self.next_task += 1;
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn queue_depth(&self) -> usize {
        self.tasks.len()
    }

    fn expire(&mut self, now: Instant) {
        for t in self.tasks.values_mut() {
            if t.lease.as_ref().is_some_and(|l| l.expires <= now) {
                t.lease = None;
            }
        }
    }

    /// Leases the oldest free task whose item this annotator has not seen.
    pub fn next_task(&mut self, annotator: &str, now: Instant) -> std::result::Result<Option<TaskView>, ServiceError> {
        if !valid_annotator(annotator) {
            return Err(ServiceError::BadRequest(format!("malformed annotator id `{annotator}`")));
        }
        self.expire(now);
        let touched = &self.touched;
        let found = self.tasks.iter_mut().find(|(_, t)| {
            t.lease.is_none() && !touched.get(&t.item).is_some_and(|s| s.contains(annotator))
        });
        let Some((&id, task)) = found else {
            return Ok(None);
        };
        task.lease = Some(Lease {
            annotator: annotator.to_string(),
            expires: now + self.ttl,
        });
        let (kind, proposed_label) = match &task.kind {
            TaskKind::Verify { proposed } => ("verify", Some(proposed.clone())),
            TaskKind::Blind => ("blind_label", None),
        };
        let view = TaskView {
            task_id: id,
            item: task.item.clone(),
            image: format!("/api/v1/images/{}", task.item),
            kind: kind.to_string(),
            proposed_label,
            annotator: annotator.to_string(),
            lease_ms: self.ttl.as_millis() as u64,
        };
        self.touched.entry(task.item.clone()).or_default().insert(annotator.to_string());
        Ok(Some(view))
    }

    pub fn submit(&mut self, task_id: u64, label: &str, now: Instant) -> std::result::Result<SubmitResult, ServiceError> {
        let task = self
            .tasks
            .get_mut(&task_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown task {task_id}")))?;
        let lease = match &task.lease {
            Some(l) if l.expires > now => l.clone(),
            Some(_) => {
                task.lease = None;
                return Err(ServiceError::Conflict(format!("lease on task {task_id} expired")));
            }
            None => return Err(ServiceError::Conflict(format!("task {task_id} is not leased"))),
        };
        if label.trim().is_empty() {
            return Err(ServiceError::BadRequest("label must not be blank".into()));
        }
        let task = self.tasks.remove(&task_id).expect("checked above");
        match self.engine.submit_label(&task.item, &lease.annotator, label) {
            Ok(Step::Done(record)) => {
                let final_label = record.final_label.clone();
                self.audit.push(record);
                Ok(SubmitResult {
                    status: "finalized".into(),
                    final_label: Some(final_label),
                })
            }
            Ok(Step::Awaiting(kind)) => {
                self.enqueue(task.item, kind);
                Ok(SubmitResult {
                    status: "pending".into(),
                    final_label: None,
                })
            }
            Err(e) => Err(ServiceError::Internal(e.to_string())),
        }
    }

    pub fn metrics(&self) -> serde_json::Value {
        let snap: MetricsSnapshot = self.engine.snapshot();
        json!({
            "metrics": snap.metrics,
            "counters": snap.counters,
            "queue_depth": self.tasks.len(),
            "leased": self.tasks.values().filter(|t| t.lease.is_some()).count(),
            "finalized": self.audit.len(),
        })
    }

    pub fn image(&self, item: &str) -> Option<&[u8]> {
        self.images.get(item).map(Vec::as_slice)
    }
}

pub type Shared = Arc<Mutex<Annotation>>;

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

#[derive(Deserialize)]
struct LabelBody {
    label: String,
}

fn lock(s: &Shared) -> std::result::Result<std::sync::MutexGuard<'_, Annotation>, ServiceError> {
    s.lock().map_err(|_| ServiceError::Internal("state lock poisoned".into()))
}

async fn next_task(State(s): State<Shared>, Query(q): Query<NextQuery>) -> std::result::Result<Response, ServiceError> {
    let annotator = q.annotator.unwrap_or_default();
    match lock(&s)?.next_task(&annotator, Instant::now())? {
        Some(view) => Ok(Json(view).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn submit_label(
    State(s): State<Shared>,
    Path(id): Path<u64>,
    Json(body): Json<LabelBody>,
) -> std::result::Result<Json<SubmitResult>, ServiceError> {
    Ok(Json(lock(&s)?.submit(id, &body.label, Instant::now())?))
}

async fn metrics(State(s): State<Shared>) -> std::result::Result<Json<serde_json::Value>, ServiceError> {
    Ok(Json(lock(&s)?.metrics()))
}

async fn image(State(s): State<Shared>, Path(item): Path<String>) -> std::result::Result<Response, ServiceError> {
    let guard = lock(&s)?;
    let bytes = guard
        .image(&item)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown item `{item}`")))?
        .to_vec();
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response())
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/v1/tasks/next", get(next_task))
        .route("/api/v1/tasks/:id/label", post(submit_label))
        .route("/api/v1/metrics", get(metrics))
        .route("/api/v1/images/*item", get(image))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Shared, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
