//! JSON over HTTP for annotator clients and run control.
//!
//! Task ids contain `/`; clients percent-encode them in paths.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{QueueAnnotator, Rejection, TaskService};
use crate::crowd::Answer;
use crate::error::Error;
use crate::events::EventBody;
use crate::fix::{execute_workflow, Annotator, AnnotatorSource, RunContext, SimulatedAnnotator};
use crate::project::Project;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatus {
    pub workflow_id: String,
    pub annotator: String,
    pub state: RunState,
    pub instances: usize,
    pub finished: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<TaskService>,
    pub project: Option<Arc<Project>>,
    pub reports_dir: Option<PathBuf>,
    /// How long a queue-backed round waits for workers.
    pub queue_timeout: Duration,
    pub runs: Arc<Mutex<BTreeMap<String, RunStatus>>>,
}

impl AppState {
    pub fn new(service: Arc<TaskService>) -> Self {
        Self {
            service,
            project: None,
            reports_dir: None,
            queue_timeout: Duration::from_secs(24 * 3600),
            runs: Arc::default(),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/response", post(submit))
        .route("/instances/{id}/trace", get(trace))
        .route("/workflows/{id}/run", post(run_workflow))
        .route("/workflows/{id}", get(run_status))
        .route("/reports/{name}", get(report))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn internal(e: Error) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn health(State(s): State<AppState>) -> Response {
    let last_seq = s.service.log().lock().last_seq();
    Json(json!({
        "status": "ok",
        "open_tasks": s.service.open_count(),
        "last_seq": last_seq,
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    worker: Option<String>,
    kind: Option<String>,
}

async fn next_task(State(s): State<AppState>, Query(q): Query<NextQuery>) -> Response {
    let Some(worker) = q.worker.filter(|w| !w.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing `worker`");
    };
    let kind = q.kind.filter(|k| !k.is_empty());
    match s.service.next_task(&worker, kind.as_deref()) {
        Ok(Some(task)) => Json(task).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e @ Error::UnknownTaskKind(_)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => internal(e),
    }
}

#[derive(Debug, Deserialize)]
struct Submission {
    worker_id: String,
    answer: Answer,
}

async fn submit(State(s): State<AppState>, Path(id): Path<String>, Json(body): Json<Submission>) -> Response {
    if body.worker_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "missing `worker_id`");
    }
    let service = s.service.clone();
    let result = tokio::task::spawn_blocking(move || service.submit(&body.worker_id, &id, body.answer)).await;
    match result {
        Ok(Ok(Ok(a))) => Json(json!({ "status": "accepted", "closed": a.closed })).into_response(),
        Ok(Ok(Err(r))) => {
            let status = match r {
                Rejection::UnknownTask(_) => StatusCode::NOT_FOUND,
                Rejection::Closed(_) | Rejection::Duplicate(_) => StatusCode::CONFLICT,
                Rejection::Schema(_) => StatusCode::UNPROCESSABLE_ENTITY,
            };
            let mut body = serde_json::to_value(&r).expect("rejection serializes");
            body["status"] = json!("rejected");
            body["message"] = json!(r.to_string());
            (status, Json(body)).into_response()
        }
        Ok(Err(e)) => internal(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct TraceQuery {
    workflow: Option<String>,
}

/// Latest logged trace of an instance, as the log record.
async fn trace(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<TraceQuery>) -> Response {
    let log = s.service.log().lock();
    let found = log.records().iter().rev().find(|e| match &e.event {
        EventBody::Trace { run, .. } => {
            run.instance_id == id && q.workflow.as_ref().is_none_or(|w| *w == run.workflow_id)
        }
        _ => false,
    });
    match found {
        Some(e) => Json(e.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no trace for instance `{id}`")),
    }
}

#[derive(Debug, Default, Deserialize)]
struct RunRequest {
    annotator: Option<String>,
    instances: Option<Vec<String>>,
    seed: Option<u64>,
}

/// Starts a workflow over the project's instances in the background.
async fn run_workflow(State(s): State<AppState>, Path(id): Path<String>, body: Option<Json<RunRequest>>) -> Response {
    let Some(project) = s.project.clone() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no project loaded");
    };
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let workflow = match project.definition.workflow(&id) {
        Ok(w) => w,
        Err(e) => return error(StatusCode::NOT_FOUND, e.to_string()),
    };
    if let Err(e) = workflow.check_order(project.pipeline.graph()) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    let source: AnnotatorSource = match req.annotator.as_deref().unwrap_or("queue").parse() {
        Ok(a) => a,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let instances = match &req.instances {
        None => project.instances.clone(),
        Some(ids) => {
            let mut out = Vec::with_capacity(ids.len());
            for i in ids {
                match project.instances.iter().find(|x| &x.id == i) {
                    Some(x) => out.push(x.clone()),
                    None => return error(StatusCode::NOT_FOUND, format!("unknown instance `{i}`")),
                }
            }
            out
        }
    };
    {
        let mut runs = s.runs.lock().unwrap_or_else(|p| p.into_inner());
        if runs.get(&id).is_some_and(|r| r.state == RunState::Running) {
            return error(StatusCode::CONFLICT, format!("workflow `{id}` is already running"));
        }
        runs.insert(
            id.clone(),
            RunStatus {
                workflow_id: id.clone(),
                annotator: source.to_string(),
                state: RunState::Running,
                instances: instances.len(),
                finished: 0,
                error: None,
            },
        );
    }

    let mut annotator: Box<dyn Annotator> = match source {
        AnnotatorSource::Queue => Box::new(QueueAnnotator::new(s.service.clone(), s.queue_timeout)),
        AnnotatorSource::Oracle => Box::new(SimulatedAnnotator::oracle(project.truth.clone())),
        AnnotatorSource::Simulated { epsilon, seed } => {
            match SimulatedAnnotator::new(project.truth.clone(), epsilon, seed) {
                Ok(a) => Box::new(a),
                Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
            }
        }
    };
    let ctx = RunContext {
        seed: req.seed.unwrap_or(project.seed),
        ..RunContext::default()
    };
    let runs = s.runs.clone();
    let mut sink = s.service.log().clone();
    let wf_id = id.clone();
    let n = instances.len();
    std::thread::spawn(move || {
        let mut failure = None;
        for inst in &instances {
            match execute_workflow(&project.pipeline, inst, &workflow, annotator.as_mut(), &mut sink, &ctx) {
                Ok(run) => {
                    let mut runs = runs.lock().unwrap_or_else(|p| p.into_inner());
                    if let Some(st) = runs.get_mut(&wf_id) {
                        st.finished += 1;
                    }
                    if !run.complete {
                        log::warn!("run `{}` stopped early", run.run.id());
                    }
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let mut runs = runs.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(st) = runs.get_mut(&wf_id) {
            st.state = if failure.is_some() { RunState::Failed } else { RunState::Done };
            st.error = failure;
        }
    });

    (
        StatusCode::ACCEPTED,
        Json(json!({ "workflow_id": id, "instances": n, "status": "running" })),
    )
        .into_response()
}

async fn run_status(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    let runs = s.runs.lock().unwrap_or_else(|p| p.into_inner());
    match runs.get(&id) {
        Some(st) => Json(st.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("workflow `{id}` has not been started")),
    }
}

/// `{name}.csv` and `{name}.txt` from the reports directory.
async fn report(State(s): State<AppState>, Path(name): Path<String>) -> Response {
    let Some(dir) = &s.reports_dir else {
        return error(StatusCode::NOT_FOUND, "no reports directory");
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.+".contains(c)) || name.contains("..")
    {
        return error(StatusCode::BAD_REQUEST, format!("bad report name `{name}`"));
    }
    let csv = std::fs::read_to_string(dir.join(format!("{name}.csv")));
    let text = std::fs::read_to_string(dir.join(format!("{name}.txt")));
    match (csv, text) {
        (Ok(csv), Ok(text)) => Json(json!({ "name": name, "csv": csv, "text": text })).into_response(),
        _ => error(StatusCode::NOT_FOUND, format!("no report `{name}`")),
    }
}

/// Serves until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(state, listener).await
}

pub async fn serve_on(state: AppState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
