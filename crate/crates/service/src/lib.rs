//! HTTP front end for the sandbox judge.
//!
//! ```text
//! POST /judge   {"code": str, "tests": [str], "limits": {"wall_clock_ms": int}?}
//!            -> {"reward": 0|1, "tests_total", "tests_passed", "failure_detail", "duration_ms"}
//! GET  /health -> {"status": "ok", "queue_depth": int, "pool_size": int}
//! ```
//!
//! At most `pool_size` judge jobs run at once; further requests wait in
//! arrival order. Once `queue_bound` requests are waiting, new ones get
//! `503` with a `Retry-After` header. Invalid requests get `400`.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chainsynth::sandbox::{run_unit_tests, ExecLimits, JudgeResult, Sandbox, SandboxError};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, Semaphore};

pub const DEFAULT_MAX_CODE_BYTES: usize = 256 * 1024;
pub const RETRY_AFTER_SECS: u64 = 1;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub pool_size: usize,
    /// Waiting requests allowed before shedding load; 0 means `4 * pool_size`.
    pub queue_bound: usize,
    pub max_code_bytes: usize,
    /// Limits applied to every job; request overrides may only lower them.
    pub limits: ExecLimits,
    pub sandbox: Sandbox,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            pool_size: chainsynth::sandbox::default_workers(),
            queue_bound: 0,
            max_code_bytes: DEFAULT_MAX_CODE_BYTES,
            limits: ExecLimits::default(),
            sandbox: Sandbox::from_env(),
        }
    }
}

impl ServiceConfig {
    pub fn effective_queue_bound(&self) -> usize {
        if self.queue_bound == 0 {
            4 * self.pool_size
        } else {
            self.queue_bound
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub code: String,
    pub tests: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitOverrides>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub reward: u8,
    pub tests_total: usize,
    pub tests_passed: usize,
    pub failure_detail: Option<String>,
    pub duration_ms: u64,
}

impl From<JudgeResult> for JudgeResponse {
    fn from(r: JudgeResult) -> Self {
        JudgeResponse {
            reward: r.reward,
            tests_total: r.tests_total,
            tests_passed: r.tests_passed,
            failure_detail: r.failure_detail,
            duration_ms: r.duration_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub queue_depth: usize,
    pub pool_size: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error("{0}")]
    Validation(String),
    #[error("server overloaded, retry in {RETRY_AFTER_SECS}s")]
    Overloaded,
    #[error("judge failed: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: String,
    kind: &'a str,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ServiceError::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            ServiceError::Overloaded => (StatusCode::SERVICE_UNAVAILABLE, "overloaded"),
            ServiceError::BindFailure { .. } | ServiceError::Internal(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let body = Json(ErrorBody { error: self.to_string(), kind });
        if status == StatusCode::SERVICE_UNAVAILABLE {
            (status, [(header::RETRY_AFTER, RETRY_AFTER_SECS.to_string())], body).into_response()
        } else {
            (status, body).into_response()
        }
    }
}

/// Shared request-handling state.
pub struct Judge {
    config: ServiceConfig,
    slots: Semaphore,
    waiting: AtomicUsize,
    draining: AtomicBool,
}

impl Judge {
    pub fn new(config: ServiceConfig) -> Self {
        let slots = Semaphore::new(config.pool_size.max(1));
        Judge { config, slots, waiting: AtomicUsize::new(0), draining: AtomicBool::new(false) }
    }

    pub fn queue_depth(&self) -> usize {
        self.waiting.load(Ordering::SeqCst)
    }

    /// Checks a request and resolves its limits.
    pub fn validate(&self, req: &JudgeRequest) -> Result<ExecLimits, ServiceError> {
        if req.tests.is_empty() {
            return Err(ServiceError::Validation("tests must not be empty".into()));
        }
        if req.tests.iter().any(|t| t.trim().is_empty()) {
            return Err(ServiceError::Validation("tests must not contain blank entries".into()));
        }
        if req.code.len() > self.config.max_code_bytes {
            return Err(ServiceError::Validation(format!(
                "code is {} bytes, the limit is {}",
                req.code.len(),
                self.config.max_code_bytes
            )));
        }
        let mut limits = self.config.limits;
        if let Some(ms) = req.limits.as_ref().and_then(|l| l.wall_clock_ms) {
            if ms == 0 {
                return Err(ServiceError::Validation("wall_clock_ms must be positive".into()));
            }
            limits.wall_clock_ms = ms.min(self.config.limits.wall_clock_ms);
        }
        Ok(limits)
    }

    /// Validates, waits for a slot, and runs the tests.
    pub async fn handle(self: &Arc<Self>, req: JudgeRequest) -> Result<JudgeResponse, ServiceError> {
        let limits = self.validate(&req)?;
        if self.draining.load(Ordering::SeqCst) {
            return Err(ServiceError::Overloaded);
        }
        let bound = self.config.effective_queue_bound();
        if self.waiting.fetch_add(1, Ordering::SeqCst) >= bound {
            self.waiting.fetch_sub(1, Ordering::SeqCst);
            return Err(ServiceError::Overloaded);
        }
        let permit = self.slots.acquire().await;
        self.waiting.fetch_sub(1, Ordering::SeqCst);
        let _permit = permit.map_err(|e| ServiceError::Internal(e.to_string()))?;
        let sandbox = self.config.sandbox.clone();
        let result = tokio::task::spawn_blocking(move || run_unit_tests(&sandbox, &req.code, &req.tests, &limits))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        match result {
            Ok(r) => Ok(r.into()),
            Err(SandboxError::NoTests) => Err(ServiceError::Validation("tests must not be empty".into())),
            Err(e) => Err(ServiceError::Internal(e.to_string())),
        }
    }

    pub fn health(&self) -> Health {
        let status = if self.draining.load(Ordering::SeqCst) { "draining" } else { "ok" };
        Health { status: status.into(), queue_depth: self.queue_depth(), pool_size: self.config.pool_size.max(1) }
    }
}

async fn judge_route(
    State(judge): State<Arc<Judge>>,
    body: Result<Json<JudgeRequest>, JsonRejection>,
) -> Result<Json<JudgeResponse>, ServiceError> {
    let Json(req) = body.map_err(|e| ServiceError::Validation(e.body_text()))?;
    judge.handle(req).await.map(Json)
}

async fn health_route(State(judge): State<Arc<Judge>>) -> Json<Health> {
    Json(judge.health())
}

pub fn router(judge: Arc<Judge>) -> Router {
    let limit = judge.config.max_code_bytes * 2 + (1 << 20);
    Router::new()
        .route("/judge", post(judge_route))
        .route("/health", get(health_route))
        .layer(axum::extract::DefaultBodyLimit::max(limit))
        .with_state(judge)
}

/// A running service on its own runtime thread.
pub struct ServiceHandle {
    addr: SocketAddr,
    judge: Arc<Judge>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn health(&self) -> Health {
        self.judge.health()
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop()
    }

    /// Blocks until the service stops on its own (for example on Ctrl-C).
    pub fn wait(mut self) -> std::io::Result<()> {
        self.shutdown.take();
        self.join()
    }

    fn stop(&mut self) -> std::io::Result<()> {
        self.judge.draining.store(true, Ordering::SeqCst);
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.join()
    }

    fn join(&mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("service thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if self.shutdown.is_some() {
            let _ = self.stop();
        }
    }
}

/// Binds `addr` and serves until shut down. With `stop_on_ctrl_c`, an
/// interrupt also triggers a graceful shutdown.
pub fn serve(addr: &str, config: ServiceConfig, stop_on_ctrl_c: bool) -> Result<ServiceHandle, ServiceError> {
    config.limits.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
    let bind_err = |source| ServiceError::BindFailure { addr: addr.to_string(), source };
    let std_listener = std::net::TcpListener::bind(addr).map_err(bind_err)?;
    std_listener.set_nonblocking(true).map_err(bind_err)?;
    let local = std_listener.local_addr().map_err(bind_err)?;
    let judge = Arc::new(Judge::new(config));
    let app = router(judge.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .thread_name("judge-service")
        .build()
        .map_err(bind_err)?;
    let thread = std::thread::Builder::new()
        .name("judge-service".into())
        .spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                let stop = async move {
                    if stop_on_ctrl_c {
                        tokio::select! {
                            _ = rx => {}
                            _ = tokio::signal::ctrl_c() => {}
                        }
                    } else {
                        let _ = rx.await;
                    }
                };
                tracing::info!(%local, "judge service listening");
                axum::serve(listener, app).with_graceful_shutdown(stop).await
            })
        })
        .map_err(bind_err)?;
    Ok(ServiceHandle { addr: local, judge, shutdown: Some(tx), thread: Some(thread) })
}
