//! HTTP/JSON front end for the experiment runner.
//!
//! Every route is a thin wrapper over `fpp_core`. Heavy work runs on the
//! blocking pool so the reactor stays responsive.

use std::net::SocketAddr;

use axum::extract::{Json, Path};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use fpp_core::cli::config::ExperimentKind;
use fpp_core::cli::plot::emit_plot_data;
use fpp_core::cli::records::ExperimentRecord;
use fpp_core::cli::runner::{run_text, validate_text, RunOptions, RunOutcome};
use fpp_core::estimators::{z_moment_report, ZMomentReport};
use fpp_core::lattice::Site;
use fpp_core::passage::{exact_passage_time, CertifyOptions, PassageTime};
use fpp_core::weights::{pc_value, validate_assumptions, Distribution, MomentReport, PcValue, WeightField};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRequest {
    pub config: String,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub config: String,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub exit_code: i32,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotRequest {
    pub records: Vec<ExperimentRecord>,
    pub kind: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotResponse {
    pub tsv: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassageRequest {
    pub distribution: Distribution,
    pub seed: u64,
    pub from: Site,
    pub to: Site,
    #[serde(default)]
    pub certify: Option<CertifyOptions>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsRequest {
    pub distribution: Distribution,
    pub d: usize,
    #[serde(default)]
    pub pc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsResponse {
    pub report: MomentReport,
    pub z: ZMomentReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad(msg: impl ToString) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> T + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn healthz() -> &'static str {
    "ok"
}

async fn run(Json(req): Json<RunRequest>) -> Result<Json<RunOutcome>, ApiError> {
    let opts = RunOptions {
        force: req.force,
        workers: req.workers,
    };
    Ok(Json(blocking(move || run_text(&req.config, &opts)).await?))
}

async fn validate(Json(req): Json<ValidateRequest>) -> Json<ValidateResponse> {
    let (exit_code, diagnostics) = validate_text(&req.config, req.force);
    Json(ValidateResponse { exit_code, diagnostics })
}

async fn plot(Json(req): Json<PlotRequest>) -> Result<Json<PlotResponse>, ApiError> {
    let kind: ExperimentKind = req.kind.parse().map_err(ApiError::bad)?;
    let tsv = emit_plot_data(&req.records, kind).map_err(ApiError::bad)?;
    Ok(Json(PlotResponse { tsv }))
}

async fn passage_time(Json(req): Json<PassageRequest>) -> Result<Json<PassageTime>, ApiError> {
    req.distribution.validate().map_err(ApiError::bad)?;
    let out = blocking(move || {
        let field = WeightField::new(req.distribution, req.seed);
        exact_passage_time(&field, &req.from, &req.to, &req.certify.unwrap_or_default())
    })
    .await?;
    out.map(Json).map_err(ApiError::bad)
}

async fn pc(Path(d): Path<usize>) -> Result<Json<PcValue>, ApiError> {
    pc_value(d, None).map(Json).map_err(ApiError::bad)
}

async fn moments(Json(req): Json<MomentsRequest>) -> Result<Json<MomentsResponse>, ApiError> {
    let report = validate_assumptions(&req.distribution, req.d, req.pc).map_err(ApiError::bad)?;
    let z = z_moment_report(&req.distribution, req.d);
    Ok(Json(MomentsResponse { report, z }))
}

pub fn router() -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/run", post(run))
        .route("/v1/validate", post(validate))
        .route("/v1/plot", post(plot))
        .route("/v1/passage-time", post(passage_time))
        .route("/v1/pc/{d}", get(pc))
        .route("/v1/moments", post(moments))
}

/// Serve until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router()).with_graceful_shutdown(shutdown).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}
