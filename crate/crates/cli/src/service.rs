//! JSON API under `/v1`, backed by an in-memory registry that can mirror
//! itself to a directory.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use eliminators_core::datakit::{load_document, read_csv, sample_mixture, save_document, IngestOptions};
use eliminators_core::metrics::TauVariance;
use eliminators_core::uncertainty::{confidence_intervals, rho_sweep, sensitivity_sweep, DEFAULT_BOUND_MULTIPLIER};
use eliminators_core::{
    ClassGrouping, Dataset, EliminationPolicy, Error, GaussianMixtureSpec, McConfig, TrainedModel,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use crate::case::{analyze_case, check_features};
use crate::commands::ServeArgs;
use crate::error::{CliError, CliResult};
use crate::report::{self, EvalOptions};
use crate::training::{self, scoring_view, ModelKind, TrainOptions, TrainingLog};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        let mut e = ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} with id `{id}`"));
        e.detail = json!({ "resource": what, "id": id });
        e
    }

    fn schema(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ClassMismatch(_) => StatusCode::CONFLICT,
            Error::InGrouping { source, .. } if matches!(**source, Error::ClassMismatch(_)) => StatusCode::CONFLICT,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let detail = match &e {
            Error::Dimension { expected, got } => json!({ "expected": expected, "got": got }),
            Error::Parse { row, column, .. } => json!({ "row": row, "column": column }),
            Error::InGrouping { grouping, .. } => json!({ "grouping": grouping }),
            Error::Divergence { epoch } => json!({ "epoch": epoch }),
            _ => Value::Null,
        };
        ApiError {
            status,
            code: e.code().to_string(),
            message: e.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredDataset {
    pub id: String,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredModel {
    pub id: String,
    pub dataset_id: String,
    pub kind: ModelKind,
    pub model: TrainedModel,
    pub grouping: Option<ClassGrouping>,
    pub training_log: TrainingLog,
}

#[derive(Default)]
struct Registry {
    datasets: HashMap<String, Arc<StoredDataset>>,
    models: HashMap<String, Arc<StoredModel>>,
    next_id: u64,
}

/// Shared service state. Stored resources are immutable once published.
pub struct AppState {
    registry: RwLock<Registry>,
    store: Option<PathBuf>,
}

fn store_dirs(root: &FsPath) -> (PathBuf, PathBuf) {
    (root.join("datasets"), root.join("models"))
}

fn id_number(id: &str) -> u64 {
    id.rsplit('-').next().and_then(|n| n.parse().ok()).unwrap_or(0)
}

fn load_dir<T: DeserializeOwned>(dir: &FsPath) -> eliminators_core::Result<Vec<T>> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => {
            return Err(Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        }
    };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
        out.push(load_document(&p)?);
    }
    Ok(out)
}

impl AppState {
    pub fn in_memory() -> Arc<Self> {
        Arc::new(AppState {
            registry: RwLock::new(Registry::default()),
            store: None,
        })
    }

    /// Loads previously stored resources from `root` and mirrors new ones there.
    pub fn with_store(root: impl Into<PathBuf>) -> eliminators_core::Result<Arc<Self>> {
        let root = root.into();
        let (ds_dir, model_dir) = store_dirs(&root);
        for d in [&ds_dir, &model_dir] {
            std::fs::create_dir_all(d).map_err(|e| Error::Io {
                path: d.clone(),
                source: e,
            })?;
        }
        let mut reg = Registry::default();
        for d in load_dir::<StoredDataset>(&ds_dir)? {
            d.dataset.validate()?;
            reg.next_id = reg.next_id.max(id_number(&d.id));
            reg.datasets.insert(d.id.clone(), Arc::new(d));
        }
        for m in load_dir::<StoredModel>(&model_dir)? {
            m.model.validate()?;
            reg.next_id = reg.next_id.max(id_number(&m.id));
            reg.models.insert(m.id.clone(), Arc::new(m));
        }
        Ok(Arc::new(AppState {
            registry: RwLock::new(reg),
            store: Some(root),
        }))
    }

    fn dataset(&self, id: &str) -> Result<Arc<StoredDataset>, ApiError> {
        let reg = self.registry.read().expect("registry lock");
        reg.datasets.get(id).cloned().ok_or_else(|| ApiError::not_found("dataset", id))
    }

    fn model(&self, id: &str) -> Result<Arc<StoredModel>, ApiError> {
        let reg = self.registry.read().expect("registry lock");
        reg.models.get(id).cloned().ok_or_else(|| ApiError::not_found("model", id))
    }

    fn insert_dataset(&self, dataset: Dataset) -> Result<Arc<StoredDataset>, ApiError> {
        let mut reg = self.registry.write().expect("registry lock");
        reg.next_id += 1;
        let stored = Arc::new(StoredDataset {
            id: format!("ds-{}", reg.next_id),
            dataset,
        });
        if let Some(root) = &self.store {
            save_document(store_dirs(root).0.join(format!("{}.json", stored.id)), &*stored)?;
        }
        reg.datasets.insert(stored.id.clone(), stored.clone());
        Ok(stored)
    }

    fn insert_model(&self, make: impl FnOnce(String) -> StoredModel) -> Result<Arc<StoredModel>, ApiError> {
        let mut reg = self.registry.write().expect("registry lock");
        reg.next_id += 1;
        let stored = Arc::new(make(format!("model-{}", reg.next_id)));
        if let Some(root) = &self.store {
            save_document(store_dirs(root).1.join(format!("{}.json", stored.id)), &*stored)?;
        }
        reg.models.insert(stored.id.clone(), stored.clone());
        Ok(stored)
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let mut err = ApiError::schema(format!("invalid request body: {e}"));
        err.detail = json!({ "line": e.line(), "column": e.column() });
        err
    })
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Serialize)]
struct DatasetSummary {
    id: String,
    name: String,
    n_cases: usize,
    class_names: Vec<String>,
    class_counts: Vec<usize>,
    features: Vec<eliminators_core::FeatureMeta>,
}

fn summary(d: &StoredDataset) -> DatasetSummary {
    DatasetSummary {
        id: d.id.clone(),
        name: d.dataset.name.clone(),
        n_cases: d.dataset.len(),
        class_names: d.dataset.class_names.clone(),
        class_counts: d.dataset.class_counts(),
        features: d.dataset.features.clone(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureRequest {
    mixture: GaussianMixtureSpec,
    n: usize,
    name: Option<String>,
}

/// `text/csv` bodies need `?label=<column>`, optionally `categorical=a,b`
/// and `name=`; JSON bodies describe a Gaussian mixture to sample.
async fn create_dataset(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<DatasetSummary>), ApiError> {
    let is_csv = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv"));
    let dataset = blocking(move || {
        if is_csv {
            let label = q.get("label").ok_or_else(|| ApiError::schema("CSV upload needs the `label` query parameter"))?;
            let mut opts = IngestOptions::new(label);
            for c in q.get("categorical").into_iter().flat_map(|s| s.split(',')).filter(|s| !s.is_empty()) {
                opts = opts.categorical(c.trim());
            }
            let name = q.get("name").map_or("upload", String::as_str);
            Ok(read_csv(&body[..], name, &opts)?)
        } else {
            let req: MixtureRequest = parse_body(&body)?;
            let mut ds = sample_mixture(&req.mixture, req.n)?;
            if let Some(name) = req.name {
                ds.name = name;
            }
            Ok(ds)
        }
    })
    .await?;
    let stored = state.insert_dataset(dataset)?;
    Ok((StatusCode::CREATED, Json(summary(&stored))))
}

async fn get_dataset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<DatasetSummary> {
    let d = state.dataset(&id)?;
    Ok(Json(summary(&d)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRequest {
    dataset_id: String,
    kind: ModelKind,
    #[serde(default)]
    config: TrainOptions,
}

#[derive(Serialize)]
struct ModelSummary {
    id: String,
    dataset_id: String,
    kind: ModelKind,
    class_names: Vec<String>,
    features: Vec<eliminators_core::FeatureMeta>,
    grouping: Option<String>,
    training_log: TrainingLog,
}

fn model_summary(m: &StoredModel) -> ModelSummary {
    ModelSummary {
        id: m.id.clone(),
        dataset_id: m.dataset_id.clone(),
        kind: m.kind,
        class_names: m.model.class_names.clone(),
        features: m.model.features.clone(),
        grouping: m.grouping.as_ref().map(ClassGrouping::label),
        training_log: m.training_log.clone(),
    }
}

async fn create_model(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<ModelSummary>), ApiError> {
    let req: ModelRequest = parse_body(&body)?;
    let ds = state.dataset(&req.dataset_id)?;
    let out = blocking(move || Ok(training::train(req.kind, &req.config, &ds.dataset)?)).await?;
    let stored = state.insert_model(|id| StoredModel {
        id,
        dataset_id: req.dataset_id,
        kind: req.kind,
        model: out.model,
        grouping: out.grouping,
        training_log: out.log,
    })?;
    Ok((StatusCode::CREATED, Json(model_summary(&stored))))
}

async fn get_model(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<ModelSummary> {
    let m = state.model(&id)?;
    Ok(Json(model_summary(&m)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyInput {
    Text(String),
    Fields {
        accept: f64,
        retain: f64,
        max_retained: Option<usize>,
    },
}

impl PolicyInput {
    fn resolve(self) -> eliminators_core::Result<EliminationPolicy> {
        match self {
            PolicyInput::Text(t) => EliminationPolicy::parse(&t),
            PolicyInput::Fields {
                accept,
                retain,
                max_retained,
            } => EliminationPolicy::new(accept, retain, max_retained.unwrap_or(usize::MAX)),
        }
    }
}

fn default_samples() -> usize {
    McConfig::default().n_samples
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    features: Vec<f64>,
    policy: Option<PolicyInput>,
    #[serde(default)]
    rho: f64,
    #[serde(default = "default_samples")]
    n_samples: usize,
    #[serde(default)]
    seed: u64,
}

async fn classify(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Value> {
    let m = state.model(&id)?;
    let req: ClassifyRequest = parse_body(&body)?;
    blocking(move || {
        let policy = req.policy.map(PolicyInput::resolve).transpose()?.unwrap_or_default();
        let mc = McConfig::new(req.n_samples, req.seed)?;
        let a = analyze_case(&m.model, &req.features, req.rho, &policy, &mc)?;
        Ok(Json(serde_json::to_value(a).expect("analysis serializes")))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRequest {
    features: Vec<f64>,
    rho_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    n_samples: usize,
    seed: u64,
}

async fn sweep(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Value> {
    let m = state.model(&id)?;
    let req: SweepRequest = parse_body(&body)?;
    blocking(move || {
        check_features(&m.model, &req.features)?;
        let mc = McConfig::new(req.n_samples, req.seed)?;
        let curve = rho_sweep(&m.model, &req.features, &m.model.features, &req.rho_grid, &mc)?;
        Ok(Json(json!({ "class_names": m.model.class_names, "curve": curve })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensitivityRequest {
    features: Vec<f64>,
    #[serde(default)]
    rho0: f64,
    /// 0-based feature index.
    feature: usize,
    s_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    n_samples: usize,
    seed: u64,
}

async fn sensitivity(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Value> {
    let m = state.model(&id)?;
    let req: SensitivityRequest = parse_body(&body)?;
    blocking(move || {
        check_features(&m.model, &req.features)?;
        let mc = McConfig::new(req.n_samples, req.seed)?;
        let curve = sensitivity_sweep(&m.model, &req.features, &m.model.features, req.rho0, req.feature, &req.s_grid, &mc)?;
        Ok(Json(json!({ "class_names": m.model.class_names, "curve": curve })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalRequest {
    features: Vec<f64>,
    bound_multiplier: Option<f64>,
}

async fn intervals(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Value> {
    let m = state.model(&id)?;
    let req: IntervalRequest = parse_body(&body)?;
    blocking(move || {
        check_features(&m.model, &req.features)?;
        let bound = req.bound_multiplier.unwrap_or(DEFAULT_BOUND_MULTIPLIER);
        let ci = confidence_intervals(&m.model, &req.features, &m.model.features, bound)?;
        Ok(Json(json!({ "intervals": ci })))
    })
    .await
}

fn eval_options(q: &HashMap<String, String>) -> Result<EvalOptions, ApiError> {
    let mut opts = EvalOptions::default();
    if let Some(t) = q.get("thresholds") {
        opts.thresholds = t
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ApiError::schema(format!("thresholds `{t}` are not a comma-separated number list")))?;
    }
    if let Some(p) = q.get("base_rate") {
        opts.base_rate = Some(p.parse().map_err(|_| ApiError::schema(format!("base_rate `{p}` is not a number")))?);
    }
    if let Some(v) = q.get("tau_variance") {
        opts.tau_variance = serde_json::from_value::<TauVariance>(Value::String(v.replace('-', "_")))
            .map_err(|_| ApiError::schema(format!("unknown tau_variance `{v}`")))?;
    }
    Ok(opts)
}

async fn metrics(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Value> {
    let m = state.model(&id)?;
    let ds_id = q.get("dataset").ok_or_else(|| ApiError::schema("the `dataset` query parameter is required"))?;
    let ds = state.dataset(ds_id)?;
    let opts = eval_options(&q)?;
    blocking(move || {
        let view = scoring_view(&m.model, m.grouping.as_ref(), &ds.dataset)?;
        let ev = report::evaluate(&m.model, &view, &opts)?;
        Ok(Json(serde_json::to_value(ev).expect("evaluation serializes")))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareRequest {
    model_a: String,
    model_b: String,
    dataset_id: String,
    base_rate: Option<f64>,
    tau_variance: Option<TauVariance>,
}

async fn compare(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Value> {
    let req: CompareRequest = parse_body(&body)?;
    let (a, b) = (state.model(&req.model_a)?, state.model(&req.model_b)?);
    let ds = state.dataset(&req.dataset_id)?;
    blocking(move || {
        let va = scoring_view(&a.model, a.grouping.as_ref(), &ds.dataset)?;
        let vb = scoring_view(&b.model, b.grouping.as_ref(), &ds.dataset)?;
        if va.class_names != vb.class_names {
            return Err(Error::ClassMismatch("the two models predict different class sets".into()).into());
        }
        let opts = EvalOptions {
            base_rate: req.base_rate,
            tau_variance: req.tau_variance.unwrap_or_default(),
            ..EvalOptions::default()
        };
        let c = report::compare(&a.model, &b.model, &va, &opts)?;
        Ok(Json(serde_json::to_value(c).expect("comparison serializes")))
    })
    .await
}

async fn unknown_route() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, ApiError> {
    let cors = match cors_origin {
        Some(origin) => CorsLayer::new().allow_origin(
            HeaderValue::from_str(origin).map_err(|_| ApiError::schema(format!("invalid CORS origin `{origin}`")))?,
        ),
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    let v1 = Router::new()
        .route("/health", get(health))
        .route("/datasets", post(create_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/models", post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/classify", post(classify))
        .route("/models/{id}/sweep", post(sweep))
        .route("/models/{id}/sensitivity", post(sensitivity))
        .route("/models/{id}/intervals", post(intervals))
        .route("/models/{id}/metrics", get(metrics))
        .route("/compare", post(compare));
    Ok(Router::new()
        .nest("/v1", v1)
        .fallback(unknown_route)
        .layer(cors)
        .with_state(state))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {},
        () = term => {},
    }
}

/// Binds, prints the bound address on stdout and serves until SIGINT/SIGTERM.
pub fn serve_blocking(args: &ServeArgs) -> CliResult<()> {
    let state = match &args.data_dir {
        Some(dir) => AppState::with_store(dir)?,
        None => AppState::in_memory(),
    };
    let app = router(state, args.cors_origin.as_deref()).map_err(|e| CliError::usage(e.message))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| CliError::Runtime {
        code: "runtime",
        message: e.to_string(),
    })?;
    rt.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Runtime {
            code: if e.kind() == std::io::ErrorKind::AddrInUse { "port_in_use" } else { "bind" },
            message: format!("cannot listen on {addr}: {e}"),
        })?;
        let local = listener.local_addr().map_err(|e| CliError::Runtime {
            code: "bind",
            message: e.to_string(),
        })?;
        {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "listening on http://{local}");
            let _ = out.flush();
        }
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(|e| CliError::Runtime {
                code: "serve",
                message: e.to_string(),
            })
    })
}

/// Ids currently registered, sorted; used by tests and diagnostics.
pub fn registered_ids(state: &AppState) -> BTreeMap<&'static str, Vec<String>> {
    let reg = state.registry.read().expect("registry lock");
    let mut ds: Vec<String> = reg.datasets.keys().cloned().collect();
    let mut ms: Vec<String> = reg.models.keys().cloned().collect();
    ds.sort();
    ms.sort();
    BTreeMap::from([("datasets", ds), ("models", ms)])
}
