//! Route handlers.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use deepsketch::datastore::{true_cardinality, ColumnKind, FkEdge, TableStore};
use deepsketch::mscn::{qerror, QErrorSummary, TrainConfig};
use deepsketch::queryir::{render_sql, ColumnRef, GeneratorConfig, Grouping, Query, QueryTemplate, Statement};
use deepsketch::sketch::{create_sketch, DeepSketch, EstimateFlags, Phase, SketchConfig, SketchError};
use futures::Stream;
use serde::{Deserialize, Deserializer, Serialize};
use tokio::sync::mpsc;
use tokio_stream::wrappers::ReceiverStream;

use crate::error::ApiError;
use crate::registry::{Job, JobSnapshot, Reservation};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

// ---- schema and listings ----

#[derive(Serialize)]
pub struct ColumnView {
    name: String,
    kind: ColumnKind,
    nullable: bool,
    /// Primary or foreign key column.
    key: bool,
    min: Option<String>,
    max: Option<String>,
}

#[derive(Serialize)]
pub struct TableView {
    name: String,
    primary_key: Option<String>,
    rows: usize,
    columns: Vec<ColumnView>,
}

#[derive(Serialize)]
pub struct SchemaView {
    tables: Vec<TableView>,
    foreign_keys: Vec<FkEdge>,
}

pub async fn schema(State(state): State<AppState>) -> Json<SchemaView> {
    let store = state.store();
    let catalog = store.schema();
    let tables = store
        .tables()
        .map(|t| TableView {
            name: t.name().to_string(),
            primary_key: t.def().primary_key.clone(),
            rows: t.row_count(),
            columns: t
                .columns()
                .iter()
                .map(|c| ColumnView {
                    name: c.name().to_string(),
                    kind: c.kind(),
                    nullable: c.def().nullable,
                    key: catalog.is_key_column(t.name(), c.name()),
                    min: c.stats().min.map(|v| v.to_string()),
                    max: c.stats().max.map(|v| v.to_string()),
                })
                .collect(),
        })
        .collect();
    Json(SchemaView {
        tables,
        foreign_keys: catalog.fk_edges.clone(),
    })
}

#[derive(Serialize)]
pub struct SketchSummary {
    name: String,
    tables: Vec<String>,
    sample_size: usize,
    num_queries: usize,
    epochs: usize,
    hidden_units: usize,
    seed: u64,
    created_at: i64,
    config_hash: String,
    validation: Option<QErrorSummary>,
}

fn summary(name: &str, sketch: &DeepSketch) -> SketchSummary {
    let m = sketch.metadata();
    SketchSummary {
        name: name.to_string(),
        tables: m.tables.clone(),
        sample_size: m.sample_size,
        num_queries: m.num_queries,
        epochs: m.train.epochs.len(),
        hidden_units: sketch.params().shape().hidden,
        seed: m.seed,
        created_at: m.created_at,
        config_hash: m.config_hash.clone(),
        validation: m.train.validation,
    }
}

pub async fn list_sketches(State(state): State<AppState>) -> Json<Vec<SketchSummary>> {
    Json(
        state
            .registry()
            .sketches()
            .iter()
            .map(|(name, s)| summary(name, s))
            .collect(),
    )
}

fn find_sketch(state: &AppState, name: &str) -> ApiResult<Arc<DeepSketch>> {
    state
        .registry()
        .sketch(name)
        .ok_or_else(|| ApiError::not_found(format!("no sketch named {name}")))
}

pub async fn get_sketch(State(state): State<AppState>, Path(name): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let sketch = find_sketch(&state, &name)?;
    Ok(Json(serde_json::json!({
        "summary": summary(&name, &sketch),
        "metadata": sketch.metadata(),
        "schema": sketch.schema(),
    })))
}

pub async fn delete_sketch(State(state): State<AppState>, Path(name): Path<String>) -> ApiResult<StatusCode> {
    state
        .registry()
        .remove(&name)
        .ok_or_else(|| ApiError::not_found(format!("no sketch named {name}")))?;
    if let Some(path) = state.sketch_path(&name) {
        match std::fs::remove_file(path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(ApiError::internal(e.to_string())),
            _ => {}
        }
    }
    Ok(StatusCode::NO_CONTENT)
}

// ---- sketch creation and jobs ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    name: String,
    tables: Vec<String>,
    #[serde(default, alias = "s")]
    sample_size: Option<usize>,
    #[serde(default)]
    num_queries: Option<usize>,
    #[serde(default)]
    epochs: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    hidden_units: Option<usize>,
    #[serde(default)]
    batch_size: Option<usize>,
    #[serde(default)]
    learning_rate: Option<f64>,
    #[serde(default)]
    max_joins: Option<usize>,
    #[serde(default)]
    max_predicates_per_table: Option<usize>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_params", e.to_string()))
}

impl CreateRequest {
    fn into_config(self, state: &AppState) -> ApiResult<(String, SketchConfig)> {
        let invalid = |m: String| Err(ApiError::bad_request("invalid_params", m));
        if !valid_name(&self.name) {
            return invalid("name must be 1-64 characters of [A-Za-z0-9_-]".into());
        }
        let store = state.store();
        let mut tables = self.tables.clone();
        tables.sort();
        tables.dedup();
        if tables.is_empty() || tables.len() != self.tables.len() {
            return Err(ApiError::bad_request(
                "invalid_tables",
                "tables must be a nonempty list without repeats",
            ));
        }
        if let Some(t) = tables.iter().find(|t| store.table(t).is_none()) {
            return Err(ApiError::bad_request("invalid_tables", format!("unknown table {t}")));
        }
        let defaults = SketchConfig::default();
        if tables.len() > defaults.max_tables {
            return Err(ApiError::bad_request(
                "invalid_tables",
                format!("at most {} tables per sketch", defaults.max_tables),
            ));
        }
        if !store.schema().is_connected(&tables.iter().cloned().collect()) {
            return Err(ApiError::bad_request(
                "invalid_tables",
                "tables are not connected by foreign keys",
            ));
        }

        let limits = state.limits();
        let train_defaults = TrainConfig::default();
        let gen_defaults = GeneratorConfig::default();
        let sample_size = self.sample_size.unwrap_or(defaults.sample_size);
        let num_queries = self.num_queries.unwrap_or(defaults.num_queries);
        let epochs = self.epochs.unwrap_or(train_defaults.epochs);
        let hidden_units = self.hidden_units.unwrap_or(train_defaults.hidden_units);
        let batch_size = self.batch_size.unwrap_or(train_defaults.batch_size);
        let checks = [
            ("sample_size", sample_size, limits.max_sample_size),
            ("num_queries", num_queries, limits.max_queries),
            ("epochs", epochs, limits.max_epochs),
            ("hidden_units", hidden_units, limits.max_hidden_units),
            ("batch_size", batch_size, limits.max_batch_size),
        ];
        for (field, value, max) in checks {
            if value == 0 || value > max {
                return invalid(format!("{field} must lie in 1..={max}"));
            }
        }
        let config = SketchConfig {
            tables,
            num_queries,
            sample_size,
            seed: self.seed.unwrap_or(0),
            created_at: unix_now(),
            generator: GeneratorConfig {
                max_joins: self.max_joins.unwrap_or(gen_defaults.max_joins),
                max_predicates_per_table: self
                    .max_predicates_per_table
                    .unwrap_or(gen_defaults.max_predicates_per_table),
                ..gen_defaults
            },
            train: TrainConfig {
                epochs,
                hidden_units,
                batch_size,
                learning_rate: self.learning_rate.unwrap_or(train_defaults.learning_rate),
                ..train_defaults
            },
            ..defaults
        };
        config
            .generator
            .validate()
            .map_err(|e| ApiError::bad_request("invalid_params", e.to_string()))?;
        config
            .train
            .validate()
            .map_err(|e| ApiError::bad_request("invalid_params", e.to_string()))?;
        Ok((self.name, config))
    }
}

fn unix_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Accepted {
    job_id: u64,
    name: String,
    phase: Phase,
}

pub async fn create(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateRequest = parse_json(&body)?;
    let (name, config) = req.into_config(&state)?;
    let job = state.registry().start_job(&name).map_err(|Reservation::NameTaken| {
        ApiError::new(
            StatusCode::CONFLICT,
            "name_taken",
            format!("name {name} is already in use"),
        )
    })?;
    let accepted = Accepted {
        job_id: job.id,
        name: name.clone(),
        phase: job.phase(),
    };
    tokio::spawn(run_job(state, job.clone(), config));
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, format!("/jobs/{}", accepted.job_id))],
        Json(accepted),
    )
        .into_response())
}

async fn run_job(state: AppState, job: Arc<Job>, config: SketchConfig) {
    let Ok(_permit) = state.slots().acquire_owned().await else {
        job.finish(Phase::Failed, Some("service is shutting down".into()));
        return;
    };
    if job.phase().is_terminal() {
        return;
    }
    let store = state.store_arc();
    let path = state.sketch_path(&job.name);
    let worker = job.clone();
    let result = tokio::task::spawn_blocking(move || -> Result<DeepSketch, SketchError> {
        let sketch = create_sketch(&store, &config, worker.as_ref())?;
        if let Some(path) = path {
            sketch.save(&path)?;
        }
        Ok(sketch)
    })
    .await;
    match result {
        Ok(Ok(sketch)) => {
            if !state.registry().publish(&job, sketch) {
                if let Some(path) = state.sketch_path(&job.name) {
                    let _ = std::fs::remove_file(path);
                }
            }
        }
        Ok(Err(SketchError::Cancelled)) => job.finish(Phase::Cancelled, None),
        Ok(Err(e)) => job.finish(Phase::Failed, Some(e.to_string())),
        Err(e) => job.finish(Phase::Failed, Some(format!("training task failed: {e}"))),
    }
}

fn find_job(state: &AppState, id: u64) -> ApiResult<Arc<Job>> {
    state
        .registry()
        .job(id)
        .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
}

pub async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobSnapshot>> {
    Json(state.registry().jobs().iter().map(|j| j.snapshot()).collect())
}

pub async fn get_job(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobSnapshot>> {
    Ok(Json(find_job(&state, id)?.snapshot()))
}

pub async fn cancel_job(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> ApiResult<(StatusCode, Json<JobSnapshot>)> {
    let job = find_job(&state, id)?;
    job.cancel();
    Ok((StatusCode::ACCEPTED, Json(job.snapshot())))
}

/// Snapshot stream, ending after the first terminal phase.
pub async fn job_events(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let rx = find_job(&state, id)?.subscribe();
    let stream = futures::stream::unfold((rx, true, false), |(mut rx, first, finished)| async move {
        if finished {
            return None;
        }
        if !first && rx.changed().await.is_err() {
            return None;
        }
        let snap = rx.borrow_and_update().clone();
        let terminal = snap.phase.is_terminal();
        let event = Event::default()
            .event("progress")
            .json_data(&snap)
            .expect("snapshot serializes");
        Some((Ok(event), (rx, false, terminal)))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

// ---- estimation ----

fn flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let text = String::deserialize(d)?;
    match text.to_ascii_lowercase().as_str() {
        "" | "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(serde::de::Error::custom(format!("expected a boolean, got {other:?}"))),
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
pub struct EstimateOptions {
    #[serde(default, deserialize_with = "flag")]
    baselines: bool,
    #[serde(default, deserialize_with = "flag")]
    truth: bool,
    #[serde(default, deserialize_with = "flag")]
    stream: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateRequest {
    sql: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateRequest {
    sql: String,
    #[serde(default)]
    grouping: Option<Grouping>,
    /// Shorthand for `{"kind": "buckets", "k": k}`.
    #[serde(default)]
    k: Option<usize>,
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"))
}

/// JSON `{"sql": ...}` or a plain-text SQL body.
fn sql_body(headers: &HeaderMap, body: &[u8]) -> ApiResult<String> {
    if is_json(headers) {
        Ok(parse_json::<EstimateRequest>(body)?.sql)
    } else {
        String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("invalid_params", "body is not UTF-8"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Baselines {
    sampling: f64,
    independence: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct QErrors {
    sketch: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    independence: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateResult {
    sql: String,
    estimate: f64,
    flags: EstimateFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    baselines: Option<Baselines>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    qerror: Option<QErrors>,
}

impl EstimateResult {
    fn compute(sketch: &DeepSketch, query: &Query, baselines: bool) -> ApiResult<Self> {
        let est = sketch.estimate(query)?;
        let baselines = if baselines {
            Some(Baselines {
                sampling: sketch.sampling_estimate(query)?,
                independence: sketch.independence_estimate(query)?,
            })
        } else {
            None
        };
        Ok(EstimateResult {
            sql: render_sql(query),
            estimate: est.cardinality,
            flags: est.flags,
            baselines,
            truth: None,
            qerror: None,
        })
    }

    fn with_truth(&mut self, truth: u64) {
        let t = truth as f64;
        self.truth = Some(truth);
        self.qerror = Some(QErrors {
            sketch: qerror(self.estimate, t, 1.0),
            sampling: self.baselines.as_ref().map(|b| qerror(b.sampling, t, 1.0)),
            independence: self.baselines.as_ref().map(|b| qerror(b.independence, t, 1.0)),
        });
    }
}

fn truth_of(store: &TableStore, query: &Query) -> ApiResult<u64> {
    true_cardinality(store, query)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "truth_unavailable", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn sse_event<T: Serialize>(name: &str, data: &T) -> Event {
    Event::default().event(name).json_data(data).expect("event serializes")
}

fn sse_channel() -> (mpsc::Sender<Event>, Sse<impl Stream<Item = Result<Event, Infallible>>>) {
    let (tx, rx) = mpsc::channel::<Event>(64);
    let stream = futures::StreamExt::map(ReceiverStream::new(rx), Ok);
    (tx, Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub async fn estimate(
    State(state): State<AppState>,
    Path(name): Path<String>,
    UrlQuery(opts): UrlQuery<EstimateOptions>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let sketch = find_sketch(&state, &name)?;
    let sql = sql_body(&headers, &body)?;
    let query = sketch.parse(&sql)?;
    let mut result = EstimateResult::compute(&sketch, &query, opts.baselines)?;

    if !opts.stream {
        if opts.truth {
            let store = state.store_arc();
            let truth = blocking(move || truth_of(&store, &query)).await?;
            result.with_truth(truth);
        }
        return Ok(Json(result).into_response());
    }

    let (tx, sse) = sse_channel();
    let store = state.store_arc();
    tokio::spawn(async move {
        if tx.send(sse_event("estimate", &result)).await.is_err() {
            return;
        }
        if opts.truth {
            match blocking(move || truth_of(&store, &query)).await {
                Ok(truth) => {
                    result.with_truth(truth);
                    let _ = tx.send(sse_event("truth", &result)).await;
                }
                Err(e) => {
                    let _ = tx.send(sse_event("error", &e.body())).await;
                }
            }
        }
        let _ = tx.send(sse_event("done", &serde_json::json!({}))).await;
    });
    Ok(sse.into_response())
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceResult {
    label: String,
    key: f64,
    #[serde(flatten)]
    result: EstimateResult,
}

#[derive(Serialize)]
struct TemplateHeader {
    placeholder: ColumnRef,
    grouping: Grouping,
    count: usize,
}

pub async fn template(
    State(state): State<AppState>,
    Path(name): Path<String>,
    UrlQuery(opts): UrlQuery<EstimateOptions>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let sketch = find_sketch(&state, &name)?;
    let req: TemplateRequest = if is_json(&headers) {
        parse_json(&body)?
    } else {
        TemplateRequest {
            sql: sql_body(&headers, &body)?,
            grouping: None,
            k: None,
        }
    };
    let grouping = match (req.grouping, req.k) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("invalid_params", "give either grouping or k")),
        (Some(g), None) => g,
        (None, Some(k)) => Grouping::Buckets { k },
        (None, None) => Grouping::Distinct,
    };
    let (base, placeholder) = match sketch.parse_statement(&req.sql)? {
        Statement::Template { base, placeholder } => (base, placeholder),
        Statement::Query(_) => return Err(deepsketch::queryir::QueryError::NoPlaceholder.into()),
    };
    let template = QueryTemplate::new(base, placeholder.clone(), grouping, sketch.schema())?;
    let instances = sketch.expand_template(&template)?;
    let header = TemplateHeader {
        placeholder,
        grouping,
        count: instances.len(),
    };
    let store = state.store_arc();
    let evaluate = move |inst: &deepsketch::queryir::TemplateInstance| -> ApiResult<InstanceResult> {
        let mut result = EstimateResult::compute(&sketch, &inst.query, opts.baselines)?;
        if opts.truth {
            result.with_truth(truth_of(&store, &inst.query)?);
        }
        Ok(InstanceResult {
            label: inst.label.clone(),
            key: inst.key,
            result,
        })
    };

    if !opts.stream {
        let results = blocking(move || instances.iter().map(evaluate).collect::<ApiResult<Vec<_>>>()).await?;
        return Ok(Json(serde_json::json!({
            "placeholder": header.placeholder,
            "grouping": header.grouping,
            "instances": results,
        }))
        .into_response());
    }

    let (tx, sse) = sse_channel();
    tokio::task::spawn_blocking(move || {
        if tx.blocking_send(sse_event("template", &header)).is_err() {
            return;
        }
        for inst in &instances {
            let event = match evaluate(inst) {
                Ok(r) => sse_event("instance", &r),
                Err(e) => sse_event("error", &e.body()),
            };
            if tx.blocking_send(event).is_err() {
                return;
            }
        }
        let _ = tx.blocking_send(sse_event("done", &serde_json::json!({})));
    });
    Ok(sse.into_response())
}

pub async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}
