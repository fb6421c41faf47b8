//! JSON-over-HTTP front end: schema browsing, sketch training jobs with
//! live progress, estimation and template runs.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/schema` | tables, columns, FK edges |
//! | GET | `/sketches` | published sketches |
//! | POST | `/sketches` | start a training job (202) |
//! | GET, DELETE | `/sketches/{name}` | details, removal |
//! | POST | `/sketches/{name}/estimate` | `?baselines&truth&stream` |
//! | POST | `/sketches/{name}/template` | `?baselines&truth&stream` |
//! | GET | `/jobs`, `/jobs/{id}` | job snapshots |
//! | DELETE | `/jobs/{id}` | cancel |
//! | GET | `/jobs/{id}/events` | progress as server-sent events |

mod api;
mod error;
mod registry;

pub use error::ApiError;
pub use registry::{Job, JobSnapshot, Registry, Reservation};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use deepsketch::datastore::{
    generate_synthetic_dataset, load_dataset, write_dataset, DataError, SyntheticSpec, TableStore, SCHEMA_FILE,
};
use deepsketch::sketch::{DeepSketch, SketchError};
use thiserror::Error;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

pub const DATA_DIR_ENV: &str = "DEEPSKETCH_DATA_DIR";
pub const SKETCH_EXTENSION: &str = "dsk";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Sketch { path: PathBuf, source: SketchError },
    #[error("duplicate sketch name {0}")]
    DuplicateSketch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Upper bounds on request parameters.
#[derive(Clone, Debug)]
pub struct Limits {
    pub max_queries: usize,
    pub max_sample_size: usize,
    pub max_epochs: usize,
    pub max_hidden_units: usize,
    pub max_batch_size: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_queries: 100_000,
            max_sample_size: 10_000,
            max_epochs: 500,
            max_hidden_units: 1024,
            max_batch_size: 8192,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Where published sketches are persisted; `None` keeps them in memory.
    pub sketch_dir: Option<PathBuf>,
    /// Built web assets served for unmatched GET paths.
    pub static_dir: Option<PathBuf>,
    /// Concurrent training jobs.
    pub training_slots: usize,
    pub limits: Limits,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            sketch_dir: None,
            static_dir: None,
            training_slots: 1,
            limits: Limits::default(),
        }
    }
}

struct Shared {
    store: Arc<TableStore>,
    registry: Registry,
    slots: Arc<Semaphore>,
    sketch_dir: Option<PathBuf>,
    limits: Limits,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// Creates the state and loads every sketch file found in
    /// `config.sketch_dir`.
    pub fn new(store: TableStore, config: &ServiceConfig) -> Result<Self, ServiceError> {
        let registry = Registry::new();
        if let Some(dir) = &config.sketch_dir {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            paths.sort();
            for path in paths {
                if path.extension().and_then(|e| e.to_str()) != Some(SKETCH_EXTENSION) {
                    continue;
                }
                let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let sketch = DeepSketch::load(&path).map_err(|source| ServiceError::Sketch {
                    path: path.clone(),
                    source,
                })?;
                registry
                    .insert(name, sketch)
                    .map_err(|_| ServiceError::DuplicateSketch(name.to_string()))?;
            }
        }
        Ok(AppState {
            shared: Arc::new(Shared {
                store: Arc::new(store),
                registry,
                slots: Arc::new(Semaphore::new(config.training_slots.max(1))),
                sketch_dir: config.sketch_dir.clone(),
                limits: config.limits.clone(),
            }),
        })
    }

    pub fn store(&self) -> &TableStore {
        &self.shared.store
    }

    pub fn store_arc(&self) -> Arc<TableStore> {
        self.shared.store.clone()
    }

    pub fn registry(&self) -> &Registry {
        &self.shared.registry
    }

    pub fn limits(&self) -> &Limits {
        &self.shared.limits
    }

    fn slots(&self) -> Arc<Semaphore> {
        self.shared.slots.clone()
    }

    fn sketch_path(&self, name: &str) -> Option<PathBuf> {
        self.shared
            .sketch_dir
            .as_ref()
            .map(|d| d.join(format!("{name}.{SKETCH_EXTENSION}")))
    }
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/schema", get(api::schema))
        .route("/sketches", get(api::list_sketches).post(api::create))
        .route("/sketches/{name}", get(api::get_sketch).delete(api::delete_sketch))
        .route("/sketches/{name}/estimate", post(api::estimate))
        .route("/sketches/{name}/template", post(api::template))
        .route("/jobs", get(api::list_jobs))
        .route("/jobs/{id}", get(api::get_job).delete(api::cancel_job))
        .route("/jobs/{id}/events", get(api::job_events))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(api::fallback),
    }
}

/// Serves `router` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}

/// Loads the dataset in `dir`, first writing the demo dataset there when
/// the directory holds no schema file.
pub fn open_or_create_demo(dir: &Path, seed: u64) -> Result<TableStore, ServiceError> {
    if !dir.join(SCHEMA_FILE).exists() {
        let store = generate_synthetic_dataset(&SyntheticSpec::demo(), seed)?;
        write_dataset(dir, &store)?;
    }
    Ok(load_dataset(dir)?)
}
