//! Reference petstore service: `/pet` and `/user` collections guarded by the
//! object-level authorization engine.
//!
//! Every request goes through token verification, then a group/ownership
//! decision, and only then touches the object or ACL stores. Creating an object
//! records an access control entry owned by the caller.

mod config;
mod handlers;
mod objects;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use bola_guard::acl_store::{AclError, AclStore, ObjectId};
use bola_guard::authz::{AuthzEngine, GroupRuleSet, RuleError, SigningKey, Timestamp, TokenVerifier};
use bola_guard::journal::{Durability, JournalError};
use parking_lot::Mutex;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use config::ServiceConfig;
pub use handlers::router;
pub use objects::{ObjectStore, StoredObject};

/// Route templates the rule set is looked up with.
pub const PET: &str = "/pet";
pub const USER: &str = "/user";
/// Group allowed to read the whole ACL.
pub const ADMIN_GROUP: &str = "admin";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Acl(#[from] AclError),
    #[error(transparent)]
    Objects(#[from] JournalError),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }
}

/// A clock tests can set.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(now: Timestamp) -> ManualClock {
        ManualClock(AtomicU64::new(now))
    }

    pub fn set(&self, now: Timestamp) {
        self.0.store(now, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

/// What a request did, in order. `request` numbers requests as they arrive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Decision { request: u64, allowed: bool, reason: String },
    Mutation { request: u64, what: MutationKind, path: String, id: ObjectId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    CreateObject,
    RecordAce,
    UpdateObject,
    DeleteObject,
    DeleteAce,
}

pub trait Instrumentation: Send + Sync {
    fn record(&self, event: Event);
}

#[derive(Debug, Default)]
pub struct NoInstrumentation;

impl Instrumentation for NoInstrumentation {
    fn record(&self, _event: Event) {}
}

/// Keeps every event in memory.
#[derive(Debug, Default)]
pub struct EventLog(Mutex<Vec<Event>>);

impl EventLog {
    pub fn events(&self) -> Vec<Event> {
        self.0.lock().clone()
    }

    /// Mutations not preceded, within the same request, by an allowed decision.
    pub fn unguarded_mutations(&self) -> Vec<Event> {
        let events = self.0.lock();
        let mut allowed = std::collections::HashSet::new();
        let mut out = Vec::new();
        for e in events.iter() {
            match e {
                Event::Decision { request, allowed: true, .. } => {
                    allowed.insert(*request);
                }
                Event::Decision { .. } => {}
                Event::Mutation { request, .. } => {
                    if !allowed.contains(request) {
                        out.push(e.clone());
                    }
                }
            }
        }
        out
    }
}

impl Instrumentation for EventLog {
    fn record(&self, event: Event) {
        self.0.lock().push(event);
    }
}

/// Everything the handlers share.
#[derive(Clone)]
pub struct AppState {
    pub engine: AuthzEngine,
    pub objects: Arc<ObjectStore>,
    pub verifier: Arc<dyn TokenVerifier>,
    pub clock: Arc<dyn Clock>,
    pub events: Arc<dyn Instrumentation>,
    requests: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(
        engine: AuthzEngine,
        objects: Arc<ObjectStore>,
        verifier: Arc<dyn TokenVerifier>,
        clock: Arc<dyn Clock>,
    ) -> AppState {
        AppState {
            engine,
            objects,
            verifier,
            clock,
            events: Arc::new(NoInstrumentation),
            requests: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn with_instrumentation(mut self, events: Arc<dyn Instrumentation>) -> AppState {
        self.events = events;
        self
    }

    /// Opens the stores and loads the key and rules named by `cfg`.
    pub fn from_config(cfg: &ServiceConfig) -> Result<AppState, ServiceError> {
        let key = SigningKey::from_file(&cfg.key_path).map_err(|source| ServiceError::Io {
            path: cfg.key_path.clone(),
            source,
        })?;
        let rules = match &cfg.rules_path {
            Some(p) => GroupRuleSet::load(p)?,
            None => GroupRuleSet::petstore_default(),
        };
        let acl = AclStore::open(&cfg.journal_path)?;
        let objects = ObjectStore::open(cfg.objects_path(), Durability::Sync)?;
        Ok(AppState::new(
            AuthzEngine::new(rules, Arc::new(acl)),
            Arc::new(objects),
            Arc::new(key),
            Arc::new(SystemClock),
        ))
    }

    fn next_request(&self) -> u64 {
        self.requests.fetch_add(1, Ordering::SeqCst)
    }
}

/// A service running on a background task.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    /// Stops accepting connections and waits for the server task to finish.
    pub async fn stop(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.handle.await.map_err(std::io::Error::other)?
    }
}

/// Binds `addr` and serves `state` until [`RunningService::stop`].
pub async fn start(state: AppState, addr: SocketAddr) -> std::io::Result<RunningService> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let app = router(state);
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        handle,
    })
}

/// Serves according to `cfg` until interrupted.
pub async fn serve(cfg: &ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::from_config(cfg)?;
    let bind = format!("{}:{}", cfg.bind, cfg.port);
    let io_err = |source| ServiceError::Io {
        path: PathBuf::from(&bind),
        source,
    };
    let listener = TcpListener::bind(&bind).await.map_err(io_err)?;
    log::info!("listening on {}", listener.local_addr().map_err(io_err)?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io_err)
}
