use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use dgsnap_core::GenerationSession;
use tokio::sync::Mutex as AsyncMutex;

use crate::dataset::{is_dataset_id, Dataset, DatasetFiles};
use crate::error::ApiError;
use crate::store::{SessionFile, Store};

pub struct LiveSession {
    pub dataset: Arc<Dataset>,
    pub session: GenerationSession,
}

/// A session slot; empty until loaded from disk or created.
pub type SessionSlot = Arc<AsyncMutex<Option<LiveSession>>>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    ingest_locks: Mutex<HashMap<String, Arc<AsyncMutex<()>>>>,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)
}

impl AppState {
    pub fn open(data_dir: impl Into<PathBuf>) -> std::io::Result<AppState> {
        Ok(AppState {
            inner: Arc::new(Inner {
                store: Store::open(data_dir)?,
                datasets: RwLock::default(),
                sessions: Mutex::default(),
                ingest_locks: Mutex::default(),
            }),
        })
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    fn cached(&self, id: &str) -> Option<Arc<Dataset>> {
        self.inner
            .datasets
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
    }

    fn ingest_lock(&self, id: &str) -> Arc<AsyncMutex<()>> {
        let mut locks = self
            .inner
            .ingest_locks
            .lock()
            .unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Parse and persist an upload. Re-uploading identical inputs returns the
    /// existing dataset.
    pub async fn ingest(&self, files: DatasetFiles) -> Result<Arc<Dataset>, ApiError> {
        let id = files.id();
        let lock = self.ingest_lock(&id);
        let _guard = lock.lock().await;
        if let Some(d) = self.cached(&id) {
            return Ok(d);
        }
        let store = self.inner.store.clone();
        let dataset = blocking(move || -> Result<Dataset, ApiError> {
            let d = Dataset::build(&files).map_err(ApiError::ingest)?;
            store.save_dataset(&files, &d.descriptor)?;
            Ok(d)
        })
        .await??;
        let dataset = Arc::new(dataset);
        self.inner
            .datasets
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, dataset.clone());
        Ok(dataset)
    }

    pub async fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        if !is_dataset_id(id) {
            return Err(ApiError::not_found(format_args!("dataset {id}")));
        }
        if let Some(d) = self.cached(id) {
            return Ok(d);
        }
        let lock = self.ingest_lock(id);
        let _guard = lock.lock().await;
        if let Some(d) = self.cached(id) {
            return Ok(d);
        }
        let store = self.inner.store.clone();
        let key = id.to_string();
        let built = blocking(move || -> Result<Option<Dataset>, ApiError> {
            match store.load_dataset_files(&key)? {
                Some(files) => Ok(Some(Dataset::build(&files).map_err(ApiError::from)?)),
                None => Ok(None),
            }
        })
        .await??;
        let dataset =
            Arc::new(built.ok_or_else(|| ApiError::not_found(format_args!("dataset {id}")))?);
        self.inner
            .datasets
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.to_string(), dataset.clone());
        Ok(dataset)
    }

    /// Register a new session and persist it.
    pub async fn create_session(
        &self,
        live: LiveSession,
    ) -> Result<(String, SessionSlot), ApiError> {
        let id = uuid::Uuid::new_v4().to_string();
        self.persist(&id, &live).await?;
        let slot: SessionSlot = Arc::new(AsyncMutex::new(Some(live)));
        self.inner
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), slot.clone());
        Ok((id, slot))
    }

    pub async fn persist(&self, id: &str, live: &LiveSession) -> Result<(), ApiError> {
        let file = SessionFile {
            schema_version: dgsnap_core::SCHEMA_VERSION,
            session_id: id.to_string(),
            dataset_id: live.dataset.id().to_string(),
            log: live.session.log_record(),
        };
        let store = self.inner.store.clone();
        blocking(move || store.save_session(&file)).await??;
        Ok(())
    }

    /// The session's slot, loaded and replayed from disk on first access.
    /// The returned guard serializes all access to the session.
    pub async fn session(
        &self,
        id: &str,
    ) -> Result<tokio::sync::OwnedMutexGuard<Option<LiveSession>>, ApiError> {
        let missing = || ApiError::not_found(format_args!("session {id}"));
        if uuid::Uuid::parse_str(id).is_err() {
            return Err(missing());
        }
        let slot = self
            .inner
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry(id.to_string())
            .or_default()
            .clone();
        let mut guard = slot.lock_owned().await;
        if guard.is_none() {
            let store = self.inner.store.clone();
            let key = id.to_string();
            let Some(file) = blocking(move || store.load_session(&key)).await?? else {
                return Err(missing());
            };
            let dataset = self.dataset(&file.dataset_id).await?;
            let frames = dataset.frames.clone();
            let universe = dataset.universe.clone();
            let session =
                blocking(move || GenerationSession::replay(frames, universe, &file.log)).await??;
            *guard = Some(LiveSession { dataset, session });
        }
        Ok(guard)
    }
}
