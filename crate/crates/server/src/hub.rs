use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use livepaper_core::map::Geocoder;
use livepaper_core::notes::StubRecognizer;
use livepaper_core::session::{encode_event, Session, SessionConfig, SessionError, JOURNAL_EXTENSION};
use livepaper_core::tracker::Millis;
use livepaper_core::wire::{ClientMessage, Publisher, ServerMessage, Snapshot};
use tokio::sync::broadcast;

use crate::ServerError;

/// Per-session broadcast buffer. A client that falls this far behind gets
/// a fresh snapshot instead of the missed deltas.
const UPDATE_BUFFER: usize = 256;

/// What every client of a session receives after each applied action.
#[derive(Debug, Clone)]
pub struct Update {
    pub seq: Option<u64>,
    pub message: Arc<ServerMessage>,
}

struct Inner {
    session: Session,
    publisher: Publisher,
    latest: Snapshot,
}

/// One hosted session. Actions are applied one at a time under the lock,
/// so journal order is the order in which the lock was taken.
pub struct SessionHandle {
    id: String,
    inner: Mutex<Inner>,
    updates: broadcast::Sender<Update>,
}

impl SessionHandle {
    fn new(id: String, session: Session) -> Self {
        let latest = Snapshot::of(session.state());
        let mut publisher = Publisher::new();
        publisher.publish(latest.clone());
        let (updates, _) = broadcast::channel(UPDATE_BUFFER);
        Self {
            id,
            inner: Mutex::new(Inner {
                session,
                publisher,
                latest,
            }),
            updates,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Subscribes to updates and returns the snapshot they start from.
    pub fn subscribe(&self) -> (broadcast::Receiver<Update>, Snapshot) {
        let inner = self.lock();
        (self.updates.subscribe(), inner.latest.clone())
    }

    pub fn snapshot(&self) -> Snapshot {
        self.lock().latest.clone()
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.lock().session.state().last_seq
    }

    /// Runs `f` against the session while holding its lock.
    pub fn with_session<T>(&self, f: impl FnOnce(&Session) -> T) -> T {
        f(&self.lock().session)
    }

    /// The session journal, one canonical line per event.
    pub fn journal_text(&self) -> String {
        self.with_session(|s| s.journal().iter().map(|e| encode_event(e) + "\n").collect())
    }

    /// Applies one client action. Blocking: geocoding may reach the network.
    pub fn apply(&self, ts: Millis, message: &ClientMessage) -> Result<Vec<u64>, SessionError> {
        let mut inner = self.lock();
        let before = inner.session.state().last_seq;
        let session = &mut inner.session;
        let result = match message {
            ClientMessage::PlaceObject {
                marker,
                kind,
                x,
                y,
                theta_deg,
            } => session.place(ts, marker, *kind, *x, *y, *theta_deg),
            ClientMessage::MoveObject { marker, x, y, theta_deg } => session.move_object(ts, marker, *x, *y, *theta_deg),
            ClientMessage::RemoveObject { marker } => session.remove(ts, marker),
            ClientMessage::DialRotate { degrees, marker } => session.rotate_dial(ts, marker.as_ref(), *degrees),
            other => match other.ui_payload() {
                Some(payload) => session.submit(ts, payload),
                None => Ok(Vec::new()),
            },
        };
        // Partial failures can still have journaled events.
        if inner.session.state().last_seq != before {
            let next = Snapshot::of(inner.session.state());
            let message = inner.publisher.publish(next.clone());
            let seq = next.seq();
            inner.latest = next;
            // No receivers is fine.
            let _ = self.updates.send(Update {
                seq,
                message: Arc::new(message),
            });
        }
        result
    }
}

/// Shared services handed to every new session.
#[derive(Clone)]
pub struct SessionFactory {
    pub config: SessionConfig,
    pub recognizer: Arc<StubRecognizer>,
    pub geocoder: Arc<dyn Geocoder>,
    pub journal_dir: Option<PathBuf>,
}

/// Registry of live sessions by id.
pub struct Hub {
    factory: SessionFactory,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Hub {
    pub fn new(factory: SessionFactory) -> Self {
        Self {
            factory,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().ok()?.get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .lock()
            .map(|s| s.keys().cloned().collect())
            .unwrap_or_default();
        ids.sort();
        ids
    }

    /// Returns the named session, creating it on first use. Without a name
    /// a fresh session gets a generated id.
    pub fn join(&self, id: Option<&str>) -> Result<Arc<SessionHandle>, ServerError> {
        let id = match id {
            Some(id) if !valid_id(id) => return Err(ServerError::BadSessionId(id.to_string())),
            Some(id) => id.to_string(),
            None => uuid::Uuid::new_v4().simple().to_string(),
        };
        let mut sessions = self.sessions.lock().map_err(|_| ServerError::Poisoned)?;
        if let Some(handle) = sessions.get(&id) {
            return Ok(handle.clone());
        }
        let handle = Arc::new(SessionHandle::new(id.clone(), self.open(&id)?));
        sessions.insert(id, handle.clone());
        Ok(handle)
    }

    fn open(&self, id: &str) -> Result<Session, ServerError> {
        let f = &self.factory;
        let sink: Option<Box<dyn Write + Send>> = match &f.journal_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{id}.{JOURNAL_EXTENSION}"));
                let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
                    ServerError::Journal {
                        path: path.clone(),
                        source: e,
                    }
                })?;
                log::info!("session {id} journals to {}", path.display());
                Some(Box::new(file))
            }
            None => None,
        };
        Ok(Session::new(
            f.config.clone(),
            Box::new(f.recognizer.clone()),
            Box::new(f.geocoder.clone()),
            sink,
        )?)
    }
}
