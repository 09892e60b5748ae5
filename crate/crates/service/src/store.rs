//! Append-only JSONL stores for chat sessions and patient notes. Each store
//! is replayed from its file at startup; every accepted write is one line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::StartupError;

pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const EHR_FILE: &str = "ehr.jsonl";

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

struct JsonlLog {
    file: Mutex<File>,
}

impl JsonlLog {
    /// Replays `path`, creating it if absent. An unterminated final line is a
    /// torn write: it is dropped with a warning and cut from the file.
    fn open<T: DeserializeOwned>(path: &Path) -> Result<(Self, Vec<T>), StartupError> {
        let store_err = |reason: String| StartupError::Store {
            path: path.to_path_buf(),
            reason,
        };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(store_err(e.to_string())),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let mut events = Vec::new();
        for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let ev = serde_json::from_slice(line)
                .map_err(|e| store_err(format!("line {}: {e}", n + 1)))?;
            events.push(ev);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| store_err(e.to_string()))?;
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), bytes = bytes.len() - complete, "dropping torn final line");
            file.set_len(complete as u64)
                .map_err(|e| store_err(e.to_string()))?;
        }
        Ok((
            JsonlLog {
                file: Mutex::new(file),
            },
            events,
        ))
    }

    fn append<T: Serialize>(&self, event: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = lock(&self.file);
        f.write_all(&line)?;
        f.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub timestamp: DateTime<Utc>,
    pub role: Role,
    pub text: String,
    pub lang: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub turns: Vec<Turn>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum SessionEvent {
    Create {
        session_id: String,
        created_at: DateTime<Utc>,
    },
    Append {
        session_id: String,
        turns: Vec<Turn>,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("document {doc_id} already exists for patient {patient_id}")]
    DuplicateDoc { patient_id: String, doc_id: String },
    #[error("document text is empty")]
    EmptyText,
    #[error("patient id is empty")]
    EmptyPatient,
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
}

pub struct SessionStore {
    log: JsonlLog,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionRecord>>>>,
}

impl SessionStore {
    pub fn open(data_dir: &Path) -> Result<Self, StartupError> {
        let path = data_dir.join(SESSIONS_FILE);
        let (log, events) = JsonlLog::open::<SessionEvent>(&path)?;
        let mut sessions: HashMap<String, SessionRecord> = HashMap::new();
        for ev in events {
            match ev {
                SessionEvent::Create {
                    session_id,
                    created_at,
                } => {
                    sessions.entry(session_id.clone()).or_insert(SessionRecord {
                        session_id,
                        created_at,
                        turns: Vec::new(),
                    });
                }
                SessionEvent::Append { session_id, turns } => match sessions.get_mut(&session_id) {
                    Some(s) => s.turns.extend(turns),
                    None => tracing::warn!(%session_id, "turns for unknown session skipped"),
                },
            }
        }
        Ok(SessionStore {
            log,
            sessions: Mutex::new(
                sessions
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
                    .collect(),
            ),
        })
    }

    pub fn create(&self) -> Result<SessionRecord, StoreError> {
        let rec = SessionRecord {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: Utc::now(),
            turns: Vec::new(),
        };
        self.log.append(&SessionEvent::Create {
            session_id: rec.session_id.clone(),
            created_at: rec.created_at,
        })?;
        lock(&self.sessions).insert(rec.session_id.clone(), Arc::new(Mutex::new(rec.clone())));
        Ok(rec)
    }

    pub fn contains(&self, id: &str) -> bool {
        lock(&self.sessions).contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<SessionRecord> {
        let handle = lock(&self.sessions).get(id).cloned()?;
        let rec = lock(&handle).clone();
        Some(rec)
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `turns` as one unit under the session's lock. Timestamps are
    /// clamped so they never go backwards within a session.
    pub fn append(&self, id: &str, turns: &[(Role, &str, &str)]) -> Result<Vec<Turn>, StoreError> {
        let handle = lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))?;
        let mut rec = lock(&handle);
        let mut ts = Utc::now();
        if let Some(last) = rec.turns.last() {
            ts = ts.max(last.timestamp);
        }
        let new: Vec<Turn> = turns
            .iter()
            .map(|&(role, text, lang)| Turn {
                timestamp: ts,
                role,
                text: text.to_string(),
                lang: lang.to_string(),
            })
            .collect();
        self.log.append(&SessionEvent::Append {
            session_id: id.to_string(),
            turns: new.clone(),
        })?;
        rec.turns.extend(new.iter().cloned());
        Ok(new)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EhrDocument {
    pub patient_id: String,
    pub doc_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

pub struct EhrStore {
    log: JsonlLog,
    patients: Mutex<HashMap<String, Arc<Mutex<Vec<EhrDocument>>>>>,
}

impl EhrStore {
    pub fn open(data_dir: &Path) -> Result<Self, StartupError> {
        let path = data_dir.join(EHR_FILE);
        let (log, docs) = JsonlLog::open::<EhrDocument>(&path)?;
        let mut patients: HashMap<String, Vec<EhrDocument>> = HashMap::new();
        for d in docs {
            let list = patients.entry(d.patient_id.clone()).or_default();
            if list.iter().any(|x| x.doc_id == d.doc_id) {
                tracing::warn!(patient_id = %d.patient_id, doc_id = %d.doc_id, "duplicate document skipped");
                continue;
            }
            list.push(d);
        }
        Ok(EhrStore {
            log,
            patients: Mutex::new(
                patients
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
                    .collect(),
            ),
        })
    }

    /// Stores a note. Without `doc_id` the next free `doc-N` is assigned.
    pub fn insert(
        &self,
        patient_id: &str,
        doc_id: Option<&str>,
        text: &str,
    ) -> Result<EhrDocument, StoreError> {
        if patient_id.trim().is_empty() {
            return Err(StoreError::EmptyPatient);
        }
        if text.trim().is_empty() {
            return Err(StoreError::EmptyText);
        }
        let handle = lock(&self.patients)
            .entry(patient_id.to_string())
            .or_default()
            .clone();
        let mut docs = lock(&handle);
        let taken = |id: &str| docs.iter().any(|d| d.doc_id == id);
        let doc_id = match doc_id {
            Some(id) if taken(id) => {
                return Err(StoreError::DuplicateDoc {
                    patient_id: patient_id.to_string(),
                    doc_id: id.to_string(),
                })
            }
            Some(id) => id.to_string(),
            None => (docs.len() + 1..)
                .map(|n| format!("doc-{n}"))
                .find(|id| !taken(id))
                .unwrap(),
        };
        let doc = EhrDocument {
            patient_id: patient_id.to_string(),
            doc_id,
            text: text.to_string(),
            created_at: Utc::now(),
        };
        self.log.append(&doc)?;
        docs.push(doc.clone());
        Ok(doc)
    }

    /// Documents in insertion order; `None` for a patient with none stored.
    pub fn documents(&self, patient_id: &str) -> Option<Vec<EhrDocument>> {
        let handle = lock(&self.patients).get(patient_id).cloned()?;
        let docs = lock(&handle).clone();
        (!docs.is_empty()).then_some(docs)
    }
}

/// Both stores rooted at one data directory.
pub struct Stores {
    pub sessions: SessionStore,
    pub ehr: EhrStore,
    pub data_dir: PathBuf,
}

impl Stores {
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StartupError> {
        let data_dir = data_dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&data_dir).map_err(|e| StartupError::Store {
            path: data_dir.clone(),
            reason: e.to_string(),
        })?;
        Ok(Stores {
            sessions: SessionStore::open(&data_dir)?,
            ehr: EhrStore::open(&data_dir)?,
            data_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sessions_replay_after_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let s = SessionStore::open(dir.path()).unwrap();
            let rec = s.create().unwrap();
            s.append(
                &rec.session_id,
                &[(Role::User, "hi", "en"), (Role::Assistant, "hello", "en")],
            )
            .unwrap();
            s.append(&rec.session_id, &[(Role::User, "again", "es")])
                .unwrap();
            rec.session_id
        };
        let s = SessionStore::open(dir.path()).unwrap();
        let rec = s.get(&id).unwrap();
        let texts: Vec<_> = rec.turns.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["hi", "hello", "again"]);
        assert!(rec
            .turns
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
        assert!(matches!(
            s.append("nope", &[]),
            Err(StoreError::UnknownSession(_))
        ));
    }

    #[test]
    fn torn_tail_is_dropped_and_file_stays_appendable() {
        let dir = tempfile::tempdir().unwrap();
        {
            let e = EhrStore::open(dir.path()).unwrap();
            e.insert("p1", None, "First note.").unwrap();
        }
        let path = dir.path().join(EHR_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"patient_id\":\"p1\",\"doc_").unwrap();
        drop(f);
        let e = EhrStore::open(dir.path()).unwrap();
        e.insert("p1", None, "Second note.").unwrap();
        drop(e);
        let e = EhrStore::open(dir.path()).unwrap();
        let docs = e.documents("p1").unwrap();
        assert_eq!(
            docs.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(),
            ["doc-1", "doc-2"]
        );
    }

    #[test]
    fn corrupt_interior_line_refuses_to_open() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(SESSIONS_FILE), "not json\n{}\n").unwrap();
        assert!(matches!(
            SessionStore::open(dir.path()),
            Err(StartupError::Store { .. })
        ));
    }

    #[test]
    fn ehr_ids_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let e = EhrStore::open(dir.path()).unwrap();
        e.insert("p", Some("doc-2"), "a.").unwrap();
        assert_eq!(e.insert("p", None, "b.").unwrap().doc_id, "doc-3");
        assert!(matches!(
            e.insert("p", Some("doc-2"), "c."),
            Err(StoreError::DuplicateDoc { .. })
        ));
        assert!(matches!(
            e.insert("p", None, "  "),
            Err(StoreError::EmptyText)
        ));
        assert!(matches!(
            e.insert("q", None, "  "),
            Err(StoreError::EmptyText)
        ));
        assert!(e.documents("q").is_none());
        assert_eq!(e.documents("p").unwrap().len(), 2);
    }
}
