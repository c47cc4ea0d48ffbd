//! Persistent store of access control entries.
//!
//! Backed by a [`Journal`](crate::journal::Journal) of NDJSON records. An upsert
//! record is the entry itself:
//!
//! ```json
//! {"id":152,"path":"/pets","owner":"123","users_ro":[],"users_rw":["123"]}
//! ```
//!
//! and a deletion is a tombstone `{"op":"del","id":152,"path":"/pets"}`.
//! Reopening a store replays the journal; the in-memory map is always the fold
//! of the records written so far.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::journal::{Durability, Journal, JournalError, ReplayReport};

pub type ObjectId = u64;

/// Per-object record of owner and read-only / read-write users.
///
/// Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessControlEntry {
    pub id: ObjectId,
    pub path: String,
    pub owner: String,
    pub users_ro: Vec<String>,
    pub users_rw: Vec<String>,
}

impl AccessControlEntry {
    /// A fresh entry: the creator owns the object and holds read-write access.
    pub fn new_owned(id: ObjectId, path: impl Into<String>, owner: impl Into<String>) -> AccessControlEntry {
        let owner = owner.into();
        AccessControlEntry {
            id,
            path: path.into(),
            users_ro: Vec::new(),
            users_rw: vec![owner.clone()],
            owner,
        }
    }

    /// owner ∈ users_rw and the two user lists are disjoint.
    pub fn is_consistent(&self) -> bool {
        self.users_rw.contains(&self.owner) && !self.users_ro.iter().any(|u| self.users_rw.contains(u))
    }

    pub fn can_read(&self, user: &str) -> bool {
        self.owner == user || self.users_rw.iter().any(|u| u == user) || self.users_ro.iter().any(|u| u == user)
    }

    pub fn can_write(&self, user: &str) -> bool {
        self.owner == user || self.users_rw.iter().any(|u| u == user)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("entries serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Tombstone {
    op: String,
    id: ObjectId,
    path: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Record {
    Upsert(AccessControlEntry),
    Delete { path: String, id: ObjectId },
}

impl Record {
    fn decode(line: &str) -> Result<Record, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if value.get("op").is_some() {
            let t: Tombstone = serde_json::from_value(value).map_err(|e| e.to_string())?;
            if t.op != "del" {
                return Err(format!("unknown record op `{}`", t.op));
            }
            Ok(Record::Delete { path: t.path, id: t.id })
        } else {
            serde_json::from_value(value).map(Record::Upsert).map_err(|e| e.to_string())
        }
    }

    fn encode(&self) -> String {
        match self {
            Record::Upsert(ace) => ace.to_json_line(),
            Record::Delete { path, id } => serde_json::to_string(&Tombstone {
                op: "del".into(),
                id: *id,
                path: path.clone(),
            })
            .expect("tombstones serialize"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AclError {
    #[error("object {id} already has an entry under {path}")]
    DuplicateObject { path: String, id: ObjectId },
    #[error("no entry for object {id} under {path}")]
    NoSuchObject { path: String, id: ObjectId },
    #[error("entry for object {id} under {path} violates owner/list invariants")]
    InconsistentEntry { path: String, id: ObjectId },
    #[error("journal is corrupt: {0}")]
    CorruptJournal(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<JournalError> for AclError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::Corrupt { .. } => AclError::CorruptJournal(e.to_string()),
            JournalError::Io { .. } => AclError::StorageFailure(e.to_string()),
        }
    }
}

type Key = (String, ObjectId);

#[derive(Debug, Default)]
struct State {
    entries: BTreeMap<Key, AccessControlEntry>,
    /// Highest object id ever seen per path, including deleted ones.
    high_water: HashMap<String, ObjectId>,
    /// Highest id handed out by `allocate_id` per path.
    reserved: HashMap<String, ObjectId>,
    journal_position: u64,
    journal: Option<Journal>,
}

impl State {
    fn apply(&mut self, record: Record) {
        let (path, id) = match &record {
            Record::Upsert(ace) => (ace.path.clone(), ace.id),
            Record::Delete { path, id } => (path.clone(), *id),
        };
        let hw = self.high_water.entry(path.clone()).or_insert(0);
        *hw = (*hw).max(id);
        match record {
            Record::Upsert(ace) => {
                self.entries.insert((path, id), ace);
            }
            Record::Delete { .. } => {
                self.entries.remove(&(path, id));
            }
        }
        self.journal_position += 1;
    }

    /// Appends then applies; nothing changes in memory if the write fails.
    fn commit(&mut self, record: Record) -> Result<(), AclError> {
        if let Some(journal) = self.journal.as_mut() {
            journal.append(&record.encode())?;
        }
        self.apply(record);
        Ok(())
    }
}

/// Thread-safe ACE store. Writers are serialized; readers never see a partially applied record.
#[derive(Debug)]
pub struct AclStore {
    state: RwLock<State>,
    replay: ReplayReport,
}

impl AclStore {
    /// A store that lives only in memory.
    pub fn in_memory() -> AclStore {
        AclStore {
            state: RwLock::new(State::default()),
            replay: ReplayReport::default(),
        }
    }

    pub fn open(location: impl AsRef<Path>) -> Result<AclStore, AclError> {
        AclStore::open_with(location, Durability::Sync)
    }

    pub fn open_with(location: impl AsRef<Path>, durability: Durability) -> Result<AclStore, AclError> {
        let (journal, records, replay) = Journal::open(location, durability, Record::decode)?;
        let mut state = State::default();
        for record in records {
            state.apply(record);
        }
        state.journal = Some(journal);
        Ok(AclStore {
            state: RwLock::new(state),
            replay,
        })
    }

    pub fn location(&self) -> Option<PathBuf> {
        self.state.read().journal.as_ref().map(|j| j.path().to_path_buf())
    }

    /// What the last replay found (records read, bytes of torn tail dropped).
    pub fn replay_report(&self) -> &ReplayReport {
        &self.replay
    }

    /// Number of records applied since the journal began.
    pub fn journal_position(&self) -> u64 {
        self.state.read().journal_position
    }

    pub fn len(&self) -> usize {
        self.state.read().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, path: &str, id: ObjectId) -> Option<AccessControlEntry> {
        self.state.read().entries.get(&(path.to_string(), id)).cloned()
    }

    /// All entries, ordered by (path, id).
    pub fn list(&self) -> Vec<AccessControlEntry> {
        self.state.read().entries.values().cloned().collect()
    }

    pub fn list_path(&self, path: &str) -> Vec<AccessControlEntry> {
        self.state
            .read()
            .entries
            .values()
            .filter(|e| e.path == path)
            .cloned()
            .collect()
    }

    /// Upserts `ace`; durable before returning.
    pub fn put(&self, ace: AccessControlEntry) -> Result<(), AclError> {
        if !ace.is_consistent() {
            return Err(AclError::InconsistentEntry { path: ace.path, id: ace.id });
        }
        self.state.write().commit(Record::Upsert(ace))
    }

    /// Inserts `ace` unless an entry for its (path, id) already exists.
    pub fn insert_new(&self, ace: AccessControlEntry) -> Result<(), AclError> {
        if !ace.is_consistent() {
            return Err(AclError::InconsistentEntry { path: ace.path, id: ace.id });
        }
        let mut state = self.state.write();
        if state.entries.contains_key(&(ace.path.clone(), ace.id)) {
            return Err(AclError::DuplicateObject { path: ace.path, id: ace.id });
        }
        state.commit(Record::Upsert(ace))
    }

    /// Read-modify-write of one entry under the writer lock.
    ///
    /// `f` may refuse the change by returning an error; the entry is only written when it changed.
    pub fn update<E>(
        &self,
        path: &str,
        id: ObjectId,
        f: impl FnOnce(&mut AccessControlEntry) -> Result<(), E>,
    ) -> Result<Result<AccessControlEntry, E>, AclError> {
        let mut state = self.state.write();
        let Some(current) = state.entries.get(&(path.to_string(), id)) else {
            return Err(AclError::NoSuchObject { path: path.to_string(), id });
        };
        let mut next = current.clone();
        if let Err(e) = f(&mut next) {
            return Ok(Err(e));
        }
        if next.path != path || next.id != id || !next.is_consistent() {
            return Err(AclError::InconsistentEntry { path: path.to_string(), id });
        }
        if &next != current {
            state.commit(Record::Upsert(next.clone()))?;
        }
        Ok(Ok(next))
    }

    /// Removes the entry by appending a tombstone.
    pub fn delete(&self, path: &str, id: ObjectId) -> Result<AccessControlEntry, AclError> {
        let mut state = self.state.write();
        let Some(existing) = state.entries.get(&(path.to_string(), id)).cloned() else {
            return Err(AclError::NoSuchObject { path: path.to_string(), id });
        };
        state.commit(Record::Delete { path: path.to_string(), id })?;
        Ok(existing)
    }

    /// Reserves the next object id for `path`: one above the highest id ever
    /// written there. Reservations are not journaled, so an id reserved but never
    /// recorded may be handed out again after a restart.
    pub fn allocate_id(&self, path: &str) -> ObjectId {
        let mut state = self.state.write();
        let recorded = state.high_water.get(path).copied().unwrap_or(0);
        let reserved = state.reserved.entry(path.to_string()).or_insert(0);
        *reserved = (*reserved).max(recorded) + 1;
        *reserved
    }

    /// Rewrites the journal to one upsert per live entry. Where the highest id of a
    /// path belongs to a deleted object, its tombstone is kept so ids are not reused.
    pub fn compact(&self) -> Result<CompactionReport, AclError> {
        let mut state = self.state.write();
        let before = state.journal_position;
        let mut records: Vec<Record> = state.entries.values().cloned().map(Record::Upsert).collect();
        let mut paths: Vec<(&String, &ObjectId)> = state.high_water.iter().collect();
        paths.sort();
        for (path, hw) in paths {
            if *hw > 0 && !state.entries.contains_key(&(path.clone(), *hw)) {
                records.push(Record::Delete { path: path.clone(), id: *hw });
            }
        }
        let lines: Vec<String> = records.iter().map(Record::encode).collect();
        if let Some(journal) = state.journal.as_mut() {
            journal.rewrite(lines.iter().map(String::as_str))?;
        }
        state.journal_position = lines.len() as u64;
        Ok(CompactionReport {
            records_before: before,
            records_after: lines.len() as u64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompactionReport {
    pub records_before: u64,
    pub records_after: u64,
}
