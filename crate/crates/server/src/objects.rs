use std::collections::BTreeMap;
use std::path::Path;

use bola_guard::acl_store::ObjectId;
use bola_guard::journal::{Durability, Journal, JournalError};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A business object served by the reference service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredObject {
    pub id: ObjectId,
    pub path: String,
    pub body: Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Delete { op: DeleteOp, id: ObjectId, path: String },
    Put(StoredObject),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DeleteOp {
    Del,
}

#[derive(Debug, Default)]
struct State {
    objects: BTreeMap<(String, ObjectId), StoredObject>,
    journal: Option<Journal>,
}

impl State {
    fn commit(&mut self, record: Record) -> Result<(), JournalError> {
        if let Some(j) = self.journal.as_mut() {
            j.append(&serde_json::to_string(&record).expect("object record serializes"))?;
        }
        match record {
            Record::Put(obj) => {
                self.objects.insert((obj.path.clone(), obj.id), obj);
            }
            Record::Delete { id, path, .. } => {
                self.objects.remove(&(path, id));
            }
        }
        Ok(())
    }
}

/// Object bodies, journaled the same way as the ACL.
#[derive(Debug, Default)]
pub struct ObjectStore {
    state: RwLock<State>,
}

impl ObjectStore {
    pub fn in_memory() -> ObjectStore {
        ObjectStore::default()
    }

    pub fn open(path: impl AsRef<Path>, durability: Durability) -> Result<ObjectStore, JournalError> {
        let (journal, records, _) =
            Journal::open(path, durability, |line| serde_json::from_str::<Record>(line).map_err(|e| e.to_string()))?;
        let mut state = State::default();
        for r in records {
            state.commit(r)?;
        }
        state.journal = Some(journal);
        Ok(ObjectStore {
            state: RwLock::new(state),
        })
    }

    pub fn get(&self, path: &str, id: ObjectId) -> Option<StoredObject> {
        self.state.read().objects.get(&(path.to_string(), id)).cloned()
    }

    pub fn list_path(&self, path: &str) -> Vec<StoredObject> {
        self.state
            .read()
            .objects
            .range((path.to_string(), 0)..=(path.to_string(), ObjectId::MAX))
            .map(|(_, o)| o.clone())
            .collect()
    }

    pub fn put(&self, object: StoredObject) -> Result<(), JournalError> {
        self.state.write().commit(Record::Put(object))
    }

    /// Returns whether an object was removed.
    pub fn remove(&self, path: &str, id: ObjectId) -> Result<bool, JournalError> {
        let mut state = self.state.write();
        if !state.objects.contains_key(&(path.to_string(), id)) {
            return Ok(false);
        }
        state.commit(Record::Delete {
            op: DeleteOp::Del,
            id,
            path: path.to_string(),
        })?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn replays_puts_and_deletes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objects.ndjson");
        {
            let store = ObjectStore::open(&path, Durability::Flush).unwrap();
            for id in 1..=3 {
                store
                    .put(StoredObject { id, path: "/pet".into(), body: json!({"id": id, "name": "lucky"}) })
                    .unwrap();
            }
            assert!(store.remove("/pet", 2).unwrap());
            assert!(!store.remove("/pet", 2).unwrap());
        }
        let store = ObjectStore::open(&path, Durability::Flush).unwrap();
        let ids: Vec<_> = store.list_path("/pet").iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![1, 3]);
        assert_eq!(store.get("/pet", 3).unwrap().body["name"], "lucky");
        assert!(store.list_path("/user").is_empty());
    }
}
