//! Append-only newline-delimited JSON journal.
//!
//! One record per line. Each append is flushed (and by default synced) before it
//! returns. On open, a damaged final record is treated as a torn write: it is
//! dropped, the file is truncated back to the last good record, and a warning is
//! logged. Damage anywhere else is reported as corruption.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("journal {path} is corrupt at line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// `fsync` after every record.
    #[default]
    Sync,
    /// Flush to the OS only.
    Flush,
}

/// What replay found besides the records themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayReport {
    pub records: usize,
    /// Bytes dropped from a torn final record.
    pub discarded_bytes: u64,
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    durability: Durability,
}

impl Journal {
    /// Opens (creating if needed) and replays the journal through `decode`.
    pub fn open<T>(
        path: impl AsRef<Path>,
        durability: Durability,
        mut decode: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<(Journal, Vec<T>, ReplayReport), JournalError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| JournalError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;

        let mut records = Vec::new();
        let mut good_len: u64 = 0;
        let mut offset: u64 = 0;
        let mut missing_newline = false;
        let pieces: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
        let last_nonempty = pieces.iter().rposition(|p| !p.iter().all(u8::is_ascii_whitespace));
        for (idx, piece) in pieces.iter().enumerate() {
            let complete = idx + 1 < pieces.len();
            let piece_len = piece.len() as u64 + u64::from(complete);
            if piece.iter().all(u8::is_ascii_whitespace) {
                offset += piece_len;
                if complete {
                    good_len = offset;
                }
                continue;
            }
            let decoded = std::str::from_utf8(piece)
                .map_err(|e| e.to_string())
                .and_then(|line| decode(line.trim_end_matches('\r')));
            match decoded {
                Ok(record) => {
                    records.push(record);
                    offset += piece_len;
                    good_len = offset;
                    missing_newline = !complete;
                }
                Err(_) if Some(idx) == last_nonempty => break,
                Err(reason) => {
                    return Err(JournalError::Corrupt {
                        path,
                        line: idx + 1,
                        reason,
                    })
                }
            }
        }

        let total = bytes.len() as u64;
        let discarded_bytes = total - good_len;
        if discarded_bytes > 0 {
            log::warn!(
                "journal {}: discarding {discarded_bytes} bytes of a torn final record",
                path.display()
            );
            file.set_len(good_len).map_err(io_err)?;
            file.seek(SeekFrom::End(0)).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        if missing_newline {
            file.write_all(b"\n").map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        let report = ReplayReport {
            records: records.len(),
            discarded_bytes,
        };
        Ok((
            Journal {
                path,
                file,
                durability,
            },
            records,
            report,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record. `line` must not contain a newline.
    pub fn append(&mut self, line: &str) -> Result<(), JournalError> {
        debug_assert!(!line.contains('\n'));
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.file
            .write_all(&buf)
            .and_then(|_| self.file.flush())
            .and_then(|_| match self.durability {
                Durability::Sync => self.file.sync_data(),
                Durability::Flush => Ok(()),
            })
            .map_err(|source| JournalError::Io {
                path: self.path.clone(),
                source,
            })
    }

    /// Atomically replaces the journal content with `lines`.
    pub fn rewrite<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) -> Result<(), JournalError> {
        let io_err = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        let mut tmp = self.path.clone().into_os_string();
        tmp.push(".compact");
        let tmp = PathBuf::from(tmp);
        {
            let mut out = File::create(&tmp).map_err(io_err)?;
            for line in lines {
                out.write_all(line.as_bytes()).map_err(io_err)?;
                out.write_all(b"\n").map_err(io_err)?;
            }
            out.sync_all().map_err(io_err)?;
        }
        std::fs::rename(&tmp, &self.path).map_err(io_err)?;
        self.file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(line: &str) -> Result<serde_json::Value, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }

    #[test]
    fn fresh_journal_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (_, records, report) = Journal::open(dir.path().join("j.ndjson"), Durability::Flush, decode).unwrap();
        assert!(records.is_empty());
        assert_eq!(report, ReplayReport::default());
    }

    #[test]
    fn torn_tail_is_truncated_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        std::fs::write(&path, "{\"a\":1}\n{\"a\":2}\n{\"a\":").unwrap();
        let (mut j, records, report) = Journal::open(&path, Durability::Flush, decode).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(report.discarded_bytes, 5);
        j.append("{\"a\":3}").unwrap();
        drop(j);
        let (_, records, report) = Journal::open(&path, Durability::Flush, decode).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(report.discarded_bytes, 0);
    }

    #[test]
    fn damaged_final_line_with_newline_is_torn() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        std::fs::write(&path, "{\"a\":1}\n{\"a\n").unwrap();
        let (_, records, _) = Journal::open(&path, Durability::Flush, decode).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"a\":1}\n");
    }

    #[test]
    fn complete_final_record_without_newline_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        std::fs::write(&path, "{\"a\":1}\n{\"a\":2}").unwrap();
        let (mut j, records, _) = Journal::open(&path, Durability::Flush, decode).unwrap();
        assert_eq!(records.len(), 2);
        j.append("{\"a\":3}").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"a\":1}\n{\"a\":2}\n{\"a\":3}\n");
    }

    #[test]
    fn interior_damage_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        std::fs::write(&path, "{\"a\":1}\ngarbage\n{\"a\":3}\n").unwrap();
        match Journal::open(&path, Durability::Flush, decode) {
            Err(JournalError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn rewrite_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        let (mut j, _, _) = Journal::open(&path, Durability::Sync, decode).unwrap();
        for i in 0..5 {
            j.append(&format!("{{\"a\":{i}}}")).unwrap();
        }
        j.rewrite(["{\"a\":9}"]).unwrap();
        j.append("{\"a\":10}").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"a\":9}\n{\"a\":10}\n");
    }
}
