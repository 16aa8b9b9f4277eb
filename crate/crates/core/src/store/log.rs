use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::event::{EventBody, EventRecord, InvalidEvent, SCHEMA_VERSION};
use crate::time::UnixTime;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Invalid(#[from] InvalidEvent),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unknown export format `{0}`")]
    UnknownFormat(String),
    #[error("not found: {0}")]
    NotFound(String),
}

/// Anything that accepts events. Implementations serialize concurrent appends.
pub trait EventSink: Sync {
    /// Validates and appends `body`, returning its sequence number.
    fn append(&self, ts: UnixTime, body: EventBody) -> Result<u64, StoreError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// Flush and fsync before every append returns.
    #[default]
    EveryAppend,
    /// Buffer writes; data reaches disk on [`EventLog::flush`] or drop.
    Batched,
}

/// Append-only JSON-lines event log. One writer per file.
pub struct EventLog {
    path: PathBuf,
    policy: SyncPolicy,
    inner: Mutex<Inner>,
}

struct Inner {
    out: BufWriter<File>,
    next_seq: u64,
}

impl EventLog {
    /// Creates a new log, truncating any existing file.
    pub fn create(path: impl AsRef<Path>, policy: SyncPolicy) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        Ok(Self::with_file(path, policy, file, 0))
    }

    /// Opens an existing log for appending, creating it if absent. A torn
    /// trailing line left by a crash is cut off.
    pub fn open(path: impl AsRef<Path>, policy: SyncPolicy) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let (records, good_len) = match File::open(&path) {
            Ok(f) => scan(BufReader::new(f))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => (Vec::new(), 0),
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() > good_len {
            log::warn!("{}: dropping torn trailing record", path.display());
            file.set_len(good_len)?;
        }
        let next_seq = records.last().map_or(0, |r| r.seq + 1);
        Ok(Self::with_file(path, policy, file, next_seq))
    }

    fn with_file(path: PathBuf, policy: SyncPolicy, file: File, next_seq: u64) -> Self {
        Self {
            path,
            policy,
            inner: Mutex::new(Inner {
                out: BufWriter::new(file),
                next_seq,
            }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().expect("log lock poisoned");
        inner.out.flush()?;
        inner.out.get_ref().sync_data()?;
        Ok(())
    }
}

impl EventSink for EventLog {
    fn append(&self, ts: UnixTime, body: EventBody) -> Result<u64, StoreError> {
        body.validate()?;
        let mut inner = self.inner.lock().expect("log lock poisoned");
        let seq = inner.next_seq;
        let rec = EventRecord {
            v: SCHEMA_VERSION,
            seq,
            ts,
            body,
        };
        let mut line = serde_json::to_vec(&rec).expect("events serialize");
        line.push(b'\n');
        inner.out.write_all(&line)?;
        if self.policy == SyncPolicy::EveryAppend {
            inner.out.flush()?;
            inner.out.get_ref().sync_data()?;
        }
        inner.next_seq += 1;
        Ok(seq)
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        if let Ok(inner) = self.inner.get_mut() {
            if let Err(e) = inner.out.flush() {
                log::error!("{}: final flush failed: {e}", self.path.display());
            }
        }
    }
}

/// In-memory sink, used by tests and dry runs.
#[derive(Default)]
pub struct MemorySink(Mutex<Vec<EventRecord>>);

impl MemorySink {
    pub fn records(&self) -> Vec<EventRecord> {
        self.0.lock().expect("sink lock poisoned").clone()
    }

    pub fn into_records(self) -> Vec<EventRecord> {
        self.0.into_inner().expect("sink lock poisoned")
    }
}

impl EventSink for MemorySink {
    fn append(&self, ts: UnixTime, body: EventBody) -> Result<u64, StoreError> {
        body.validate()?;
        let mut v = self.0.lock().expect("sink lock poisoned");
        let seq = v.len() as u64;
        v.push(EventRecord {
            v: SCHEMA_VERSION,
            seq,
            ts,
            body,
        });
        Ok(seq)
    }
}

/// Reads every record of a log. A final line without a newline that fails to
/// parse is treated as a torn write and skipped.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, StoreError> {
    let f = File::open(path.as_ref())?;
    Ok(scan(BufReader::new(f))?.0)
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<EventRecord>, StoreError> {
    Ok(scan(BufReader::new(r))?.0)
}

// Returns the records and the byte length of the well-formed prefix.
fn scan<R: BufRead>(mut r: R) -> Result<(Vec<EventRecord>, u64), StoreError> {
    let mut out = Vec::new();
    let mut good = 0u64;
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = r.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.last() == Some(&b'\n');
        let text = buf.strip_suffix(b"\n").unwrap_or(&buf);
        if text.iter().all(u8::is_ascii_whitespace) {
            if complete {
                good += n as u64;
            }
            continue;
        }
        match serde_json::from_slice::<EventRecord>(text) {
            Ok(rec) => {
                if let Some(prev) = out.last().map(|p: &EventRecord| p.seq) {
                    if rec.seq <= prev {
                        return Err(StoreError::Corrupt {
                            line: line_no,
                            message: format!("sequence {} after {prev}", rec.seq),
                        });
                    }
                }
                out.push(rec);
                good += n as u64;
            }
            Err(_) if !complete => break,
            Err(e) => {
                return Err(StoreError::Corrupt {
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((out, good))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::event::PortalRemoval;

    fn removal(u: &str) -> EventBody {
        EventBody::PortalRemoval(PortalRemoval {
            portal_id: "p".into(),
            username: u.into(),
        })
    }

    #[test]
    fn positions_increase() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::create(dir.path().join("e.jsonl"), SyncPolicy::EveryAppend).unwrap();
        let a = log.append(1, removal("a")).unwrap();
        let b = log.append(2, removal("b")).unwrap();
        assert!(a < b);
    }

    #[test]
    fn invalid_rejected_and_log_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let log = EventLog::create(&path, SyncPolicy::EveryAppend).unwrap();
        log.append(1, removal("a")).unwrap();
        let before = std::fs::read(&path).unwrap();
        assert!(matches!(log.append(2, removal("")), Err(StoreError::Invalid(_))));
        assert_eq!(std::fs::read(&path).unwrap(), before);
        assert_eq!(log.append(3, removal("c")).unwrap(), 1);
    }

    #[test]
    fn reopen_after_torn_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        {
            let log = EventLog::create(&path, SyncPolicy::EveryAppend).unwrap();
            log.append(1, removal("a")).unwrap();
            log.append(2, removal("b")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"v":1,"seq":2,"ts":3,"kind":"portal_rem"#).unwrap();
        drop(f);
        assert_eq!(read_log(&path).unwrap().len(), 2);

        let log = EventLog::open(&path, SyncPolicy::EveryAppend).unwrap();
        assert_eq!(log.append(4, removal("d")).unwrap(), 2);
        drop(log);
        let recs = read_log(&path).unwrap();
        assert_eq!(recs.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn corrupt_middle_line_is_error() {
        let text = "{\"v\":1,\"seq\":0,\"ts\":0,\"kind\":\"portal_removal\",\"data\":{\"portal_id\":\"p\",\"username\":\"a\"}}\nnot json\n";
        assert!(matches!(
            read_records(text.as_bytes()),
            Err(StoreError::Corrupt { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_version_rejected() {
        let text = "{\"v\":9,\"seq\":0,\"ts\":0,\"kind\":\"portal_removal\",\"data\":{\"portal_id\":\"p\",\"username\":\"a\"}}\n";
        assert!(read_records(text.as_bytes()).is_err());
    }
}
