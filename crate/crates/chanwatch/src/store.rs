//! Message stores.
//!
//! Both backends share [`MessageIndex`] for dedup and window queries. The
//! file backend adds a JSON-lines append log that is replayed on open; only
//! inserted or updated rows are appended, so re-ingesting unchanged data
//! writes nothing.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chanwatch_core::{InvalidMessage, MessageIndex, RawMessage, StoredCount, TimeWindow, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    InvalidMessage(#[from] InvalidMessage),
}

pub trait MessageStore: Send + Sync {
    /// Stores a batch atomically: every message is validated before any is
    /// written. Duplicates by `(channel_key, source_message_id)` keep their
    /// text and take the larger view and forward counts.
    fn put_messages(&self, batch: &[RawMessage]) -> Result<StoredCount, StoreError>;

    /// Visits the messages of `channels` posted in `window`, in store order.
    fn scan_window(
        &self,
        channels: &BTreeSet<String>,
        window: &TimeWindow,
        visit: &mut dyn FnMut(&RawMessage),
    ) -> Result<(), StoreError>;

    fn query_window(&self, channels: &BTreeSet<String>, window: &TimeWindow) -> Result<Vec<RawMessage>, StoreError> {
        let mut out = Vec::new();
        self.scan_window(channels, window, &mut |m| out.push(m.clone()))?;
        Ok(out)
    }

    fn latest_timestamp(&self, channel_key: &str) -> Result<Option<Timestamp>, StoreError>;

    fn len(&self) -> Result<usize, StoreError>;

    fn is_empty(&self) -> Result<bool, StoreError> {
        Ok(self.len()? == 0)
    }
}

fn poisoned<T>(_: T) -> StoreError {
    StoreError::Unavailable("store lock poisoned".into())
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    index: RwLock<MessageIndex>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl MessageStore for MemoryStore {
    fn put_messages(&self, batch: &[RawMessage]) -> Result<StoredCount, StoreError> {
        let mut index = self.index.write().map_err(poisoned)?;
        Ok(index.put_batch(batch, |_| {})?)
    }

    fn scan_window(
        &self,
        channels: &BTreeSet<String>,
        window: &TimeWindow,
        visit: &mut dyn FnMut(&RawMessage),
    ) -> Result<(), StoreError> {
        let index = self.index.read().map_err(poisoned)?;
        index.window_iter(channels, window).for_each(visit);
        Ok(())
    }

    fn latest_timestamp(&self, channel_key: &str) -> Result<Option<Timestamp>, StoreError> {
        Ok(self.index.read().map_err(poisoned)?.latest_timestamp(channel_key))
    }

    fn len(&self) -> Result<usize, StoreError> {
        Ok(self.index.read().map_err(poisoned)?.len())
    }
}

/// JSON-lines log of [`RawMessage`] records; later lines supersede earlier
/// ones through the same upsert rule the index applies.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    index: RwLock<MessageIndex>,
    log: Mutex<File>,
}

impl FileStore {
    /// Opens or creates the log and replays it. A torn final line (from a
    /// crash mid-append) is dropped and truncated away; corruption anywhere
    /// else is an error.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let unavailable =
            |what: &str, e: std::io::Error| StoreError::Unavailable(format!("{what} {}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| unavailable("cannot create directory for", e))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| unavailable("cannot open", e))?;
        let (index, good_len) = replay(&path, &file)?;
        let total = file.metadata().map_err(|e| unavailable("cannot stat", e))?.len();
        if good_len < total {
            tracing::warn!(path = %path.display(), dropped_bytes = total - good_len, "dropping torn tail of store log");
            file.set_len(good_len).map_err(|e| unavailable("cannot truncate", e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| unavailable("cannot seek", e))?;
        }
        Ok(Self {
            path,
            index: RwLock::new(index),
            log: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Rebuilds the index from the log; returns it with the byte length of the
/// valid prefix.
fn replay(path: &Path, file: &File) -> Result<(MessageIndex, u64), StoreError> {
    let mut index = MessageIndex::new();
    let mut reader = BufReader::new(file);
    reader
        .seek(SeekFrom::Start(0))
        .map_err(|e| StoreError::Unavailable(format!("cannot read {}: {e}", path.display())))?;
    let mut offset = 0u64;
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| StoreError::Unavailable(format!("cannot read {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.ends_with('\n') {
            // Torn tail: every append ends with a newline.
            break;
        }
        let parsed = serde_json::from_str::<RawMessage>(line.trim_end())
            .map_err(|e| e.to_string())
            .and_then(|m| m.validate().map(|_| m).map_err(|e| e.to_string()));
        match parsed {
            Ok(m) => {
                index.upsert(m);
                offset += n as u64;
            }
            Err(e) => {
                return Err(StoreError::Unavailable(format!(
                    "{}:{line_no}: corrupt record: {e}",
                    path.display()
                )))
            }
        }
    }
    Ok((index, offset))
}

impl MessageStore for FileStore {
    fn put_messages(&self, batch: &[RawMessage]) -> Result<StoredCount, StoreError> {
        let mut log = self.log.lock().map_err(poisoned)?;
        let mut index = self.index.write().map_err(poisoned)?;
        let mut buf = Vec::new();
        let count = index.put_batch(batch, |row| {
            serde_json::to_writer(&mut buf, row).expect("message serializes");
            buf.push(b'\n');
        })?;
        if buf.is_empty() {
            return Ok(count);
        }
        let written = log.write_all(&buf).and_then(|_| log.sync_data());
        if let Err(e) = written {
            // The index already holds the batch; rebuild it from what is
            // actually on disk so memory never runs ahead of the log.
            let len = log.metadata().map(|m| m.len()).unwrap_or(0);
            let (rebuilt, good) = replay(&self.path, &log)?;
            if good < len {
                let _ = log.set_len(good);
            }
            *index = rebuilt;
            return Err(StoreError::Unavailable(format!(
                "cannot append to {}: {e}",
                self.path.display()
            )));
        }
        Ok(count)
    }

    fn scan_window(
        &self,
        channels: &BTreeSet<String>,
        window: &TimeWindow,
        visit: &mut dyn FnMut(&RawMessage),
    ) -> Result<(), StoreError> {
        let index = self.index.read().map_err(poisoned)?;
        index.window_iter(channels, window).for_each(visit);
        Ok(())
    }

    fn latest_timestamp(&self, channel_key: &str) -> Result<Option<Timestamp>, StoreError> {
        Ok(self.index.read().map_err(poisoned)?.latest_timestamp(channel_key))
    }

    fn len(&self) -> Result<usize, StoreError> {
        Ok(self.index.read().map_err(poisoned)?.len())
    }
}
