//! In-memory message index with the store's dedup and window-query rules.
//!
//! Every store backend keeps one of these as its queryable state; backends
//! differ only in how they make the index durable.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::InvalidMessage;
use crate::message::{MessageKey, RawMessage, TimeWindow, Timestamp};

/// Result of a batch insert.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoredCount {
    pub inserted: usize,
    pub duplicates_skipped: usize,
}

/// Effect of a single upsert on the index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    /// Existing row got higher view/forward counts.
    Updated,
    Unchanged,
}

#[derive(Clone, Debug, Default)]
pub struct MessageIndex {
    rows: BTreeMap<MessageKey, RawMessage>,
    by_time: BTreeSet<(Timestamp, String, u64)>,
    latest: BTreeMap<String, Timestamp>,
}

impl MessageIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &MessageKey) -> Option<&RawMessage> {
        self.rows.get(key)
    }

    /// Inserts or merges one message. On a duplicate key the stored text and
    /// timestamps are kept and view/forward counts rise to the maximum seen.
    pub fn upsert(&mut self, msg: RawMessage) -> Upsert {
        let key = msg.key();
        if let Some(existing) = self.rows.get_mut(&key) {
            if msg.views > existing.views || msg.forwards > existing.forwards {
                existing.views = existing.views.max(msg.views);
                existing.forwards = existing.forwards.max(msg.forwards);
                existing.fetched_at = existing.fetched_at.max(msg.fetched_at);
                return Upsert::Updated;
            }
            return Upsert::Unchanged;
        }
        self.by_time
            .insert((msg.posted_at, msg.channel_key.clone(), msg.source_message_id));
        self.latest
            .entry(msg.channel_key.clone())
            .and_modify(|t| *t = (*t).max(msg.posted_at))
            .or_insert(msg.posted_at);
        self.rows.insert(key, msg);
        Upsert::Inserted
    }

    /// Validates the whole batch before touching the index, so an invalid
    /// element rejects the batch atomically. `on_change` sees the stored row
    /// after every insert or update.
    pub fn put_batch<F>(&mut self, batch: &[RawMessage], mut on_change: F) -> Result<StoredCount, InvalidMessage>
    where
        F: FnMut(&RawMessage),
    {
        for m in batch {
            m.validate()?;
        }
        let mut count = StoredCount::default();
        for m in batch {
            let key = m.key();
            match self.upsert(m.clone()) {
                Upsert::Inserted => {
                    count.inserted += 1;
                    on_change(&self.rows[&key]);
                }
                Upsert::Updated => {
                    count.duplicates_skipped += 1;
                    on_change(&self.rows[&key]);
                }
                Upsert::Unchanged => count.duplicates_skipped += 1,
            }
        }
        Ok(count)
    }

    /// Messages of `channels` posted in `window`, in store order
    /// `(posted_at, channel_key, source_message_id)`.
    pub fn query_window(&self, channels: &BTreeSet<String>, window: &TimeWindow) -> Vec<RawMessage> {
        self.window_iter(channels, window).cloned().collect()
    }

    /// Borrowing form of [`Self::query_window`], for streaming a window
    /// without copying it.
    pub fn window_iter<'a>(
        &'a self,
        channels: &'a BTreeSet<String>,
        window: &TimeWindow,
    ) -> impl Iterator<Item = &'a RawMessage> + 'a {
        let lo = (window.start(), String::new(), 0u64);
        let end = window.end();
        self.by_time
            .range(lo..)
            .take_while(move |(t, _, _)| *t < end)
            .filter(move |(_, ch, _)| channels.contains(ch))
            .map(move |(_, ch, id)| {
                &self.rows[&MessageKey {
                    channel_key: ch.clone(),
                    source_message_id: *id,
                }]
            })
    }

    pub fn latest_timestamp(&self, channel_key: &str) -> Option<Timestamp> {
        self.latest.get(channel_key).copied()
    }

    /// All rows in key order.
    pub fn iter(&self) -> impl Iterator<Item = &RawMessage> {
        self.rows.values()
    }
}
