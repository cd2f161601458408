//! Channel and message domain types shared by every pipeline stage.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::InvalidMessage;

/// UTC timestamp at second precision.
pub type Timestamp = DateTime<Utc>;

/// A monitored channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRef {
    pub channel_key: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_handle: Option<String>,
}

impl ChannelRef {
    pub fn new(channel_key: impl Into<String>, display_name: impl Into<String>) -> Self {
        Self {
            channel_key: channel_key.into(),
            display_name: display_name.into(),
            public_handle: None,
        }
    }

    pub fn with_handle(mut self, handle: impl Into<String>) -> Self {
        self.public_handle = Some(handle.into());
        self
    }

    /// Public URL of a post on this channel, when the channel has a handle.
    pub fn post_url(&self, source_message_id: u64) -> Option<String> {
        self.public_handle
            .as_ref()
            .map(|h| alloc::format!("https://t.me/{h}/{source_message_id}"))
    }
}

/// Ordered list of channels with unique keys.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelList {
    channels: Vec<ChannelRef>,
}

/// Reason a channel list cannot be built.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ChannelListError {
    #[error("channel_key must not be empty (entry {index})")]
    EmptyKey { index: usize },
    #[error("public_handle of channel '{key}' must not be empty")]
    EmptyHandle { key: String },
    #[error("duplicate channel_key '{key}' (entries {first} and {second})")]
    Duplicate { key: String, first: usize, second: usize },
}

impl ChannelList {
    pub fn new(channels: Vec<ChannelRef>) -> Result<Self, ChannelListError> {
        let mut seen: alloc::collections::BTreeMap<&str, usize> = Default::default();
        for (index, ch) in channels.iter().enumerate() {
            if ch.channel_key.is_empty() {
                return Err(ChannelListError::EmptyKey { index });
            }
            if matches!(&ch.public_handle, Some(h) if h.is_empty()) {
                return Err(ChannelListError::EmptyHandle {
                    key: ch.channel_key.clone(),
                });
            }
            if let Some(first) = seen.insert(ch.channel_key.as_str(), index) {
                return Err(ChannelListError::Duplicate {
                    key: ch.channel_key.clone(),
                    first,
                    second: index,
                });
            }
        }
        Ok(Self { channels })
    }

    pub fn iter(&self) -> core::slice::Iter<'_, ChannelRef> {
        self.channels.iter()
    }

    pub fn as_slice(&self) -> &[ChannelRef] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn get(&self, channel_key: &str) -> Option<&ChannelRef> {
        self.channels.iter().find(|c| c.channel_key == channel_key)
    }

    pub fn keys(&self) -> BTreeSet<String> {
        self.channels.iter().map(|c| c.channel_key.clone()).collect()
    }
}

impl<'a> IntoIterator for &'a ChannelList {
    type Item = &'a ChannelRef;
    type IntoIter = core::slice::Iter<'a, ChannelRef>;

    fn into_iter(self) -> Self::IntoIter {
        self.channels.iter()
    }
}

/// One collected channel post.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMessage {
    pub channel_key: String,
    pub source_message_id: u64,
    pub posted_at: Timestamp,
    pub text: String,
    pub views: u64,
    pub forwards: u64,
    pub fetched_at: Timestamp,
}

/// Store identity of a message.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageKey {
    pub channel_key: String,
    pub source_message_id: u64,
}

impl fmt::Display for MessageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.channel_key, self.source_message_id)
    }
}

impl RawMessage {
    pub fn key(&self) -> MessageKey {
        MessageKey {
            channel_key: self.channel_key.clone(),
            source_message_id: self.source_message_id,
        }
    }

    /// Checks the record invariants. Timestamps must carry no sub-second part.
    pub fn validate(&self) -> Result<(), InvalidMessage> {
        if self.channel_key.is_empty() {
            return Err(InvalidMessage::new(self, "empty channel_key"));
        }
        if self.source_message_id == 0 {
            return Err(InvalidMessage::new(self, "source_message_id must be positive"));
        }
        if self.posted_at.timestamp_subsec_nanos() != 0 || self.fetched_at.timestamp_subsec_nanos() != 0 {
            return Err(InvalidMessage::new(self, "timestamps must have second precision"));
        }
        if self.posted_at > self.fetched_at {
            return Err(InvalidMessage::new(self, "posted_at is after fetched_at"));
        }
        Ok(())
    }

    /// Sort key of the store order.
    pub fn order_key(&self) -> (Timestamp, &str, u64) {
        (self.posted_at, self.channel_key.as_str(), self.source_message_id)
    }
}

/// Half-open interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    start: Timestamp,
    end: Timestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("window start {start} is not before end {end}")]
pub struct InvalidWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, InvalidWindow> {
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(InvalidWindow { start, end })
        }
    }

    /// The `hours`-long window ending (exclusively) at `end`.
    pub fn ending_at(end: Timestamp, hours: u32) -> Result<Self, InvalidWindow> {
        Self::new(end - Duration::hours(i64::from(hours)), end)
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    pub fn length(&self) -> Duration {
        self.end - self.start
    }
}

/// ISO-8601 rendering used across prompts and reports, e.g. `2025-03-10T06:00:00Z`.
pub fn iso(t: &Timestamp) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
