use alloc::string::String;

use crate::message::{MessageKey, RawMessage};

/// A message that violates the record invariants.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid message {key}: {reason}")]
pub struct InvalidMessage {
    pub key: MessageKey,
    pub reason: String,
}

impl InvalidMessage {
    pub(crate) fn new(msg: &RawMessage, reason: &str) -> Self {
        Self {
            key: msg.key(),
            reason: reason.into(),
        }
    }
}
