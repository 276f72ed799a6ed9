//! Newline-delimited JSON wire codec for the classical client/server
//! channel. Every message is one line; submits carry only server-visible
//! data (a circuit, a shot count, and a sampling seed).

use crate::qsim::Circuit;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed wire message: {0}")]
    Malformed(String),
    #[error("transport i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("connection closed mid-exchange")]
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireMessage {
    Submit {
        job_id: u64,
        circuit: Circuit,
        shots: u64,
        /// sampling seed, so identical submissions reproduce identical counts
        seed: u64,
    },
    Result {
        job_id: u64,
        counts: BTreeMap<String, u64>,
    },
    Error {
        job_id: u64,
        message: String,
    },
}

impl WireMessage {
    pub fn job_id(&self) -> u64 {
        match self {
            WireMessage::Submit { job_id, .. }
            | WireMessage::Result { job_id, .. }
            | WireMessage::Error { job_id, .. } => *job_id,
        }
    }
}

/// One message per line, no trailing newline in the returned string.
pub fn encode(msg: &WireMessage) -> String {
    serde_json::to_string(msg).expect("wire message serialization")
}

pub fn decode(line: &str) -> Result<WireMessage, WireError> {
    serde_json::from_str(line.trim_end()).map_err(|e| WireError::Malformed(e.to_string()))
}
