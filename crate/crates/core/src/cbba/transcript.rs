//! Newline-delimited JSON log of consensus exchanges.
//!
//! Every consensus phase of every agent produces, in order:
//!
//! * `{"phase":"pre", tick, role, agent, belief}`: the belief before merging;
//! * one `{"phase":"msg", tick, role, sender, receiver, accepted, digest, message}`
//!   per delivered message, where `digest` hashes the message content;
//! * `{"phase":"post", tick, role, agent, digest}`: digest of the merged belief.
//!
//! Maps inside beliefs and messages are written as `[[key, value], ...]`.
//! Replaying re-runs each merge from the logged inputs and compares digests.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::types::RadarId;

use super::belief::{BeliefState, ConsensusMessage, Role, Stamp};
use super::CbbaError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum TranscriptRecord {
    Pre {
        tick: u64,
        role: Role,
        agent: RadarId,
        belief: BeliefState,
    },
    Msg {
        tick: u64,
        role: Role,
        sender: RadarId,
        receiver: RadarId,
        accepted: bool,
        digest: String,
        message: ConsensusMessage,
    },
    Post {
        tick: u64,
        role: Role,
        agent: RadarId,
        digest: String,
    },
}

impl TranscriptRecord {
    pub fn tick(&self) -> u64 {
        match self {
            Self::Pre { tick, .. } | Self::Msg { tick, .. } | Self::Post { tick, .. } => *tick,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: TranscriptRecord) {
        self.records.push(r);
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, CbbaError> {
        let mut records = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CbbaError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| CbbaError::Transcript(format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}

/// Re-executes every logged merge and checks it reproduces the logged
/// digests. Returns the number of merges verified.
pub fn replay(t: &Transcript) -> Result<usize, CbbaError> {
    let mut open: Option<(u64, Role, RadarId, BeliefState, Vec<ConsensusMessage>)> = None;
    let mut verified = 0;
    for rec in &t.records {
        match rec {
            TranscriptRecord::Pre { tick, role, agent, belief } => {
                if let Some((t0, ..)) = open {
                    return Err(mismatch(t0, "merge without closing digest"));
                }
                open = Some((*tick, *role, *agent, belief.clone(), Vec::new()));
            }
            TranscriptRecord::Msg { tick, role, receiver, accepted, digest, message, .. } => {
                if message.digest() != *digest {
                    return Err(mismatch(*tick, format!("message from {} to {receiver} altered", message.sender)));
                }
                match open.as_mut() {
                    Some((t0, r0, a0, _, inbox)) if t0 == tick && r0 == role && a0 == receiver => {
                        if *accepted {
                            inbox.push(message.clone());
                        }
                    }
                    _ => return Err(mismatch(*tick, "message outside a merge")),
                }
            }
            TranscriptRecord::Post { tick, role, agent, digest } => match open.take() {
                Some((t0, r0, a0, mut belief, inbox)) if t0 == *tick && r0 == *role && a0 == *agent => {
                    belief.consensus(&inbox, Stamp::at(*tick));
                    if belief.digest() != *digest {
                        return Err(mismatch(*tick, format!("{} belief of {agent} differs", role.as_str())));
                    }
                    verified += 1;
                }
                _ => return Err(mismatch(*tick, "digest without matching merge")),
            },
        }
    }
    if let Some((t0, ..)) = open {
        return Err(mismatch(t0, "transcript ends inside a merge"));
    }
    Ok(verified)
}

fn mismatch(tick: u64, detail: impl Into<String>) -> CbbaError {
    CbbaError::ReplayMismatch { tick, detail: detail.into() }
}
