//! Append-only JSONL session logs and their replay.
//!
//! Line 1 is a header carrying the session config; every accepted input is
//! one `input` line with the digest of the state it produced; a finished
//! session ends with `session_end`. Each line is flushed as it is written.

use std::fs::File;
use std::io::{self, BufRead, LineWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::PROTOCOL_VERSION;
use crate::session::{Session, SessionConfig, SessionInput, SessionSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header {
        version: u32,
        session_id: u64,
        config: SessionConfig,
    },
    Input {
        seq: usize,
        input: SessionInput,
        digest: String,
    },
    SessionEnd {
        steps: usize,
        digest: String,
    },
}

pub struct SessionLog<W: Write> {
    out: W,
    seq: usize,
}

impl SessionLog<LineWriter<File>> {
    pub fn create(path: &Path, session: &Session) -> io::Result<Self> {
        SessionLog::new(LineWriter::new(File::create(path)?), session)
    }
}

impl<W: Write> SessionLog<W> {
    /// Writes the header for `session`.
    pub fn new(out: W, session: &Session) -> io::Result<Self> {
        let mut log = Self { out, seq: 0 };
        log.write(&LogLine::Header {
            version: PROTOCOL_VERSION,
            session_id: session.id(),
            config: session.config().clone(),
        })?;
        Ok(log)
    }

    fn write(&mut self, line: &LogLine) -> io::Result<()> {
        let mut text = serde_json::to_string(line).map_err(io::Error::other)?;
        text.push('\n');
        self.out.write_all(text.as_bytes())?;
        self.out.flush()
    }

    /// Records an input `session` has just accepted.
    pub fn record(&mut self, input: SessionInput, session: &Session) -> io::Result<()> {
        self.seq += 1;
        let line = LogLine::Input {
            seq: self.seq,
            input,
            digest: session.digest(),
        };
        self.write(&line)
    }

    pub fn finish(&mut self, session: &Session) -> io::Result<()> {
        self.write(&LogLine::SessionEnd {
            steps: session.runner().steps_done(),
            digest: session.digest(),
        })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("reading the log: {0}")]
    Io(#[from] io::Error),
    #[error("log is empty")]
    Empty,
    #[error("line {line}: {message}")]
    BadEvent { line: usize, message: String },
}

fn bad(line: usize, message: impl Into<String>) -> ReplayError {
    ReplayError::BadEvent {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Replay {
    /// Initial state, then the state after every input.
    pub states: Vec<SessionSnapshot>,
    /// False when the log stops before `session_end`.
    pub complete: bool,
    pub session: Session,
}

/// Rebuilds a session from its log, checking every recorded digest. A final
/// line cut off mid-write counts as truncation, not corruption.
pub fn replay(reader: impl BufRead) -> Result<Replay, ReplayError> {
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line?);
    }
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    let last = lines.len();
    let mut iter = lines.into_iter().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = iter.next().ok_or(ReplayError::Empty)?;
    let (version, id, config) = match serde_json::from_str::<LogLine>(&first) {
        Ok(LogLine::Header {
            version,
            session_id,
            config,
        }) => (version, session_id, config),
        Ok(_) => return Err(bad(1, "expected a header")),
        Err(e) => return Err(bad(1, e.to_string())),
    };
    if version != PROTOCOL_VERSION {
        return Err(bad(1, format!("unsupported version {version}")));
    }
    let mut session = Session::new(id, config).map_err(|e| bad(1, e.to_string()))?;
    let mut states = vec![session.snapshot()];
    let mut seq = 0;
    let mut complete = false;
    for (n, text) in iter {
        if complete {
            return Err(bad(n, "event after session_end"));
        }
        let parsed = match serde_json::from_str::<LogLine>(&text) {
            Ok(l) => l,
            Err(_) if n == last && text.trim_start().starts_with('{') && !text.trim_end().ends_with('}') => break,
            Err(e) => return Err(bad(n, e.to_string())),
        };
        match parsed {
            LogLine::Header { .. } => return Err(bad(n, "duplicate header")),
            LogLine::Input {
                seq: got,
                input,
                digest,
            } => {
                seq += 1;
                if got != seq {
                    return Err(bad(n, format!("expected seq {seq}, found {got}")));
                }
                session.apply(input).map_err(|e| bad(n, format!("input rejected: {e}")))?;
                if session.digest() != digest {
                    return Err(bad(n, "state digest mismatch"));
                }
                states.push(session.snapshot());
            }
            LogLine::SessionEnd { steps, digest } => {
                if steps != session.runner().steps_done() || digest != session.digest() {
                    return Err(bad(n, "session_end does not match the replayed state"));
                }
                complete = true;
            }
        }
    }
    Ok(Replay {
        states,
        complete,
        session,
    })
}
