//! Data directory layout, the process lock and the append-only journal.
//!
//! The journal is newline-delimited JSON. Every state change is written
//! and flushed before it is applied, so replaying the journal from the
//! start rebuilds the exact state. A final line without its newline, left
//! by a kill during the write, is discarded on open.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chaintwin_core::feedback::{NewPrediction, ParamId};
use chaintwin_core::graph::{DeltaOp, EdgeId, EdgeRecord, EntityNode, GraphDelta, NodeId, Tick, Timeline};
use chaintwin_core::ingestion::{CommitError, DeltaWriter, GraphReader, Severity};
use chaintwin_core::{Provenance, SourceKind};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const LOCK_FILE: &str = "twin.lock";
pub const AUDIT_FILE: &str = "audit.ndjson";
pub const SCENARIO_DIR: &str = "scenarios";
pub const RUN_DIR: &str = "runs";

/// One journal line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum Entry {
    /// A graph delta written outside ingestion, such as a bootstrap load.
    Delta {
        delta: GraphDelta,
    },
    /// A raw event batch, journaled before it is processed.
    Batch {
        source: SourceKind,
        lines: Vec<String>,
    },
    /// Re-run of events parked for an unknown subject.
    Retry,
    Predict {
        prediction: NewPrediction,
    },
    Alert {
        rule: String,
        subject: String,
        tick: Tick,
        severity: Severity,
        message: String,
    },
    AckAlert {
        id: u64,
    },
    AckParam {
        param: ParamId,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub entries: usize,
    /// Bytes of a torn final line that were cut off.
    pub truncated_bytes: u64,
}

/// Exclusive lock on a data directory, released when dropped or when the
/// process dies.
#[derive(Debug)]
pub struct DirLock {
    file: File,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| EngineError::io(format!("opening {}", path.display()), e))?;
        match file.try_lock() {
            Ok(()) => Ok(Self { file }),
            Err(TryLockError::WouldBlock) => Err(EngineError::Locked(dir.to_path_buf())),
            Err(TryLockError::Error(e)) => Err(EngineError::io(format!("locking {}", path.display()), e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    out: BufWriter<File>,
    written: u64,
}

impl Journal {
    pub fn create(path: &Path) -> Result<()> {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map(drop)
            .map_err(|e| EngineError::io(format!("creating {}", path.display()), e))
    }

    /// Reads every complete entry and truncates a torn tail.
    pub fn open(path: &Path) -> Result<(Self, Vec<Entry>, Recovery)> {
        let bytes = fs::read(path).map_err(|e| EngineError::io(format!("reading {}", path.display()), e))?;
        let mut entries = Vec::new();
        let mut good = 0usize;
        let mut start = 0usize;
        let mut line_no = 0usize;
        while start < bytes.len() {
            line_no += 1;
            let Some(nl) = bytes[start..].iter().position(|&b| b == b'\n') else {
                break;
            };
            let line = &bytes[start..start + nl];
            if !line.iter().all(u8::is_ascii_whitespace) {
                match serde_json::from_slice::<Entry>(line) {
                    Ok(e) => entries.push(e),
                    Err(e) => {
                        return Err(EngineError::Corrupt {
                            line: line_no,
                            reason: e.to_string(),
                        })
                    }
                }
            }
            start += nl + 1;
            good = start;
        }
        let truncated = (bytes.len() - good) as u64;
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| EngineError::io(format!("opening {}", path.display()), e))?;
        if truncated > 0 {
            log::warn!("discarding {truncated} bytes of a torn journal line");
            file.set_len(good as u64)
                .map_err(|e| EngineError::io("truncating journal", e))?;
            file.sync_all().map_err(|e| EngineError::io("syncing journal", e))?;
        }
        drop(file);
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| EngineError::io(format!("opening {}", path.display()), e))?;
        let recovery = Recovery {
            entries: entries.len(),
            truncated_bytes: truncated,
        };
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
                written: entries.len() as u64,
            },
            entries,
            recovery,
        ))
    }

    /// Writes one entry and hands it to the operating system.
    pub fn append(&mut self, entry: &Entry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(|e| EngineError::Internal(e.to_string()))?;
        line.push(b'\n');
        self.out
            .write_all(&line)
            .and_then(|()| self.out.flush())
            .map_err(|e| EngineError::io(format!("appending to {}", self.path.display()), e))?;
        self.written += 1;
        Ok(())
    }

    /// Forces written entries to stable storage.
    pub fn sync(&mut self) -> Result<()> {
        self.out
            .flush()
            .and_then(|()| self.out.get_ref().sync_data())
            .map_err(|e| EngineError::io("syncing journal", e))
    }

    pub fn len(&self) -> u64 {
        self.written
    }

    pub fn is_empty(&self) -> bool {
        self.written == 0
    }
}

/// Delta writer that journals each delta before applying it.
pub struct LoggedWriter<'a> {
    pub journal: &'a mut Journal,
    pub timeline: &'a mut Timeline,
}

impl GraphReader for LoggedWriter<'_> {
    fn head_node(&self, id: &NodeId) -> Option<&EntityNode> {
        self.timeline.head_node(id)
    }

    fn head_edge(&self, id: &EdgeId) -> Option<&EdgeRecord> {
        self.timeline.head_edge(id)
    }
}

impl DeltaWriter for LoggedWriter<'_> {
    fn horizon(&self) -> Tick {
        self.timeline.horizon()
    }

    fn advance_horizon(&mut self, tick: Tick) {
        self.timeline.advance_horizon(tick);
    }

    fn commit(&mut self, tick: Tick, op: DeltaOp, provenance: Option<Provenance>) -> Result<GraphDelta, CommitError> {
        let delta = self.timeline.prepare(tick, op, provenance)?;
        self.journal
            .append(&Entry::Delta { delta: delta.clone() })
            .map_err(|e| CommitError::Storage(e.to_string()))?;
        self.timeline.apply_prepared(delta.clone())?;
        Ok(delta)
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let ctx = |e: io::Error| EngineError::io(format!("writing {}", path.display()), e);
    {
        let mut f = File::create(&tmp).map_err(ctx)?;
        f.write_all(bytes).map_err(ctx)?;
        f.sync_data().map_err(ctx)?;
    }
    fs::rename(&tmp, path).map_err(ctx)
}
