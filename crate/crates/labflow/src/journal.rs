//! Append-only command journal: one JSON-encoded [`Command`] per line,
//! synced to disk before the call that produced it returns.
//!
//! Only the final line may be incomplete (a crash mid-write). It is cut off
//! on open. Any other unreadable line means the directory is corrupt.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use labflow_core::Command;
use thiserror::Error;

pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("data directory {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("data directory {path} is in use by another process")]
    Locked { path: PathBuf },
    #[error("corrupt data directory {path}: line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug)]
pub struct Journal {
    file: File,
    path: PathBuf,
}

impl Journal {
    /// Opens (creating if needed) the journal in `dir`, returning it with the
    /// commands recorded so far. The file stays locked while the journal lives.
    pub fn open(dir: &Path) -> Result<(Self, Vec<Command>), JournalError> {
        let path = dir.join(JOURNAL_FILE);
        let io_err = |source| JournalError::Io { path: path.clone(), source };
        fs::create_dir_all(dir).map_err(io_err)?;
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;
        match file.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(JournalError::Locked { path }),
            Err(TryLockError::Error(e)) => return Err(io_err(e)),
        }

        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err)?;
        let mut commands = Vec::new();
        let mut good_len = 0;
        let mut rest = &bytes[..];
        let mut line_no = 0;
        while !rest.is_empty() {
            line_no += 1;
            let Some(end) = rest.iter().position(|&b| b == b'\n') else {
                // Torn tail from an interrupted append.
                tracing::warn!(path = %path.display(), line = line_no, "dropping incomplete journal line");
                file.set_len(good_len as u64).map_err(io_err)?;
                break;
            };
            let line = &rest[..end];
            let command = serde_json::from_slice(line).map_err(|e| JournalError::Corrupt {
                path: path.clone(),
                line: line_no,
                reason: e.to_string(),
            })?;
            commands.push(command);
            good_len += end + 1;
            rest = &rest[end + 1..];
        }
        Ok((Self { file, path }, commands))
    }

    pub fn append(&mut self, command: &Command) -> io::Result<()> {
        let mut line = serde_json::to_vec(command).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
