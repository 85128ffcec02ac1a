//! Flat-file event logs: `{log_dir}/{session_id}.jsonl`, replaced atomically.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use costudy_core::event::{read_jsonl, write_jsonl, EventError, SessionEvent};

/// Session ids double as file names, so only a safe alphabet is accepted.
pub fn is_valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

pub fn persist(dir: &Path, session_id: &str, events: &[SessionEvent]) -> io::Result<PathBuf> {
    let mut bytes = Vec::new();
    write_jsonl(events, &mut bytes)?;
    let path = log_path(dir, session_id);
    write_atomic(&path, &bytes)?;
    Ok(path)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    write_atomic_with(path, bytes, || Ok(()))
}

/// Writes a sibling temp file, syncs it, runs `before_rename`, then renames
/// over `path`. If anything fails before the rename the old file is intact.
pub fn write_atomic_with(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> io::Result<()>,
) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    before_rename()?;
    fs::rename(&tmp, path)
}

pub fn load(dir: &Path, session_id: &str) -> Result<Vec<SessionEvent>, EventError> {
    let file = File::open(log_path(dir, session_id))?;
    read_jsonl(BufReader::new(file))
}

pub fn load_bytes(dir: &Path, session_id: &str) -> io::Result<Vec<u8>> {
    fs::read(log_path(dir, session_id))
}
