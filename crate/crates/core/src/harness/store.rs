//! Append-only JSON-lines persistence for a run directory.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{FailureRecord, RunRecord};
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const RUN_META_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub config_hash: String,
    pub config: serde_json::Value,
}

pub fn read_run_meta(dir: &Path) -> Result<RunMeta> {
    let path = dir.join(RUN_META_FILE);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::validation(format!("no run at {}: {e}", dir.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the run metadata, or checks it against an existing run.
pub(crate) fn init_run_dir(dir: &Path, meta: &RunMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(RUN_META_FILE);
    if path.exists() {
        let existing = read_run_meta(dir)?;
        if existing.config_hash != meta.config_hash {
            return Err(Error::Config(format!(
                "run `{}` was created with config {} but the current config hashes to {}; use a new run id",
                meta.run_id, existing.config_hash, meta.config_hash
            )));
        }
        return Ok(());
    }
    let tmp = dir.join(format!("{RUN_META_FILE}.tmp"));
    std::fs::write(&tmp, serde_json::to_string_pretty(meta)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Drops a trailing line left without its newline by an interrupted write.
pub(crate) fn repair_trailing_line(path: &Path) -> Result<bool> {
    let Ok(mut file) = OpenOptions::new().read(true).write(true).open(path) else {
        return Ok(false);
    };
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(false);
    }
    let mut last = [0u8; 1];
    file.seek(SeekFrom::Start(len - 1))?;
    file.read_exact(&mut last)?;
    if last[0] == b'\n' {
        return Ok(false);
    }
    file.seek(SeekFrom::Start(0))?;
    let mut bytes = Vec::with_capacity(len as usize);
    file.read_to_end(&mut bytes)?;
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
    file.set_len(keep as u64)?;
    tracing::warn!(path = %path.display(), dropped_bytes = len - keep as u64, "dropped truncated trailing record");
    Ok(true)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut lines = BufReader::new(file).lines().enumerate().peekable();
    let mut out = Vec::new();
    while let Some((i, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            // an unterminated last line is an interrupted append
            Err(_) if lines.peek().is_none() => {
                tracing::warn!(path = %path.display(), line = i + 1, "ignoring unreadable trailing line");
            }
            Err(e) => {
                return Err(Error::validation(format!("{} line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(out)
}

pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    read_jsonl(&dir.join(RECORDS_FILE))
}

pub fn read_failures(dir: &Path) -> Result<Vec<FailureRecord>> {
    read_jsonl(&dir.join(FAILURES_FILE))
}

/// A line-at-a-time appender; every line is flushed before the next is accepted.
pub(crate) struct Appender {
    file: File,
}

impl Appender {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub(crate) fn append<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let mut line = serde_json::to_vec(value)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_and_tolerant_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        std::fs::write(&p, "{\"a\":1}\n{\"a\":2}\n{\"a\":").unwrap();
        let v: Vec<serde_json::Value> = read_jsonl(&p).unwrap();
        assert_eq!(v.len(), 2);
        assert!(repair_trailing_line(&p).unwrap());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "{\"a\":1}\n{\"a\":2}\n");
        assert!(!repair_trailing_line(&p).unwrap());

        std::fs::write(&p, "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        assert!(read_jsonl::<serde_json::Value>(&p).is_err());
        assert!(read_jsonl::<serde_json::Value>(&dir.path().join("missing"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn meta_mismatch_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let meta = RunMeta {
            run_id: "r".into(),
            config_hash: "aaa".into(),
            config: serde_json::json!({}),
        };
        init_run_dir(dir.path(), &meta).unwrap();
        init_run_dir(dir.path(), &meta).unwrap();
        let other = RunMeta {
            config_hash: "bbb".into(),
            ..meta
        };
        assert!(matches!(init_run_dir(dir.path(), &other), Err(Error::Config(_))));
    }
}
