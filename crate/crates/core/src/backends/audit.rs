use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::Result;

/// One JSON line per request/response pair. Cloning shares the same sink.
#[derive(Clone)]
pub struct AuditLog {
    sink: Arc<Mutex<BufWriter<File>>>,
}

#[derive(Debug, Serialize)]
pub struct AuditEntry<'a> {
    pub request_id: &'a str,
    pub backend: &'a str,
    pub endpoint: &'a str,
    pub attempt: u32,
    pub request: &'a serde_json::Value,
    pub status: Option<u16>,
    pub response: Option<&'a str>,
    pub error: Option<&'a str>,
    pub latency_ms: f64,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sink: Arc::new(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn write(&self, entry: &AuditEntry<'_>) {
        let Ok(line) = serde_json::to_string(entry) else {
            return;
        };
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        if writeln!(sink, "{line}").and_then(|_| sink.flush()).is_err() {
            tracing::warn!("failed to write audit log entry");
        }
    }
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditLog").finish_non_exhaustive()
    }
}
