use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

/// Append-only JSONL transcript of every provider exchange.
#[derive(Debug)]
pub struct AuditLog {
    out: Mutex<BufWriter<File>>,
}

#[derive(Debug, Serialize)]
pub struct AuditEntry<'a> {
    pub prompt_hash: String,
    pub provider: &'a str,
    pub model: &'a str,
    pub prompt: &'a str,
    pub body: Option<&'a str>,
    pub error: Option<String>,
    pub attempts: u32,
    pub started_at: String,
    pub finished_at: String,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, entry: &AuditEntry<'_>) {
        let mut out = self.out.lock().expect("audit log poisoned");
        let line = serde_json::to_string(entry).expect("audit entry serializes");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            log::warn!("audit log write failed: {e}");
        }
    }
}
