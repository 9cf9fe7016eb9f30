//! On-disk record store: `records.jsonl` (one record per line) plus
//! `ledger.json`, with an advisory lock so one command runs at a time.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{BibRecord, PrismaLedger, RecordSet};
use crate::themes::ThemeTaxonomy;

const RECORDS: &str = "records.jsonl";
const LEDGER: &str = "ledger.json";
const TAXONOMY: &str = "taxonomy.csv";
const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {0} is locked by another command (remove .lock if stale)")]
    Locked(PathBuf),
    #[error("store {0} has no records; run ingest first")]
    Missing(PathBuf),
    #[error("{file} line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Held while a command owns the store; removes the lock file on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl Store {
    /// Opens (creating if needed) the store directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Store { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn exists(&self) -> bool {
        self.dir.join(RECORDS).exists()
    }

    pub fn lock(&self) -> Result<StoreLock, StoreError> {
        let path = self.dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked(self.dir.clone())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn load(&self) -> Result<RecordSet, StoreError> {
        let path = self.dir.join(RECORDS);
        if !path.exists() {
            return Err(StoreError::Missing(self.dir.clone()));
        }
        let mut records: Vec<BibRecord> = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                file: RECORDS.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        let mut set = RecordSet::new(records).map_err(|e| StoreError::Corrupt {
            file: RECORDS.into(),
            line: 0,
            message: e.to_string(),
        })?;
        let ledger_path = self.dir.join(LEDGER);
        if ledger_path.exists() {
            let ledger: PrismaLedger =
                serde_json::from_str(&fs::read_to_string(&ledger_path)?).map_err(|e| StoreError::Corrupt {
                    file: LEDGER.into(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
            set.ledger = ledger;
        }
        Ok(set)
    }

    /// Replaces the stored records and ledger. Each file is written to a
    /// temporary name and renamed, so an interrupted save leaves the old copy.
    pub fn save(&self, set: &RecordSet) -> Result<(), StoreError> {
        write_atomic(&self.dir.join(RECORDS), records_jsonl(set).as_bytes())?;
        let ledger = serde_json::to_string_pretty(&set.ledger).expect("ledger serializes") + "\n";
        write_atomic(&self.dir.join(LEDGER), ledger.as_bytes())?;
        Ok(())
    }

    /// SHA-256 over the records and ledger files as stored.
    pub fn hash(&self) -> Result<String, StoreError> {
        let mut bytes = fs::read(self.dir.join(RECORDS))?;
        if let Ok(ledger) = fs::read(self.dir.join(LEDGER)) {
            bytes.extend(ledger);
        }
        Ok(crate::sha256_hex(bytes))
    }

    /// The active taxonomy: the imported one if present, else the bundled one.
    pub fn taxonomy(&self) -> Result<ThemeTaxonomy, StoreError> {
        let path = self.dir.join(TAXONOMY);
        if !path.exists() {
            return Ok(ThemeTaxonomy::bundled());
        }
        ThemeTaxonomy::from_csv(File::open(&path)?).map_err(|e| StoreError::Corrupt {
            file: TAXONOMY.into(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn save_taxonomy(&self, taxonomy: &ThemeTaxonomy) -> Result<(), StoreError> {
        write_atomic(&self.dir.join(TAXONOMY), taxonomy.to_csv().as_bytes())?;
        Ok(())
    }
}

/// The records as JSONL, one line each, in store order.
pub fn records_jsonl(set: &RecordSet) -> String {
    let mut out = String::new();
    for r in &set.records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.load(), Err(StoreError::Missing(_))));
        let mut r = BibRecord::new("r1");
        r.title = Some("A title".into());
        let set = RecordSet::new(vec![r, BibRecord::new("r2")]).unwrap();
        store.save(&set).unwrap();
        assert_eq!(store.load().unwrap(), set);
        let h = store.hash().unwrap();
        store.save(&store.load().unwrap()).unwrap();
        assert_eq!(store.hash().unwrap(), h);
    }

    #[test]
    fn second_lock_fails_until_released() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let guard = store.lock().unwrap();
        assert!(matches!(store.lock(), Err(StoreError::Locked(_))));
        drop(guard);
        assert!(store.lock().is_ok());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let line = serde_json::to_string(&BibRecord::new("x")).unwrap();
        fs::write(dir.path().join(RECORDS), format!("{line}\n{line}\n")).unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.load(), Err(StoreError::Corrupt { .. })));
    }
}
