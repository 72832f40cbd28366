//! Line-delimited JSON pool files.
//!
//! The first line is a [`PoolHeader`]; every following line is one
//! [`ExperienceEntry`], agents ascending and insertion order within an agent.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use mael_core::{ExperienceEntry, ExperienceStore, StoreError};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolHeader {
    pub schema_version: u32,
    pub embedding_dim: usize,
    pub provider_tag: String,
    pub alpha_default: f64,
    /// Number of entry lines that follow. Lets a reader detect truncation.
    pub entry_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn header_of(store: &ExperienceStore) -> PoolHeader {
    PoolHeader {
        schema_version: SCHEMA_VERSION,
        embedding_dim: store.dimension(),
        provider_tag: store.provider_tag().to_string(),
        alpha_default: store.alpha_default(),
        entry_count: store.len(),
    }
}

pub fn write_store(store: &ExperienceStore, out: &mut impl Write) -> io::Result<()> {
    serde_json::to_writer(&mut *out, &header_of(store))?;
    out.write_all(b"\n")?;
    for entry in store.entries() {
        serde_json::to_writer(&mut *out, entry)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a half-written pool.
pub fn save_store(store: &ExperienceStore, path: &Path) -> Result<(), PersistError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = io::BufWriter::new(fs::File::create(&tmp).map_err(io_err(&tmp))?);
        write_store(store, &mut file).map_err(io_err(&tmp))?;
        file.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_store(input: impl BufRead, path: &Path) -> Result<ExperienceStore, PersistError> {
    let schema = |reason: String| PersistError::Schema {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| schema("empty file, missing header".into()))?
        .map_err(io_err(path))?;
    let header: PoolHeader =
        serde_json::from_str(&first).map_err(|e| schema(format!("bad header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(schema(format!(
            "schema version {} is not supported (expected {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut store = ExperienceStore::new(header.embedding_dim, header.provider_tag.clone())
        .with_alpha_default(header.alpha_default);
    let mut seen = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ExperienceEntry =
            serde_json::from_str(&line).map_err(|e| schema(format!("line {}: {e}", i + 2)))?;
        store
            .insert(entry)
            .map_err(|e: StoreError| schema(format!("line {}: {e}", i + 2)))?;
        seen += 1;
    }
    if seen != header.entry_count {
        return Err(schema(format!(
            "header declares {} entries but the file holds {seen} (truncated?)",
            header.entry_count
        )));
    }
    Ok(store)
}

pub fn load_store(path: &Path) -> Result<ExperienceStore, PersistError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_store(BufReader::new(file), path)
}
