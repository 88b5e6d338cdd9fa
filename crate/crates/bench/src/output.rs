//! Run directories. An existing directory is never written into again: the
//! next free `name.1`, `name.2`, ... is used instead.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{BenchError, Result};

pub fn versioned_dir(requested: &Path) -> Result<PathBuf> {
    let mut candidate = requested.to_path_buf();
    let mut k = 0;
    while candidate.exists() {
        k += 1;
        let mut name = requested.as_os_str().to_os_string();
        name.push(format!(".{k}"));
        candidate = PathBuf::from(name);
    }
    std::fs::create_dir_all(&candidate).map_err(|e| BenchError::io(&candidate, e))?;
    Ok(candidate)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_text(path, &text)
}
