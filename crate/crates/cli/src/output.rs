//! Versioned CSV and JSON writers. Every file starts with (CSV) or contains
//! (JSON) the schema version and the configuration hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest round-trip representation, always in exponent form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    config_hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    config_hash: &'a str,
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl OutputDir {
    pub fn create(root: &Path, config_hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), config_hash: config_hash.to_string() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// LF-terminated rows below a `# schema_version=… config_hash=…` line.
    pub fn write_csv<I>(&self, name: &str, columns: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut text = format!("# schema_version={SCHEMA_VERSION} config_hash={}\n", self.config_hash);
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.write(name, &text)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, command: &str, body: &T) -> Result<PathBuf, CliError> {
        let envelope = Envelope {
            schema_version: SCHEMA_VERSION,
            config_hash: &self.config_hash,
            command,
            version: env!("CARGO_PKG_VERSION"),
            body,
        };
        let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Parse(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        self.write(name, text)
    }
}
