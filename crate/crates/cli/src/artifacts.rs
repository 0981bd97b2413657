//! Output files. Everything is rendered in memory first and only written
//! once the experiment has succeeded, each file through a temporary file in
//! the target directory followed by a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = concat!("macrocollapse ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub config_sha256: String,
}

/// Rows of a CSV table. Cells are preformatted so that floats use the
/// shortest round-trip decimal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Format a float for output. `Display` for `f64` is the shortest string
/// that parses back to the same value.
pub fn num(x: f64) -> String {
    x.to_string()
}

#[derive(Clone, Debug, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn csv(&mut self, name: &str, meta: &Meta, table: &Table) -> Result<(), CliError> {
        let mut out = format!(
            "# {} experiment={} seed={} config_sha256={}\n",
            meta.version, meta.experiment, meta.seed, meta.config_sha256
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&table.header)?;
            for row in &table.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        self.files.push((name.to_string(), out));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, meta: &Meta, report: &T) -> Result<(), CliError> {
        let doc = serde_json::json!({ "meta": meta, "report": report });
        let mut out = serde_json::to_vec_pretty(&doc)?;
        out.push(b'\n');
        self.files.push((name.to_string(), out));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Write every file into `dir`, each atomically.
    pub fn commit(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let dest = dir.join(name);
            let mut tmp = tempfile::Builder::new().prefix(".macrocollapse-").tempfile_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&dest).map_err(|e| CliError::Io(e.error))?;
            written.push(dest);
        }
        Ok(written)
    }
}
