//! CSV emission: versioned `#` manifest header, fixed float rendering,
//! atomic write-temp-then-rename.

use crate::config::fmt_f64;
use anyhow::{Context, Result};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: &str = "zp-afdm-csv v1";

pub struct CsvDoc {
    header: String,
    columns: &'static [&'static str],
    rows: Vec<Vec<String>>,
    footer: Vec<String>,
}

impl CsvDoc {
    /// `manifest` holds pre-formatted `# key = value` lines.
    pub fn new(
        columns: &'static [&'static str],
        manifest: &str,
        tool_version: &str,
        timestamp_unix: u64,
    ) -> Self {
        let mut header = String::new();
        header.push_str(&format!("# schema = {SCHEMA_VERSION}\n"));
        header.push_str(&format!("# tool_version = {tool_version}\n"));
        header.push_str(&format!("# generated_unix = {timestamp_unix}\n"));
        header.push_str(manifest);
        Self { header, columns, rows: Vec::new(), footer: Vec::new() }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row arity mismatch");
        self.rows.push(cells);
    }

    /// Adds a trailing `# key = value` comment line after the data rows.
    pub fn push_footer(&mut self, key: &str, value: String) {
        self.footer.push(format!("# {key} = {value}"));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        for line in &self.footer {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Writes atomically: the target path either keeps its previous content
    /// or holds the complete new file, never a partial one.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
        }
        let tmp: PathBuf = path.with_extension("csv.tmp");
        std::fs::write(&tmp, self.render())
            .with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, path)
            .with_context(|| format!("renaming into {}", path.display()))?;
        Ok(())
    }
}

pub fn cell(v: f64) -> String {
    fmt_f64(v)
}
