//! Output sinks and schema headers.
//!
//! CSV files start with a `# schema: rcurrent.<command>/1` comment line; JSON documents carry a
//! top-level `"schema"` key. Column orders are part of the schema.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub fn schema(command: &str) -> String {
    format!("rcurrent.{command}/{SCHEMA_VERSION}")
}

pub struct Sink {
    inner: Box<dyn Write>,
    path: Option<std::path::PathBuf>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Self { inner, path: path.map(Path::to_path_buf) })
    }

    fn err(&self, e: io::Error) -> CliError {
        CliError::Io(self.path.clone().unwrap_or_else(|| "<stdout>".into()), e)
    }

    pub fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.inner, "{s}").map_err(|e| self.err(e))
    }

    /// Schema comment followed by the column header.
    pub fn csv_header(&mut self, command: &str, columns: &str) -> Result<(), CliError> {
        self.line(&format!("# schema: {}", schema(command)))?;
        self.line(columns)
    }

    pub fn json(&mut self, value: &serde_json::Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        self.line(&text)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(|e| self.err(e))
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut sink = Sink::open(Some(path))?;
    sink.json(value)?;
    sink.finish()
}

/// Shortest round-trip representation, so outputs are byte-stable.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
