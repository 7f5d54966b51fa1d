//! File writing with provenance headers.
//!
//! Every CSV starts with `#` comment lines naming the build, the master seed and
//! the resolved settings; every JSON document carries the same three fields.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vdeffuant::scalar::{format_decimal, format_fraction};
use vdeffuant::{Rational, Scalar};

use crate::config::Settings;
use crate::error::CliError;

pub fn version() -> &'static str {
    env!("VDEFFUANT_VERSION")
}

#[derive(Clone, Debug)]
pub struct Provenance {
    pub seed: u64,
    /// Echo of the settings; the output directory is left out so reruns elsewhere compare equal.
    pub settings: Settings,
}

impl Provenance {
    pub fn new(seed: u64, settings: &Settings) -> Self {
        let mut settings = settings.clone();
        settings.out = None;
        Self { seed, settings }
    }

    pub fn write_csv_header<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# version: {}", version())?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# config: {}", self.settings.to_json())
    }

    /// `body` with `version`, `seed` and `config` added.
    pub fn wrap_json(&self, body: Value) -> Value {
        let mut doc = json!({
            "version": version(),
            "seed": self.seed,
            "config": serde_json::to_value(&self.settings).expect("settings serialise"),
        });
        if let (Value::Object(doc), Value::Object(body)) = (&mut doc, body) {
            doc.extend(body);
        }
        doc
    }
}

/// Where a command puts its files: a directory, or stdout for the main table.
#[derive(Clone, Debug)]
pub struct Destination {
    dir: Option<PathBuf>,
}

impl Destination {
    pub fn new(dir: Option<&Path>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Writes `name` inside the directory, or to stdout without one.
    pub fn write_main(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), fill),
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                fill(&mut lock).and_then(|()| lock.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
            }
        }
    }

    /// Writes an auxiliary file; these need a directory.
    pub fn write_aux(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), fill),
            None => Err(CliError::Usage(format!("writing {name} needs --out DIR"))),
        }
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }
}

pub fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<W: Write + ?Sized>(out: &mut W, value: &Value) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

/// Float cell: 15 significant digits, `nan` for undefined.
pub fn dec(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format_decimal(x)
    }
}

/// Exact cell followed by its decimal cell.
pub fn exact_pair(q: &Rational) -> (String, String) {
    (format_fraction(q), format_decimal(q.to_f64()))
}
