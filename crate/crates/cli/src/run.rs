use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use ssc_core::format::fmt_f64;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    config: &'a Value,
    seeds: &'a [u64],
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
    started_unix_seconds: f64,
    elapsed_seconds: f64,
    details: &'a Map<String, Value>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// One invocation's output directory and manifest.
///
/// The manifest is written as soon as the run starts, flagged incomplete,
/// and rewritten by [`Run::close`]. A run that dies in between leaves the
/// incomplete marker on disk.
pub struct Run {
    command: &'static str,
    out: PathBuf,
    config: Value,
    seeds: Vec<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    details: Map<String, Value>,
    started_unix: f64,
    clock: Instant,
}

impl Run {
    pub fn start(
        command: &'static str,
        out: &Path,
        config: &impl Serialize,
        seeds: Vec<u64>,
        inputs: &[&Path],
    ) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let run = Self {
            command,
            out: out.to_path_buf(),
            config: serde_json::to_value(config).expect("configs serialize"),
            seeds,
            inputs,
            outputs: Vec::new(),
            details: Map::new(),
            started_unix,
            clock: Instant::now(),
        };
        run.write_manifest(false, None)?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn detail(&mut self, key: &str, value: impl Into<Value>) {
        self.details.insert(key.to_string(), value.into());
    }

    /// Registers a file already written under the output directory.
    pub fn record(&mut self, name: &str) -> CliResult<()> {
        let sha256 = sha256_file(&self.path(name))?;
        self.outputs.retain(|d| d.path != name);
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn csv_writer(&self, name: &str) -> CliResult<csv::Writer<BufWriter<File>>> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        Ok(csv::Writer::from_writer(BufWriter::new(file)))
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut wtr = self.csv_writer(name)?;
        wtr.write_record(header)?;
        for row in rows {
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| CliError::io(name, e))?;
        drop(wtr);
        self.record(name)
    }

    pub fn write_long(&mut self, table: &LongTable) -> CliResult<()> {
        let rows = table
            .rows
            .iter()
            .map(|(t, series, v)| vec![fmt_f64(*t), series.clone(), fmt_f64(*v)]);
        self.write_csv("plot.csv", &["t", "series", "value"], rows)
    }

    pub fn close<T>(self, result: CliResult<T>) -> CliResult<T> {
        let error = result.as_ref().err().map(ToString::to_string);
        self.write_manifest(result.is_ok(), error.as_deref())?;
        result
    }

    fn write_manifest(&self, complete: bool, error: Option<&str>) -> CliResult<()> {
        let manifest = Manifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            complete,
            error,
            config: &self.config,
            seeds: &self.seeds,
            inputs: &self.inputs,
            outputs: &self.outputs,
            started_unix_seconds: self.started_unix,
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
            details: &self.details,
        };
        let path = self.path(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let mut file = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        file.write_all(text.as_bytes()).map_err(|e| CliError::io(path.display(), e))
    }
}

/// Plot-ready rows `(t, series, value)`.
#[derive(Default)]
pub struct LongTable {
    rows: Vec<(f64, String, f64)>,
}

impl LongTable {
    pub fn series(&mut self, name: &str, t: &[f64], values: &[f64]) {
        self.rows
            .extend(t.iter().zip(values).map(|(&t, &v)| (t, name.to_string(), v)));
    }
}
