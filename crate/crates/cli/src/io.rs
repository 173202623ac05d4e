//! Input discovery, output sinks and the batch runner.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CSV file.
    #[arg(long, value_name = "PATH", conflicts_with = "input_dir", required_unless_present = "input_dir")]
    pub input: Option<PathBuf>,
    /// Directory of CSV files; one JSON line is emitted per file.
    #[arg(long, value_name = "DIR")]
    pub input_dir: Option<PathBuf>,
    /// Input cascades carry a `magnitude` column.
    #[arg(long)]
    pub marks: bool,
    /// Worker threads for batch mode (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Where the main output goes.
pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Summaries go to stdout when the data went to a file, else to stderr.
pub fn summary(out: Option<&Path>, value: &Value) -> Result<()> {
    let line = serde_json::to_string(value)?;
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

pub fn write_json(out: Option<&Path>, value: &Value) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Runs `job` on the single input or on every CSV in the input directory.
/// Single inputs are written as pretty JSON; batches as one compact line per
/// file, in file-name order, with failures reported inline.
pub fn run_inputs<F>(inputs: &InputArgs, out: Option<&Path>, job: F) -> Result<()>
where
    F: Fn(&Path) -> Result<Value> + Sync,
{
    if let Some(path) = &inputs.input {
        let value = job(path)?;
        return write_json(out, &value);
    }
    let dir = inputs.input_dir.as_deref().expect("clap requires an input");
    let files = csv_files(dir)?;
    if files.is_empty() {
        bail!("no CSV files in {}", dir.display());
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = inputs.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let results: Vec<(PathBuf, Result<Value>)> =
        pool.install(|| files.par_iter().map(|f| (f.clone(), job(f))).collect());

    let mut w = sink(out)?;
    let mut failed = 0;
    for (path, result) in results {
        let line = match result {
            Ok(Value::Object(mut obj)) => {
                obj.insert("input".into(), json!(path.display().to_string()));
                Value::Object(obj)
            }
            Ok(other) => json!({ "input": path.display().to_string(), "result": other }),
            Err(e) => {
                failed += 1;
                log::error!("{}: {e:#}", path.display());
                json!({ "input": path.display().to_string(), "error": format!("{e:#}") })
            }
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    w.flush()?;
    if failed > 0 {
        bail!("{failed} of the inputs failed");
    }
    Ok(())
}
