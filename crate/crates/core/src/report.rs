//! Report emission: estimator CSVs, `summary.json`, `timing.json`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::MCEstimate;

pub const ESTIMATOR_HEADER: &str = "scale,mean,stderr,n,censored";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub scale: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub censored: u64,
}

impl EstimatorRow {
    pub fn new(scale: f64, e: &MCEstimate) -> Self {
        Self { scale, mean: e.mean, stderr: e.stderr, n: e.n, censored: e.censored }
    }
}

pub fn estimator_csv(rows: &[EstimatorRow]) -> String {
    let mut s = String::from(ESTIMATOR_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", fmt_float(r.scale), fmt_float(r.mean), fmt_float(r.stderr), r.n, r.censored);
    }
    s
}

pub fn parse_estimator_csv(text: &str) -> Result<Vec<EstimatorRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == ESTIMATOR_HEADER => {}
        other => return Err(Error::Config(format!("expected header {ESTIMATOR_HEADER:?}, found {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Config(format!("row {}: expected 5 fields, found {}", i + 1, f.len())));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("row {}: {s:?}: {e}", i + 1)));
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Config(format!("row {}: {s:?}: {e}", i + 1)));
        let row = EstimatorRow { scale: real(f[0])?, mean: real(f[1])?, stderr: real(f[2])?, n: int(f[3])?, censored: int(f[4])? };
        if row.censored > row.n {
            return Err(Error::Config(format!("row {}: censored exceeds n", i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One output file besides the summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn estimator(name: &str, rows: &[EstimatorRow]) -> Self {
        Self { file: format!("{name}.csv"), bytes: estimator_csv(rows).into_bytes() }
    }

    pub fn json(name: &str, value: &impl Serialize) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
        bytes.push(b'\n');
        Self { file: format!("{name}.json"), bytes }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Stream family `(stream_seed, replica)` for `replica < replicas`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub task: String,
    pub stream_seed: String,
    pub replicas: u64,
}

impl StreamInfo {
    pub fn new(task: impl Into<String>, seed: u64, replicas: u64) -> Self {
        Self { task: task.into(), stream_seed: format!("{seed:016x}"), replicas }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub kind: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub streams: Vec<StreamInfo>,
    pub outputs: Vec<OutputFile>,
    pub results: serde_json::Value,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config_digest: String,
    pub csv_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub wall_clock_seconds: f64,
    pub master_seed: u64,
    pub streams: Vec<StreamInfo>,
}

/// Writes every artifact, then `summary.json` listing them with digests,
/// then `timing.json`. Only the last holds run-dependent values.
pub fn emit_report(dir: &Path, mut summary: Summary, artifacts: &[Artifact], wall_clock_seconds: f64) -> Result<RunReport> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, bytes: &[u8]| -> Result<PathBuf> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        f.write_all(bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    };
    let mut csv_paths = Vec::new();
    summary.outputs.clear();
    for a in artifacts {
        if a.file == SUMMARY_FILE || a.file == TIMING_FILE || a.file.contains(['/', '\\']) {
            return Err(Error::Io(format!("reserved or nested artifact name {:?}", a.file)));
        }
        let path = write(&a.file, &a.bytes)?;
        if a.file.ends_with(".csv") {
            csv_paths.push(path);
        }
        summary.outputs.push(OutputFile { file: a.file.clone(), sha256: sha256_hex(&a.bytes) });
    }
    let summary_path = write(SUMMARY_FILE, &Artifact::json("summary", &summary).bytes)?;
    let timing = serde_json::json!({ "wall_clock_seconds": wall_clock_seconds });
    write(TIMING_FILE, &Artifact::json("timing", &timing).bytes)?;
    Ok(RunReport {
        config_digest: summary.config_digest,
        csv_paths,
        summary_path,
        wall_clock_seconds,
        master_seed: summary.master_seed,
        streams: summary.streams,
    })
}

/// Re-reads a run directory, checks every listed digest and renders the
/// estimator tables as text.
pub fn render_report(dir: &Path) -> Result<String> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    let _ = writeln!(out, "kind: {}", summary.kind);
    let _ = writeln!(out, "config digest: {}", summary.config_digest);
    let _ = writeln!(out, "master seed: {}", summary.master_seed);
    for o in &summary.outputs {
        let p = dir.join(&o.file);
        let bytes = fs::read(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        if sha256_hex(&bytes) != o.sha256 {
            return Err(Error::Io(format!("{}: digest mismatch", o.file)));
        }
        let body = String::from_utf8_lossy(&bytes);
        if body.starts_with(ESTIMATOR_HEADER) {
            let rows = parse_estimator_csv(&body)?;
            let _ = writeln!(out, "\n{}", o.file);
            let _ = writeln!(out, "{:>14} {:>14} {:>12} {:>8} {:>8}", "scale", "mean", "stderr", "n", "censored");
            for r in rows {
                let _ = writeln!(out, "{:>14.6} {:>14.6e} {:>12.3e} {:>8} {:>8}", r.scale, r.mean, r.stderr, r.n, r.censored);
            }
        } else {
            let _ = writeln!(out, "\n{} ({} bytes, digest ok)", o.file, bytes.len());
        }
    }
    for w in &summary.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    Ok(out)
}
