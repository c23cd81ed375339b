//! Run manifests and replay.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, EXIT_DIVERGED};
use crate::files::{self, sha256_file};
use crate::jobs::Job;

pub const MANIFEST: &str = "manifest.json";
pub const REPLAY_REPORT: &str = "replay.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub job: Job,
    pub out_dir: PathBuf,
    /// Absolute input paths.
    pub inputs: Vec<FileHash>,
    /// Output paths relative to `out_dir`.
    pub outputs: Vec<FileHash>,
    pub wall_clock_secs: f64,
    pub exit_code: u8,
}

fn hash_all(paths: impl IntoIterator<Item = PathBuf>) -> CliResult<Vec<FileHash>> {
    paths
        .into_iter()
        .map(|p| {
            files::require_file(&p)?;
            Ok(FileHash { sha256: sha256_file(&p)?, path: p })
        })
        .collect()
}

/// Runs `job` into `out` and writes its manifest. A run that recorded a
/// divergence still gets a manifest, with exit code 3.
pub fn record(job: &Job, out: &Path) -> CliResult<Manifest> {
    let inputs = hash_all(job.inputs())?;
    let start = Instant::now();
    let outcome = job.execute(out)?;
    let wall_clock_secs = start.elapsed().as_secs_f64();
    let mut outputs = Vec::with_capacity(outcome.outputs.len());
    for name in &outcome.outputs {
        outputs.push(FileHash { path: PathBuf::from(name), sha256: sha256_file(&out.join(name))? });
    }
    let m = Manifest {
        schema_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: job.name().to_string(),
        seed: job.seed(),
        job: job.clone(),
        out_dir: out.to_path_buf(),
        inputs,
        outputs,
        wall_clock_secs,
        exit_code: if outcome.diverged.is_some() { EXIT_DIVERGED } else { 0 },
    };
    files::write_json(&out.join(MANIFEST), &m)?;
    match outcome.diverged {
        Some(msg) => Err(CliError::diverged(msg)),
        None => Ok(m),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayFile {
    pub path: PathBuf,
    pub expected: Option<String>,
    pub actual: Option<String>,
    pub identical: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub source: PathBuf,
    pub identical: bool,
    pub files: Vec<ReplayFile>,
}

fn compare(expected: &[FileHash], actual: &[FileHash]) -> Vec<ReplayFile> {
    let mut names: Vec<&PathBuf> = expected.iter().chain(actual).map(|f| &f.path).collect();
    names.sort();
    names.dedup();
    let find = |set: &[FileHash], p: &PathBuf| set.iter().find(|f| &f.path == p).map(|f| f.sha256.clone());
    names
        .into_iter()
        .map(|p| {
            let (e, a) = (find(expected, p), find(actual, p));
            ReplayFile { path: p.clone(), identical: e.is_some() && e == a, expected: e, actual: a }
        })
        .collect()
}

/// Reruns a recorded job into `out` (default: `<out_dir>.replay`) and
/// compares every output hash with the manifest.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>) -> CliResult<ReplayReport> {
    let m: Manifest = files::read_json(manifest_path)?;
    for f in &m.inputs {
        files::require_file(&f.path)?;
        if sha256_file(&f.path)? != f.sha256 {
            return Err(CliError::input(format!("input {} changed since the recorded run", f.path.display())));
        }
    }
    let out = out.unwrap_or_else(|| {
        let mut s = m.out_dir.clone().into_os_string();
        s.push(".replay");
        PathBuf::from(s)
    });
    if out == m.out_dir {
        return Err(CliError::input("replay output directory must differ from the recorded one"));
    }
    let actual = match record(&m.job, &out) {
        Ok(new) => new.outputs,
        Err(e) if e.code == EXIT_DIVERGED && m.exit_code == EXIT_DIVERGED => {
            let fresh: Manifest = files::read_json(&out.join(MANIFEST))?;
            fresh.outputs
        }
        Err(e) => return Err(e),
    };
    let files = compare(&m.outputs, &actual);
    let report = ReplayReport { source: manifest_path.to_path_buf(), identical: files.iter().all(|f| f.identical), files };
    files::write_json(&out.join(REPLAY_REPORT), &report)?;
    if !report.identical {
        let bad: Vec<String> = report.files.iter().filter(|f| !f.identical).map(|f| f.path.display().to_string()).collect();
        return Err(CliError::mismatch(format!("replay differs in {}", bad.join(", "))));
    }
    Ok(report)
}
