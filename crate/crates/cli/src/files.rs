//! On-disk formats shared by the commands.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use iblab::detector::{latents_from_bytes, latents_to_bytes};
use iblab::rewardmodels::{checkpoint_bytes, model_from_checkpoint, CheckpointMeta, RewardModel};
use iblab::synthworld::{read_pairs_jsonl, write_pairs_jsonl, PreferencePair, ResponsePool, WorldConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Context};

pub const TRAIN_PAIRS: &str = "train.jsonl";
pub const EVAL_PAIRS: &str = "eval.jsonl";
pub const OOD_PAIRS: &str = "ood.jsonl";
pub const POOLS: &str = "pools.json";
pub const SFT_SAMPLES: &str = "sft_samples.jsonl";
pub const MODEL_BIN: &str = "model.bin";
pub const MODEL_META: &str = "model.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).ctx(path.display())?;
    Ok(sha256_hex(&bytes))
}

/// Hash that ties checkpoints and datasets to one world.
pub fn world_hash(world: &WorldConfig) -> String {
    sha256_hex(&serde_json::to_vec(world).expect("world config serializes"))
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!("missing input file {}", path.display())))
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).ctx(path.display())?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    require_file(path)?;
    let r = BufReader::new(File::open(path).ctx(path.display())?);
    serde_json::from_reader(r).ctx(path.display())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pairs(path: &Path, world: &WorldConfig, pairs: &[PreferencePair]) -> CliResult<()> {
    let mut w = create(path)?;
    write_pairs_jsonl(&mut w, world, pairs).ctx(path.display())?;
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> CliResult<(WorldConfig, Vec<PreferencePair>)> {
    require_file(path)?;
    let r = BufReader::new(File::open(path).ctx(path.display())?);
    read_pairs_jsonl(r).ctx(path.display())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolsFile {
    pub world_config: WorldConfig,
    pub train: Vec<ResponsePool>,
    pub eval: Vec<ResponsePool>,
    pub ood: Vec<ResponsePool>,
}

/// One sampled response per JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub prompt_id: usize,
    pub features: Vec<f64>,
}

pub fn write_responses(path: &Path, responses: &[Response]) -> CliResult<()> {
    let mut w = create(path)?;
    for r in responses {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_responses(path: &Path) -> CliResult<Vec<Response>> {
    require_file(path)?;
    let r = BufReader::new(File::open(path).ctx(path.display())?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).ctx(format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LatentFormat {
    Iblat,
    Csv,
}

impl LatentFormat {
    pub fn extension(self) -> &'static str {
        match self {
            LatentFormat::Iblat => "iblat",
            LatentFormat::Csv => "csv",
        }
    }
}

pub fn write_latents(path: &Path, rows: &[Vec<f64>], format: LatentFormat) -> CliResult<()> {
    match format {
        LatentFormat::Iblat => {
            std::fs::write(path, latents_to_bytes(rows)?).ctx(path.display())?;
        }
        LatentFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(path)?);
            let dim = rows.first().map_or(0, Vec::len);
            w.write_record((0..dim).map(|j| format!("z{j}")))?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_latents(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    require_file(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        let mut r = csv::Reader::from_path(path).ctx(path.display())?;
        let rows = r.deserialize().collect::<Result<Vec<Vec<f64>>, _>>().ctx(path.display())?;
        Ok(rows)
    } else {
        let bytes = std::fs::read(path).ctx(path.display())?;
        latents_from_bytes(&bytes).ctx(path.display())
    }
}

/// Writes `model.bin` and `model.json` into `dir`.
pub fn write_checkpoint(dir: &Path, model: &RewardModel, world: &WorldConfig) -> CliResult<()> {
    let (bytes, meta) = checkpoint_bytes(model, &world_hash(world));
    std::fs::write(dir.join(MODEL_BIN), bytes)?;
    write_json(&dir.join(MODEL_META), &meta)
}

/// Checkpoint directory, or the path of its `model.bin`.
pub fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

pub fn read_checkpoint(path: &Path) -> CliResult<(RewardModel, CheckpointMeta)> {
    let dir = checkpoint_dir(path);
    let bin = dir.join(MODEL_BIN);
    require_file(&bin)?;
    let meta: CheckpointMeta = read_json(&dir.join(MODEL_META))?;
    let bytes = std::fs::read(&bin).ctx(bin.display())?;
    let model = model_from_checkpoint(&bytes, &meta).ctx(bin.display())?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec![0.1, -2.5, 1e-300], vec![3.0, 0.0, -0.3333333333333333]];
        for f in [LatentFormat::Csv, LatentFormat::Iblat] {
            let p = dir.path().join(format!("z.{}", f.extension()));
            write_latents(&p, &rows, f).unwrap();
            assert_eq!(read_latents(&p).unwrap(), rows);
        }
    }

    #[test]
    fn responses_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let rs = vec![Response { prompt_id: 3, features: vec![0.1, 0.2] }, Response { prompt_id: 0, features: vec![] }];
        write_responses(&p, &rs).unwrap();
        assert_eq!(read_responses(&p).unwrap(), rs);
    }

    #[test]
    fn missing_file_is_input_error() {
        let err = read_latents(Path::new("/nonexistent/z.iblat")).unwrap_err();
        assert_eq!(err.code, crate::error::EXIT_INPUT);
    }
}
