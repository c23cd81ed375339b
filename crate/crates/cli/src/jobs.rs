//! Fully resolved command configurations and their execution.
//!
//! A [`Job`] carries every value a command depends on, with absolute input
//! paths, so the manifest copy of it is enough to rerun the command.

use std::path::{Path, PathBuf};

use iblab::detector::{detect, fit_sft_stats, DEFAULT_ALPHA, DEFAULT_FILTER_QUANTILE};
use iblab::numkit::DEFAULT_SHRINKAGE;
use iblab::pessimism::{verification_report, DEFAULT_B};
use iblab::pipeline::{build_dataset, rl_setup, run, train_model, ExperimentConfig};
use iblab::rewardmodels::{
    extract_latents, mean_bt_loss, pairwise_accuracy, RewardModel, RmKind, TrainConfig, DEFAULT_BETA, DEFAULT_LATENT_DIM,
};
use iblab::rlsim::{eval_sample_indices, sft_sample_indices, RlConfig, RlRunRecord, Regularizer, StopReason};
use iblab::synthworld::{ResponsePool, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};
use crate::files::{self, LatentFormat, PoolsFile, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Job {
    GenData(GenDataJob),
    TrainRm(TrainRmJob),
    EvalRm(EvalRmJob),
    Detect(DetectJob),
    RlRun(RlRunJob),
    PessimismCheck(PessimismJob),
    Sweep(SweepJob),
}

/// Files written by a job, relative to its output directory, and whether a
/// numeric divergence was recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub diverged: Option<String>,
}

impl Outcome {
    fn ok(outputs: &[&str]) -> Self {
        Outcome { outputs: outputs.iter().map(|s| s.to_string()).collect(), diverged: None }
    }
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::GenData(_) => "gen-data",
            Job::TrainRm(_) => "train-rm",
            Job::EvalRm(_) => "eval-rm",
            Job::Detect(_) => "detect",
            Job::RlRun(_) => "rl-run",
            Job::PessimismCheck(_) => "pessimism-check",
            Job::Sweep(_) => "sweep",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::GenData(j) => Some(j.seed),
            Job::TrainRm(j) => Some(j.settings.train.seed),
            Job::RlRun(j) => Some(j.settings.rl.seed),
            Job::PessimismCheck(_) => Some(0),
            Job::Sweep(j) => j.seeds.first().copied(),
            Job::EvalRm(_) | Job::Detect(_) => None,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Job::GenData(_) | Job::PessimismCheck(_) | Job::Sweep(_) => vec![],
            Job::TrainRm(j) => vec![j.data.join(files::TRAIN_PAIRS)],
            Job::EvalRm(j) => {
                let mut v = checkpoint_files(&j.checkpoint);
                v.push(j.data.join(j.split.file()));
                v
            }
            Job::Detect(j) => {
                let mut v = checkpoint_files(&j.detector);
                v.push(j.sft.clone());
                v.push(j.rlhf.clone());
                v
            }
            Job::RlRun(j) => {
                let mut v = checkpoint_files(&j.rm);
                v.extend(checkpoint_files(&j.detector));
                v.push(j.data.join(files::POOLS));
                v
            }
        }
    }

    pub fn execute(&self, out: &Path) -> CliResult<Outcome> {
        std::fs::create_dir_all(out).ctx(out.display())?;
        match self {
            Job::GenData(j) => j.execute(out),
            Job::TrainRm(j) => j.execute(out),
            Job::EvalRm(j) => j.execute(out),
            Job::Detect(j) => j.execute(out),
            Job::RlRun(j) => j.execute(out),
            Job::PessimismCheck(j) => j.execute(out),
            Job::Sweep(j) => j.execute(out),
        }
    }
}

fn checkpoint_files(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join(files::MODEL_BIN), dir.join(files::MODEL_META)]
}

fn check_world(meta_hash: &str, world: &WorldConfig, what: &str) -> CliResult<()> {
    if meta_hash != files::world_hash(world) {
        return Err(CliError::input(format!("{what} was trained on a different world than the dataset")));
    }
    Ok(())
}

// gen-data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataJob {
    /// Seeds the world; the default world and every stream derive from it.
    pub seed: u64,
    pub n_train_pairs: usize,
    pub n_eval_pairs: usize,
    /// SFT responses exported for detection.
    pub n_sft_samples: usize,
    pub world: WorldConfig,
}

impl GenDataJob {
    pub fn defaults(seed: u64) -> Self {
        let exp = ExperimentConfig::default_for_seed(seed);
        GenDataJob {
            seed,
            n_train_pairs: exp.n_train_pairs,
            n_eval_pairs: exp.n_eval_pairs,
            n_sft_samples: exp.n_sft_samples,
            world: exp.world,
        }
    }

    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        if self.world.pool_size < 2 {
            return Err(CliError::input("world.pool_size must be at least 2: a preference pair needs two candidates"));
        }
        let exp = ExperimentConfig {
            world: self.world.clone(),
            n_train_pairs: self.n_train_pairs,
            n_eval_pairs: self.n_eval_pairs,
            ..ExperimentConfig::default_for_seed(self.seed)
        };
        let ds = build_dataset(&exp)?;
        let w = &self.world;
        files::write_pairs(&out.join(files::TRAIN_PAIRS), w, &ds.train_pairs)?;
        files::write_pairs(&out.join(files::EVAL_PAIRS), w, &ds.eval_pairs)?;
        files::write_pairs(&out.join(files::OOD_PAIRS), w, &ds.ood_pairs)?;
        let sft = sft_sample_indices(w, &ds.train_pools, self.n_sft_samples, self.seed)?;
        files::write_responses(&out.join(files::SFT_SAMPLES), &responses(&ds.train_pools, &sft))?;
        let pools = PoolsFile { world_config: w.clone(), train: ds.train_pools, eval: ds.eval_pools, ood: ds.ood_pools };
        files::write_json(&out.join(files::POOLS), &pools)?;
        Ok(Outcome::ok(&[files::TRAIN_PAIRS, files::EVAL_PAIRS, files::OOD_PAIRS, files::SFT_SAMPLES, files::POOLS]))
    }
}

fn responses(pools: &[ResponsePool], idx: &[(usize, usize)]) -> Vec<Response> {
    idx.iter()
        .map(|&(p, i)| Response { prompt_id: pools[p].prompt_id, features: pools[p].features[i].clone() })
        .collect()
}

// train-rm

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRmSettings {
    pub kind: RmKind,
    pub latent_dim: usize,
    pub beta: f64,
    pub train: TrainConfig,
}

impl TrainRmSettings {
    pub fn defaults(seed: u64) -> Self {
        TrainRmSettings {
            kind: RmKind::Standard,
            latent_dim: DEFAULT_LATENT_DIM,
            beta: DEFAULT_BETA,
            train: TrainConfig { seed, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRmJob {
    pub data: PathBuf,
    pub settings: TrainRmSettings,
}

#[derive(Debug, Clone, Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: RmKind,
    pub n_pairs: usize,
    pub n_steps: usize,
    /// Last batch value of the training objective.
    pub final_loss: Option<f64>,
    /// Pairwise loss of the trained rewards over all training pairs.
    pub train_bt_loss: f64,
    pub train_accuracy: f64,
    pub curve: Vec<f64>,
}

impl TrainRmJob {
    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        let (world, pairs) = files::read_pairs(&self.data.join(files::TRAIN_PAIRS))?;
        let s = &self.settings;
        let exp = ExperimentConfig {
            world: world.clone(),
            train: s.train,
            latent_dim: s.latent_dim,
            ..ExperimentConfig::default_for_seed(world.seed)
        };
        let (model, curve) = train_model(&exp, s.kind, s.beta, &pairs)?;
        files::write_checkpoint(out, &model, &world)?;
        let rows: Vec<LossRow> = curve.iter().enumerate().map(|(step, &loss)| LossRow { step, loss }).collect();
        files::write_csv(&out.join("loss.csv"), &rows)?;
        let summary = TrainSummary {
            kind: s.kind,
            n_pairs: pairs.len(),
            n_steps: curve.len(),
            final_loss: curve.last().copied(),
            train_bt_loss: mean_bt_loss(&model, &pairs)?,
            train_accuracy: pairwise_accuracy(&model, &pairs)?,
            curve,
        };
        files::write_json(&out.join("loss.json"), &summary)?;
        Ok(Outcome::ok(&[files::MODEL_BIN, files::MODEL_META, "loss.csv", "loss.json"]))
    }
}

// eval-rm

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Id,
    Ood,
}

impl EvalSplit {
    fn file(self) -> &'static str {
        match self {
            EvalSplit::Id => files::EVAL_PAIRS,
            EvalSplit::Ood => files::OOD_PAIRS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRmJob {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub split: EvalSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub split: EvalSplit,
    pub kind: RmKind,
    pub n_pairs: usize,
    pub accuracy: f64,
}

impl EvalRmJob {
    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        let (model, meta) = files::read_checkpoint(&self.checkpoint)?;
        let (world, pairs) = files::read_pairs(&self.data.join(self.split.file()))?;
        check_world(&meta.world_config_hash, &world, "checkpoint")?;
        let report =
            EvalReport { split: self.split, kind: meta.kind, n_pairs: pairs.len(), accuracy: pairwise_accuracy(&model, &pairs)? };
        files::write_json(&out.join("accuracy.json"), &report)?;
        files::write_csv(&out.join("accuracy.csv"), &[&report])?;
        Ok(Outcome::ok(&["accuracy.json", "accuracy.csv"]))
    }
}

// detect

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectJob {
    pub detector: PathBuf,
    /// SFT latents (`.iblat`, `.csv`) or responses (`.jsonl`).
    pub sft: PathBuf,
    /// RLHF latents or responses, same formats.
    pub rlhf: PathBuf,
    pub alpha: f64,
    pub shrinkage: f64,
    pub filter_quantile: f64,
    /// Format of latents dumped for response inputs.
    pub latent_format: LatentFormat,
}

impl DetectJob {
    pub fn defaults(detector: PathBuf, sft: PathBuf, rlhf: PathBuf) -> Self {
        DetectJob {
            detector,
            sft,
            rlhf,
            alpha: DEFAULT_ALPHA,
            shrinkage: DEFAULT_SHRINKAGE,
            filter_quantile: DEFAULT_FILTER_QUANTILE,
            latent_format: LatentFormat::Iblat,
        }
    }

    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        let (model, _) = files::read_checkpoint(&self.detector)?;
        let RewardModel::Info(m) = model else {
            return Err(CliError::input("detection needs an inform checkpoint"));
        };
        let mut outputs = vec!["report.json".to_string(), "report.csv".to_string(), "stats.json".to_string()];
        let mut load = |path: &Path, name: &str| -> CliResult<Vec<Vec<f64>>> {
            if path.extension().is_some_and(|e| e == "jsonl") {
                let xs: Vec<Vec<f64>> = files::read_responses(path)?.into_iter().map(|r| r.features).collect();
                let z = extract_latents(&m, &xs).ctx(path.display())?;
                let file = format!("{name}_latents.{}", self.latent_format.extension());
                files::write_latents(&out.join(&file), &z, self.latent_format)?;
                outputs.push(file);
                Ok(z)
            } else {
                files::read_latents(path)
            }
        };
        let sft = load(&self.sft, "sft")?;
        let rlhf = load(&self.rlhf, "rlhf")?;
        let stats = fit_sft_stats(&sft, self.shrinkage, self.filter_quantile).ctx("fitting SFT statistics")?;
        let report = detect(&rlhf, &stats, self.alpha).ctx("scoring RLHF latents")?;
        files::write_json(&out.join("report.json"), &report.to_json())?;
        files::write_json(&out.join("stats.json"), &stats)?;
        #[derive(Serialize)]
        struct Row {
            index: usize,
            d2: f64,
            p_value: f64,
            flagged: bool,
        }
        let rows: Vec<Row> = (0..report.d2.len())
            .map(|i| Row { index: i, d2: report.d2[i], p_value: report.p_values[i], flagged: report.flags[i] })
            .collect();
        files::write_csv(&out.join("report.csv"), &rows)?;
        Ok(Outcome { outputs, diverged: None })
    }
}

// rl-run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlRunSettings {
    pub n_sft_samples: usize,
    pub shrinkage: f64,
    pub filter_quantile: f64,
    pub rl: RlConfig,
}

impl RlRunSettings {
    pub fn defaults(seed: u64) -> Self {
        let exp = ExperimentConfig::default_for_seed(seed);
        RlRunSettings {
            n_sft_samples: exp.n_sft_samples,
            shrinkage: exp.shrinkage,
            filter_quantile: exp.filter_quantile,
            rl: exp.rl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlRunJob {
    /// Proxy reward model.
    pub rm: PathBuf,
    /// InfoRM whose latents drive detection and the IBL penalty.
    pub detector: PathBuf,
    pub data: PathBuf,
    pub settings: RlRunSettings,
}

/// Summary numbers of one run, shared by rl-run and sweep outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub initial_gold: f64,
    pub final_gold: f64,
    pub peak_gold: f64,
    pub initial_mop: f64,
    pub final_mop: f64,
    pub peak_mop: f64,
    pub stop_reason: StopReason,
}

impl RunSummary {
    pub fn of(rec: &RlRunRecord) -> Self {
        RunSummary {
            initial_gold: rec.initial_row().gold_reward,
            final_gold: rec.final_row().gold_reward,
            peak_gold: rec.peak_gold(),
            initial_mop: rec.initial_row().mop,
            final_mop: rec.final_row().mop,
            peak_mop: rec.peak_mop(),
            stop_reason: rec.stop_reason,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordFile {
    pub summary: RunSummary,
    #[serde(flatten)]
    pub record: RlRunRecord,
}

impl RlRunJob {
    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        let pools: PoolsFile = files::read_json(&self.data.join(files::POOLS))?;
        let world = pools.world_config;
        let (rm, rm_meta) = files::read_checkpoint(&self.rm)?;
        let (det, det_meta) = files::read_checkpoint(&self.detector)?;
        check_world(&rm_meta.world_config_hash, &world, "reward model")?;
        check_world(&det_meta.world_config_hash, &world, "detector")?;
        let RewardModel::Info(det) = det else {
            return Err(CliError::input("detector must be an inform checkpoint"));
        };
        let s = &self.settings;
        let exp = ExperimentConfig {
            world: world.clone(),
            n_sft_samples: s.n_sft_samples,
            shrinkage: s.shrinkage,
            filter_quantile: s.filter_quantile,
            rl: s.rl.clone(),
            ..ExperimentConfig::default_for_seed(world.seed)
        };
        exp.rl.validate()?;
        let setup = rl_setup(&exp, &pools.train, &rm, &det)?;
        let (policy, rec) = run(&setup, &s.rl)?;

        files::write_csv(&out.join("record.csv"), &rec.rows)?;
        files::write_json(&out.join("record.json"), &RecordFile { summary: RunSummary::of(&rec), record: rec.clone() })?;
        files::write_json(&out.join("policy.json"), &policy)?;
        let step = rec.returned_row.map_or(0, |i| rec.rows[i].step);
        let idx = eval_sample_indices(&policy.probs(), &s.rl, step);
        files::write_responses(&out.join("policy_samples.jsonl"), &responses(&pools.train, &idx))?;

        let mut outcome = Outcome::ok(&["record.csv", "record.json", "policy.json", "policy_samples.jsonl"]);
        if rec.stop_reason == StopReason::Diverged {
            let last = rec.rows.last().map_or(0, |r| r.step);
            outcome.diverged = Some(format!("policy logits became non-finite after step {last}"));
        }
        Ok(outcome)
    }
}

// pessimism-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PessimismJob {
    pub max_dim: usize,
    pub b: f64,
    /// Instances use seeds `0..n_seeds`.
    pub n_seeds: u64,
    pub sigma_dim: usize,
    pub sigma_pairs: usize,
}

impl Default for PessimismJob {
    fn default() -> Self {
        PessimismJob { max_dim: 16, b: DEFAULT_B, n_seeds: 50, sigma_dim: 4, sigma_pairs: 100_000 }
    }
}

impl PessimismJob {
    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        if !(self.b > 0.0) {
            return Err(CliError::input("b must be positive"));
        }
        let seeds: Vec<u64> = (0..self.n_seeds).collect();
        let report = verification_report(self.max_dim, self.b, &seeds, self.sigma_dim, self.sigma_pairs)?;
        files::write_json(&out.join("pessimism.json"), &report)?;
        let mut rows = report.instances.clone();
        rows.push(report.zero_h.clone());
        files::write_csv(&out.join("pessimism.csv"), &rows)?;
        Ok(Outcome::ok(&["pessimism.json", "pessimism.csv"]))
    }
}

// sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// InfoRM bottleneck weight; each point retrains the model.
    Beta,
    /// IBL penalty weight; the model is shared across points.
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepJob {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Per-seed configuration; its seeds are replaced by each sweep seed.
    pub base: ExperimentConfig,
}

impl SweepJob {
    /// Gamma sweeps default to the IBL regularizer.
    pub fn default_base(param: SweepParam) -> ExperimentConfig {
        let mut base = ExperimentConfig::default_for_seed(0);
        if param == SweepParam::Gamma {
            base.rl.regularizer = Regularizer::Ibl;
        }
        base
    }

    fn for_seed(&self, seed: u64) -> ExperimentConfig {
        let mut exp = self.base.clone();
        exp.world.seed = seed;
        exp.train.seed = seed;
        exp.rl.seed = seed;
        exp
    }

    /// Runs every (grid point, seed) pair; results are indexed `[point][seed]`.
    pub fn run_all(&self) -> CliResult<Vec<Vec<RunSummary>>> {
        if self.grid.is_empty() || self.seeds.is_empty() {
            return Err(CliError::input("sweep needs a nonempty grid and seed list"));
        }
        if self.param == SweepParam::Gamma && self.base.rl.regularizer != Regularizer::Ibl {
            return Err(CliError::input("a gamma sweep needs rl.regularizer = \"ibl\""));
        }
        let mut out = vec![Vec::with_capacity(self.seeds.len()); self.grid.len()];
        for &seed in &self.seeds {
            let exp = self.for_seed(seed);
            let ds = build_dataset(&exp).map_err(|e| CliError::from(e).context(format!("seed {seed}")))?;
            let mut shared = None;
            for (gi, &v) in self.grid.iter().enumerate() {
                let at = |e: iblab::Error| CliError::from(e).context(format!("grid point {gi} ({v}), seed {seed}"));
                let mut exp = exp.clone();
                let model = match self.param {
                    SweepParam::Beta => {
                        exp.beta = v;
                        train_model(&exp, RmKind::Inform, v, &ds.train_pairs).map_err(at)?.0
                    }
                    SweepParam::Gamma => {
                        exp.rl.gamma = v;
                        match &shared {
                            Some(m) => RewardModel::clone(m),
                            None => {
                                let m = train_model(&exp, RmKind::Inform, exp.beta, &ds.train_pairs).map_err(at)?.0;
                                shared = Some(m.clone());
                                m
                            }
                        }
                    }
                };
                let info = model.as_info().expect("inform model");
                let setup = rl_setup(&exp, &ds.train_pools, &model, info).map_err(at)?;
                let (_, rec) = run(&setup, &exp.rl).map_err(at)?;
                out[gi].push(RunSummary::of(&rec));
            }
        }
        Ok(out)
    }

    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        let results = self.run_all()?;
        #[derive(Serialize)]
        struct Point {
            value: f64,
            final_gold: f64,
            final_mop: f64,
            peak_mop: f64,
        }
        #[derive(Serialize)]
        struct RunRow {
            value: f64,
            seed: u64,
            initial_gold: f64,
            final_gold: f64,
            peak_gold: f64,
            initial_mop: f64,
            final_mop: f64,
            peak_mop: f64,
            stop_reason: StopReason,
        }
        let mean = |xs: &[RunSummary], f: fn(&RunSummary) -> f64| xs.iter().map(f).sum::<f64>() / xs.len() as f64;
        let points: Vec<Point> = self
            .grid
            .iter()
            .zip(&results)
            .map(|(&value, runs)| Point {
                value,
                final_gold: mean(runs, |r| r.final_gold),
                final_mop: mean(runs, |r| r.final_mop),
                peak_mop: mean(runs, |r| r.peak_mop),
            })
            .collect();
        let runs: Vec<RunRow> = self
            .grid
            .iter()
            .zip(&results)
            .flat_map(|(&value, rs)| {
                self.seeds.iter().zip(rs).map(move |(&seed, r)| RunRow {
                    value,
                    seed,
                    initial_gold: r.initial_gold,
                    final_gold: r.final_gold,
                    peak_gold: r.peak_gold,
                    initial_mop: r.initial_mop,
                    final_mop: r.final_mop,
                    peak_mop: r.peak_mop,
                    stop_reason: r.stop_reason,
                })
            })
            .collect();
        files::write_csv(&out.join("summary.csv"), &points)?;
        files::write_csv(&out.join("runs.csv"), &runs)?;
        let json = serde_json::json!({
            "param": self.param,
            "grid": self.grid,
            "seeds": self.seeds,
            "points": points,
            "runs": runs,
        });
        files::write_json(&out.join("summary.json"), &json)?;
        Ok(Outcome::ok(&["summary.csv", "runs.csv", "summary.json"]))
    }
}

/// World seed of a dataset directory; train-rm and rl-run defaults follow it.
pub fn data_seed(data: &Path) -> CliResult<u64> {
    let pools: PoolsFile = files::read_json(&data.join(files::POOLS))?;
    Ok(pools.world_config.seed)
}

pub const DEFAULT_SWEEP_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
