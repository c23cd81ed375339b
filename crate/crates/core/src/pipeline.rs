//! End-to-end experiment protocol: world, preference data, reward models,
//! SFT latent statistics and RL runs, all derived from one seed.

use serde::{Deserialize, Serialize};

use crate::detector::{LatentStats, DEFAULT_FILTER_QUANTILE};
use crate::error::{invalid, Result};
use crate::numkit::DEFAULT_SHRINKAGE;
use crate::rewardmodels::{train_rm, InfoRm, RewardModel, RmKind, TrainConfig, DEFAULT_BETA, DEFAULT_LATENT_DIM};
use crate::rlsim::{run_rl_on_table, sft_latent_stats, CandidateTable, PolicyParams, RlConfig, RlRunRecord, DEFAULT_SFT_SAMPLES};
use crate::seeding::{self, stream};
use crate::synthworld::{gen_preferences, make_pools, PreferencePair, ResponsePool, Split, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub n_train_pairs: usize,
    pub n_eval_pairs: usize,
    pub train: TrainConfig,
    pub latent_dim: usize,
    pub beta: f64,
    pub n_sft_samples: usize,
    pub filter_quantile: f64,
    pub shrinkage: f64,
    pub rl: RlConfig,
}

pub const DEFAULT_TRAIN_PAIRS: usize = 4000;
pub const DEFAULT_EVAL_PAIRS: usize = 2000;

impl ExperimentConfig {
    pub fn default_for_seed(seed: u64) -> Self {
        ExperimentConfig {
            world: WorldConfig::default_world(seed),
            n_train_pairs: DEFAULT_TRAIN_PAIRS,
            n_eval_pairs: DEFAULT_EVAL_PAIRS,
            train: TrainConfig { seed, ..TrainConfig::default() },
            latent_dim: DEFAULT_LATENT_DIM,
            beta: DEFAULT_BETA,
            n_sft_samples: DEFAULT_SFT_SAMPLES,
            filter_quantile: DEFAULT_FILTER_QUANTILE,
            shrinkage: DEFAULT_SHRINKAGE,
            rl: RlConfig { seed, ..RlConfig::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.rl.validate()?;
        if self.n_train_pairs == 0 || self.n_eval_pairs == 0 {
            return Err(invalid("pair counts must be positive"));
        }
        if self.latent_dim == 0 {
            return Err(invalid("latent_dim must be positive"));
        }
        Ok(())
    }
}

/// Pools and preference data of one world.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train_pools: Vec<ResponsePool>,
    pub eval_pools: Vec<ResponsePool>,
    pub ood_pools: Vec<ResponsePool>,
    pub train_pairs: Vec<PreferencePair>,
    pub eval_pairs: Vec<PreferencePair>,
    pub ood_pairs: Vec<PreferencePair>,
}

pub fn build_dataset(exp: &ExperimentConfig) -> Result<Dataset> {
    exp.validate()?;
    let w = &exp.world;
    let train_pools = make_pools(w, Split::Train, false)?;
    let eval_pools = make_pools(w, Split::Eval, false)?;
    let ood_pools = make_pools(w, Split::Eval, true)?;
    let train_pairs = gen_preferences(w, &train_pools, exp.n_train_pairs, &mut seeding::rng_for(w.seed, stream::PAIRS))?;
    let mut rng = seeding::rng_for(w.seed, stream::EVAL_PAIRS);
    let eval_pairs = gen_preferences(w, &eval_pools, exp.n_eval_pairs, &mut rng)?;
    let ood_pairs = gen_preferences(w, &ood_pools, exp.n_eval_pairs, &mut rng)?;
    Ok(Dataset { train_pools, eval_pools, ood_pools, train_pairs, eval_pairs, ood_pairs })
}

/// Initialises from the INIT stream of the training seed and trains.
pub fn train_model(
    exp: &ExperimentConfig,
    kind: RmKind,
    beta: f64,
    pairs: &[PreferencePair],
) -> Result<(RewardModel, Vec<f64>)> {
    let mut init = seeding::rng_for(exp.train.seed, stream::INIT);
    let mut model = RewardModel::new(kind, exp.world.feature_dim(), exp.latent_dim, beta, &mut init)?;
    let curve = train_rm(&mut model, pairs, &exp.train)?;
    Ok((model, curve))
}

pub fn fit_stats(exp: &ExperimentConfig, pools: &[ResponsePool], detector: &InfoRm) -> Result<LatentStats> {
    sft_latent_stats(
        &exp.world,
        pools,
        detector,
        exp.n_sft_samples,
        exp.shrinkage,
        exp.filter_quantile,
        exp.rl.seed,
    )
}

/// Everything an RL run needs besides its own configuration.
pub struct RlSetup {
    pub table: CandidateTable,
    pub stats: LatentStats,
    pub policy0: PolicyParams,
}

pub fn rl_setup(
    exp: &ExperimentConfig,
    pools: &[ResponsePool],
    rm: &RewardModel,
    detector: &InfoRm,
) -> Result<RlSetup> {
    let stats = fit_stats(exp, pools, detector)?;
    let table = CandidateTable::build(&exp.world, pools, rm, detector, &stats)?;
    let policy0 = PolicyParams::sft(&exp.world, pools)?;
    Ok(RlSetup { table, stats, policy0 })
}

pub fn run(setup: &RlSetup, cfg: &RlConfig) -> Result<(PolicyParams, RlRunRecord)> {
    run_rl_on_table(&setup.policy0, &setup.table, &setup.stats, cfg)
}
