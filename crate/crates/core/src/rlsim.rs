//! Policy optimisation over finite response pools.
//!
//! The policy is a softmax over each prompt's candidates, so the objective and
//! its gradient are exact expectations; no sampling enters the update. Only
//! the outlier proportion is estimated from sampled responses at eval time.
//!
//! All per-candidate quantities (proxy reward, gold reward, latent distance)
//! are precomputed once: the reward model and the detection statistics are
//! frozen during a run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{detect, fit_sft_stats, LatentStats};
use crate::error::{check_dim, check_finite, invalid, Result};
use crate::numkit::mahalanobis;
use crate::rewardmodels::{extract_latents, InfoRm, RewardModel};
use crate::seeding::{self, mix, stream};
use crate::synthworld::{gold_reward, sample_index, sft_policy, softmax, ResponsePool, WorldConfig};

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_KL_COEF: f64 = 0.05;
pub const DEFAULT_EVAL_SAMPLES: usize = 512;
pub const DEFAULT_SFT_SAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    None,
    Kl,
    Ibl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlConfig {
    pub regularizer: Regularizer,
    pub gamma: f64,
    pub kl_coef: f64,
    pub steps: usize,
    /// Step size applied to each prompt's logits.
    pub lr: f64,
    pub eval_every: usize,
    pub mop_alpha: f64,
    pub early_stop_mop: Option<f64>,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            regularizer: Regularizer::None,
            gamma: DEFAULT_GAMMA,
            kl_coef: DEFAULT_KL_COEF,
            steps: 2000,
            lr: 1.0,
            eval_every: 100,
            mop_alpha: crate::detector::DEFAULT_ALPHA,
            early_stop_mop: None,
            eval_samples: DEFAULT_EVAL_SAMPLES,
            seed: 0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !(self.kl_coef >= 0.0) || !self.gamma.is_finite() || !self.kl_coef.is_finite() {
            return Err(invalid("gamma and kl_coef must be finite and >= 0"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid("lr must be positive"));
        }
        if self.eval_every == 0 || self.eval_samples == 0 {
            return Err(invalid("eval_every and eval_samples must be positive"));
        }
        if !(self.mop_alpha > 0.0 && self.mop_alpha < 1.0) {
            return Err(invalid("mop_alpha must lie in (0,1)"));
        }
        if let Some(t) = self.early_stop_mop {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("early_stop_mop must lie in [0,1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<Vec<f64>>,
}

impl PolicyParams {
    /// The SFT policy: logits `gold/τ`.
    pub fn sft(world: &WorldConfig, pools: &[ResponsePool]) -> Result<Self> {
        let logits = pools
            .iter()
            .map(|p| p.features.iter().map(|x| Ok(gold_reward(world, x)? / world.sft_temperature)).collect())
            .collect::<Result<_>>()?;
        Ok(PolicyParams { logits })
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|l| softmax(l)).collect()
    }
}

/// `√((μ(x) − m)ᵀ Σ⁻¹ (μ(x) − m))` on the posterior mean latent.
pub fn ibl_penalty(x: &[f64], m: &InfoRm, stats: &LatentStats) -> Result<f64> {
    mahalanobis(&m.latent_mean(x)?, &stats.mean, &stats.chol)
}

/// Reward seen by the policy for one candidate.
pub fn shaped_reward(proxy: f64, penalty: f64, cfg: &RlConfig, pi: f64, pi_sft: f64) -> Result<f64> {
    Ok(match cfg.regularizer {
        Regularizer::None => proxy,
        Regularizer::Ibl => proxy - cfg.gamma * penalty,
        Regularizer::Kl => {
            if !(pi_sft > 0.0) {
                return Err(invalid("zero SFT probability under the KL regularizer"));
            }
            proxy - cfg.kl_coef * (pi.ln() - pi_sft.ln())
        }
    })
}

/// `J = mean_p Σ_i π_{p,i} R_{p,i}` and `∂J/∂l_{p,i} = π_{p,i}(R_{p,i} − R̄_p) / P`.
pub fn exact_objective_and_grad(policy: &PolicyParams, rewards: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_dim(policy.logits.len(), rewards.len())?;
    if rewards.is_empty() {
        return Err(invalid("no prompts"));
    }
    let n = rewards.len() as f64;
    let mut j = 0.0;
    let mut grads = Vec::with_capacity(rewards.len());
    for (l, r) in policy.logits.iter().zip(rewards) {
        check_dim(l.len(), r.len())?;
        check_finite(r, "shaped rewards")?;
        let pi = softmax(l);
        let mean: f64 = pi.iter().zip(r).map(|(p, v)| p * v).sum();
        j += mean;
        grads.push(pi.iter().zip(r).map(|(p, v)| p * (v - mean) / n).collect());
    }
    Ok((j / n, grads))
}

/// Frozen per-candidate quantities for a set of pools.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    pub proxy: Vec<Vec<f64>>,
    pub gold: Vec<Vec<f64>>,
    /// Posterior-mean latent of the detection model.
    pub latents: Vec<Vec<Vec<f64>>>,
    /// Mahalanobis distance of each latent from the SFT statistics.
    pub penalty: Vec<Vec<f64>>,
    pub sft_probs: Vec<Vec<f64>>,
}

impl CandidateTable {
    pub fn build(
        world: &WorldConfig,
        pools: &[ResponsePool],
        rm: &RewardModel,
        detector: &InfoRm,
        stats: &LatentStats,
    ) -> Result<Self> {
        if pools.is_empty() {
            return Err(invalid("no pools"));
        }
        let mut t = CandidateTable { proxy: vec![], gold: vec![], latents: vec![], penalty: vec![], sft_probs: vec![] };
        for pool in pools {
            t.proxy.push(pool.features.iter().map(|x| rm.reward(x)).collect::<Result<_>>()?);
            t.gold.push(pool.features.iter().map(|x| gold_reward(world, x)).collect::<Result<_>>()?);
            let lat: Vec<Vec<f64>> = pool.features.iter().map(|x| detector.latent_mean(x)).collect::<Result<_>>()?;
            t.penalty.push(lat.iter().map(|z| mahalanobis(z, &stats.mean, &stats.chol)).collect::<Result<_>>()?);
            t.latents.push(lat);
            t.sft_probs.push(sft_policy(world, pool)?);
        }
        Ok(t)
    }

    pub fn n_prompts(&self) -> usize {
        self.proxy.len()
    }
}

/// Draws `n` (prompt, candidate) indices: prompt uniform, candidate from
/// `probs[prompt]`.
pub fn sample_indices<R: Rng + ?Sized>(probs: &[Vec<f64>], n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    (0..n)
        .map(|_| {
            let p = rng.random_range(0..probs.len());
            (p, sample_index(&probs[p], rng))
        })
        .collect()
}

/// (prompt, candidate) indices of `n` responses sampled from the SFT policy.
pub fn sft_sample_indices(world: &WorldConfig, pools: &[ResponsePool], n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if pools.is_empty() {
        return Err(invalid("no pools"));
    }
    let policies = pools.iter().map(|p| sft_policy(world, p)).collect::<Result<Vec<_>>>()?;
    let mut rng = seeding::rng_for(seed, stream::SFT_SAMPLES);
    Ok(sample_indices(&policies, n, &mut rng))
}

/// Fits latent statistics on the detection latents of the responses drawn
/// by [`sft_sample_indices`].
pub fn sft_latent_stats(
    world: &WorldConfig,
    pools: &[ResponsePool],
    detector: &InfoRm,
    n: usize,
    shrinkage: f64,
    filter_quantile: f64,
    seed: u64,
) -> Result<LatentStats> {
    let xs: Vec<Vec<f64>> =
        sft_sample_indices(world, pools, n, seed)?.into_iter().map(|(p, i)| pools[p].features[i].clone()).collect();
    let latents = extract_latents(detector, &xs)?;
    fit_sft_stats(&latents, shrinkage, filter_quantile)
}

/// Responses a policy emits at eval `step`; the same draws feed the MOP of
/// that eval.
pub fn eval_sample_indices(probs: &[Vec<f64>], cfg: &RlConfig, step: usize) -> Vec<(usize, usize)> {
    let mut rng = seeding::rng_for(mix(cfg.seed, stream::RL_EVAL), step as u64);
    sample_indices(probs, cfg.eval_samples, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: usize,
    pub proxy_reward: f64,
    pub gold_reward: f64,
    pub mop: f64,
    pub regularizer_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopMop,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlRunRecord {
    pub rows: Vec<EvalRow>,
    pub stop_reason: StopReason,
    /// Row describing the returned policy. `None` only when early stopping
    /// triggered at the very first eval.
    pub returned_row: Option<usize>,
}

impl RlRunRecord {
    /// Row of the returned policy, falling back to the first row.
    pub fn final_row(&self) -> &EvalRow {
        &self.rows[self.returned_row.unwrap_or(0)]
    }

    pub fn initial_row(&self) -> &EvalRow {
        &self.rows[0]
    }

    pub fn peak_gold(&self) -> f64 {
        self.rows.iter().map(|r| r.gold_reward).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_mop(&self) -> f64 {
        self.rows.iter().map(|r| r.mop).fold(0.0, f64::max)
    }
}

fn shaped_rewards(t: &CandidateTable, probs: &[Vec<f64>], cfg: &RlConfig) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut out = Vec::with_capacity(t.n_prompts());
    let mut reg = 0.0;
    for p in 0..t.n_prompts() {
        let mut row = Vec::with_capacity(probs[p].len());
        for i in 0..probs[p].len() {
            let r = shaped_reward(t.proxy[p][i], t.penalty[p][i], cfg, probs[p][i], t.sft_probs[p][i])?;
            reg += probs[p][i] * (t.proxy[p][i] - r);
            row.push(r);
        }
        out.push(row);
    }
    Ok((out, reg / t.n_prompts() as f64))
}

fn expectation(values: &[Vec<f64>], probs: &[Vec<f64>]) -> f64 {
    let total: f64 = values.iter().zip(probs).map(|(v, p)| v.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()).sum();
    total / values.len() as f64
}

fn evaluate(t: &CandidateTable, policy: &PolicyParams, stats: &LatentStats, cfg: &RlConfig, step: usize) -> Result<EvalRow> {
    let probs = policy.probs();
    let (_, regularizer_mean) = shaped_rewards(t, &probs, cfg)?;
    let sampled: Vec<Vec<f64>> =
        eval_sample_indices(&probs, cfg, step).into_iter().map(|(p, i)| t.latents[p][i].clone()).collect();
    let mop = detect(&sampled, stats, cfg.mop_alpha)?.mop;
    Ok(EvalRow {
        step,
        proxy_reward: expectation(&t.proxy, &probs),
        gold_reward: expectation(&t.gold, &probs),
        mop,
        regularizer_mean,
    })
}

/// Gradient ascent on the shaped objective. Proxy and gold rewards in the
/// record are exact policy expectations averaged over prompts; MOP comes from
/// `eval_samples` sampled responses.
pub fn run_rl_on_table(
    policy0: &PolicyParams,
    table: &CandidateTable,
    stats: &LatentStats,
    cfg: &RlConfig,
) -> Result<(PolicyParams, RlRunRecord)> {
    cfg.validate()?;
    check_dim(table.n_prompts(), policy0.logits.len())?;
    let scale = table.n_prompts() as f64;
    let mut policy = policy0.clone();
    let mut rows = vec![evaluate(table, &policy, stats, cfg, 0)?];
    let mut best = policy.clone();
    let mut returned_row = Some(0);

    let over = |mop: f64| cfg.early_stop_mop.is_some_and(|t| mop > t);
    if over(rows[0].mop) {
        return Ok((policy, RlRunRecord { rows, stop_reason: StopReason::EarlyStopMop, returned_row: None }));
    }

    for step in 1..=cfg.steps {
        let (rewards, _) = shaped_rewards(table, &policy.probs(), cfg)?;
        let (_, grad) = exact_objective_and_grad(&policy, &rewards)?;
        for (l, g) in policy.logits.iter_mut().zip(&grad) {
            l.iter_mut().zip(g).for_each(|(a, b)| *a += cfg.lr * scale * b);
        }
        if policy.logits.iter().flatten().any(|v| !v.is_finite()) {
            return Ok((best, RlRunRecord { rows, stop_reason: StopReason::Diverged, returned_row }));
        }
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let row = evaluate(table, &policy, stats, cfg, step)?;
            rows.push(row);
            if over(row.mop) {
                return Ok((best, RlRunRecord { rows, stop_reason: StopReason::EarlyStopMop, returned_row }));
            }
            best = policy.clone();
            returned_row = Some(rows.len() - 1);
        }
    }
    Ok((policy, RlRunRecord { rows, stop_reason: StopReason::Completed, returned_row }))
}

/// Builds the candidate table and runs [`run_rl_on_table`].
pub fn run_rl(
    world: &WorldConfig,
    policy0: &PolicyParams,
    pools: &[ResponsePool],
    rm: &RewardModel,
    cfg: &RlConfig,
    detector: &InfoRm,
    stats: &LatentStats,
) -> Result<(PolicyParams, RlRunRecord)> {
    let table = CandidateTable::build(world, pools, rm, detector, stats)?;
    run_rl_on_table(policy0, &table, stats, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Mat;

    fn identity_stats(k: usize) -> LatentStats {
        let cov = Mat::identity(k);
        LatentStats {
            mean: vec![0.0; k],
            chol: crate::numkit::cholesky(&cov).unwrap(),
            cov,
            n_samples: 100,
            shrinkage: 0.0,
            filtered: false,
        }
    }

    #[test]
    fn gradient_cases() {
        let pol = PolicyParams { logits: vec![vec![0.0, 0.0]] };
        let (j, g) = exact_objective_and_grad(&pol, &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(j, 0.5);
        assert_eq!(g, vec![vec![0.25, -0.25]]);
        let pol = PolicyParams { logits: vec![vec![0.3, -1.0, 2.0]] };
        let (_, g) = exact_objective_and_grad(&pol, &[vec![4.0; 3]]).unwrap();
        assert!(g[0].iter().all(|v| *v == 0.0));
        assert!(exact_objective_and_grad(&pol, &[vec![f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn shaping_cases() {
        let mut cfg = RlConfig { regularizer: Regularizer::Ibl, gamma: 0.1, ..RlConfig::default() };
        assert!((shaped_reward(2.0, 5.0, &cfg, 0.2, 0.3).unwrap() - 1.5).abs() < 1e-15);
        cfg.gamma = 0.0;
        assert_eq!(shaped_reward(2.0, 5.0, &cfg, 0.2, 0.3).unwrap(), 2.0);
        cfg.regularizer = Regularizer::Kl;
        assert_eq!(shaped_reward(2.0, 5.0, &cfg, 0.3, 0.3).unwrap(), 2.0);
        assert!(shaped_reward(2.0, 5.0, &cfg, 0.3, 0.0).is_err());
        cfg.regularizer = Regularizer::None;
        assert_eq!(shaped_reward(2.0, 5.0, &cfg, 0.3, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn ibl_penalty_identity_stats() {
        use crate::nnkit::{Activation, Mlp, MlpSpec};
        // encoder whose μ copies the first two inputs
        let spec = MlpSpec::new(vec![2, 4], Activation::Tanh).unwrap();
        let mut enc = Mlp::zeros(spec);
        enc.params_mut()[0] = 1.0;
        enc.params_mut()[3] = 1.0;
        let dec = Mlp::zeros(MlpSpec::new(vec![2, 1], Activation::Tanh).unwrap());
        let m = InfoRm::from_parts(enc, dec, 0.1).unwrap();
        let stats = identity_stats(2);
        assert_eq!(ibl_penalty(&[0.0, 0.0], &m, &stats).unwrap(), 0.0);
        assert!((ibl_penalty(&[3.0, 4.0], &m, &stats).unwrap() - 5.0).abs() < 1e-12);
    }

    fn toy_table() -> CandidateTable {
        CandidateTable {
            proxy: vec![vec![1.0, 0.0, 0.5], vec![0.2, 0.1, 0.9]],
            gold: vec![vec![1.0, 0.0, 0.5], vec![0.2, 0.1, 0.9]],
            latents: vec![vec![vec![0.0], vec![1.0], vec![4.0]]; 2],
            penalty: vec![vec![0.0, 1.0, 4.0]; 2],
            sft_probs: vec![vec![1.0 / 3.0; 3]; 2],
        }
    }

    #[test]
    fn zero_steps_single_row() {
        let t = toy_table();
        let pol = PolicyParams { logits: vec![vec![0.0; 3]; 2] };
        let cfg = RlConfig { steps: 0, ..RlConfig::default() };
        let (p, rec) = run_rl_on_table(&pol, &t, &identity_stats(1), &cfg).unwrap();
        assert_eq!(p, pol);
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.stop_reason, StopReason::Completed);
    }

    #[test]
    fn oracle_proxy_gold_nondecreasing() {
        let t = toy_table();
        let pol = PolicyParams { logits: vec![vec![0.0; 3]; 2] };
        let cfg = RlConfig { steps: 300, eval_every: 10, lr: 0.5, ..RlConfig::default() };
        let (_, rec) = run_rl_on_table(&pol, &t, &identity_stats(1), &cfg).unwrap();
        for w in rec.rows.windows(2) {
            assert!(w[1].gold_reward >= w[0].gold_reward - 1e-9);
            assert!(w[0].step < w[1].step);
        }
        assert_eq!(rec.rows.last().unwrap().step, 300);
    }

    #[test]
    fn gamma_zero_matches_none() {
        let t = toy_table();
        let pol = PolicyParams { logits: vec![vec![0.0; 3]; 2] };
        let a = RlConfig { steps: 100, eval_every: 7, ..RlConfig::default() };
        let b = RlConfig { regularizer: Regularizer::Ibl, gamma: 0.0, ..a.clone() };
        let ra = run_rl_on_table(&pol, &t, &identity_stats(1), &a).unwrap();
        let rb = run_rl_on_table(&pol, &t, &identity_stats(1), &b).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn early_stop_returns_last_good_policy() {
        let t = toy_table();
        let pol = PolicyParams { logits: vec![vec![0.0; 3]; 2] };
        // candidate 2 of each prompt lies at distance 4 (p ≈ 6e-5), so MOP rises
        // as the policy moves towards the 0.9 / 0.5 rewards
        let cfg = RlConfig { steps: 500, eval_every: 5, early_stop_mop: Some(0.4), ..RlConfig::default() };
        let (p, rec) = run_rl_on_table(&pol, &t, &identity_stats(1), &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::EarlyStopMop);
        let kept = rec.final_row();
        assert!(kept.mop <= 0.4);
        assert!(rec.rows.last().unwrap().mop > 0.4);
        let (_, check) = run_rl_on_table(&p, &t, &identity_stats(1), &RlConfig { steps: 0, ..cfg.clone() }).unwrap();
        assert_eq!(check.rows[0].gold_reward, kept.gold_reward);
    }
}
