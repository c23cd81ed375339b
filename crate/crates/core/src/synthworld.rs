//! The synthetic preference world.
//!
//! A response is a feature vector `x ∈ ℝ^m`, `m = dim_relevant + dim_spurious`.
//! The gold reward reads only the relevant block. Annotators label pairs with
//! a utility that adds `annotator_bias · x[dim_relevant]`, so the first
//! spurious coordinate leaks into the preference data but never into the
//! gold signal.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Error, Result};
use crate::numkit::{dot, standard_normal_vec};
use crate::seeding::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub n_prompts: usize,
    pub n_eval_prompts: usize,
    pub pool_size: usize,
    pub dim_relevant: usize,
    pub dim_spurious: usize,
    pub gold_weights: Vec<f64>,
    pub annotator_bias: f64,
    pub sft_temperature: f64,
    pub ood_shift: Vec<f64>,
    pub seed: u64,
}

/// Gold weight direction of the default world; scaled by
/// [`DEFAULT_GOLD_SCALE`]. The small norm makes the annotator bias dominate
/// the labels, which is what lets a proxy drift away from gold.
const DEFAULT_GOLD_DIRECTION: [f64; 6] = [1.0, -0.8, 0.6, 0.5, -0.4, 0.3];
pub const DEFAULT_GOLD_SCALE: f64 = 0.15;
pub const DEFAULT_OOD_SHIFT: f64 = 1.5;

impl WorldConfig {
    pub fn default_world(seed: u64) -> Self {
        let n = DEFAULT_GOLD_DIRECTION.iter().map(|w| w * w).sum::<f64>().sqrt();
        let gold_weights = DEFAULT_GOLD_DIRECTION.iter().map(|w| w * DEFAULT_GOLD_SCALE / n).collect();
        let (dim_relevant, dim_spurious) = (6, 2);
        let mut ood_shift = vec![0.0; dim_relevant + dim_spurious];
        ood_shift[dim_relevant..].iter_mut().for_each(|v| *v = DEFAULT_OOD_SHIFT);
        WorldConfig {
            n_prompts: 200,
            n_eval_prompts: 100,
            pool_size: 16,
            dim_relevant,
            dim_spurious,
            gold_weights,
            annotator_bias: 1.0,
            sft_temperature: 1.0,
            ood_shift,
            seed,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.dim_relevant + self.dim_spurious
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_relevant == 0 || self.dim_spurious == 0 {
            return Err(invalid("dim_relevant and dim_spurious must be positive"));
        }
        if self.n_prompts == 0 || self.pool_size == 0 {
            return Err(invalid("n_prompts and pool_size must be positive"));
        }
        check_dim(self.dim_relevant, self.gold_weights.len())?;
        check_dim(self.feature_dim(), self.ood_shift.len())?;
        check_finite(&self.gold_weights, "gold_weights")?;
        check_finite(&self.ood_shift, "ood_shift")?;
        if !self.annotator_bias.is_finite() {
            return Err(Error::NonFinite("annotator_bias"));
        }
        if !(self.sft_temperature > 0.0) || !self.sft_temperature.is_finite() {
            return Err(invalid("sft_temperature must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePool {
    pub prompt_id: usize,
    pub features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencePair {
    pub prompt_id: usize,
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
}

pub fn gold_reward(cfg: &WorldConfig, x: &[f64]) -> Result<f64> {
    check_dim(cfg.feature_dim(), x.len())?;
    Ok(dot(&cfg.gold_weights, &x[..cfg.dim_relevant]))
}

/// Annotator utility: gold plus the bias on the first spurious coordinate.
pub fn annotator_utility(cfg: &WorldConfig, x: &[f64]) -> Result<f64> {
    Ok(gold_reward(cfg, x)? + cfg.annotator_bias * x[cfg.dim_relevant])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Candidate pools for a split. Each prompt draws from its own derived
/// stream, so the result is independent of generation order. OOD pools reuse
/// the in-distribution draws and add `ood_shift`.
pub fn make_pools(cfg: &WorldConfig, split: Split, ood: bool) -> Result<Vec<ResponsePool>> {
    cfg.validate()?;
    let (first_id, count) = match split {
        Split::Train => (0, cfg.n_prompts),
        Split::Eval => (cfg.n_prompts, cfg.n_eval_prompts),
    };
    let base = seeding::mix(cfg.seed, stream::POOLS);
    let m = cfg.feature_dim();
    Ok((first_id..first_id + count)
        .map(|prompt_id| {
            let mut rng = seeding::rng_for(base, prompt_id as u64);
            let features = (0..cfg.pool_size)
                .map(|_| {
                    let mut x = standard_normal_vec(m, &mut rng);
                    if ood {
                        x.iter_mut().zip(&cfg.ood_shift).for_each(|(v, s)| *v += s);
                    }
                    x
                })
                .collect();
            ResponsePool { prompt_id, features }
        })
        .collect())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// SFT logits `gold/τ` for one pool.
pub fn sft_logits(cfg: &WorldConfig, pool: &ResponsePool) -> Result<Vec<f64>> {
    if !(cfg.sft_temperature > 0.0) {
        return Err(invalid("sft_temperature must be positive"));
    }
    if pool.features.is_empty() {
        return Err(invalid("empty response pool"));
    }
    pool.features.iter().map(|x| Ok(gold_reward(cfg, x)? / cfg.sft_temperature)).collect()
}

/// SFT policy: softmax of gold reward at temperature τ.
pub fn sft_policy(cfg: &WorldConfig, pool: &ResponsePool) -> Result<Vec<f64>> {
    Ok(softmax(&sft_logits(cfg, pool)?))
}

/// Inverse-CDF draw from a categorical distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Samples labelled pairs: a pool uniformly, two distinct candidates from its
/// SFT policy (the second from the policy renormalised without the first), and
/// the label from `σ(u_a − u_b)` with the biased annotator utility.
pub fn gen_preferences<R: Rng + ?Sized>(
    cfg: &WorldConfig,
    pools: &[ResponsePool],
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<PreferencePair>> {
    if pools.is_empty() {
        return Err(invalid("no pools to sample preferences from"));
    }
    if pools.iter().any(|p| p.features.len() < 2) {
        return Err(invalid("pool_size must be at least 2 to form pairs"));
    }
    let policies = pools.iter().map(|p| sft_policy(cfg, p)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let k = rng.random_range(0..pools.len());
        let (pool, probs) = (&pools[k], &policies[k]);
        let a = sample_index(probs, rng);
        let mut rest = probs.clone();
        rest[a] = 0.0;
        let z: f64 = rest.iter().sum();
        let b = if z > 0.0 {
            rest.iter_mut().for_each(|p| *p /= z);
            sample_index(&rest, rng)
        } else {
            // all mass on `a`; fall back to a uniform distinct partner
            let j = rng.random_range(0..probs.len() - 1);
            if j >= a {
                j + 1
            } else {
                j
            }
        };
        let (xa, xb) = (&pool.features[a], &pool.features[b]);
        let gap = annotator_utility(cfg, xa)? - annotator_utility(cfg, xb)?;
        let a_wins = rng.random::<f64>() < logistic(gap);
        let (chosen, rejected) = if a_wins { (xa, xb) } else { (xb, xa) };
        out.push(PreferencePair { prompt_id: pool.prompt_id, chosen: chosen.clone(), rejected: rejected.clone() });
    }
    Ok(out)
}

// ---- JSON-lines dataset files ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    world_config: WorldConfig,
}

pub fn write_pairs_jsonl<W: Write>(mut w: W, cfg: &WorldConfig, pairs: &[PreferencePair]) -> Result<()> {
    let header = serde_json::to_string(&Header { world_config: cfg.clone() }).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w, "{header}")?;
    for p in pairs {
        let line = serde_json::to_string(p).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_pairs_jsonl<R: BufRead>(r: R) -> Result<(WorldConfig, Vec<PreferencePair>)> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Format(format!("header: {e}")))?;
    let cfg = header.world_config;
    cfg.validate()?;
    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PreferencePair =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 2)))?;
        check_dim(cfg.feature_dim(), p.chosen.len())?;
        check_dim(cfg.feature_dim(), p.rejected.len())?;
        pairs.push(p);
    }
    Ok((cfg, pairs))
}
