//! Bradley–Terry reward models: a plain scalar-head network and the
//! information-bottleneck model (Gaussian encoder + reward decoder).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::nnkit::{Activation, AdamConfig, AdamState, Mlp, MlpSpec};
use crate::numkit::standard_normal_vec;
use crate::seeding::{self, stream};
use crate::synthworld::{logistic, PreferencePair};

pub const HIDDEN: usize = 32;
pub const LOG_SIGMA_MIN: f64 = -5.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;
pub const DEFAULT_LATENT_DIM: usize = 8;
pub const DEFAULT_BETA: f64 = 0.1;

/// `−ln σ(d)` computed as `softplus(−d)`.
pub fn bt_loss(diff: f64) -> f64 {
    let z = -diff;
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `d/d diff` of [`bt_loss`].
fn bt_loss_grad(diff: f64) -> f64 {
    -logistic(-diff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardRm {
    pub net: Mlp,
}

impl StandardRm {
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(vec![feature_dim, HIDDEN, HIDDEN, 1], Activation::Tanh)?;
        Ok(StandardRm { net: Mlp::init(spec, rng) })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        check_dim(1, net.spec().output_dim())?;
        Ok(StandardRm { net })
    }

    pub fn feature_dim(&self) -> usize {
        self.net.spec().input_dim()
    }

    pub fn reward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.net.forward(x)?[0])
    }
}

/// Bradley–Terry loss of one pair and its parameter gradient.
pub fn standard_loss(rm: &StandardRm, pair: &PreferencePair) -> Result<(f64, Vec<f64>)> {
    let tw = rm.net.forward_trace(&pair.chosen)?;
    let tl = rm.net.forward_trace(&pair.rejected)?;
    let diff = tw.output()[0] - tl.output()[0];
    let loss = bt_loss(diff);
    if !loss.is_finite() {
        return Err(Error::NonFinite("standard loss"));
    }
    let g = bt_loss_grad(diff);
    let mut grad = vec![0.0; rm.net.params().len()];
    rm.net.backward_trace(&tw, &[g], &mut grad)?;
    rm.net.backward_trace(&tl, &[-g], &mut grad)?;
    Ok((loss, grad))
}

/// Diagonal Gaussian posterior over the latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `s = μ + σ ⊙ ε`.
pub fn reparameterize(g: &LatentGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    check_dim(g.mu.len(), eps.len())?;
    check_dim(g.mu.len(), g.sigma.len())?;
    Ok(g.mu.iter().zip(&g.sigma).zip(eps).map(|((m, s), e)| m + s * e).collect())
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − ln σ² − 1)`.
pub fn kl_to_std_normal(g: &LatentGaussian) -> f64 {
    0.5 * g
        .mu
        .iter()
        .zip(&g.sigma)
        .map(|(m, s)| m * m + s * s - 2.0 * s.ln() - 1.0)
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoRm {
    /// `m → 2k`: the first `k` outputs are `μ`, the last `k` are `ln σ`.
    pub encoder: Mlp,
    /// `k → 1`.
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub beta: f64,
}

impl InfoRm {
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, latent_dim: usize, beta: f64, rng: &mut R) -> Result<Self> {
        let encoder = Mlp::init(MlpSpec::new(vec![feature_dim, HIDDEN, 2 * latent_dim], Activation::Tanh)?, rng);
        let decoder = Mlp::init(MlpSpec::new(vec![latent_dim, HIDDEN, 1], Activation::Tanh)?, rng);
        InfoRm::from_parts(encoder, decoder, beta)
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, beta: f64) -> Result<Self> {
        let out = encoder.spec().output_dim();
        if !out.is_multiple_of(2) {
            return Err(invalid("encoder output dim must be even (μ and ln σ halves)"));
        }
        let latent_dim = out / 2;
        check_dim(latent_dim, decoder.spec().input_dim())?;
        check_dim(1, decoder.spec().output_dim())?;
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid("beta must be finite and >= 0"));
        }
        Ok(InfoRm { encoder, decoder, latent_dim, beta })
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.spec().input_dim()
    }

    fn split_encoder_output(&self, out: &[f64]) -> LatentGaussian {
        let k = self.latent_dim;
        LatentGaussian {
            mu: out[..k].to_vec(),
            sigma: out[k..].iter().map(|v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX).exp()).collect(),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<LatentGaussian> {
        Ok(self.split_encoder_output(&self.encoder.forward(x)?))
    }

    /// Decoder applied to a latent sample; `eps = None` uses the posterior mean.
    pub fn reward(&self, x: &[f64], eps: Option<&[f64]>) -> Result<f64> {
        let g = self.encode(x)?;
        let s = match eps {
            Some(e) => reparameterize(&g, e)?,
            None => g.mu,
        };
        Ok(self.decoder.forward(&s)?[0])
    }

    /// Posterior mean `μ(x)`.
    pub fn latent_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.encoder.forward(x)?;
        Ok(out[..self.latent_dim].to_vec())
    }
}

/// Loss value and gradients for one pair under the information-bottleneck
/// objective.
#[derive(Debug, Clone)]
pub struct InfoLoss {
    pub loss: f64,
    pub grad_encoder: Vec<f64>,
    pub grad_decoder: Vec<f64>,
}

/// `−ln σ(r_w − r_l) + β·(KL_w + KL_l)` with `r = g(μ + σ⊙ε)`, one ε per
/// response.
pub fn inform_loss(m: &InfoRm, pair: &PreferencePair, eps_w: &[f64], eps_l: &[f64]) -> Result<InfoLoss> {
    let k = m.latent_dim;
    check_dim(k, eps_w.len())?;
    check_dim(k, eps_l.len())?;

    let enc_w = m.encoder.forward_trace(&pair.chosen)?;
    let enc_l = m.encoder.forward_trace(&pair.rejected)?;
    let g_w = m.split_encoder_output(enc_w.output());
    let g_l = m.split_encoder_output(enc_l.output());
    let s_w = reparameterize(&g_w, eps_w)?;
    let s_l = reparameterize(&g_l, eps_l)?;
    let dec_w = m.decoder.forward_trace(&s_w)?;
    let dec_l = m.decoder.forward_trace(&s_l)?;
    let diff = dec_w.output()[0] - dec_l.output()[0];
    let loss = bt_loss(diff) + m.beta * (kl_to_std_normal(&g_w) + kl_to_std_normal(&g_l));
    if !loss.is_finite() {
        return Err(Error::NonFinite("information-bottleneck loss"));
    }

    let g = bt_loss_grad(diff);
    let mut grad_decoder = vec![0.0; m.decoder.params().len()];
    let mut grad_encoder = vec![0.0; m.encoder.params().len()];
    for (coef, enc, gauss, dec, eps) in [(g, &enc_w, &g_w, &dec_w, eps_w), (-g, &enc_l, &g_l, &dec_l, eps_l)] {
        let ds = m.decoder.backward_trace(dec, &[coef], &mut grad_decoder)?;
        let raw = enc.output();
        let mut upstream = vec![0.0; 2 * k];
        for j in 0..k {
            upstream[j] = ds[j] + m.beta * gauss.mu[j];
            let log_sigma = raw[k + j];
            if log_sigma > LOG_SIGMA_MIN && log_sigma < LOG_SIGMA_MAX {
                let sigma = gauss.sigma[j];
                // ∂s/∂lnσ = σ·ε ; ∂KL/∂lnσ = σ² − 1
                upstream[k + j] = ds[j] * eps[j] * sigma + m.beta * (sigma * sigma - 1.0);
            }
        }
        m.encoder.backward_trace(enc, &upstream, &mut grad_encoder)?;
    }
    Ok(InfoLoss { loss, grad_encoder, grad_decoder })
}

/// Either kind of reward model.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    Standard(StandardRm),
    Info(InfoRm),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RmKind {
    Standard,
    Inform,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(kind: RmKind, feature_dim: usize, latent_dim: usize, beta: f64, rng: &mut R) -> Result<Self> {
        Ok(match kind {
            RmKind::Standard => RewardModel::Standard(StandardRm::new(feature_dim, rng)?),
            RmKind::Inform => RewardModel::Info(InfoRm::new(feature_dim, latent_dim, beta, rng)?),
        })
    }

    pub fn kind(&self) -> RmKind {
        match self {
            RewardModel::Standard(_) => RmKind::Standard,
            RewardModel::Info(_) => RmKind::Inform,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            RewardModel::Standard(m) => m.feature_dim(),
            RewardModel::Info(m) => m.feature_dim(),
        }
    }

    /// Deterministic reward; the bottleneck model is read at its posterior mean.
    pub fn reward(&self, x: &[f64]) -> Result<f64> {
        match self {
            RewardModel::Standard(m) => m.reward(x),
            RewardModel::Info(m) => m.reward(x, None),
        }
    }

    pub fn as_info(&self) -> Option<&InfoRm> {
        match self {
            RewardModel::Info(m) => Some(m),
            RewardModel::Standard(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 5, batch_size: 32, lr: 1e-2, seed: 0 }
    }
}

/// Mini-batch Adam on the pairwise loss. Returns the mean loss of every batch.
/// The bottleneck model draws a fresh ε per response per step.
pub fn train_rm(model: &mut RewardModel, data: &[PreferencePair], cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(invalid("empty preference dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch_size must be positive"));
    }
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut rng = seeding::rng_for(cfg.seed, stream::TRAIN);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::new();
    let mut step = 0usize;

    match model {
        RewardModel::Standard(rm) => {
            let mut state = AdamState::new(rm.net.params().len());
            for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for batch in order.chunks(cfg.batch_size) {
                    let mut grad = vec![0.0; rm.net.params().len()];
                    let mut total = 0.0;
                    for &i in batch {
                        let (l, g) = standard_loss(rm, &data[i]).map_err(|_| Error::Diverged { step })?;
                        total += l;
                        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    }
                    let n = batch.len() as f64;
                    grad.iter_mut().for_each(|g| *g /= n);
                    state.step(rm.net.params_mut(), &grad, &adam).map_err(|_| Error::Diverged { step })?;
                    curve.push(total / n);
                    step += 1;
                }
            }
        }
        RewardModel::Info(m) => {
            let k = m.latent_dim;
            let mut enc_state = AdamState::new(m.encoder.params().len());
            let mut dec_state = AdamState::new(m.decoder.params().len());
            for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for batch in order.chunks(cfg.batch_size) {
                    let mut ge = vec![0.0; m.encoder.params().len()];
                    let mut gd = vec![0.0; m.decoder.params().len()];
                    let mut total = 0.0;
                    for &i in batch {
                        let eps_w = standard_normal_vec(k, &mut rng);
                        let eps_l = standard_normal_vec(k, &mut rng);
                        let out = inform_loss(m, &data[i], &eps_w, &eps_l).map_err(|_| Error::Diverged { step })?;
                        total += out.loss;
                        ge.iter_mut().zip(out.grad_encoder).for_each(|(a, b)| *a += b);
                        gd.iter_mut().zip(out.grad_decoder).for_each(|(a, b)| *a += b);
                    }
                    let n = batch.len() as f64;
                    ge.iter_mut().for_each(|g| *g /= n);
                    gd.iter_mut().for_each(|g| *g /= n);
                    enc_state.step(m.encoder.params_mut(), &ge, &adam).map_err(|_| Error::Diverged { step })?;
                    dec_state.step(m.decoder.params_mut(), &gd, &adam).map_err(|_| Error::Diverged { step })?;
                    curve.push(total / n);
                    step += 1;
                }
            }
        }
    }
    Ok(curve)
}

/// Fraction of pairs with `r(chosen) > r(rejected)`; ties count as wrong.
pub fn pairwise_accuracy(model: &RewardModel, pairs: &[PreferencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("no pairs to evaluate"));
    }
    let mut correct = 0usize;
    for p in pairs {
        if model.reward(&p.chosen)? > model.reward(&p.rejected)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Mean pairwise loss of the model's rewards (posterior mean for InfoRM).
pub fn mean_bt_loss(model: &RewardModel, pairs: &[PreferencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("no pairs to evaluate"));
    }
    let mut total = 0.0;
    for p in pairs {
        total += bt_loss(model.reward(&p.chosen)? - model.reward(&p.rejected)?);
    }
    Ok(total / pairs.len() as f64)
}

/// Posterior means for a batch of inputs.
pub fn extract_latents(m: &InfoRm, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    xs.iter().map(|x| m.latent_mean(x)).collect()
}

// ---- checkpoints ----

/// JSON sidecar stored next to the binary network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub kind: RmKind,
    pub feature_dim: usize,
    pub latent_dim: Option<usize>,
    pub beta: Option<f64>,
    pub world_config_hash: String,
}

/// Binary body: the standard network, or encoder followed by decoder.
pub fn checkpoint_bytes(model: &RewardModel, world_config_hash: &str) -> (Vec<u8>, CheckpointMeta) {
    match model {
        RewardModel::Standard(m) => (
            m.net.to_bytes(),
            CheckpointMeta {
                kind: RmKind::Standard,
                feature_dim: m.feature_dim(),
                latent_dim: None,
                beta: None,
                world_config_hash: world_config_hash.to_string(),
            },
        ),
        RewardModel::Info(m) => {
            let mut bytes = m.encoder.to_bytes();
            bytes.extend(m.decoder.to_bytes());
            (
                bytes,
                CheckpointMeta {
                    kind: RmKind::Inform,
                    feature_dim: m.feature_dim(),
                    latent_dim: Some(m.latent_dim),
                    beta: Some(m.beta),
                    world_config_hash: world_config_hash.to_string(),
                },
            )
        }
    }
}

pub fn model_from_checkpoint(bytes: &[u8], meta: &CheckpointMeta) -> Result<RewardModel> {
    let (first, used) = Mlp::from_bytes(bytes)?;
    let model = match meta.kind {
        RmKind::Standard => {
            if used != bytes.len() {
                return Err(Error::Format("trailing bytes after standard network".into()));
            }
            RewardModel::Standard(StandardRm::from_net(first)?)
        }
        RmKind::Inform => {
            let (decoder, used2) = Mlp::from_bytes(&bytes[used..])?;
            if used + used2 != bytes.len() {
                return Err(Error::Format("trailing bytes after decoder".into()));
            }
            let beta = meta.beta.ok_or_else(|| Error::Format("sidecar lacks beta".into()))?;
            let m = InfoRm::from_parts(first, decoder, beta)?;
            if meta.latent_dim != Some(m.latent_dim) {
                return Err(Error::Format("sidecar latent_dim disagrees with encoder".into()));
            }
            RewardModel::Info(m)
        }
    };
    check_dim(meta.feature_dim, model.feature_dim())?;
    Ok(model)
}
