//! Pessimistic reward under a linear reward model.
//!
//! With `r(x) = θᵀh(x)` and the confidence set
//! `{θ : (θ − θ̂)ᵀ Σ (θ − θ̂) ≤ B}`, the worst-case reward is
//! `θ̂ᵀh − √B·‖h‖_{Σ⁻¹}`. The numeric minimiser below searches the ellipsoid
//! boundary directly and serves as an independent check of that closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::numkit::{cholesky, dot, mahalanobis, norm, standard_normal_vec, CholFactor, Mat};
use crate::seeding::{self, stream};

pub const DEFAULT_B: f64 = 1.0;
pub const DEFAULT_ITERS: usize = 500;
const STEP0: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub theta_hat: Vec<f64>,
    pub sigma_sft: Mat,
    pub chol: CholFactor,
    pub b: f64,
}

impl ConfidenceSet {
    pub fn new(theta_hat: Vec<f64>, sigma_sft: Mat, b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(invalid("B must be positive"));
        }
        let chol = cholesky(&sigma_sft)?;
        check_dim(chol.dim(), theta_hat.len())?;
        Ok(ConfidenceSet { theta_hat, sigma_sft, chol, b })
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
}

/// `θ̂ᵀh − √B·√(hᵀ Σ⁻¹ h)`.
pub fn pessimistic_reward_closed(cs: &ConfidenceSet, h: &[f64]) -> Result<f64> {
    check_dim(cs.dim(), h.len())?;
    Ok(dot(&cs.theta_hat, h) - cs.b.sqrt() * cs.chol.inv_quad(h)?.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericMin {
    pub value: f64,
    pub converged: bool,
}

/// Minimises `θᵀh` over the ellipsoid boundary `θ = θ̂ + √B·L⁻ᵀu`, `‖u‖ = 1`
/// (`Σ = LLᵀ`), by projected gradient on the unit sphere. The gradient in `u`
/// is `√B·L⁻¹h`; steps follow its direction with length `STEP0/√t`.
/// `converged` is false when the last ten iterations still improved by more
/// than 1e-9.
pub fn pessimistic_reward_numeric(cs: &ConfidenceSet, h: &[f64], n_iters: usize) -> Result<NumericMin> {
    check_dim(cs.dim(), h.len())?;
    let base = dot(&cs.theta_hat, h);
    let g = cs.chol.solve_lower(h)?;
    let gn = norm(&g);
    if gn == 0.0 {
        return Ok(NumericMin { value: base, converged: true });
    }
    let dir: Vec<f64> = g.iter().map(|v| v / gn).collect();
    let sqrt_b = cs.b.sqrt();
    let objective = |u: &[f64]| -> Result<f64> {
        let offset = cs.chol.solve_upper(u)?;
        Ok(base + sqrt_b * dot(&offset, h))
    };

    let d = cs.dim();
    let mut u = vec![0.0; d];
    u[0] = 1.0;
    let mut best = objective(&u)?;
    let mut history = Vec::with_capacity(n_iters);
    for t in 1..=n_iters {
        let step = STEP0 / (t as f64).sqrt();
        let mut next: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a - step * b).collect();
        let n = norm(&next);
        if n < 1e-300 {
            next = dir.iter().map(|v| -v).collect();
        } else {
            next.iter_mut().for_each(|v| *v /= n);
        }
        u = next;
        best = best.min(objective(&u)?);
        history.push(best);
    }
    let converged = history.len() < 11 || history[history.len() - 11] - best <= 1e-9;
    if !best.is_finite() {
        return Err(Error::NonFinite("pessimistic minimiser"));
    }
    Ok(NumericMin { value: best, converged })
}

/// `θ̂ᵀh − η·‖h − v‖_{Σ⁻¹}`.
pub fn penalized_objective(cs: &ConfidenceSet, h: &[f64], eta: f64, v: &[f64]) -> Result<f64> {
    check_dim(cs.dim(), h.len())?;
    Ok(dot(&cs.theta_hat, h) - eta * mahalanobis(h, v, &cs.chol)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaComparison {
    pub sigma_rm: Mat,
    pub sigma_sft: Mat,
    pub rel_error: f64,
}

/// Draws `n_pairs` pairs of i.i.d. features with the given mean and unit
/// covariance. `Σ_rm` sums the outer products of pair differences; `Σ_sft`
/// sums the outer products of all `2n` individual features and is halved so
/// both sums have `n` terms. Reports `‖Σ_rm − 2Σ_sft‖_F / ‖2Σ_sft‖_F`.
pub fn sigma_rm_vs_sft<R: Rng + ?Sized>(d: usize, n_pairs: usize, feature_mean: f64, rng: &mut R) -> Result<SigmaComparison> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if n_pairs < d + 1 {
        return Err(Error::TooFewSamples { needed: d + 1, got: n_pairs });
    }
    let mut rm = Mat::zeros(d, d);
    let mut sft = Mat::zeros(d, d);
    let draw = |rng: &mut R| -> Vec<f64> { standard_normal_vec(d, rng).into_iter().map(|v| v + feature_mean).collect() };
    for _ in 0..n_pairs {
        let hw = draw(rng);
        let hl = draw(rng);
        let diff: Vec<f64> = hw.iter().zip(&hl).map(|(a, b)| a - b).collect();
        for i in 0..d {
            for j in 0..d {
                rm[(i, j)] += diff[i] * diff[j];
                sft[(i, j)] += 0.5 * (hw[i] * hw[j] + hl[i] * hl[j]);
            }
        }
    }
    let twice = sft.scale(2.0);
    let rel_error = rm.rel_frobenius_err(&twice)?;
    Ok(SigmaComparison { sigma_rm: rm, sigma_sft: sft, rel_error })
}

/// A random SPD matrix `AAᵀ/d + 0.1·I`, random `θ̂` and random `h`.
pub fn random_instance<R: Rng + ?Sized>(d: usize, b: f64, rng: &mut R) -> Result<(ConfidenceSet, Vec<f64>)> {
    let a = Mat::from_vec(d, d, standard_normal_vec(d * d, rng))?;
    let mut sigma = a.matmul(&a.transpose())?.scale(1.0 / d as f64);
    for i in 0..d {
        sigma[(i, i)] += 0.1;
    }
    // symmetrise exactly
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    let theta = standard_normal_vec(d, rng);
    let h = standard_normal_vec(d, rng);
    Ok((ConfidenceSet::new(theta, sigma, b)?, h))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRow {
    pub seed: u64,
    pub dim: usize,
    pub closed: f64,
    pub numeric: f64,
    pub abs_diff: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PessimismReport {
    pub b: f64,
    pub instances: Vec<InstanceRow>,
    pub zero_h: InstanceRow,
    pub max_deviation: f64,
    pub sigma_rel_error_zero_mean: f64,
    pub sigma_rel_error_mean2: f64,
    pub sigma_n_pairs: usize,
}

/// Closed-form vs numeric minima on one random instance per seed (dimension
/// cycling through `1..=max_dim`), the `h = 0` case, and both covariance
/// comparisons.
pub fn verification_report(max_dim: usize, b: f64, seeds: &[u64], sigma_dim: usize, sigma_n_pairs: usize) -> Result<PessimismReport> {
    if max_dim == 0 {
        return Err(invalid("max_dim must be positive"));
    }
    let mut instances = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let dim = 1 + i % max_dim;
        let mut rng = seeding::rng_for(seed, stream::PESSIMISM);
        let (cs, h) = random_instance(dim, b, &mut rng)?;
        let closed = pessimistic_reward_closed(&cs, &h)?;
        let num = pessimistic_reward_numeric(&cs, &h, DEFAULT_ITERS)?;
        instances.push(InstanceRow { seed, dim, closed, numeric: num.value, abs_diff: (closed - num.value).abs(), converged: num.converged });
    }
    let (cs, _) = random_instance(max_dim, b, &mut seeding::rng_for(0, stream::PESSIMISM))?;
    let zero = vec![0.0; max_dim];
    let closed = pessimistic_reward_closed(&cs, &zero)?;
    let num = pessimistic_reward_numeric(&cs, &zero, DEFAULT_ITERS)?;
    let zero_h = InstanceRow { seed: 0, dim: max_dim, closed, numeric: num.value, abs_diff: (closed - num.value).abs(), converged: num.converged };
    let max_deviation = instances.iter().map(|r| r.abs_diff).fold(zero_h.abs_diff, f64::max);
    let mut rng = seeding::rng_for(seeds.first().copied().unwrap_or(0), stream::PESSIMISM ^ 1);
    let e0 = sigma_rm_vs_sft(sigma_dim, sigma_n_pairs, 0.0, &mut rng)?.rel_error;
    let e2 = sigma_rm_vs_sft(sigma_dim, sigma_n_pairs, 2.0, &mut rng)?.rel_error;
    Ok(PessimismReport {
        b,
        instances,
        zero_h,
        max_deviation,
        sigma_rel_error_zero_mean: e0,
        sigma_rel_error_mean2: e2,
        sigma_n_pairs,
    })
}
