//! Latent outlier detection against the SFT-induced Gaussian.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::nnkit::ByteReader;
use crate::numkit::{chi2_quantile, chi2_sf, cholesky, empirical_mean_cov, mahalanobis_sq, CholFactor, Mat};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_FILTER_QUANTILE: f64 = 0.975;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentStats {
    pub mean: Vec<f64>,
    pub cov: Mat,
    #[serde(skip)]
    pub chol: CholFactor,
    pub n_samples: usize,
    pub shrinkage: f64,
    pub filtered: bool,
}

impl LatentStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn d2(&self, z: &[f64]) -> Result<f64> {
        mahalanobis_sq(z, &self.mean, &self.chol)
    }
}

fn plain_fit(latents: &[Vec<f64>], shrinkage: f64) -> Result<(Vec<f64>, Mat, CholFactor)> {
    let (mean, cov) = empirical_mean_cov(latents, shrinkage)?;
    let chol = cholesky(&cov)?;
    Ok((mean, cov, chol))
}

/// Mean and covariance of SFT latents. With `filter_quantile < 1`, samples
/// outside the chi-squared ellipsoid at that quantile are dropped and the fit
/// is repeated once.
pub fn fit_sft_stats(latents: &[Vec<f64>], shrinkage: f64, filter_quantile: f64) -> Result<LatentStats> {
    if !(filter_quantile > 0.0 && filter_quantile <= 1.0) {
        return Err(invalid(format!("filter_quantile must lie in (0,1], got {filter_quantile}")));
    }
    let k = latents.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(invalid("no latents or zero-dimensional latents"));
    }
    if latents.len() < k + 1 {
        return Err(Error::TooFewSamples { needed: k + 1, got: latents.len() });
    }
    let (mean, cov, chol) = plain_fit(latents, shrinkage)?;
    if filter_quantile >= 1.0 {
        return Ok(LatentStats { mean, cov, chol, n_samples: latents.len(), shrinkage, filtered: false });
    }
    let cutoff = chi2_quantile(filter_quantile, k as u32)?;
    let mut kept = Vec::with_capacity(latents.len());
    for z in latents {
        if mahalanobis_sq(z, &mean, &chol)? <= cutoff {
            kept.push(z.clone());
        }
    }
    if kept.len() < k + 1 {
        return Err(Error::TooFewSamples { needed: k + 1, got: kept.len() });
    }
    let (mean, cov, chol) = plain_fit(&kept, shrinkage)?;
    Ok(LatentStats { mean, cov, chol, n_samples: kept.len(), shrinkage, filtered: true })
}

/// Right-tail chi-squared probability of a squared distance.
pub fn p_value(d2: f64, k: usize) -> Result<f64> {
    if d2.is_nan() || d2 < 0.0 {
        return Err(invalid(format!("squared distance must be >= 0, got {d2}")));
    }
    chi2_sf(d2, k as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub d2: Vec<f64>,
    pub p_values: Vec<f64>,
    pub flags: Vec<bool>,
    pub alpha: f64,
    pub mop: f64,
}

impl DetectionReport {
    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    /// JSON with the per-sample arrays and a summary block.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "summary": {
                "n": self.d2.len(),
                "n_flagged": self.n_flagged(),
                "alpha": self.alpha,
                "mop": self.mop,
            },
            "d2": self.d2,
            "p_values": self.p_values,
            "flags": self.flags,
        })
    }
}

pub fn detect(latents: &[Vec<f64>], stats: &LatentStats, alpha: f64) -> Result<DetectionReport> {
    if latents.is_empty() {
        return Err(invalid("no latents to test"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let k = stats.dim();
    let mut d2 = Vec::with_capacity(latents.len());
    let mut p_values = Vec::with_capacity(latents.len());
    let mut flags = Vec::with_capacity(latents.len());
    for z in latents {
        let d = stats.d2(z)?;
        let p = p_value(d, k)?;
        d2.push(d);
        p_values.push(p);
        flags.push(p < alpha);
    }
    let mop = flags.iter().filter(|f| **f).count() as f64 / latents.len() as f64;
    Ok(DetectionReport { d2, p_values, flags, alpha, mop })
}

// ---- latent dumps ----

pub const LATENT_MAGIC: &[u8; 6] = b"IBLAT\0";
pub const LATENT_VERSION: u32 = 1;

pub fn latents_to_bytes(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(18 + rows.len() * dim * 8);
    out.extend_from_slice(LATENT_MAGIC);
    out.extend_from_slice(&LATENT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for r in rows {
        check_dim(dim, r.len())?;
        for v in r {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn latents_from_bytes(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut r = ByteReader { buf: bytes, pos: 0 };
    if r.take(6)? != LATENT_MAGIC {
        return Err(Error::Format("bad latent dump magic".into()));
    }
    let version = r.u32()?;
    if version != LATENT_VERSION {
        return Err(Error::Format(format!("unsupported latent dump version {version}")));
    }
    let rows = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if bytes.len() != 18 + rows * dim * 8 {
        return Err(Error::Format("latent dump length disagrees with header".into()));
    }
    (0..rows).map(|_| (0..dim).map(|_| r.f64()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::standard_normal_vec;
    use crate::seeding::rng_for;

    fn gaussian_cloud(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, 0);
        (0..n).map(|_| standard_normal_vec(k, &mut rng)).collect()
    }

    #[test]
    fn p_value_cases() {
        assert_eq!(p_value(0.0, 3).unwrap(), 1.0);
        assert!((p_value(2.0 * 2f64.ln(), 2).unwrap() - 0.5).abs() < 1e-14);
        assert!((p_value(1.0, 1).unwrap() - 0.3173105078629141).abs() < 1e-9);
        assert!(p_value(-1.0, 2).is_err());
        let mut prev = 1.0;
        for i in 1..50 {
            let p = p_value(i as f64 * 0.7, 4).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn unfiltered_fit_is_plain() {
        let cloud = gaussian_cloud(200, 3, 1);
        let s = fit_sft_stats(&cloud, 1e-3, 1.0).unwrap();
        assert!(!s.filtered);
        assert_eq!(s.n_samples, 200);
        let (mean, cov) = empirical_mean_cov(&cloud, 1e-3).unwrap();
        assert_eq!(s.mean, mean);
        assert_eq!(s.cov, cov);
    }

    #[test]
    fn filter_drops_tail_and_refits_once() {
        let cloud = gaussian_cloud(5000, 4, 2);
        let s = fit_sft_stats(&cloud, 1e-3, 0.975).unwrap();
        assert!(s.filtered);
        let dropped = 1.0 - s.n_samples as f64 / 5000.0;
        assert!((dropped - 0.025).abs() < 0.01, "dropped {dropped}");
        assert!(s.mean.iter().all(|m| m.abs() < 0.05));
    }

    #[test]
    fn identical_latents_not_pd() {
        let same = vec![vec![1.0, 2.0]; 10];
        assert!(matches!(fit_sft_stats(&same, 1e-3, 1.0), Err(Error::NonPositiveDefinite { .. })));
        assert!(matches!(fit_sft_stats(&same[..2], 1e-3, 1.0), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn detect_at_mean_and_far_away() {
        let cloud = gaussian_cloud(2000, 3, 3);
        let s = fit_sft_stats(&cloud, 1e-3, 1.0).unwrap();
        let r = detect(std::slice::from_ref(&s.mean), &s, 0.01).unwrap();
        assert_eq!(r.p_values, vec![1.0]);
        assert_eq!(r.flags, vec![false]);
        assert_eq!(r.mop, 0.0);

        let shifted: Vec<Vec<f64>> = cloud.iter().map(|z| vec![z[0] + 10.0, z[1], z[2]]).collect();
        let r = detect(&shifted, &s, 0.01).unwrap();
        assert!(r.mop > 0.95);
        assert_eq!(r.n_flagged() as f64 / 2000.0, r.mop);
        assert!(detect(&[], &s, 0.01).is_err());
        assert!(detect(&cloud, &s, 1.0).is_err());
    }

    #[test]
    fn self_calibration() {
        let cloud = gaussian_cloud(5000, 8, 4);
        let s = fit_sft_stats(&cloud, 1e-3, 1.0).unwrap();
        let mop = detect(&cloud, &s, 0.01).unwrap().mop;
        assert!((0.0..=0.03).contains(&mop), "{mop}");
    }

    #[test]
    fn latent_dump_roundtrip() {
        let rows = gaussian_cloud(7, 3, 5);
        let bytes = latents_to_bytes(&rows).unwrap();
        assert_eq!(&bytes[..6], LATENT_MAGIC);
        assert_eq!(latents_from_bytes(&bytes).unwrap(), rows);
        assert!(latents_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(latents_from_bytes(&bad).is_err());
        assert!(latents_to_bytes(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
