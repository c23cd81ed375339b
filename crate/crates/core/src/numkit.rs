//! Small dense linear algebra and the special functions the detector needs.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`. Matrices are row-major [`Mat`].
//! Everything here is a pure function; randomness is always an explicit
//! generator handed in by the caller.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Error, Result};

/// Default covariance shrinkage towards `(trace/d)·I`.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(invalid("matrix needs at least one row"));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_dim(c, row.len())?;
            data.extend_from_slice(row);
        }
        check_finite(&data, "matrix")?;
        Ok(Mat { rows: r, cols: c, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        check_finite(&data, "matrix")?;
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        check_dim(self.cols, other.rows)?;
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F / ‖other‖_F`.
    pub fn rel_frobenius_err(&self, other: &Mat) -> Result<f64> {
        Ok(self.sub(other)?.frobenius() / other.frobenius())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A` and a strictly
/// positive diagonal. Only constructible through [`cholesky`].
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    lower: Mat,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &Mat {
        &self.lower
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> Mat {
        self.lower.matmul(&self.lower.transpose()).expect("square factor")
    }

    /// Solves `L·y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, b.len())?;
        let l = &self.lower;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }

    /// Solves `Lᵀ·x = y` by back substitution.
    pub fn solve_upper(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, y.len())?;
        let l = &self.lower;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        Ok(x)
    }

    /// Solves `A·x = b` for the factored matrix.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_upper(&self.solve_lower(b)?)
    }

    /// `L·z`.
    pub fn mul_lower(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, z.len())?;
        Ok((0..n).map(|i| (0..=i).map(|k| self.lower[(i, k)] * z[k]).sum()).collect())
    }

    /// Squared Mahalanobis norm `vᵀ A⁻¹ v` of an already centred vector.
    pub fn inv_quad(&self, v: &[f64]) -> Result<f64> {
        let y = self.solve_lower(v)?;
        Ok(dot(&y, &y))
    }
}

/// Cholesky factorisation of a symmetric positive definite matrix.
pub fn cholesky(m: &Mat) -> Result<CholFactor> {
    if m.rows != m.cols {
        return Err(Error::NotSquare { rows: m.rows, cols: m.cols });
    }
    check_finite(&m.data, "cholesky input")?;
    let asym = m.max_asymmetry();
    let scale = m.data.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let n = m.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NonPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(CholFactor { lower: l })
}

/// Sample mean and shrunk covariance `(1−λ)·C + λ·(tr C/d)·I`, where `C`
/// uses the unbiased `n−1` denominator.
pub fn empirical_mean_cov(samples: &[Vec<f64>], shrinkage: f64) -> Result<(Vec<f64>, Mat)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    if !shrinkage.is_finite() || !(0.0..1.0).contains(&shrinkage) {
        return Err(invalid(format!("shrinkage must lie in [0,1), got {shrinkage}")));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(invalid("zero-dimensional samples"));
    }
    for s in samples {
        check_dim(d, s.len())?;
        check_finite(s, "covariance sample")?;
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = Mat::zeros(d, d);
    let mut centred = vec![0.0; d];
    for s in samples {
        for ((c, v), m) in centred.iter_mut().zip(s).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centred[i] * centred[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if shrinkage > 0.0 {
        let target = cov.trace() / d as f64;
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] *= 1.0 - shrinkage;
            }
            cov[(i, i)] += shrinkage * target;
        }
    }
    Ok((mean, cov))
}

/// `√((x−μ)ᵀ Σ⁻¹ (x−μ))` with `Σ` given by its Cholesky factor.
pub fn mahalanobis(x: &[f64], mean: &[f64], chol: &CholFactor) -> Result<f64> {
    Ok(mahalanobis_sq(x, mean, chol)?.sqrt())
}

pub fn mahalanobis_sq(x: &[f64], mean: &[f64], chol: &CholFactor) -> Result<f64> {
    check_dim(chol.dim(), x.len())?;
    check_dim(chol.dim(), mean.len())?;
    check_finite(x, "mahalanobis input")?;
    check_finite(mean, "mahalanobis mean")?;
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    chol.inv_quad(&diff)
}

/// `mean + L·z` with `z` standard normal.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], chol: &CholFactor, rng: &mut R) -> Result<Vec<f64>> {
    check_dim(chol.dim(), mean.len())?;
    let z = standard_normal_vec(mean.len(), rng);
    let lz = chol.mul_lower(&z)?;
    Ok(mean.iter().zip(lz).map(|(m, v)| m + v).collect())
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

// ---------------------------------------------------------------------------
// Chi-squared distribution
// ---------------------------------------------------------------------------

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// `ln Γ(dof/2)`, exact up to rounding for integer `dof`.
fn ln_gamma_half(dof: u32) -> f64 {
    if dof.is_multiple_of(2) {
        // Γ(n) = (n-1)!
        (1..dof / 2).map(|i| (i as f64).ln()).sum()
    } else {
        // Γ(n + 1/2) = √π · Π_{i<n} (i + 1/2)
        let n = dof / 2;
        0.5 * std::f64::consts::PI.ln() + (0..n).map(|i| (i as f64 + 0.5).ln()).sum::<f64>()
    }
}

/// Regularised incomplete gamma `(P(a,x), Q(a,x))` for `a = dof/2`.
fn incomplete_gamma(dof: u32, x: f64) -> (f64, f64) {
    let a = dof as f64 / 2.0;
    if x == 0.0 {
        return (0.0, 1.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma_half(dof);
    if x < a + 1.0 {
        // series: P = e^{-x} x^a / Γ(a) · Σ x^n / (a (a+1) ... (a+n))
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        // modified Lentz continued fraction for Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

fn check_chi2_args(x: f64, dof: u32) -> Result<()> {
    if dof == 0 {
        return Err(invalid("chi-squared degrees of freedom must be positive"));
    }
    if x.is_nan() || x < 0.0 {
        return Err(invalid(format!("chi-squared argument must be >= 0, got {x}")));
    }
    Ok(())
}

/// Chi-squared CDF, `P(dof/2, x/2)`.
pub fn chi2_cdf(x: f64, dof: u32) -> Result<f64> {
    check_chi2_args(x, dof)?;
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(incomplete_gamma(dof, x / 2.0).0)
}

/// Chi-squared survival function `1 − F(x)`, computed without cancellation.
pub fn chi2_sf(x: f64, dof: u32) -> Result<f64> {
    check_chi2_args(x, dof)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(incomplete_gamma(dof, x / 2.0).1)
}

/// Inverse CDF by bisection.
pub fn chi2_quantile(p: f64, dof: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("probability must lie in [0,1], got {p}")));
    }
    if dof == 0 {
        return Err(invalid("chi-squared degrees of freedom must be positive"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while chi2_cdf(hi, dof)? < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
