//! Small numerical kernel: jittered Cholesky, log-space sums, Gaussian and
//! inverse-gamma draws, Gaussian conditional covariances and the seeded
//! random stream tree that every sampler draws from.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Default largest diagonal jitter tried by [`cholesky`].
pub const DEFAULT_JITTER_MAX: f64 = 1e-4;

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M + εI`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    /// Wraps an existing lower-triangular matrix. Zero diagonal entries are
    /// accepted so degenerate (zero-covariance) Gaussians can be expressed;
    /// such a factor can sample but not solve.
    pub fn from_lower(lower: DMatrix<f64>) -> Result<Self> {
        if !lower.is_square() {
            return Err(Error::dim("Cholesky factor must be square"));
        }
        let n = lower.nrows();
        for i in 0..n {
            if lower[(i, i)] < 0.0 || !lower[(i, i)].is_finite() {
                return Err(Error::invalid("factor diagonal must be finite and non-negative"));
            }
            for j in (i + 1)..n {
                if lower[(i, j)] != 0.0 {
                    return Err(Error::invalid("factor must be lower triangular"));
                }
            }
        }
        Ok(Self { lower, jitter: 0.0 })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            lower: DMatrix::identity(dim, dim),
            jitter: 0.0,
        }
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Diagonal jitter that was added before the factorisation succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// Multiplies every entry of `L` by `factor`, i.e. scales the covariance by `factor²`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lower: &self.lower * factor,
            jitter: self.jitter,
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(Error::dim(format!(
                "rhs has length {}, factor is {}",
                b.len(),
                self.dim()
            )));
        }
        self.ensure_nonsingular()?;
        let y = self
            .lower
            .solve_lower_triangular(b)
            .ok_or_else(|| Error::Singular("forward substitution".into()))?;
        self.lower
            .tr_solve_lower_triangular(&y)
            .ok_or_else(|| Error::Singular("back substitution".into()))
    }

    /// Inverse of the factored matrix.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.ensure_nonsingular()?;
        let n = self.dim();
        let linv = self
            .lower
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Singular("triangular inverse".into()))?;
        let mut inv = linv.transpose() * linv;
        symmetrize(&mut inv);
        Ok(inv)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    fn ensure_nonsingular(&self) -> Result<()> {
        if self.lower.diagonal().iter().any(|&d| d <= 0.0) {
            return Err(Error::Singular("factor has a zero pivot".into()));
        }
        Ok(())
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Jitter ladder `0, 1e-12, 1e-11, …` up to and including `jitter_max`.
fn jitter_ladder(jitter_max: f64) -> Vec<f64> {
    let mut ladder = vec![0.0];
    let mut eps = 1e-12;
    while eps <= jitter_max * (1.0 + 1e-9) {
        ladder.push(eps);
        eps *= 10.0;
    }
    ladder
}

/// Cholesky factor of `m + εI` for the smallest `ε` on the jitter ladder that succeeds.
pub fn cholesky(m: &DMatrix<f64>, jitter_max: f64) -> Result<CholeskyFactor> {
    check_symmetric(m)?;
    let n = m.nrows();
    for eps in jitter_ladder(jitter_max) {
        let mut shifted = m.clone();
        symmetrize(&mut shifted);
        for i in 0..n {
            shifted[(i, i)] += eps;
        }
        if let Some(chol) = nalgebra::Cholesky::new(shifted) {
            let lower = chol.unpack();
            if lower.diagonal().iter().all(|&d| d > 0.0 && d.is_finite()) {
                return Ok(CholeskyFactor { lower, jitter: eps });
            }
        }
    }
    Err(Error::NotPositiveDefinite { jitter_max })
}

/// `log Σ exp(vᵢ)` with a max shift. Returns exactly `-∞` when every entry is `-∞`.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid("log_sum_exp of an empty vector"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || v.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("log_sum_exp input contains NaN".into()));
    }
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// `mean + L z` with `z` standard normal.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    factor: &CholeskyFactor,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if mean.len() != factor.dim() {
        return Err(Error::dim(format!(
            "mean has length {}, factor is {}x{}",
            mean.len(),
            factor.dim(),
            factor.dim()
        )));
    }
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + factor.lower() * z)
}

/// Draw from the inverse gamma distribution with density ∝ x^(−shape−1) e^(−rate/x).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!(
            "inverse gamma needs positive shape and rate, got shape={shape}, rate={rate}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let g: f64 = gamma.sample(rng);
    let x = rate / g;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Numeric(format!(
            "inverse gamma draw out of range (shape={shape}, rate={rate}, gamma={g})"
        )));
    }
    Ok(x)
}

/// Conditional covariance of `x_I` given `x_{-I}` under `N(·, Σ)`: `(Q_II)⁻¹` with `Q = Σ⁻¹`.
pub fn conditional_gaussian_cov(sigma: &DMatrix<f64>, block: &[usize]) -> Result<DMatrix<f64>> {
    let precision = cholesky(sigma, 0.0)
        .map_err(|_| Error::Singular("covariance is not positive definite".into()))?
        .inverse()?;
    conditional_cov_from_precision(&precision, block)
}

/// `(Q_II)⁻¹` for a precision matrix `Q`.
pub fn conditional_cov_from_precision(precision: &DMatrix<f64>, block: &[usize]) -> Result<DMatrix<f64>> {
    let n = precision.nrows();
    if block.is_empty() {
        return Err(Error::invalid("conditioning block is empty"));
    }
    if let Some(&bad) = block.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("block index {bad} out of range for dimension {n}")));
    }
    let sub = submatrix(precision, block, block);
    cholesky(&sub, 0.0)
        .map_err(|_| Error::Singular("precision sub-block is not positive definite".into()))?
        .inverse()
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Random stream used by every sampler.
pub type Stream = ChaCha8Rng;

/// Deterministic tree of independent random streams derived from one run seed.
///
/// A stream is addressed by `(stage, index)`; the same address always yields
/// the same stream, regardless of which worker thread consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    /// Stage slot reserved for resampling uniforms and other per-stage global draws.
    pub const GLOBAL: u64 = u64::MAX;

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, stage: u64, index: u64) -> Stream {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&stage.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        key[24..].copy_from_slice(b"glmm-smc");
        ChaCha8Rng::from_seed(key)
    }

    /// A child tree, for replicate runs sharing one master seed.
    pub fn child(&self, index: u64) -> SeedTree {
        let mut rng = self.stream(Self::GLOBAL - 1, index);
        SeedTree::new(rng.random())
    }
}
