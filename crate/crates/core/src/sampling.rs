//! Seeded sampling for the studies.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and split into independent streams with
//! `set_stream`; see [`streams`]. ChaCha output is fixed by the algorithm, so
//! draws are identical across platforms and worker counts. Each sample matrix
//! is generated row by row from a single stream.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Stream ids used with [`rng_for`].
pub mod streams {
    pub const INPUTS: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const SOBOL: u64 = 2;
    pub const REDUCED: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const PERMUTATION: u64 = 5;
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `N(mean, covariance)` with a possibly singular covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

/// Relative tolerance on negative eigenvalues before a covariance is rejected.
pub const PSD_TOL: f64 = 1e-8;

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if covariance.nrows() != p || covariance.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: covariance.nrows() });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "covariance", reason: "non-finite entry".into() });
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric { max_asymmetry: asym });
        }
        let law = Self { mean, covariance };
        let min = law.min_eigenvalue();
        if min < -PSD_TOL * law.spectral_norm() {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        Ok(law)
    }

    pub fn standard(p: usize) -> Self {
        Self { mean: DVector::zeros(p), covariance: DMatrix::identity(p, p) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.covariance.clone().symmetric_eigenvalues().min()
    }

    fn spectral_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.covariance.clone().symmetric_eigenvalues().amax()
    }

    /// A matrix `F` with `F F^T = covariance`: Cholesky when it succeeds,
    /// otherwise `V sqrt(max(lambda, 0))` from the symmetric eigendecomposition.
    /// Both run on the correlation-scaled matrix so that coordinates with
    /// very different scales keep their relative accuracy.
    pub fn factor(&self) -> DMatrix<f64> {
        let (sd, corr) = scale_split(&self.covariance);
        let d = DMatrix::from_diagonal(&DVector::from_vec(sd));
        if let Some(ch) = corr.clone().cholesky() {
            return d * ch.l();
        }
        let eig = corr.symmetric_eigen();
        let mut f = eig.eigenvectors;
        for (mut col, &lambda) in f.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= lambda.max(0.0).sqrt();
        }
        d * f
    }

    /// Correlation matrix; zero-variance coordinates get a unit diagonal and
    /// zero off-diagonals.
    pub fn correlation(&self) -> DMatrix<f64> {
        correlation_from_covariance(&self.covariance).0
    }

    /// Law of the other coordinates given `X_i = value`, embedded back into
    /// `p` dimensions with coordinate `i` pinned at `value` (zero variance).
    pub fn condition_on(&self, i: usize, value: f64) -> Result<Self> {
        let p = self.dim();
        if i >= p {
            return Err(Error::IndexOutOfRange { index: i, len: p });
        }
        let var_i = self.covariance[(i, i)];
        let mut mean = self.mean.clone();
        let mut cov = self.covariance.clone();
        if var_i > 0.0 {
            let c_i = self.covariance.column(i).into_owned();
            let shift = value - self.mean[i];
            for r in 0..p {
                mean[r] += c_i[r] / var_i * shift;
                for c in 0..p {
                    cov[(r, c)] -= c_i[r] * c_i[c] / var_i;
                }
            }
        }
        mean[i] = value;
        for k in 0..p {
            cov[(i, k)] = 0.0;
            cov[(k, i)] = 0.0;
        }
        // restore exact symmetry after the rank-one update
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov)
    }
}

/// Standard deviations and `D^-1 cov D^-1`, with zero rows and columns for
/// zero-variance coordinates.
pub(crate) fn scale_split(cov: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let scaled = DMatrix::from_fn(p, p, |r, c| if sd[r] == 0.0 || sd[c] == 0.0 { 0.0 } else { cov[(r, c)] / (sd[r] * sd[c]) });
    (sd, scaled)
}

/// `(correlation, zero-variance indices)`.
pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let zero: Vec<usize> = (0..p).filter(|&i| sd[i] == 0.0).collect();
    let corr = DMatrix::from_fn(p, p, |r, c| {
        if r == c {
            1.0
        } else if sd[r] == 0.0 || sd[c] == 0.0 {
            0.0
        } else {
            cov[(r, c)] / (sd[r] * sd[c])
        }
    });
    (corr, zero)
}

/// `n` draws from `law` as an `n x p` matrix.
pub fn mvn_sample(law: &GaussianLaw, n: usize, seed: u64) -> DMatrix<f64> {
    mvn_sample_stream(law, n, seed, streams::INPUTS)
}

pub fn mvn_sample_stream(law: &GaussianLaw, n: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, stream);
    mvn_fill(law, n, &mut rng)
}

pub(crate) fn mvn_fill(law: &GaussianLaw, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let p = law.dim();
    let f = law.factor();
    let mut out = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for r in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let x = &law.mean + &f * &z;
        out.row_mut(r).copy_from(&x.transpose());
    }
    out
}

/// Draws from `law`, rejecting rows with any non-positive coordinate and
/// redrawing from the same stream. Returns the samples and the number of
/// rejected rows.
pub fn mvn_sample_positive(law: &GaussianLaw, n: usize, seed: u64, max_rejections: usize) -> Result<(DMatrix<f64>, usize)> {
    mvn_sample_positive_stream(law, n, seed, streams::INPUTS, max_rejections)
}

pub fn mvn_sample_positive_stream(
    law: &GaussianLaw,
    n: usize,
    seed: u64,
    stream: u64,
    max_rejections: usize,
) -> Result<(DMatrix<f64>, usize)> {
    let p = law.dim();
    let f = law.factor();
    let mut rng = rng_for(seed, stream);
    let mut out = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    let mut rejected = 0usize;
    let mut r = 0;
    while r < n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let x = &law.mean + &f * &z;
        if x.iter().all(|&v| v > 0.0) {
            out.row_mut(r).copy_from(&x.transpose());
            r += 1;
        } else {
            rejected += 1;
            if rejected > max_rejections {
                return Err(Error::DegenerateSample(format!(
                    "more than {max_rejections} non-positive draws while sampling {n} positive rows"
                )));
            }
        }
    }
    if rejected > 0 {
        log::info!("rejected {rejected} non-positive draws out of {}", n + rejected);
    }
    Ok((out, rejected))
}

/// Independent uniforms on the box `[lower, upper)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBoxLaw {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformBoxLaw {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite()) {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: format!("coordinate {i}: need finite lower < upper, got [{}, {}]", lower[i], upper[i]),
            });
        }
        Ok(Self { lower, upper })
    }

    /// Same box for every coordinate.
    pub fn cube(p: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; p], vec![upper; p])
    }

    /// `center * (1 +- half_width)` per coordinate.
    pub fn around(center: &[f64], half_width: f64) -> Result<Self> {
        let (lower, upper) = center
            .iter()
            .map(|&c| {
                let d = (c * half_width).abs();
                (c - d, c + d)
            })
            .unzip();
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn mean(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

pub fn uniform_sample(law: &UniformBoxLaw, n: usize, seed: u64) -> DMatrix<f64> {
    uniform_sample_stream(law, n, seed, streams::INPUTS)
}

pub fn uniform_sample_stream(law: &UniformBoxLaw, n: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, stream);
    let p = law.dim();
    let mut out = DMatrix::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            let u: f64 = rng.random();
            // u in [0, 1): stays inside [lower, upper) up to rounding, clamp guards the top
            let v = law.lower[c] + (law.upper[c] - law.lower[c]) * u;
            out[(r, c)] = v.min(law.upper[c]).max(law.lower[c]);
        }
    }
    out
}

/// Copy of `samples` with column `i` replaced by the constant `value`.
pub fn fix_coordinate(samples: &DMatrix<f64>, i: usize, value: f64) -> Result<DMatrix<f64>> {
    if i >= samples.ncols() {
        return Err(Error::IndexOutOfRange { index: i, len: samples.ncols() });
    }
    let mut out = samples.clone();
    out.column_mut(i).fill(value);
    Ok(out)
}

/// How a fixed coordinate interacts with the remaining ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Replace the coordinate; the other coordinates keep their joint law.
    #[default]
    Replace,
    /// Draw the other coordinates from their Gaussian law conditioned on the
    /// fixed value.
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    /// Unbiased (`n - 1`) covariance.
    pub covariance: DMatrix<f64>,
    pub correlation: DMatrix<f64>,
    /// Columns with zero variance; their correlation entries are reported as 0.
    pub zero_variance: Vec<usize>,
}

pub fn empirical_moments(samples: &DMatrix<f64>) -> Result<Moments> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("moments need n >= 2, got {n}")));
    }
    let p = samples.ncols();
    let mean = DVector::from_fn(p, |c, _| samples.column(c).iter().sum::<f64>() / n as f64);
    let mut covariance = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let s: f64 = samples
                .column(a)
                .iter()
                .zip(samples.column(b).iter())
                .map(|(x, y)| (x - mean[a]) * (y - mean[b]))
                .sum();
            let v = s / (n - 1) as f64;
            covariance[(a, b)] = v;
            covariance[(b, a)] = v;
        }
    }
    let (correlation, zero_variance) = correlation_from_covariance(&covariance);
    if !zero_variance.is_empty() {
        log::warn!("zero-variance columns {zero_variance:?}: correlation entries set to 0");
    }
    Ok(Moments { mean, covariance, correlation, zero_variance })
}
