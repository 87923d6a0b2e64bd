//! Gaussian base kernels, the median bandwidth heuristic, empirical centering
//! and on-demand Gram columns.
//!
//! For an input block `i` with Gaussian Gram matrix `K_i`, the kernel used by
//! the estimators is the *augmented* kernel `1 + k_c`, where `k_c` is `k`
//! centered against the empirical law of the block's own samples:
//!
//! ```text
//! K_c[s, t] = K[s, t] - r[s] - r[t] + g,   r[s] = mean_t K[s, t],   g = mean_s r[s]
//! ```
//!
//! A subset `A` of blocks uses the product `K_A = prod_{i in A} (1 + K_{i,c})`
//! (the all-ones matrix when `A` is empty). Columns are produced in `O(n |A|)`
//! time from the per-block [`CenteringStats`]; nothing of size `n x n` is kept.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::trajectory::TrajectorySet;
use crate::par::{self, compensated_sum, Execution};
use crate::sampling::{rng_for, streams};

/// Above this many samples the median heuristic runs on a seeded subsample.
pub const MEDIAN_SUBSAMPLE_LIMIT: usize = 5000;
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;

/// Gaussian kernel `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn gaussian_eval(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    check_bandwidth(sigma)?;
    Ok(gaussian_from_sq(squared_distance(x, y), inv_two_sigma_sq(sigma)))
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn inv_two_sigma_sq(sigma: f64) -> f64 {
    0.5 / (sigma * sigma)
}

#[inline]
pub(crate) fn gaussian_from_sq(d2: f64, inv_two_sigma_sq: f64) -> f64 {
    (-d2 * inv_two_sigma_sq).exp()
}

fn check_bandwidth(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("bandwidth must be positive and finite, got {sigma}"),
        });
    }
    Ok(())
}

/// Median of the pairwise Euclidean distances between the rows of a
/// row-major `n x dim` sample.
pub fn median_bandwidth(samples: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: format!("{} values cannot be split into rows of {dim}", samples.len()),
        });
    }
    let n = samples.len() / dim;
    median_pairwise_distance(n, Execution::Parallel, |s, t| {
        squared_distance(&samples[s * dim..(s + 1) * dim], &samples[t * dim..(t + 1) * dim]).sqrt()
    })
}

/// Median of `{dist(i, j) : i < j}` over `n` items. An even count averages the
/// two middle values. For `n > MEDIAN_SUBSAMPLE_LIMIT` a fixed-seed uniform
/// subsample of `MEDIAN_SUBSAMPLE_LIMIT` items is used instead.
pub fn median_pairwise_distance<D>(n: usize, exec: Execution, dist: D) -> Result<f64>
where
    D: Fn(usize, usize) -> f64 + Sync + Send,
{
    if n < 2 {
        return Err(Error::DegenerateSample(format!("median heuristic needs n >= 2, got {n}")));
    }
    let items: Vec<usize> = if n > MEDIAN_SUBSAMPLE_LIMIT {
        let mut rng = rng_for(MEDIAN_SUBSAMPLE_SEED, streams::SUBSAMPLE);
        let mut picked = index::sample(&mut rng, n, MEDIAN_SUBSAMPLE_LIMIT).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let m = items.len();
    let rows = par::map_indexed(exec, m - 1, |a| {
        ((a + 1)..m).map(|b| dist(items[a], items[b])).collect::<Vec<f64>>()
    });
    let mut all: Vec<f64> = Vec::with_capacity(m * (m - 1) / 2);
    for r in rows {
        all.extend(r);
    }
    if all.iter().any(|d| !d.is_finite()) {
        return Err(Error::DegenerateSample("non-finite pairwise distance".into()));
    }
    let count = all.len();
    let mid = count / 2;
    let (lower, upper_mid, _) = all.select_nth_unstable_by(mid, f64::total_cmp);
    let upper_mid = *upper_mid;
    let median = if count % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    };
    if median <= 0.0 {
        let max = all.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::DegenerateSample("all pairwise distances are zero".into()));
        }
        return Err(Error::DegenerateSample(
            "median pairwise distance is zero (more than half the pairs coincide)".into(),
        ));
    }
    Ok(median)
}

/// One input block `X_i`: `n` samples in `R^dim` with a Gaussian bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBlock {
    name: String,
    dim: usize,
    samples: Vec<f64>,
    bandwidth: f64,
}

impl ParameterBlock {
    /// `samples` is row-major `n x dim`.
    pub fn new(name: impl Into<String>, dim: usize, samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if dim == 0 || samples.len() % dim != 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: format!("{} values cannot be split into rows of {dim}", samples.len()),
            });
        }
        let n = samples.len() / dim;
        if n < 2 {
            return Err(Error::DegenerateSample(format!("a block needs n >= 2 samples, got {n}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "samples", reason: "non-finite entry".into() });
        }
        check_bandwidth(bandwidth)?;
        Ok(Self { name: name.into(), dim, samples, bandwidth })
    }

    /// Block with its bandwidth chosen by the median heuristic.
    pub fn with_median_bandwidth(name: impl Into<String>, dim: usize, samples: Vec<f64>) -> Result<Self> {
        let bandwidth = median_bandwidth(&samples, dim)?;
        Self::new(name, dim, samples, bandwidth)
    }

    /// Splits the columns of an `n x p` matrix into `p` scalar blocks, each
    /// with its own median-heuristic bandwidth.
    pub fn scalar_blocks(samples: &DMatrix<f64>, names: &[String]) -> Result<Vec<Self>> {
        if names.len() != samples.ncols() {
            return Err(Error::DimensionMismatch { expected: samples.ncols(), got: names.len() });
        }
        samples
            .column_iter()
            .zip(names)
            .map(|(col, name)| Self::with_median_bandwidth(name.clone(), 1, col.iter().copied().collect()))
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.samples[s * self.dim..(s + 1) * self.dim]
    }

    /// Base (uncentered) Gaussian kernel between samples `s` and `t`.
    #[inline]
    pub fn kernel(&self, s: usize, t: usize) -> f64 {
        gaussian_from_sq(squared_distance(self.row(s), self.row(t)), inv_two_sigma_sq(self.bandwidth))
    }

    /// Writes column `j` of the base Gram matrix into `out`.
    pub fn base_column(&self, j: usize, out: &mut [f64]) {
        let c = inv_two_sigma_sq(self.bandwidth);
        if self.dim == 1 {
            let xj = self.samples[j];
            for (o, &x) in out.iter_mut().zip(&self.samples) {
                let d = x - xj;
                *o = gaussian_from_sq(d * d, c);
            }
        } else {
            let xj = self.row(j);
            for (t, o) in out.iter_mut().enumerate() {
                *o = gaussian_from_sq(squared_distance(self.row(t), xj), c);
            }
        }
    }

    /// Same block with rows reordered so that new row `s` is old row `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for &p in perm {
            samples.extend_from_slice(self.row(p));
        }
        Self { name: self.name.clone(), dim: self.dim, samples, bandwidth: self.bandwidth }
    }
}

/// Empirical centering statistics of one block's Gaussian Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringStats {
    pub row_means: Vec<f64>,
    pub grand_mean: f64,
}

impl CenteringStats {
    /// Entry `K_c[s, t]` given the base kernel value `k = K[s, t]`.
    #[inline]
    pub fn center(&self, k: f64, s: usize, t: usize) -> f64 {
        k - self.row_means[s] - self.row_means[t] + self.grand_mean
    }
}

/// Row means and grand mean of the block's Gram matrix. Rows are reduced
/// independently with compensated sums, so the result does not depend on the
/// execution policy.
pub fn centering_stats(block: &ParameterBlock, exec: Execution) -> CenteringStats {
    let n = block.n();
    let inv_n = 1.0 / n as f64;
    let row_means = par::map_indexed_with(
        exec,
        n,
        || vec![0.0; n],
        |col, s| {
            block.base_column(s, col);
            compensated_sum(col.iter().copied()) * inv_n
        },
    );
    let grand_mean = compensated_sum(row_means.iter().copied()) * inv_n;
    CenteringStats { row_means, grand_mean }
}

/// Sorted set of block indices `A` (0-based). The empty set is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SubsetSpec {
    indices: Vec<usize>,
}

impl SubsetSpec {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter { name: "subset", reason: format!("duplicate index {}", w[0]) });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::IndexOutOfRange { index: bad, len: p });
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    pub fn singleton(i: usize) -> Self {
        Self { indices: vec![i] }
    }

    pub fn full(p: usize) -> Self {
        Self { indices: (0..p).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// `~A` within `{0, .., p-1}`.
    pub fn complement(&self, p: usize) -> Self {
        Self { indices: (0..p).filter(|i| !self.contains(*i)).collect() }
    }

    pub fn is_subset_of(&self, other: &SubsetSpec) -> bool {
        self.indices.iter().all(|i| other.contains(*i))
    }

    pub fn union(&self, other: &SubsetSpec) -> Self {
        let mut indices: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    /// Human-readable label such as `X1+X3`, using block names.
    pub fn label(&self, names: &[impl AsRef<str>]) -> String {
        if self.indices.is_empty() {
            return "{}".to_string();
        }
        self.indices.iter().map(|&i| names[i].as_ref()).collect::<Vec<_>>().join("+")
    }
}

impl fmt::Display for SubsetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Column-wise access to a symmetric `n x n` Gram matrix.
pub trait GramColumnSource: Sync {
    fn n(&self) -> usize;

    /// Writes column `j` into `out` (length `n`).
    fn column_into(&self, j: usize, out: &mut [f64]) -> Result<()>;

    fn column(&self, j: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n()];
        self.column_into(j, &mut out)?;
        Ok(out)
    }
}

fn check_column(j: usize, n: usize, out: &[f64]) -> Result<()> {
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    if out.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: out.len() });
    }
    Ok(())
}

/// Checks that `blocks` and `stats` describe the same `n` samples.
pub(crate) fn check_aligned(blocks: &[ParameterBlock], stats: &[CenteringStats]) -> Result<usize> {
    if blocks.len() != stats.len() {
        return Err(Error::DimensionMismatch { expected: blocks.len(), got: stats.len() });
    }
    let n = blocks.first().map(ParameterBlock::n).ok_or_else(|| Error::InvalidParameter {
        name: "blocks",
        reason: "at least one input block is required".into(),
    })?;
    for (b, s) in blocks.iter().zip(stats) {
        if b.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.n() });
        }
        if s.row_means.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.row_means.len() });
        }
    }
    Ok(n)
}

/// Writes the empirically centered column `j` of block `block` into `out`.
#[inline]
pub(crate) fn centered_column_into(block: &ParameterBlock, stats: &CenteringStats, j: usize, out: &mut [f64]) {
    block.base_column(j, out);
    let shift = stats.grand_mean - stats.row_means[j];
    for (o, r) in out.iter_mut().zip(&stats.row_means) {
        *o += shift - r;
    }
}

/// Gram matrix of the augmented product kernel over a subset of blocks.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedProductGram<'a> {
    blocks: &'a [ParameterBlock],
    stats: &'a [CenteringStats],
    subset: &'a SubsetSpec,
    n: usize,
}

impl<'a> AugmentedProductGram<'a> {
    pub fn new(blocks: &'a [ParameterBlock], stats: &'a [CenteringStats], subset: &'a SubsetSpec) -> Result<Self> {
        let n = check_aligned(blocks, stats)?;
        if let Some(&bad) = subset.indices().iter().find(|&&i| i >= blocks.len()) {
            return Err(Error::IndexOutOfRange { index: bad, len: blocks.len() });
        }
        Ok(Self { blocks, stats, subset, n })
    }
}

impl GramColumnSource for AugmentedProductGram<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn column_into(&self, j: usize, out: &mut [f64]) -> Result<()> {
        check_column(j, self.n, out)?;
        out.fill(1.0);
        for &i in self.subset.indices() {
            let block = &self.blocks[i];
            let stats = &self.stats[i];
            let c = inv_two_sigma_sq(block.bandwidth);
            let shift = 1.0 + stats.grand_mean - stats.row_means[j];
            if block.dim == 1 {
                let xj = block.samples[j];
                for ((o, &x), r) in out.iter_mut().zip(&block.samples).zip(&stats.row_means) {
                    let d = x - xj;
                    *o *= gaussian_from_sq(d * d, c) + shift - r;
                }
            } else {
                let xj = block.row(j);
                for (t, o) in out.iter_mut().enumerate() {
                    let k = gaussian_from_sq(squared_distance(block.row(t), xj), c);
                    *o *= k + shift - stats.row_means[t];
                }
            }
        }
        Ok(())
    }
}

/// Column `j` of `K_A = prod_{i in A} (1 + K_{i,c})`.
pub fn augmented_subset_column(
    blocks: &[ParameterBlock],
    stats: &[CenteringStats],
    subset: &SubsetSpec,
    j: usize,
) -> Result<Vec<f64>> {
    AugmentedProductGram::new(blocks, stats, subset)?.column(j)
}

/// Output samples `Y^(1..n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputSamples {
    Scalar(Vec<f64>),
    /// Row-major `n x dim`.
    Vector { dim: usize, values: Vec<f64> },
    /// Function-valued outputs on a shared grid, compared in L2.
    Trajectories(TrajectorySet),
}

impl OutputSamples {
    pub fn n(&self) -> usize {
        match self {
            OutputSamples::Scalar(v) => v.len(),
            OutputSamples::Vector { dim, values } => values.len() / dim,
            OutputSamples::Trajectories(set) => set.len(),
        }
    }

    /// Distance between outputs `s` and `t` in the output space.
    pub fn distance(&self, s: usize, t: usize) -> f64 {
        self.squared_distance(s, t).sqrt()
    }

    #[inline]
    fn squared_distance(&self, s: usize, t: usize) -> f64 {
        match self {
            OutputSamples::Scalar(v) => {
                let d = v[s] - v[t];
                d * d
            }
            OutputSamples::Vector { dim, values } => {
                squared_distance(&values[s * dim..(s + 1) * dim], &values[t * dim..(t + 1) * dim])
            }
            OutputSamples::Trajectories(set) => set.squared_distance(s, t),
        }
    }

    pub fn median_bandwidth(&self, exec: Execution) -> Result<f64> {
        median_pairwise_distance(self.n(), exec, |s, t| self.distance(s, t))
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        match self {
            OutputSamples::Scalar(v) => OutputSamples::Scalar(perm.iter().map(|&p| v[p]).collect()),
            OutputSamples::Vector { dim, values } => {
                let mut out = Vec::with_capacity(values.len());
                for &p in perm {
                    out.extend_from_slice(&values[p * dim..(p + 1) * dim]);
                }
                OutputSamples::Vector { dim: *dim, values: out }
            }
            OutputSamples::Trajectories(set) => OutputSamples::Trajectories(set.permuted(perm)),
        }
    }
}

/// Plain Gaussian Gram matrix on the outputs.
#[derive(Debug, Clone)]
pub struct OutputGram<'a> {
    samples: &'a OutputSamples,
    sigma: f64,
    /// Optional `n x n` squared-distance table (trajectory outputs only).
    cache: Option<Vec<f64>>,
}

/// Largest `n` for which [`OutputGram::with_distance_cache`] builds its table.
pub const DISTANCE_CACHE_LIMIT: usize = 4096;

impl<'a> OutputGram<'a> {
    pub fn new(samples: &'a OutputSamples, sigma: f64) -> Result<Self> {
        check_bandwidth(sigma)?;
        if samples.n() < 2 {
            return Err(Error::DegenerateSample("output needs n >= 2 samples".into()));
        }
        Ok(Self { samples, sigma, cache: None })
    }

    /// Precomputes all pairwise squared distances when `n <= DISTANCE_CACHE_LIMIT`.
    /// This trades `O(n^2)` memory for not recomputing trajectory distances
    /// on every pass; larger `n` falls back to on-demand columns.
    pub fn with_distance_cache(samples: &'a OutputSamples, sigma: f64, exec: Execution) -> Result<Self> {
        let mut g = Self::new(samples, sigma)?;
        let n = samples.n();
        if n <= DISTANCE_CACHE_LIMIT {
            let rows = par::map_indexed(exec, n, |s| (0..n).map(|t| samples.squared_distance(s, t)).collect::<Vec<_>>());
            g.cache = Some(rows.concat());
        }
        Ok(g)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }
}

impl GramColumnSource for OutputGram<'_> {
    fn n(&self) -> usize {
        self.samples.n()
    }

    fn column_into(&self, j: usize, out: &mut [f64]) -> Result<()> {
        let n = self.n();
        check_column(j, n, out)?;
        let c = inv_two_sigma_sq(self.sigma);
        match (&self.cache, self.samples) {
            (Some(cache), _) => {
                for (o, &d2) in out.iter_mut().zip(&cache[j * n..(j + 1) * n]) {
                    *o = gaussian_from_sq(d2, c);
                }
            }
            (None, OutputSamples::Scalar(v)) => {
                let yj = v[j];
                for (o, &y) in out.iter_mut().zip(v) {
                    let d = y - yj;
                    *o = gaussian_from_sq(d * d, c);
                }
            }
            (None, samples) => {
                for (t, o) in out.iter_mut().enumerate() {
                    *o = gaussian_from_sq(samples.squared_distance(t, j), c);
                }
            }
        }
        Ok(())
    }
}

/// Column `j` of the output Gram matrix `L[s, t] = exp(-d(Y_s, Y_t)^2 / (2 sigma^2))`.
pub fn output_gram_column(y: &OutputSamples, sigma: f64, j: usize) -> Result<Vec<f64>> {
    OutputGram::new(y, sigma)?.column(j)
}

/// A materialized Gram matrix; used as the dense oracle and in tests.
#[derive(Debug, Clone)]
pub struct DenseGram {
    pub matrix: DMatrix<f64>,
}

impl DenseGram {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        Ok(Self { matrix })
    }

    /// Materializes any column source. Allocates `n x n`.
    pub fn from_source(src: &dyn GramColumnSource) -> Result<Self> {
        let n = src.n();
        let mut m = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            src.column_into(j, &mut col)?;
            m.column_mut(j).copy_from_slice(&col);
        }
        Ok(Self { matrix: m })
    }
}

impl GramColumnSource for DenseGram {
    fn n(&self) -> usize {
        self.matrix.nrows()
    }

    fn column_into(&self, j: usize, out: &mut [f64]) -> Result<()> {
        check_column(j, self.n(), out)?;
        out.copy_from_slice(self.matrix.column(j).as_slice());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_block(name: &str, n: usize, dim: usize, seed: u64) -> ParameterBlock {
        let mut rng = rng_for(seed, 0);
        let samples: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        ParameterBlock::with_median_bandwidth(name, dim, samples).unwrap()
    }

    #[test]
    fn gaussian_known_values() {
        assert_eq!(gaussian_eval(&[0.3, -1.0], &[0.3, -1.0], 0.7).unwrap(), 1.0);
        let s = 1.3;
        let v = gaussian_eval(&[0.0], &[s * 2f64.sqrt()], s).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn gaussian_is_symmetric() {
        let mut rng = rng_for(1, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = rng.random_range(0.1..3.0);
            assert_eq!(gaussian_eval(&x, &y, s).unwrap(), gaussian_eval(&y, &x, s).unwrap());
        }
    }

    #[test]
    fn gaussian_rejects_bad_input() {
        assert!(matches!(gaussian_eval(&[0.0], &[0.0, 1.0], 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(gaussian_eval(&[0.0], &[1.0], 0.0), Err(Error::InvalidParameter { .. })));
        assert!(gaussian_eval(&[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn median_of_small_sets() {
        assert_eq!(median_bandwidth(&[0.0, 5.0], 1).unwrap(), 5.0);
        // pairs: 1, 3, 2
        assert_eq!(median_bandwidth(&[0.0, 1.0, 3.0], 1).unwrap(), 2.0);
        // four points, six distances {1,3,6,2,5,3} -> (3+3)/2
        assert_eq!(median_bandwidth(&[0.0, 1.0, 3.0, 6.0], 1).unwrap(), 3.0);
        // 2-d rows
        assert_relative_eq!(median_bandwidth(&[0.0, 0.0, 3.0, 4.0], 2).unwrap(), 5.0);
    }

    #[test]
    fn median_even_count_averages_middle_pair() {
        // five points -> ten distances
        let xs = [0.0, 1.0, 2.0, 4.0, 8.0];
        let mut d = vec![];
        for i in 0..5 {
            for j in i + 1..5 {
                d.push((xs[i] - xs[j]) as f64);
                let last = d.len() - 1;
                d[last] = d[last].abs();
            }
        }
        d.sort_by(f64::total_cmp);
        let expected = 0.5 * (d[4] + d[5]);
        assert_eq!(median_bandwidth(&xs, 1).unwrap(), expected);
    }

    #[test]
    fn median_degenerate_errors() {
        assert!(matches!(median_bandwidth(&[2.0, 2.0, 2.0], 1), Err(Error::DegenerateSample(_))));
        assert!(median_bandwidth(&[1.0], 1).is_err());
    }

    #[test]
    fn median_large_n_is_subsampled_and_deterministic() {
        let mut rng = rng_for(5, 0);
        let xs: Vec<f64> = (0..6000).map(|_| rng.random::<f64>()).collect();
        let a = median_bandwidth(&xs, 1).unwrap();
        let b = median_bandwidth(&xs, 1).unwrap();
        assert_eq!(a, b);
        // uniform(0,1): median |U - V| = 1 - 1/sqrt(2)
        assert!((a - (1.0 - 0.5f64.sqrt())).abs() < 0.01, "{a}");
    }

    #[test]
    fn centering_stats_two_points() {
        // sigma chosen so the off-diagonal entry is e^-1
        let s = 1.0 / 2f64.sqrt();
        let b = ParameterBlock::new("x", 1, vec![0.0, 1.0], s).unwrap();
        let st = centering_stats(&b, Execution::Sequential);
        let e = (-1.0f64).exp();
        let r = (1.0 + e) / 2.0;
        assert_relative_eq!(st.row_means[0], r, max_relative = 1e-14);
        assert_relative_eq!(st.row_means[1], r, max_relative = 1e-14);
        assert_relative_eq!(st.grand_mean, r, max_relative = 1e-14);
    }

    #[test]
    fn duplicated_samples_center_to_zero() {
        let b = ParameterBlock::new("x", 1, vec![0.4; 7], 1.0).unwrap();
        let st = centering_stats(&b, Execution::Sequential);
        assert!(st.row_means.iter().all(|&r| r == 1.0));
        assert_eq!(st.grand_mean, 1.0);
        let blocks = [b];
        let stats = [st];
        let col = augmented_subset_column(&blocks, &stats, &SubsetSpec::singleton(0), 3).unwrap();
        assert!(col.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn centered_gram_sums_to_zero_and_annihilates_ones() {
        let b = random_block("x", 60, 2, 3);
        let st = centering_stats(&b, Execution::Parallel);
        let n = b.n();
        let mut total = 0.0;
        let mut col = vec![0.0; n];
        let mut kc_ones = vec![0.0; n];
        for j in 0..n {
            centered_column_into(&b, &st, j, &mut col);
            total += col.iter().sum::<f64>();
            for (acc, v) in kc_ones.iter_mut().zip(&col) {
                *acc += v;
            }
        }
        assert!(total.abs() < 1e-10, "{total}");
        let norm = kc_ones.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-8 * n as f64);
        assert_relative_eq!(
            st.grand_mean,
            st.row_means.iter().sum::<f64>() / n as f64,
            max_relative = 1e-12
        );
        assert!(st.row_means.iter().all(|&r| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn empty_subset_column_is_all_ones() {
        let blocks = vec![random_block("a", 20, 1, 1), random_block("b", 20, 1, 2)];
        let stats: Vec<_> = blocks.iter().map(|b| centering_stats(b, Execution::Sequential)).collect();
        let col = augmented_subset_column(&blocks, &stats, &SubsetSpec::empty(), 4).unwrap();
        assert_eq!(col, vec![1.0; 20]);
    }

    #[test]
    fn augmented_column_matches_dense_oracle() {
        let n = 40;
        let blocks = vec![random_block("a", n, 1, 11), random_block("b", n, 3, 12), random_block("c", n, 1, 13)];
        let stats: Vec<_> = blocks.iter().map(|b| centering_stats(b, Execution::Sequential)).collect();
        // dense oracle: J + H K_i H, Hadamard product over the subset
        let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let j = DMatrix::from_element(n, n, 1.0);
        let aug = |b: &ParameterBlock| {
            let k = DMatrix::from_fn(n, n, |s, t| b.kernel(s, t));
            &j + &h * k * &h
        };
        let subset = SubsetSpec::new(vec![2, 0], 3).unwrap();
        let oracle = aug(&blocks[0]).component_mul(&aug(&blocks[2]));
        for col in [0, 7, 39] {
            let got = augmented_subset_column(&blocks, &stats, &subset, col).unwrap();
            for t in 0..n {
                assert_relative_eq!(got[t], oracle[(t, col)], max_relative = 1e-12);
            }
        }
        assert!(matches!(
            augmented_subset_column(&blocks, &stats, &subset, n),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn augmented_gram_is_symmetric_psd_with_unit_floor_diagonal() {
        let n = 48;
        let blocks = vec![random_block("a", n, 1, 21), random_block("b", n, 2, 22)];
        let stats: Vec<_> = blocks.iter().map(|b| centering_stats(b, Execution::Sequential)).collect();
        let subset = SubsetSpec::full(2);
        let src = AugmentedProductGram::new(&blocks, &stats, &subset).unwrap();
        let dense = DenseGram::from_source(&src).unwrap().matrix;
        for s in 0..n {
            assert!(dense[(s, s)] >= 1.0 - 1e-12);
            for t in 0..n {
                assert!((dense[(s, t)] - dense[(t, s)]).abs() <= 1e-14 * dense[(s, t)].abs().max(1.0));
            }
        }
        let min_eig = dense.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-8, "{min_eig}");
    }

    #[test]
    fn output_gram_known_values() {
        let y = OutputSamples::Scalar(vec![3.0; 5]);
        assert_eq!(output_gram_column(&y, 0.5, 2).unwrap(), vec![1.0; 5]);
        let s = 0.8;
        let y = OutputSamples::Scalar(vec![0.0, s * 2f64.sqrt()]);
        let col = output_gram_column(&y, s, 0).unwrap();
        assert_eq!(col[0], 1.0);
        assert_relative_eq!(col[1], (-1.0f64).exp(), max_relative = 1e-14);
        assert!(output_gram_column(&y, s, 2).is_err());
    }

    #[test]
    fn subset_spec_validation_and_complement() {
        assert!(SubsetSpec::new(vec![1, 1], 3).is_err());
        assert!(matches!(SubsetSpec::new(vec![3], 3), Err(Error::IndexOutOfRange { .. })));
        let a = SubsetSpec::new(vec![2, 0], 4).unwrap();
        assert_eq!(a.indices(), &[0, 2]);
        assert_eq!(a.complement(4).indices(), &[1, 3]);
        assert_eq!(a.to_string(), "{1,3}");
        assert!(SubsetSpec::empty().is_subset_of(&a));
        assert!(a.is_subset_of(&SubsetSpec::full(4)));
        assert_eq!(a.label(&["a", "b", "c", "d"]), "a+c");
    }
}
