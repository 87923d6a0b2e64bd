//! Empirical HSIC, total HSIC indices and distance-correlation indices.
//!
//! The biased estimator `HSIC = tr(K H L H) / n^2` with `H = I - z z^T`,
//! `z = 1/sqrt(n)` is evaluated through the trace expansion
//!
//! ```text
//! tr(K H L H) = tr(K L) - 2 <K z, L z> + <z, K z> <z, L z>
//! ```
//!
//! which only needs one column of `K` and `L` at a time. Per-column partial
//! results are stored in index order and merged with compensated sums, so the
//! value is bit-identical for any number of workers.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{
    centered_column_into, centering_stats, check_aligned, CenteringStats, GramColumnSource, OutputGram,
    OutputSamples, ParameterBlock, SubsetSpec,
};
use crate::par::{self, compensated_dot, compensated_sum, CompensatedSum, Execution};

/// Tolerance for the symmetry check of [`hsic_dense`], relative to the
/// largest entry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Reported HSIC values below this (in absolute terms) are clamped to zero.
pub const NEGATIVE_HSIC_TOL: f64 = 1e-12;

/// Smallest `HSIC(X, Y)` for which a total index is reported.
pub fn denominator_guard(n: usize) -> f64 {
    let n = n as f64;
    1e-12 * (n - 1.0) / (n * n)
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `tr(K H L H) / n^2` by explicit dense matrix products. `O(n^3)` time and
/// `O(n^2)` memory; this is the reference the streaming path is checked
/// against.
pub fn hsic_dense(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    if !k.is_square() {
        return Err(Error::DimensionMismatch { expected: n, got: k.ncols() });
    }
    if l.nrows() != n || l.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: l.nrows() });
    }
    for m in [k, l] {
        let scale = m.amax().max(1.0);
        let asym = max_asymmetry(m);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { max_asymmetry: asym });
        }
    }
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let kh = k * &h;
    let lh = l * &h;
    // tr((KH)(LH)) = sum_ij (KH)_ij (LH)_ji
    let tr = compensated_sum((0..n).flat_map(|i| {
        let kh = &kh;
        let lh = &lh;
        (0..n).map(move |j| kh[(i, j)] * lh[(j, i)])
    }));
    Ok(tr / (n * n) as f64)
}

/// The trace expansion evaluated on dense matrices:
/// `(tr(KL) - 2 <Kz, Lz> + <z, Kz><z, Lz>) / n^2`.
pub fn hsic_trace_expansion(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    if l.nrows() != n || l.ncols() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: l.nrows() });
    }
    let z = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let kz = k * &z;
    let lz = l * &z;
    let tr_kl = compensated_sum((0..n).flat_map(|i| (0..n).map(move |j| k[(i, j)] * l[(j, i)])));
    let cross = compensated_dot(kz.as_slice(), lz.as_slice());
    let zkz = compensated_dot(z.as_slice(), kz.as_slice());
    let zlz = compensated_dot(z.as_slice(), lz.as_slice());
    Ok((tr_kl - 2.0 * cross + zkz * zlz) / (n * n) as f64)
}

/// Final combination step of the streaming estimator.
///
/// With `a_i = sum(K^(i))` and `b_i = sum(L^(i))`, the column projections are
/// `u_i = a_i / sqrt(n)` and `v_i = b_i / sqrt(n)`, hence
/// `<u, v> = sum a_i b_i / n` and `<u, z><v, z> = (sum a_i)(sum b_i) / n^2`.
fn combine(n: usize, s: f64, uv: CompensatedSum, sum_a: f64, sum_b: f64) -> f64 {
    let nf = n as f64;
    let uv = uv.value() / nf;
    let uz = sum_a / nf;
    let vz = sum_b / nf;
    // S - 2<u,v> + <u,z><v,z>
    let mut acc = CompensatedSum::new();
    acc.add(s);
    acc.add(-2.0 * uv);
    acc.add(uz * vz);
    acc.value() / (nf * nf)
}

/// Streaming HSIC estimate between two Gram column sources.
///
/// One column of each source is live per worker, plus three scalars per
/// column index; no `n x n` storage is ever allocated. Source errors are
/// reported with the failing column index.
pub fn hsic_streaming(k: &dyn GramColumnSource, l: &dyn GramColumnSource, exec: Execution) -> Result<f64> {
    let n = k.n();
    if l.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: l.n() });
    }
    if n < 2 {
        return Err(Error::DegenerateSample(format!("HSIC needs n >= 2, got {n}")));
    }
    let partials = par::map_indexed_with(
        exec,
        n,
        || (vec![0.0; n], vec![0.0; n]),
        |(a, b), i| -> Result<[f64; 3]> {
            k.column_into(i, a).map_err(|e| wrap_column(i, e))?;
            l.column_into(i, b).map_err(|e| wrap_column(i, e))?;
            Ok([compensated_dot(a, b), compensated_sum(a.iter().copied()), compensated_sum(b.iter().copied())])
        },
    );
    let mut s = CompensatedSum::new();
    let mut uv = CompensatedSum::new();
    let mut sa = CompensatedSum::new();
    let mut sb = CompensatedSum::new();
    for p in partials {
        let [sab, a, b] = p?;
        s.add(sab);
        uv.add(a * b);
        sa.add(a);
        sb.add(b);
    }
    Ok(combine(n, s.value(), uv, sa.value(), sb.value()))
}

fn wrap_column(column: usize, e: Error) -> Error {
    match e {
        e @ Error::ColumnSource { .. } => e,
        other => Error::ColumnSource { column, reason: other.to_string() },
    }
}

/// Raw per-subset quantities from one batched pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetHsic {
    /// `HSIC(X_A, Y)`.
    pub cross: f64,
    /// `HSIC(X_A, X_A)`.
    pub self_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchHsic {
    pub subsets: Vec<SubsetHsic>,
    /// `HSIC(Y, Y)`.
    pub self_y: f64,
}

/// One streaming pass that evaluates `HSIC(X_A, Y)` and `HSIC(X_A, X_A)`
/// for every requested subset, plus `HSIC(Y, Y)`.
///
/// For each column index the centered base columns of every block involved
/// are built once and shared by all subsets. Auxiliary memory is
/// `O(n (p + 1))` per worker plus `3 m + 2` scalars per column index for `m`
/// subsets. Empty subsets yield exactly zero.
pub fn hsic_subsets(
    blocks: &[ParameterBlock],
    stats: &[CenteringStats],
    subsets: &[SubsetSpec],
    output: &dyn GramColumnSource,
    exec: Execution,
) -> Result<BatchHsic> {
    let n = check_aligned(blocks, stats)?;
    if output.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: output.n() });
    }
    let p = blocks.len();
    for s in subsets {
        if let Some(&bad) = s.indices().iter().find(|&&i| i >= p) {
            return Err(Error::IndexOutOfRange { index: bad, len: p });
        }
    }
    let used = subsets.iter().fold(SubsetSpec::empty(), |acc, s| acc.union(s));
    let m = subsets.len();

    struct Scratch {
        centered: Vec<Vec<f64>>,
        prod: Vec<f64>,
        out_col: Vec<f64>,
    }

    let partials = par::map_indexed_with(
        exec,
        n,
        || Scratch {
            centered: (0..p).map(|i| if used.contains(i) { vec![0.0; n] } else { Vec::new() }).collect(),
            prod: vec![0.0; n],
            out_col: vec![0.0; n],
        },
        |sc, j| -> Result<Vec<f64>> {
            for &i in used.indices() {
                centered_column_into(&blocks[i], &stats[i], j, &mut sc.centered[i]);
            }
            output.column_into(j, &mut sc.out_col).map_err(|e| wrap_column(j, e))?;
            let b = &sc.out_col;
            // layout: [s_bb, b_sum, (s_ab, s_aa, a_sum) * m]
            let mut row = Vec::with_capacity(3 * m + 2);
            row.push(compensated_dot(b, b));
            row.push(compensated_sum(b.iter().copied()));
            for subset in subsets {
                if subset.is_empty() {
                    row.extend_from_slice(&[0.0, 0.0, 0.0]);
                    continue;
                }
                sc.prod.fill(1.0);
                for &i in subset.indices() {
                    for (o, c) in sc.prod.iter_mut().zip(&sc.centered[i]) {
                        *o *= 1.0 + c;
                    }
                }
                let a = &sc.prod;
                row.push(compensated_dot(a, b));
                row.push(compensated_dot(a, a));
                row.push(compensated_sum(a.iter().copied()));
            }
            Ok(row)
        },
    );

    let mut s_bb = CompensatedSum::new();
    let mut bb = CompensatedSum::new();
    let mut sum_b = CompensatedSum::new();
    let mut s_ab = vec![CompensatedSum::new(); m];
    let mut s_aa = vec![CompensatedSum::new(); m];
    let mut ab = vec![CompensatedSum::new(); m];
    let mut aa = vec![CompensatedSum::new(); m];
    let mut sum_a = vec![CompensatedSum::new(); m];
    for row in partials {
        let row = row?;
        let b = row[1];
        s_bb.add(row[0]);
        bb.add(b * b);
        sum_b.add(b);
        for k in 0..m {
            let (sab, saa, a) = (row[2 + 3 * k], row[3 + 3 * k], row[4 + 3 * k]);
            s_ab[k].add(sab);
            s_aa[k].add(saa);
            ab[k].add(a * b);
            aa[k].add(a * a);
            sum_a[k].add(a);
        }
    }
    let sb = sum_b.value();
    let subsets_out = (0..m)
        .map(|k| {
            if subsets[k].is_empty() {
                return SubsetHsic { cross: 0.0, self_x: 0.0 };
            }
            let sa = sum_a[k].value();
            SubsetHsic {
                cross: combine(n, s_ab[k].value(), ab[k], sa, sb),
                self_x: combine(n, s_aa[k].value(), aa[k], sa, sa),
            }
        })
        .collect();
    Ok(BatchHsic { subsets: subsets_out, self_y: combine(n, s_bb.value(), bb, sb, sb) })
}

/// An HSIC value between an input subset and the output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HsicEstimate {
    /// Reported value, clamped at zero.
    pub value: f64,
    /// Value before clamping.
    pub raw: f64,
    pub n: usize,
    pub subset: SubsetSpec,
    /// Bandwidths of the blocks in `subset`, in subset order.
    pub bandwidths: Vec<f64>,
}

impl HsicEstimate {
    fn new(raw: f64, n: usize, subset: SubsetSpec, blocks: &[ParameterBlock]) -> Self {
        let bandwidths = subset.indices().iter().map(|&i| blocks[i].bandwidth()).collect();
        Self { value: clamp_hsic(raw), raw, n, subset, bandwidths }
    }
}

fn clamp_hsic(raw: f64) -> f64 {
    if raw < 0.0 && raw >= -NEGATIVE_HSIC_TOL {
        0.0
    } else {
        raw.max(0.0)
    }
}

/// Raw and clamped total index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalIndex {
    pub value: f64,
    pub raw: f64,
}

fn total_from_parts(full: f64, complement: f64, guard: f64) -> Result<TotalIndex> {
    if !(full > guard) {
        return Err(Error::NoDependence { value: full, threshold: guard });
    }
    let raw = 1.0 - complement / full;
    Ok(TotalIndex { value: raw.clamp(0.0, 1.0), raw })
}

/// `T_A = 1 - HSIC(X_~A, Y) / HSIC(X, Y)` with augmented product kernels.
pub fn total_hsic_index(
    blocks: &[ParameterBlock],
    stats: &[CenteringStats],
    output: &dyn GramColumnSource,
    subset: &SubsetSpec,
    exec: Execution,
) -> Result<TotalIndex> {
    let n = check_aligned(blocks, stats)?;
    let p = blocks.len();
    let subsets = [SubsetSpec::full(p), subset.complement(p)];
    let batch = hsic_subsets(blocks, stats, &subsets, output, exec)?;
    total_from_parts(batch.subsets[0].cross, batch.subsets[1].cross, denominator_guard(n))
}

fn dcorr_from_parts(cross: f64, self_x: f64, self_y: f64, guard: f64) -> Result<f64> {
    if !(self_x > guard) || !(self_y > guard) {
        return Err(Error::DegenerateSample(format!(
            "distance correlation undefined: self-HSIC terms {self_x:e}, {self_y:e}"
        )));
    }
    Ok(cross / (self_x * self_y).sqrt())
}

/// `HSIC(X_A, Y) / sqrt(HSIC(X_A, X_A) HSIC(Y, Y))`.
pub fn distance_correlation(
    blocks: &[ParameterBlock],
    stats: &[CenteringStats],
    output: &dyn GramColumnSource,
    subset: &SubsetSpec,
    exec: Execution,
) -> Result<f64> {
    let n = check_aligned(blocks, stats)?;
    let batch = hsic_subsets(blocks, stats, std::slice::from_ref(subset), output, exec)?;
    let s = batch.subsets[0];
    dcorr_from_parts(s.cross, s.self_x, batch.self_y, denominator_guard(n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub exec: Execution,
    pub compute_dcorr: bool,
    /// Recorded in the report; sampling happens upstream.
    pub seed: Option<u64>,
    /// Precompute output distances (trajectory outputs, `n <= 4096`).
    pub cache_output_distances: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { exec: Execution::Parallel, compute_dcorr: true, seed: None, cache_output_distances: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub subset: SubsetSpec,
    pub label: String,
    /// `HSIC(X_A, Y)`.
    pub hsic: HsicEstimate,
    /// `HSIC(X_~A, Y)`.
    pub complement_hsic: f64,
    pub total_index: f64,
    pub total_index_raw: f64,
    /// `None` when a self-HSIC term is degenerate or dcorr was not requested.
    pub dcorr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub n: usize,
    pub seed: Option<u64>,
    pub block_names: Vec<String>,
    pub bandwidths: Vec<f64>,
    pub output_bandwidth: f64,
    /// `HSIC(X, Y)` over all blocks.
    pub full_hsic: HsicEstimate,
    pub self_hsic_output: f64,
    pub denominator_guard: f64,
    pub entries: Vec<ReportEntry>,
}

impl SensitivityReport {
    pub fn entry(&self, subset: &SubsetSpec) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| &e.subset == subset)
    }

    pub fn total_indices(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.total_index).collect()
    }
}

/// Total indices (and optionally dcorr) for each requested subset; singletons
/// when `subsets` is empty. Centering statistics are computed once per block,
/// and all HSIC terms come out of a single streaming pass.
pub fn full_report(
    blocks: &[ParameterBlock],
    output: &OutputSamples,
    subsets: &[SubsetSpec],
    opts: &ReportOptions,
) -> Result<SensitivityReport> {
    let stats: Vec<CenteringStats> = blocks.iter().map(|b| centering_stats(b, opts.exec)).collect();
    let n = check_aligned(blocks, &stats)?;
    if output.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: output.n() });
    }
    let p = blocks.len();
    let requested: Vec<SubsetSpec> =
        if subsets.is_empty() { (0..p).map(SubsetSpec::singleton).collect() } else { subsets.to_vec() };
    for (k, s) in requested.iter().enumerate() {
        if let Some(&bad) = s.indices().iter().find(|&&i| i >= p) {
            return Err(Error::IndexOutOfRange { index: bad, len: p });
        }
        if requested[..k].contains(s) {
            return Err(Error::InvalidParameter { name: "subsets", reason: format!("duplicate subset {s}") });
        }
    }

    // distinct subsets needed: the full set, each A and each ~A
    let mut needed: Vec<SubsetSpec> = vec![SubsetSpec::full(p)];
    for s in &requested {
        for cand in [s.clone(), s.complement(p)] {
            if !needed.contains(&cand) {
                needed.push(cand);
            }
        }
    }
    let position = |s: &SubsetSpec| needed.iter().position(|x| x == s).expect("subset registered");

    let output_bandwidth = output.median_bandwidth(opts.exec)?;
    let gram = if opts.cache_output_distances {
        OutputGram::with_distance_cache(output, output_bandwidth, opts.exec)?
    } else {
        OutputGram::new(output, output_bandwidth)?
    };
    let batch = hsic_subsets(blocks, &stats, &needed, &gram, opts.exec)?;
    let guard = denominator_guard(n);
    let full = batch.subsets[0].cross;
    if !(full > guard) {
        return Err(Error::NoDependence { value: full, threshold: guard });
    }

    let names: Vec<String> = blocks.iter().map(|b| b.name().to_string()).collect();
    let entries = requested
        .iter()
        .map(|s| -> Result<ReportEntry> {
            let own = batch.subsets[position(s)];
            let complement = batch.subsets[position(&s.complement(p))].cross;
            let total = total_from_parts(full, complement, guard)?;
            let dcorr = if opts.compute_dcorr {
                dcorr_from_parts(own.cross, own.self_x, batch.self_y, guard).ok()
            } else {
                None
            };
            Ok(ReportEntry {
                subset: s.clone(),
                label: s.label(&names),
                hsic: HsicEstimate::new(own.cross, n, s.clone(), blocks),
                complement_hsic: complement,
                total_index: total.value,
                total_index_raw: total.raw,
                dcorr,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SensitivityReport {
        n,
        seed: opts.seed,
        bandwidths: blocks.iter().map(ParameterBlock::bandwidth).collect(),
        block_names: names,
        output_bandwidth,
        full_hsic: HsicEstimate::new(full, n, SubsetSpec::full(p), blocks),
        self_hsic_output: batch.self_y,
        denominator_guard: guard,
        entries,
    })
}
