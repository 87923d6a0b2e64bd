//! Study orchestration: sampling, model evaluation and the analyses behind
//! each subcommand. Nothing here writes files; see [`crate::output`].

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hsicsa::calibration::{calibrate_synthetic, correlated_law_from_fit, FitResult};
use hsicsa::hsic::{full_report, hsic_dense, hsic_streaming, ReportOptions};
use hsicsa::kernel::{centering_stats, AugmentedProductGram, DenseGram, OutputGram};
use hsicsa::models::cholera::{infected_curve, CholeraParams};
use hsicsa::models::{ishigami, ishigami_sobol_analytic, portfolio, portfolio_sigma, TrajectorySet};
use hsicsa::par::{self, Execution};
use hsicsa::sampling::{
    fix_coordinate, mvn_sample_positive_stream, mvn_sample_stream, streams, uniform_sample_stream, GaussianLaw, ReductionMode,
    UniformBoxLaw,
};
use hsicsa::sobol::{jansen_total, SobolTotals};
use hsicsa::{OutputSamples, ParameterBlock, SensitivityReport, SubsetSpec};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::audit::{self, AllocStats};
use crate::config::{ExperimentConfig, IndexKind, ModelSpec, SamplingSpec};

/// Rejected non-positive cholera parameter draws allowed per requested row.
const MAX_REJECTIONS_PER_ROW: usize = 100;

/// A validated config with everything that is shared across runs resolved
/// (fitted law, external samples).
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub names: Vec<String>,
    pub fit: Option<FitResult>,
    external: Option<(DMatrix<f64>, OutputSamples)>,
}

enum InputLaw {
    Uniform(UniformBoxLaw),
    Gaussian { law: GaussianLaw, positive: bool },
}

impl InputLaw {
    fn mean(&self) -> Vec<f64> {
        match self {
            InputLaw::Uniform(u) => u.mean(),
            InputLaw::Gaussian { law, .. } => law.mean().iter().copied().collect(),
        }
    }

    fn sample(&self, n: usize, seed: u64, stream: u64) -> Result<(DMatrix<f64>, usize)> {
        Ok(match self {
            InputLaw::Uniform(u) => (uniform_sample_stream(u, n, seed, stream), 0),
            InputLaw::Gaussian { law, positive: false } => (mvn_sample_stream(law, n, seed, stream), 0),
            InputLaw::Gaussian { law, positive: true } => {
                mvn_sample_positive_stream(law, n, seed, stream, MAX_REJECTIONS_PER_ROW * n)?
            }
        })
    }
}

/// Reads a fit written by `calibrate` (or a bare `FitResult`).
pub fn load_fit(path: &Path) -> Result<FitResult> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let inner = value.get("result").cloned().unwrap_or(value);
    serde_json::from_value(inner).with_context(|| format!("{} does not hold a calibration fit", path.display()))
}

fn read_csv_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            bail!("{}:{}: expected {} fields, found {}", path.display(), k + 2, headers.len(), rec.len());
        }
        for field in rec.iter() {
            values.push(field.trim().parse::<f64>().with_context(|| format!("{}:{}: bad number {field:?}", path.display(), k + 2))?);
        }
        rows += 1;
    }
    Ok((headers.clone(), DMatrix::from_row_slice(rows, headers.len(), &values)))
}

impl Prepared {
    pub fn new(cfg: ExperimentConfig, exec: Execution) -> Result<Self> {
        let fit = match &cfg.sampling {
            SamplingSpec::CholeraFitted { fit } | SamplingSpec::CholeraUniform { fit, .. } => Some(match fit {
                Some(path) => load_fit(path)?,
                None => fit_cholera(&cfg, exec)?,
            }),
            _ => None,
        };
        let (names, external) = match &cfg.model {
            ModelSpec::ExternalSamples { inputs, outputs } => {
                let (names, x) = read_csv_matrix(inputs)?;
                let (_, y) = read_csv_matrix(outputs)?;
                if x.nrows() != y.nrows() {
                    bail!("inputs have {} rows but outputs have {}", x.nrows(), y.nrows());
                }
                if x.nrows() < cfg.n {
                    bail!("config asks for n = {} but the sample files hold {} rows", cfg.n, x.nrows());
                }
                let x = x.rows(0, cfg.n).into_owned();
                let y = y.rows(0, cfg.n).into_owned();
                let out = if y.ncols() == 1 {
                    OutputSamples::Scalar(y.iter().copied().collect())
                } else {
                    OutputSamples::Vector { dim: y.ncols(), values: y.transpose().iter().copied().collect() }
                };
                (names, Some((x, out)))
            }
            _ => (cfg.model_input_names().expect("model inputs"), None),
        };
        if let Some(f) = &fit {
            if !f.converged {
                bail!("calibration did not converge after {} iterations", f.iterations);
            }
        }
        Ok(Self { cfg, names, fit, external })
    }

    fn rho(&self, rho: Option<f64>) -> f64 {
        match (&self.cfg.model, rho) {
            (_, Some(r)) => r,
            (ModelSpec::Portfolio { rho }, None) => *rho,
            _ => 0.0,
        }
    }

    fn input_law(&self, rho: Option<f64>) -> Result<InputLaw> {
        Ok(match &self.cfg.sampling {
            SamplingSpec::UniformBox { lower, upper } => InputLaw::Uniform(UniformBoxLaw::new(lower.clone(), upper.clone())?),
            SamplingSpec::Gaussian { mean, covariance } => {
                let p = mean.len();
                let cov = DMatrix::from_fn(p, p, |i, j| covariance[i][j]);
                InputLaw::Gaussian { law: GaussianLaw::new(DVector::from_vec(mean.clone()), cov)?, positive: false }
            }
            SamplingSpec::PortfolioGaussian => InputLaw::Gaussian {
                law: GaussianLaw::new(DVector::zeros(5), portfolio_sigma(self.rho(rho))?)?,
                positive: false,
            },
            SamplingSpec::CholeraFitted { .. } => {
                InputLaw::Gaussian { law: correlated_law_from_fit(self.fit.as_ref().expect("fit"))?, positive: true }
            }
            SamplingSpec::CholeraUniform { half_width, .. } => {
                InputLaw::Uniform(UniformBoxLaw::around(&self.fit.as_ref().expect("fit").theta_hat, *half_width)?)
            }
            SamplingSpec::External => bail!("external samples have no sampling law"),
        })
    }

    fn evaluate(&self, x: &DMatrix<f64>, rho: Option<f64>, exec: Execution) -> Result<OutputSamples> {
        let rows = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| -> Vec<f64> {
            par::map_indexed(exec, x.nrows(), |r| {
                let row: Vec<f64> = x.row(r).iter().copied().collect();
                f(&row)
            })
        };
        Ok(match &self.cfg.model {
            ModelSpec::Ishigami { a, b } => OutputSamples::Scalar(rows(&|v| ishigami(&[v[0], v[1], v[2]], *a, *b))),
            ModelSpec::Portfolio { .. } => {
                let _ = rho;
                OutputSamples::Scalar(rows(&|v| portfolio(&[v[0], v[1], v[2], v[3], v[4]])))
            }
            ModelSpec::Cholera => {
                let opts = self.cfg.integrator;
                let trajs = par::try_map_indexed(exec, x.nrows(), |r| {
                    let row: Vec<f64> = x.row(r).iter().copied().collect();
                    infected_curve(&CholeraParams::from_slice(&row)?, &opts)
                })?;
                OutputSamples::Trajectories(TrajectorySet::new(&trajs)?)
            }
            ModelSpec::ExternalSamples { .. } => bail!("external samples cannot be re-evaluated"),
        })
    }

    /// Inputs and outputs for one run.
    pub fn design(&self, n: usize, seed: u64, rho: Option<f64>, exec: Execution) -> Result<(DMatrix<f64>, OutputSamples)> {
        if let Some((x, y)) = &self.external {
            return Ok((x.clone(), y.clone()));
        }
        let (x, rejected) = self.input_law(rho)?.sample(n, seed, streams::INPUTS)?;
        if rejected > 0 {
            log::info!("rejected {rejected} non-positive parameter draws");
        }
        let y = self.evaluate(&x, rho, exec)?;
        Ok((x, y))
    }

    fn subsets(&self) -> Result<Vec<SubsetSpec>> {
        let p = self.names.len();
        self.cfg
            .subsets
            .iter()
            .map(|s| {
                let idx = s
                    .iter()
                    .map(|name| self.names.iter().position(|x| x == name).with_context(|| format!("unknown input {name}")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SubsetSpec::new(idx, p)?)
            })
            .collect()
    }

    fn report_options(&self, seed: u64, exec: Execution) -> ReportOptions {
        ReportOptions {
            exec,
            compute_dcorr: self.cfg.indices.contains(&IndexKind::Dcorr),
            seed: Some(seed),
            cache_output_distances: self.cfg.cache_output_distances,
        }
    }

    /// Sensitivity report for one `(n, seed, rho)` cell.
    pub fn report(&self, n: usize, seed: u64, rho: Option<f64>, exec: Execution) -> Result<SensitivityReport> {
        let (x, y) = self.design(n, seed, rho, exec)?;
        let blocks = ParameterBlock::scalar_blocks(&x, &self.names)?;
        Ok(full_report(&blocks, &y, &self.subsets()?, &self.report_options(seed, exec))?)
    }
}

/// OLS fit at the nominal parameters with the config's calibration options.
pub fn fit_cholera(cfg: &ExperimentConfig, exec: Execution) -> Result<FitResult> {
    Ok(calibrate_synthetic(&CholeraParams::nominal(), cfg.seed, &cfg.calibration, exec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolSummary {
    #[serde(flatten)]
    pub totals: SobolTotals,
    /// Closed-form values when the model is Ishigami on `U(-pi, pi)^3`.
    pub analytic: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicesResult {
    pub report: SensitivityReport,
    pub sobol: Option<SobolSummary>,
    pub fit: Option<FitResult>,
}

pub fn run_indices(prep: &Prepared, exec: Execution) -> Result<IndicesResult> {
    let cfg = &prep.cfg;
    let report = prep.report(cfg.n, cfg.seed, None, exec)?;
    let sobol = if cfg.indices.contains(&IndexKind::Sobol) {
        let n = cfg.sobol.as_ref().map_or(10_000, |s| s.n);
        let InputLaw::Uniform(law) = prep.input_law(None)? else { bail!("sobol indices need uniform inputs") };
        let totals = match &cfg.model {
            ModelSpec::Ishigami { a, b } => {
                let (a, b) = (*a, *b);
                jansen_total(move |v| ishigami(&[v[0], v[1], v[2]], a, b), &law, n, cfg.seed, exec)?
            }
            ModelSpec::Portfolio { .. } => jansen_total(|v| portfolio(&[v[0], v[1], v[2], v[3], v[4]]), &law, n, cfg.seed, exec)?,
            _ => bail!("sobol indices need a scalar model"),
        };
        let pi = std::f64::consts::PI;
        let analytic = match &cfg.model {
            ModelSpec::Ishigami { a, b }
                if law.lower().iter().all(|&l| l == -pi) && law.upper().iter().all(|&u| u == pi) =>
            {
                Some(ishigami_sobol_analytic(*a, *b))
            }
            _ => None,
        };
        Some(SobolSummary { totals, analytic })
    } else {
        None
    };
    Ok(IndicesResult { report, sobol, fit: prep.fit.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub seed: u64,
    pub input: String,
    pub total_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub n: usize,
    pub input: String,
    pub mean: f64,
    pub std_dev: f64,
    pub range: f64,
}

/// One report per `(n, seed)` cell; cells run concurrently and are collected
/// in `(n, seed)` order.
pub fn run_convergence(prep: &Prepared, exec: Execution) -> Result<(Vec<ConvergenceRow>, Vec<ConvergenceSummary>)> {
    let Some(spec) = &prep.cfg.convergence else { bail!("config has no \"convergence\" section") };
    if prep.external.is_some() {
        bail!("convergence studies need a model to sample");
    }
    let seeds: Vec<u64> = (0..spec.seeds as u64).map(|k| prep.cfg.seed + k).collect();
    let cells: Vec<(usize, u64)> = spec.n_grid.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let reports = par::try_map_indexed(exec, cells.len(), |k| {
        let (n, seed) = cells[k];
        prep.report(n, seed, None, Execution::Sequential)
    })?;
    let mut rows = Vec::new();
    for ((n, seed), rep) in cells.iter().zip(&reports) {
        for e in &rep.entries {
            rows.push(ConvergenceRow { n: *n, seed: *seed, input: e.label.clone(), total_index: e.total_index });
        }
    }
    let labels: Vec<String> = reports[0].entries.iter().map(|e| e.label.clone()).collect();
    let mut summary = Vec::new();
    for &n in &spec.n_grid {
        for label in &labels {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n && &r.input == label).map(|r| r.total_index).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64 } else { 0.0 };
            let range = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min);
            summary.push(ConvergenceSummary { n, input: label.clone(), mean, std_dev: var.sqrt(), range });
        }
    }
    Ok((rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub input: String,
    pub total_index: f64,
    pub total_index_raw: f64,
    pub dcorr: Option<f64>,
}

pub fn run_rho_sweep(prep: &Prepared, exec: Execution) -> Result<Vec<SweepRow>> {
    let Some(spec) = &prep.cfg.sweep else { bail!("config has no \"sweep\" section") };
    if !matches!(prep.cfg.model, ModelSpec::Portfolio { .. }) {
        bail!("rho sweeps apply to the portfolio model");
    }
    let reports = par::try_map_indexed(exec, spec.rho.len(), |k| {
        prep.report(prep.cfg.n, prep.cfg.seed, Some(spec.rho[k]), Execution::Sequential)
    })?;
    let mut rows = Vec::new();
    for (&rho, rep) in spec.rho.iter().zip(&reports) {
        for e in &rep.entries {
            rows.push(SweepRow {
                rho,
                input: e.label.clone(),
                total_index: e.total_index,
                total_index_raw: e.total_index_raw,
                dcorr: e.dcorr,
            });
        }
    }
    Ok(rows)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarReduction {
    pub rho: Option<f64>,
    pub fixed: String,
    pub value: f64,
    pub ks: f64,
    pub mean_full: f64,
    pub var_full: f64,
    pub mean_reduced: f64,
    pub var_reduced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub rho: Option<f64>,
    pub edges: Vec<f64>,
    /// Column labels: `full` then one per fixed input.
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReduction {
    pub fixed: String,
    pub value: f64,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curves {
    pub times: Vec<f64>,
    pub mean_full: Vec<f64>,
    /// Per fixed input: mean curve and pointwise relative error.
    pub mean_reduced: Vec<Vec<f64>>,
    pub relative_error: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "output", rename_all = "snake_case")]
pub enum ReductionResult {
    Scalar { mode: ReductionMode, samples: usize, entries: Vec<ScalarReduction>, histograms: Vec<Histogram> },
    Trajectory { mode: ReductionMode, samples: usize, entries: Vec<CurveReduction>, curves: Curves },
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

fn scalar_values(y: OutputSamples) -> Result<Vec<f64>> {
    match y {
        OutputSamples::Scalar(v) => Ok(v),
        _ => bail!("expected scalar outputs"),
    }
}

fn histogram(rho: Option<f64>, labels: Vec<String>, arms: &[&[f64]], bins: usize) -> Histogram {
    let lo = arms.iter().flat_map(|a| a.iter()).copied().fold(f64::INFINITY, f64::min);
    let hi = arms.iter().flat_map(|a| a.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { lo + width * bins as f64 } else { lo + width * k as f64 }).collect();
    let counts = arms
        .iter()
        .map(|a| {
            let mut c = vec![0usize; bins];
            for &v in a.iter() {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                c[k] += 1;
            }
            c
        })
        .collect();
    Histogram { rho, edges, labels, counts }
}

/// Draws of the reduced model with input `i` fixed at `value`.
fn reduced_inputs(prep: &Prepared, full: &DMatrix<f64>, i: usize, value: f64, rho: Option<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let spec = prep.cfg.reduction.as_ref().expect("reduction spec");
    match spec.mode {
        ReductionMode::Replace => Ok(fix_coordinate(full, i, value)?),
        ReductionMode::Conditional => {
            let InputLaw::Gaussian { law, positive } = prep.input_law(rho)? else {
                bail!("conditional reduction needs a Gaussian sampling law");
            };
            let cond = InputLaw::Gaussian { law: law.condition_on(i, value)?, positive };
            Ok(cond.sample(spec.samples, seed, streams::REDUCED)?.0)
        }
    }
}

pub fn run_reduction(prep: &Prepared, samples: Option<usize>, exec: Execution) -> Result<ReductionResult> {
    let Some(spec) = &prep.cfg.reduction else { bail!("config has no \"reduction\" section") };
    if prep.external.is_some() {
        bail!("reduction studies need a model to sample");
    }
    let mut spec = spec.clone();
    if let Some(s) = samples {
        spec.samples = s;
    }
    let prep = Prepared {
        cfg: ExperimentConfig { reduction: Some(spec.clone()), ..prep.cfg.clone() },
        names: prep.names.clone(),
        fit: prep.fit.clone(),
        external: None,
    };
    let seed = prep.cfg.seed;
    let fixed: Vec<usize> = spec.fix.iter().map(|f| prep.names.iter().position(|x| x == f).expect("validated")).collect();

    if matches!(prep.cfg.model, ModelSpec::Cholera) {
        let law = prep.input_law(None)?;
        let mean = law.mean();
        let (x, _) = law.sample(spec.samples, seed, streams::INPUTS)?;
        let full = prep.evaluate(&x, None, exec)?;
        let OutputSamples::Trajectories(full) = full else { unreachable!() };
        let mean_full = full.mean();
        let mut entries = Vec::new();
        let mut curves = Curves {
            times: mean_full.times().to_vec(),
            mean_full: mean_full.values().to_vec(),
            mean_reduced: Vec::new(),
            relative_error: Vec::new(),
        };
        for (&i, name) in fixed.iter().zip(&spec.fix) {
            let value = spec.value.unwrap_or(mean[i]);
            let xr = reduced_inputs(&prep, &x, i, value, None, seed)?;
            let OutputSamples::Trajectories(red) = prep.evaluate(&xr, None, exec)? else { unreachable!() };
            let m = red.mean();
            let rel: Vec<f64> = m.values().iter().zip(mean_full.values()).map(|(r, f)| (r - f).abs() / f.abs()).collect();
            let max_relative_error = rel.iter().copied().fold(0.0, f64::max);
            entries.push(CurveReduction { fixed: name.clone(), value, max_relative_error });
            curves.mean_reduced.push(m.values().to_vec());
            curves.relative_error.push(rel);
        }
        return Ok(ReductionResult::Trajectory { mode: spec.mode, samples: spec.samples, entries, curves });
    }

    let rhos: Vec<Option<f64>> = if spec.rho.is_empty() { vec![None] } else { spec.rho.iter().map(|&r| Some(r)).collect() };
    let mut entries = Vec::new();
    let mut histograms = Vec::new();
    for rho in rhos {
        let law = prep.input_law(rho)?;
        let mean = law.mean();
        let (x, _) = law.sample(spec.samples, seed, streams::INPUTS)?;
        let y_full = scalar_values(prep.evaluate(&x, rho, exec)?)?;
        let (mean_full, var_full) = mean_var(&y_full);
        let mut arms = Vec::new();
        for (&i, name) in fixed.iter().zip(&spec.fix) {
            let value = spec.value.unwrap_or(mean[i]);
            let xr = reduced_inputs(&prep, &x, i, value, rho, seed)?;
            let y_red = scalar_values(prep.evaluate(&xr, rho, exec)?)?;
            let (mean_reduced, var_reduced) = mean_var(&y_red);
            entries.push(ScalarReduction {
                rho,
                fixed: name.clone(),
                value,
                ks: ks_statistic(&y_full, &y_red),
                mean_full,
                var_full,
                mean_reduced,
                var_reduced,
            });
            arms.push(y_red);
        }
        let labels = std::iter::once("full".to_string()).chain(spec.fix.iter().cloned()).collect();
        let all: Vec<&[f64]> = std::iter::once(y_full.as_slice()).chain(arms.iter().map(|a| a.as_slice())).collect();
        histograms.push(histogram(rho, labels, &all, spec.bins));
    }
    Ok(ReductionResult::Scalar { mode: spec.mode, samples: spec.samples, entries, histograms })
}

pub fn run_calibrate(cfg: &ExperimentConfig, exec: Execution) -> Result<FitResult> {
    if !matches!(cfg.model, ModelSpec::Cholera) {
        bail!("calibration applies to the cholera model");
    }
    fit_cholera(cfg, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub method: String,
    pub seconds: f64,
    pub hsic: f64,
    pub alloc: Option<AllocStats>,
}

/// Times `HSIC(X, Y)` on Ishigami samples: streaming (sequential and
/// parallel) and, up to `dense_max`, the dense oracle. Bandwidths and
/// centering statistics are computed before timing starts.
pub fn run_bench(cfg: &ExperimentConfig, n_grid: &[usize]) -> Result<Vec<BenchRow>> {
    let spec = cfg.bench.clone().unwrap_or(crate::config::BenchSpec { n_grid: vec![], repeats: 3, dense_max: 2000 });
    let law = UniformBoxLaw::cube(3, -std::f64::consts::PI, std::f64::consts::PI)?;
    let names: Vec<String> = (1..=3).map(|i| format!("X{i}")).collect();
    let mut rows = Vec::new();
    for &n in n_grid {
        let x = uniform_sample_stream(&law, n, cfg.seed, streams::INPUTS);
        let y = OutputSamples::Scalar(x.row_iter().map(|r| ishigami(&[r[0], r[1], r[2]], 5.0, 0.1)).collect());
        let blocks = ParameterBlock::scalar_blocks(&x, &names)?;
        let stats: Vec<_> = blocks.iter().map(|b| centering_stats(b, Execution::Parallel)).collect();
        let sigma = y.median_bandwidth(Execution::Parallel)?;
        let full = SubsetSpec::full(3);
        let k = AugmentedProductGram::new(&blocks, &stats, &full)?;
        let l = OutputGram::new(&y, sigma)?;

        let mut methods: Vec<(&str, Box<dyn Fn() -> Result<f64> + '_>)> = vec![
            ("streaming_sequential", Box::new(|| Ok(hsic_streaming(&k, &l, Execution::Sequential)?))),
            ("streaming_parallel", Box::new(|| Ok(hsic_streaming(&k, &l, Execution::Parallel)?))),
        ];
        if n <= spec.dense_max {
            methods.push((
                "dense",
                Box::new(|| {
                    let km = DenseGram::from_source(&k)?;
                    let lm = DenseGram::from_source(&l)?;
                    Ok(hsic_dense(&km.matrix, &lm.matrix)?)
                }),
            ));
        }
        for (method, run) in &methods {
            let mut best = f64::INFINITY;
            let mut value = 0.0;
            let mut alloc = None;
            for _ in 0..spec.repeats {
                let start = Instant::now();
                let (v, a) = audit::measure(|| run());
                let secs = start.elapsed().as_secs_f64();
                value = v?;
                alloc = match (alloc, a) {
                    (Some(AllocStats { peak_bytes, largest_bytes }), Some(b)) => Some(AllocStats {
                        peak_bytes: peak_bytes.max(b.peak_bytes),
                        largest_bytes: largest_bytes.max(b.largest_bytes),
                    }),
                    (_, a) => a,
                };
                best = best.min(secs);
            }
            log::info!("bench n={n} {method}: {best:.4}s");
            rows.push(BenchRow { n, method: method.to_string(), seconds: best, hsic: value, alloc });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a = [0.3, 0.1, 0.2, 0.2];
        assert_eq!(ks_statistic(&a, &a), 0.0);
    }

    #[test]
    fn ks_of_disjoint_samples_is_one() {
        assert_eq!(ks_statistic(&[0.0, 1.0, 2.0], &[5.0, 6.0]), 1.0);
    }

    #[test]
    fn ks_hand_example() {
        // ecdfs differ most just after 1: 2/3 vs 1/4
        let d = ks_statistic(&[0.0, 1.0, 3.0], &[2.0, 2.5, 4.0, 0.5]);
        assert!((d - (2.0 / 3.0 - 0.25)).abs() < 1e-15, "{d}");
    }

    #[test]
    fn histogram_counts_every_value() {
        let h = histogram(None, vec!["full".into()], &[&[0.0, 0.5, 1.0, 1.0]], 4);
        assert_eq!(h.counts[0].iter().sum::<usize>(), 4);
        assert_eq!(h.counts[0][3], 2);
        assert_eq!(h.edges.len(), 5);
    }
}
