use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use hsicsa::par::{self, Execution};
use hsicsa_cli::audit::CountingAlloc;
use hsicsa_cli::config::{ExperimentConfig, PRESETS};
use hsicsa_cli::output::{num, opt, Writer};
use hsicsa_cli::studies::{self, Prepared, ReductionResult};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

#[derive(Parser)]
#[command(name = "hsicsa", version, about = "Total HSIC sensitivity studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: ishigami, portfolio, cholera_correlated, cholera_uniform.
    #[arg(long)]
    preset: Option<String>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Run without data parallelism.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Total HSIC indices (plus dcorr and Sobol' totals when configured).
    Indices(Common),
    /// Index spread over a grid of sample sizes and seeds.
    Convergence(Common),
    /// Portfolio indices over a grid of correlations.
    RhoSweep(Common),
    /// Compare the full model with reduced models that fix inputs.
    Reduce {
        #[command(flatten)]
        common: Common,
        /// Override the number of reduction samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Fit the cholera model to synthetic data and write the parameter law.
    Calibrate(Common),
    /// Time streaming against dense HSIC and record peak heap use.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Override the bench sample sizes.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
    /// List the built-in presets, or print one.
    Presets { name: Option<String> },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => unreachable!("clap requires one"),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.n {
        if n < 10 {
            return Err(anyhow!("--n must be at least 10"));
        }
        cfg.n = n;
    }
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn exec(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn indices(common: &Common) -> Result<Writer> {
    let cfg = load(common)?;
    let prep = Prepared::new(cfg, exec(common))?;
    let res = studies::run_indices(&prep, exec(common))?;
    let mut w = Writer::new(&prep.cfg, "indices")?;
    let rows: Vec<Vec<String>> = res
        .report
        .entries
        .iter()
        .map(|e| {
            vec![
                e.label.clone(),
                num(e.hsic.value),
                num(e.complement_hsic),
                num(e.total_index),
                num(e.total_index_raw),
                opt(e.dcorr),
            ]
        })
        .collect();
    w.csv("", &["subset", "hsic", "complement_hsic", "total_index", "total_index_raw", "dcorr"], &rows)?;
    if let Some(s) = &res.sobol {
        let rows: Vec<Vec<String>> = prep
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| vec![name.clone(), num(s.totals.totals[i]), opt(s.analytic.map(|a| a[i]))])
            .collect();
        w.csv("sobol", &["input", "sobol_total", "analytic"], &rows)?;
    }
    w.json("", &res)?;
    Ok(w)
}

fn convergence(common: &Common) -> Result<Writer> {
    let prep = Prepared::new(load(common)?, exec(common))?;
    let (rows, summary) = studies::run_convergence(&prep, exec(common))?;
    let mut w = Writer::new(&prep.cfg, "convergence")?;
    let csv: Vec<Vec<String>> =
        rows.iter().map(|r| vec![r.n.to_string(), r.seed.to_string(), r.input.clone(), num(r.total_index)]).collect();
    w.csv("", &["n", "seed", "input", "total_index"], &csv)?;
    let csv: Vec<Vec<String>> = summary
        .iter()
        .map(|s| vec![s.n.to_string(), s.input.clone(), num(s.mean), num(s.std_dev), num(s.range)])
        .collect();
    w.csv("summary", &["n", "input", "mean", "std_dev", "range"], &csv)?;
    Ok(w)
}

fn rho_sweep(common: &Common) -> Result<Writer> {
    let prep = Prepared::new(load(common)?, exec(common))?;
    let rows = studies::run_rho_sweep(&prep, exec(common))?;
    let mut w = Writer::new(&prep.cfg, "rho_sweep")?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.rho), r.input.clone(), num(r.total_index), num(r.total_index_raw), opt(r.dcorr)])
        .collect();
    w.csv("", &["rho", "input", "total_index", "total_index_raw", "dcorr"], &csv)?;
    Ok(w)
}

fn reduce(common: &Common, samples: Option<usize>) -> Result<Writer> {
    let prep = Prepared::new(load(common)?, exec(common))?;
    let res = studies::run_reduction(&prep, samples, exec(common))?;
    let mut w = Writer::new(&prep.cfg, "reduce")?;
    match &res {
        ReductionResult::Scalar { entries, histograms, .. } => {
            let csv: Vec<Vec<String>> = entries
                .iter()
                .map(|e| {
                    vec![
                        opt(e.rho),
                        e.fixed.clone(),
                        num(e.value),
                        num(e.ks),
                        num(e.mean_full),
                        num(e.var_full),
                        num(e.mean_reduced),
                        num(e.var_reduced),
                    ]
                })
                .collect();
            w.csv("", &["rho", "fixed", "value", "ks", "mean_full", "var_full", "mean_reduced", "var_reduced"], &csv)?;
            for (k, h) in histograms.iter().enumerate() {
                let mut header = vec!["lower", "upper"];
                header.extend(h.labels.iter().map(|s| s.as_str()));
                let csv: Vec<Vec<String>> = (0..h.edges.len() - 1)
                    .map(|b| {
                        let mut row = vec![num(h.edges[b]), num(h.edges[b + 1])];
                        row.extend(h.counts.iter().map(|c| c[b].to_string()));
                        row
                    })
                    .collect();
                let suffix = match h.rho {
                    Some(r) => format!("hist_rho{r}"),
                    None => format!("hist{k}"),
                };
                w.csv(&suffix, &header, &csv)?;
            }
        }
        ReductionResult::Trajectory { entries, curves, .. } => {
            let csv: Vec<Vec<String>> =
                entries.iter().map(|e| vec![e.fixed.clone(), num(e.value), num(e.max_relative_error)]).collect();
            w.csv("", &["fixed", "value", "max_relative_error"], &csv)?;
            let mut header: Vec<String> = vec!["t".into(), "mean_full".into()];
            for e in entries {
                header.push(format!("mean_fixed_{}", e.fixed));
                header.push(format!("relative_error_{}", e.fixed));
            }
            let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let csv: Vec<Vec<String>> = (0..curves.times.len())
                .map(|k| {
                    let mut row = vec![num(curves.times[k]), num(curves.mean_full[k])];
                    for (m, r) in curves.mean_reduced.iter().zip(&curves.relative_error) {
                        row.push(num(m[k]));
                        row.push(num(r[k]));
                    }
                    row
                })
                .collect();
            w.csv("curves", &header, &csv)?;
        }
    }
    w.json("", &res)?;
    Ok(w)
}

fn calibrate(common: &Common) -> Result<Writer> {
    let cfg = load(common)?;
    let fit = studies::run_calibrate(&cfg, exec(common))?;
    let mut w = Writer::new(&cfg, "calibrate")?;
    w.json("", &fit)?;
    let mut header = vec!["parameter", "theta_hat", "standard_error"];
    header.extend(fit.param_names.iter().map(|s| s.as_str()));
    let csv: Vec<Vec<String>> = fit
        .param_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut row = vec![name.clone(), num(fit.theta_hat[i]), num(fit.standard_errors[i])];
            row.extend(fit.correlation[i].iter().map(|&v| num(v)));
            row
        })
        .collect();
    w.csv("correlation", &header, &csv)?;
    if !fit.converged {
        return Err(anyhow!(
            "calibration did not converge after {} iterations; diagnostics written to {}",
            fit.iterations,
            w.dir().display()
        ));
    }
    Ok(w)
}

fn bench(common: &Common, n_grid: Option<Vec<usize>>) -> Result<Writer> {
    let cfg = load(common)?;
    let grid = n_grid
        .or_else(|| cfg.bench.as_ref().map(|b| b.n_grid.clone()))
        .ok_or_else(|| anyhow!("config has no \"bench\" section and no --n-grid was given"))?;
    let rows = studies::run_bench(&cfg, &grid)?;
    let mut w = Writer::new(&cfg, "bench")?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.method.clone(),
                num(r.seconds),
                num(r.hsic),
                r.alloc.map(|a| a.peak_bytes.to_string()).unwrap_or_default(),
                r.alloc.map(|a| a.largest_bytes.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    w.csv("", &["n", "method", "seconds", "hsic", "peak_bytes", "largest_allocation_bytes"], &csv)?;
    Ok(w)
}

fn run(cli: Cli) -> Result<()> {
    let threads = match &cli.command {
        Command::Indices(c) | Command::Convergence(c) | Command::RhoSweep(c) | Command::Calibrate(c) => c.threads,
        Command::Reduce { common, .. } | Command::Bench { common, .. } => common.threads,
        Command::Presets { .. } => None,
    };
    let w = par::with_threads(threads, move || -> Result<Option<Writer>> {
        Ok(Some(match &cli.command {
            Command::Indices(c) => indices(c)?,
            Command::Convergence(c) => convergence(c)?,
            Command::RhoSweep(c) => rho_sweep(c)?,
            Command::Reduce { common, samples } => reduce(common, *samples)?,
            Command::Calibrate(c) => calibrate(c)?,
            Command::Bench { common, n_grid } => bench(common, n_grid.clone())?,
            Command::Presets { name: None } => {
                for (name, _) in PRESETS {
                    println!("{name}");
                }
                return Ok(None);
            }
            Command::Presets { name: Some(name) } => {
                let text = PRESETS
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, t)| *t)
                    .ok_or_else(|| anyhow!("unknown preset {name}"))?;
                print!("{text}");
                return Ok(None);
            }
        }))
    })?;
    if let Some(w) = w {
        for p in w.written() {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
