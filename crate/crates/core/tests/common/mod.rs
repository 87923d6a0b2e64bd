#![allow(dead_code)]

use std::f64::consts::PI;

use hsicsa::kernel::{centering_stats, OutputGram};
use hsicsa::models::{ishigami, portfolio, portfolio_sigma};
use hsicsa::sampling::{mvn_sample, uniform_sample, GaussianLaw, UniformBoxLaw};
use hsicsa::{CenteringStats, Execution, OutputSamples, ParameterBlock};
use nalgebra::{DMatrix, DVector};

pub struct Problem {
    pub blocks: Vec<ParameterBlock>,
    pub stats: Vec<CenteringStats>,
    pub output: OutputSamples,
    pub sigma_y: f64,
}

impl Problem {
    pub fn new(x: &DMatrix<f64>, y: Vec<f64>) -> Self {
        let names: Vec<String> = (1..=x.ncols()).map(|i| format!("X{i}")).collect();
        let blocks = ParameterBlock::scalar_blocks(x, &names).unwrap();
        let stats = blocks.iter().map(|b| centering_stats(b, Execution::Sequential)).collect();
        let output = OutputSamples::Scalar(y);
        let sigma_y = output.median_bandwidth(Execution::Sequential).unwrap();
        Self { blocks, stats, output, sigma_y }
    }

    pub fn gram(&self) -> OutputGram<'_> {
        OutputGram::new(&self.output, self.sigma_y).unwrap()
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }
}

pub fn ishigami_problem(n: usize, seed: u64) -> Problem {
    let law = UniformBoxLaw::cube(3, -PI, PI).unwrap();
    let x = uniform_sample(&law, n, seed);
    let y = x.row_iter().map(|r| ishigami(&[r[0], r[1], r[2]], 5.0, 0.1)).collect();
    Problem::new(&x, y)
}

pub fn portfolio_problem(n: usize, rho: f64, seed: u64) -> Problem {
    let law = GaussianLaw::new(DVector::zeros(5), portfolio_sigma(rho).unwrap()).unwrap();
    let x = mvn_sample(&law, n, seed);
    let y = x.row_iter().map(|r| portfolio(&[r[0], r[1], r[2], r[3], r[4]])).collect();
    Problem::new(&x, y)
}

/// `p` independent standard normal inputs and an independent normal output.
pub fn independent_problem(n: usize, p: usize, seed: u64) -> Problem {
    let law = GaussianLaw::standard(p + 1);
    let z = mvn_sample(&law, n, seed);
    let x = z.columns(0, p).into_owned();
    let y = z.column(p).iter().copied().collect();
    Problem::new(&x, y)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn range(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}
