mod common;

use common::*;
use hsicsa::models::cholera::{cholera_rhs, initial_state, simulate, CholeraParams, N_POP};
use hsicsa::models::{integrate_rk45, portfolio, portfolio_sigma, IntegratorOptions, UniformGrid};
use hsicsa::sampling::{
    empirical_moments, fix_coordinate, mvn_sample, uniform_sample, GaussianLaw, UniformBoxLaw,
};
use nalgebra::{DMatrix, DVector};

fn rk4(p: &CholeraParams, h: f64, t_end: f64, every: usize) -> Vec<[f64; 5]> {
    let f = |y: &[f64; 5]| cholera_rhs(0.0, y, p, N_POP);
    let add = |y: &[f64; 5], k: &[f64; 5], s: f64| -> [f64; 5] { std::array::from_fn(|i| y[i] + s * k[i]) };
    let steps = (t_end / h).round() as usize;
    let mut y = initial_state(N_POP);
    let mut out = vec![y];
    for k in 1..=steps {
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, h / 2.0));
        let k3 = f(&add(&y, &k2, h / 2.0));
        let k4 = f(&add(&y, &k3, h));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if k % every == 0 {
            out.push(y);
        }
    }
    out
}

#[test]
fn rk45_matches_fine_rk4() {
    let p = CholeraParams::nominal();
    let opts = IntegratorOptions { output_grid: UniformGrid::new(0.0, 50.0, 101).unwrap(), ..Default::default() };
    let traj = simulate(&p, &opts).unwrap();
    // h = 1e-3, output every 0.5 weeks
    let oracle = rk4(&p, 1e-3, 50.0, 500);
    assert_eq!(oracle.len(), traj.len());
    let mut worst: f64 = 0.0;
    for (k, want) in oracle.iter().enumerate().skip(1) {
        for c in 0..5 {
            worst = worst.max((traj.value(k, c) - want[c]).abs() / want[c].abs());
        }
    }
    assert!(worst <= 1e-5, "{worst}");
}

#[test]
fn population_is_conserved() {
    let traj = simulate(&CholeraParams::nominal(), &IntegratorOptions::default()).unwrap();
    for k in 0..traj.len() {
        let total = traj.value(k, 0) + traj.value(k, 1) + traj.value(k, 2);
        assert!((total - N_POP).abs() <= 1e-4, "t={} total={total}", traj.times()[k]);
    }
}

#[test]
fn rk45_solves_logistic_growth() {
    let opts = IntegratorOptions { output_grid: UniformGrid::new(0.0, 10.0, 41).unwrap(), ..Default::default() };
    let traj = integrate_rk45(|_, y, dy| dy[0] = y[0] * (1.0 - y[0]), &[0.01], &opts).unwrap();
    for (k, &t) in traj.times().iter().enumerate() {
        let exact = 1.0 / (1.0 + 99.0 * (-t).exp());
        assert!((traj.value(k, 0) - exact).abs() <= 1e-6);
    }
}

#[test]
fn mvn_identity_covariance() {
    let law = GaussianLaw::standard(3);
    let m = empirical_moments(&mvn_sample(&law, 50_000, 3)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((m.covariance[(i, j)] - want).abs() <= 0.05);
        }
    }
}

#[test]
fn mvn_portfolio_correlation_entry() {
    let law = GaussianLaw::new(DVector::zeros(5), portfolio_sigma(1.0).unwrap()).unwrap();
    let m = empirical_moments(&mvn_sample(&law, 50_000, 4)).unwrap();
    assert!((m.correlation[(0, 4)] - 0.8).abs() <= 0.02, "{}", m.correlation[(0, 4)]);
}

#[test]
fn mvn_degenerate_law_repeats_mean() {
    let mean = DVector::from_vec(vec![1.0, -2.0]);
    let law = GaussianLaw::new(mean.clone(), DMatrix::zeros(2, 2)).unwrap();
    let x = mvn_sample(&law, 10, 1);
    for r in x.row_iter() {
        assert_eq!(r.transpose(), mean);
    }
}

#[test]
fn mvn_covariance_error_shrinks_with_n() {
    let law = GaussianLaw::new(DVector::zeros(5), portfolio_sigma(0.7).unwrap()).unwrap();
    let err = |n: usize, seed: u64| {
        let m = empirical_moments(&mvn_sample(&law, n, seed)).unwrap();
        (m.covariance - law.covariance()).abs().max()
    };
    let ratios: Vec<f64> = (0..20).map(|s| err(4000, 100 + s) / err(1000, 200 + s)).collect();
    assert!(mean(&ratios) <= 0.75, "{}", mean(&ratios));
}

#[test]
fn uniform_mean_and_support() {
    let law = UniformBoxLaw::new(vec![0.0], vec![1.0]).unwrap();
    let x = uniform_sample(&law, 100_000, 5);
    assert!((x.mean() - 0.5).abs() <= 0.01);
    assert!(x.iter().all(|&v| (0.0..1.0).contains(&v)));
    assert_eq!(x, uniform_sample(&law, 100_000, 5));
    assert_ne!(x, uniform_sample(&law, 100_000, 6));
}

#[test]
fn fixing_x5_variance_ratio() {
    let law = GaussianLaw::new(DVector::zeros(5), portfolio_sigma(0.0).unwrap()).unwrap();
    let x = mvn_sample(&law, 200_000, 6);
    let reduced = fix_coordinate(&x, 4, 0.0).unwrap();
    let var = |m: &DMatrix<f64>| {
        let y: Vec<f64> = m.row_iter().map(|r| portfolio(&[r[0], r[1], r[2], r[3], r[4]])).collect();
        std_dev(&y).powi(2)
    };
    let ratio = var(&reduced) / var(&x);
    assert!((ratio - 900.0 / 916.0).abs() <= 0.01, "{ratio}");
    for c in 0..4 {
        assert_eq!(reduced.column(c), x.column(c));
    }
}
