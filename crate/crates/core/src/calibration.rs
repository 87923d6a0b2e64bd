//! Ordinary least-squares calibration of the cholera model to `I(t)` data.
//!
//! Parameters are fitted in log space (`theta = exp(phi)`), which keeps them
//! positive and evens out scales spanning ten orders of magnitude. The solver
//! is Gauss–Newton with a forward-difference Jacobian and step halving.
//! Covariances are reported for `theta`:
//! `Cov(theta) = diag(theta) sigma^2 (J_phi^T J_phi)^-1 diag(theta)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::cholera::{infected_curve, CholeraParams, PARAM_NAMES};
use crate::models::ode::{IntegratorOptions, UniformGrid};
use crate::par::{self, Execution};
use crate::sampling::{correlation_from_covariance, rng_for, scale_split, streams, GaussianLaw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub observation_grid: UniformGrid,
    /// Noise standard deviation as a fraction of the peak of the noiseless `I(t)`.
    pub noise_fraction: f64,
    /// Start from `theta_star * initial_scale`.
    pub initial_scale: f64,
    pub integrator: IntegratorOptions,
    pub fd_step: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
    pub rss_tol: f64,
    pub max_halvings: usize,
    /// Largest accepted condition number of `J^T J` when `rank_tol` is unset.
    pub max_condition: f64,
    /// When set, singular values of `J` below `rank_tol * sigma_max` are
    /// dropped from the step and the covariance (pseudo-inverse).
    pub rank_tol: Option<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            observation_grid: UniformGrid { start: 0.0, end: 300.0, points: 151 },
            noise_fraction: 0.01,
            initial_scale: 1.05,
            integrator: IntegratorOptions { rel_tol: 1e-10, abs_tol: 1e-10, ..IntegratorOptions::default() },
            fd_step: 1e-6,
            max_iterations: 100,
            step_tol: 1e-8,
            rss_tol: 1e-10,
            max_halvings: 30,
            max_condition: 1.0 / f64::EPSILON,
            rank_tol: None,
        }
    }
}

impl CalibrationOptions {
    fn model_options(&self) -> IntegratorOptions {
        IntegratorOptions { output_grid: self.observation_grid, ..self.integrator }
    }
}

/// Model `I(t_k)` at the observation times.
pub fn model_observations(theta: &CholeraParams, opts: &CalibrationOptions) -> Result<Vec<f64>> {
    Ok(infected_curve(theta, &opts.model_options())?.values().to_vec())
}

/// Noisy synthetic `I(t_k)` generated at `theta_star`.
pub fn synth_data(theta_star: &CholeraParams, noise_sigma: f64, seed: u64, opts: &CalibrationOptions) -> Result<Vec<f64>> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter { name: "noise_sigma", reason: format!("must be >= 0, got {noise_sigma}") });
    }
    let mut obs = model_observations(theta_star, opts)?;
    if noise_sigma > 0.0 {
        let mut rng = rng_for(seed, streams::NOISE);
        for v in obs.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise_sigma * z;
        }
    }
    Ok(obs)
}

/// Result of a generic Gauss–Newton run.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// RSS after every accepted step, starting with the initial point.
    pub rss_history: Vec<f64>,
}

/// Forward-difference Jacobian with absolute step `h` per coordinate;
/// columns are evaluated concurrently.
pub fn forward_jacobian<R>(residual: &R, x: &[f64], r0: &[f64], h: f64, exec: Execution) -> Result<DMatrix<f64>>
where
    R: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let cols = par::try_map_indexed(exec, x.len(), |k| {
        let mut xp = x.to_vec();
        xp[k] += h;
        let rp = residual(&xp)?;
        Ok::<_, Error>(rp.iter().zip(r0).map(|(a, b)| (a - b) / h).collect::<Vec<f64>>())
    })?;
    let m = r0.len();
    Ok(DMatrix::from_fn(m, x.len(), |i, k| cols[k][i]))
}

fn rss_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Condition number of `J^T J` from the singular values of `J`.
pub fn normal_condition(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

/// Singular values of `J` that are kept under the options' rank policy.
fn kept_rank(sv: &DVector<f64>, opts: &CalibrationOptions) -> Result<usize> {
    let max = sv.max();
    match opts.rank_tol {
        Some(tol) => Ok(sv.iter().filter(|&&s| s > tol * max).count()),
        None => {
            let min = sv.min();
            let cond = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
            if !(cond <= opts.max_condition) {
                return Err(Error::SingularNormalMatrix { condition: cond });
            }
            Ok(sv.len())
        }
    }
}

fn gn_step(jac: &DMatrix<f64>, r: &[f64], opts: &CalibrationOptions) -> Result<DVector<f64>> {
    let svd = jac.clone().svd(true, true);
    let rank = kept_rank(&svd.singular_values, opts)?;
    let (u, v_t) = (svd.u.as_ref().expect("U"), svd.v_t.as_ref().expect("V^T"));
    let mut step = DVector::zeros(jac.ncols());
    for k in 0..rank {
        let coef = -u.column(k).iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / svd.singular_values[k];
        step += v_t.row(k).transpose() * coef;
    }
    Ok(step)
}

/// Minimizes `|residual(x)|^2` by Gauss–Newton with step halving.
pub fn gauss_newton<R>(residual: R, x0: &[f64], opts: &CalibrationOptions, exec: Execution) -> Result<GaussNewtonOutcome>
where
    R: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let mut rss = rss_of(&r);
    let mut history = vec![rss];
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = forward_jacobian(&residual, &x, &r, opts.fd_step, exec)?;

    while iterations < opts.max_iterations {
        iterations += 1;
        if rss == 0.0 {
            converged = true;
            break;
        }
        let step = gn_step(&jac, &r, opts)?;
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        if step.norm() <= opts.step_tol * x_norm {
            converged = true;
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
            // a failed integration counts as no descent
            if let Ok(rt) = residual(&trial) {
                let rss_t = rss_of(&rt);
                if rss_t < rss {
                    accepted = Some((trial, rt, rss_t));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, r_new, rss_new)) = accepted else {
            // no descent direction left at working precision
            converged = true;
            break;
        };
        let rel_step = alpha * step.norm() / x_norm;
        let rel_decrease = (rss - rss_new) / rss;
        x = x_new;
        r = r_new;
        rss = rss_new;
        history.push(rss);
        jac = forward_jacobian(&residual, &x, &r, opts.fd_step, exec)?;
        if rel_step < opts.step_tol || rel_decrease < opts.rss_tol {
            converged = true;
            break;
        }
    }
    Ok(GaussNewtonOutcome { x, residuals: r, jacobian: jac, rss, iterations, converged, rss_history: history })
}

/// Gauss–Newton fit plus its OLS covariance, in the fitted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub x: Vec<f64>,
    pub rss: f64,
    pub residual_variance: f64,
    /// `(J^T J)^-1`, or its pseudo-inverse when `rank < p`.
    pub unscaled_covariance: DMatrix<f64>,
    pub condition_number: f64,
    pub rank: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl LeastSquaresFit {
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.unscaled_covariance * self.residual_variance
    }
}

pub fn fit_least_squares<R>(residual: R, x0: &[f64], opts: &CalibrationOptions, exec: Execution) -> Result<LeastSquaresFit>
where
    R: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let out = gauss_newton(residual, x0, opts, exec)?;
    let (k, p) = out.jacobian.shape();
    if k <= p {
        return Err(Error::InvalidParameter { name: "data", reason: format!("need more than {p} residuals, got {k}") });
    }
    let svd = out.jacobian.clone().svd(false, true);
    let rank = kept_rank(&svd.singular_values, opts)?;
    let v_t = svd.v_t.expect("requested V^T");
    let mut unscaled = DMatrix::zeros(p, p);
    for i in 0..rank {
        let v = v_t.row(i).transpose();
        unscaled += &v * v.transpose() / svd.singular_values[i].powi(2);
    }
    let unscaled = (&unscaled + unscaled.transpose()) * 0.5;
    Ok(LeastSquaresFit {
        x: out.x,
        rss: out.rss,
        residual_variance: out.rss / (k - p) as f64,
        unscaled_covariance: unscaled,
        condition_number: normal_condition(&out.jacobian),
        rank,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub residual_variance: f64,
    pub rss: f64,
    pub n_observations: usize,
    /// Row-major `9 x 9`.
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub condition_number: f64,
    pub rank: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: bad.len() });
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

impl FitResult {
    pub fn theta(&self) -> Result<CholeraParams> {
        CholeraParams::from_slice(&self.theta_hat)
    }

    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.covariance)
    }

    pub fn correlation_matrix(&self) -> Result<DMatrix<f64>> {
        from_rows(&self.correlation)
    }
}

/// OLS fit of the cholera model to observed `I(t_k)`.
pub fn gauss_newton_fit(data: &[f64], theta0: &CholeraParams, opts: &CalibrationOptions, exec: Execution) -> Result<FitResult> {
    theta0.validate()?;
    let k = data.len();
    if k != opts.observation_grid.points {
        return Err(Error::DimensionMismatch { expected: opts.observation_grid.points, got: k });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "data", reason: "non-finite observation".into() });
    }
    let residual = |phi: &[f64]| -> Result<Vec<f64>> {
        let theta: Vec<f64> = phi.iter().map(|v| v.exp()).collect();
        let params = CholeraParams::from_slice(&theta)?;
        let pred = model_observations(&params, opts)?;
        Ok(pred.iter().zip(data).map(|(a, b)| a - b).collect())
    };
    let phi0: Vec<f64> = theta0.to_array().iter().map(|v| v.ln()).collect();
    let fit = fit_least_squares(residual, &phi0, opts, exec)?;

    let theta_hat: Vec<f64> = fit.x.iter().map(|v| v.exp()).collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(theta_hat.clone()));
    let unscaled = &d * &fit.unscaled_covariance * &d;
    let unscaled = (&unscaled + unscaled.transpose()) * 0.5;
    let covariance = &unscaled * fit.residual_variance;
    // correlation does not depend on the noise scale
    let (correlation, _) = correlation_from_covariance(&unscaled);

    Ok(FitResult {
        param_names: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        standard_errors: (0..theta_hat.len()).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect(),
        theta_hat,
        residual_variance: fit.residual_variance,
        rss: fit.rss,
        n_observations: k,
        covariance: to_rows(&covariance),
        correlation: to_rows(&correlation),
        condition_number: fit.condition_number,
        rank: fit.rank,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// `N(theta_hat, Cov)` with any negative eigenvalues clipped to zero.
pub fn correlated_law_from_fit(fit: &FitResult) -> Result<GaussianLaw> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    let cov = fit.covariance_matrix()?;
    let cov = (&cov + cov.transpose()) * 0.5;
    // clip in correlation scale; the parameters span many orders of magnitude
    let (sd, scaled) = scale_split(&cov);
    let eig = scaled.clone().symmetric_eigen();
    let cov = if eig.eigenvalues.min() < 0.0 {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let repaired = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let d = DMatrix::from_diagonal(&DVector::from_vec(sd));
        &d * repaired * &d
    } else {
        cov
    };
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianLaw::new(DVector::from_vec(fit.theta_hat.clone()), cov)
}

/// Synthetic data at `theta_star` followed by a fit started from
/// `theta_star * initial_scale`.
pub fn calibrate_synthetic(theta_star: &CholeraParams, seed: u64, opts: &CalibrationOptions, exec: Execution) -> Result<FitResult> {
    let clean = model_observations(theta_star, opts)?;
    let peak = clean.iter().copied().fold(0.0, f64::max);
    let data = synth_data(theta_star, opts.noise_fraction * peak, seed, opts)?;
    let theta0 = CholeraParams::from_slice(&theta_star.to_array().map(|v| v * opts.initial_scale))?;
    gauss_newton_fit(&data, &theta0, opts, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_problem_solved_in_one_step() {
        let m = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let y = DVector::from_vec(vec![0.9, 3.1, 5.0, 7.2, 8.8]);
        let residual = |x: &[f64]| -> Result<Vec<f64>> {
            let v = &m * DVector::from_column_slice(x) - &y;
            Ok(v.iter().copied().collect())
        };
        let opts = CalibrationOptions::default();
        let out = gauss_newton(residual, &[10.0, -3.0], &opts, Execution::Sequential).unwrap();
        let normal = (m.transpose() * &m).try_inverse().unwrap() * m.transpose() * &y;
        assert!(out.converged);
        assert!(out.iterations <= 2);
        // one accepted step
        assert_eq!(out.rss_history.len(), 2);
        for i in 0..2 {
            assert!((out.x[i] - normal[i]).abs() < 1e-8, "{:?} vs {normal}", out.x);
        }
    }

    #[test]
    fn rss_never_increases() {
        // Rosenbrock-style residuals
        let residual = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]) };
        let out = gauss_newton(residual, &[-1.2, 1.0], &CalibrationOptions::default(), Execution::Sequential).unwrap();
        assert!(out.rss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let residual = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0] + x[1] - 1.0, 2.0 * (x[0] + x[1]) - 2.5]) };
        let r = gauss_newton(residual, &[0.0, 0.0], &CalibrationOptions::default(), Execution::Sequential);
        assert!(matches!(r, Err(Error::SingularNormalMatrix { .. })));
    }

    #[test]
    fn noiseless_data_reproduce_model() {
        let opts = CalibrationOptions::default();
        let p = CholeraParams::nominal();
        let a = synth_data(&p, 0.0, 1, &opts).unwrap();
        assert_eq!(a, model_observations(&p, &opts).unwrap());
        let b = synth_data(&p, 5.0, 1, &opts).unwrap();
        let c = synth_data(&p, 5.0, 2, &opts).unwrap();
        assert_ne!(b, c);
        assert!(synth_data(&p, -1.0, 1, &opts).is_err());
    }

    #[test]
    fn non_converged_fit_has_no_law() {
        let fit = FitResult {
            param_names: vec![],
            theta_hat: vec![1.0; 9],
            residual_variance: 0.0,
            rss: 0.0,
            n_observations: 151,
            covariance: vec![vec![0.0; 9]; 9],
            correlation: vec![vec![0.0; 9]; 9],
            standard_errors: vec![0.0; 9],
            condition_number: 1.0,
            rank: 9,
            iterations: 100,
            converged: false,
        };
        assert_eq!(correlated_law_from_fit(&fit), Err(Error::NotConverged));
    }
}
