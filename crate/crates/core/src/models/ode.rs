//! Dormand–Prince 5(4) with PI step-size control and a fourth-order
//! continuous extension, resampled onto a uniform output grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::trajectory::Trajectory;

/// `points` equally spaced times from `start` to `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl UniformGrid {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(end > start) {
            return Err(Error::InvalidParameter {
                name: "output_grid",
                reason: format!("need points >= 2 and end > start, got {points} points on [{start}, {end}]"),
            });
        }
        Ok(Self { start, end, points })
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / (self.points - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points)
            .map(|k| if k + 1 == self.points { self.end } else { self.start + k as f64 * h })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    pub output_grid: UniformGrid,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            max_step: 30.0,
            max_steps: 200_000,
            output_grid: UniformGrid { start: 0.0, end: 300.0, points: 601 },
        }
    }
}

impl IntegratorOptions {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol), ("max_step", self.max_step)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter { name: "integrator", reason: format!("{name} must be positive, got {v}") });
            }
        }
        UniformGrid::new(self.output_grid.start, self.output_grid.end, self.output_grid.points)?;
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth- minus fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

fn weighted_rms(v: &[f64], scale: &[f64]) -> f64 {
    (v.iter().zip(scale).map(|(x, s)| (x / s) * (x / s)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Integrates `y' = rhs(t, y)` from `output_grid.start` to `output_grid.end`
/// and returns the solution on the output grid.
pub fn integrate_rk45<F>(mut rhs: F, y0: &[f64], opts: &IntegratorOptions) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    opts.validate()?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "y0", reason: "non-finite initial state".into() });
    }
    let m = y0.len();
    let grid = opts.output_grid.times();
    let (t0, t_end) = (opts.output_grid.start, opts.output_grid.end);

    let mut values = Vec::with_capacity(grid.len() * m);
    values.extend_from_slice(y0);
    let mut next_out = 1;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut k5 = vec![0.0; m];
    let mut k6 = vec![0.0; m];
    let mut k7 = vec![0.0; m];
    let mut ytmp = vec![0.0; m];
    let mut y1 = vec![0.0; m];
    let mut err = vec![0.0; m];
    let mut scale = vec![0.0; m];
    let mut cont = vec![[0.0f64; 5]; m];

    rhs(t, &y, &mut k1);
    let mut h = initial_step(&mut rhs, t, &y, &k1, opts).min(t_end - t);
    let mut fac_old = 1e-4f64;
    let mut steps = 0usize;
    let mut rejected_last = false;

    while next_out < grid.len() {
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps { t, max_steps: opts.max_steps });
        }
        if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        steps += 1;

        for i in 0..m {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ytmp, &mut k2);
        for i in 0..m {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ytmp, &mut k3);
        for i in 0..m {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ytmp, &mut k4);
        for i in 0..m {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ytmp, &mut k5);
        for i in 0..m {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + h };
        rhs(t_new, &ytmp, &mut k6);
        for i in 0..m {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &y1, &mut k7);
        for i in 0..m {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            scale[i] = opts.abs_tol + opts.rel_tol * y[i].abs().max(y1[i].abs());
        }
        let e = weighted_rms(&err, &scale);
        if !e.is_finite() {
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }

        let fac11 = e.powf(0.2 - BETA * 0.75);
        if e <= 1.0 {
            for i in 0..m {
                let dy = y1[i] - y[i];
                let bspl = h * k1[i] - dy;
                cont[i] = [
                    y[i],
                    dy,
                    bspl,
                    dy - h * k7[i] - bspl,
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]),
                ];
            }
            while next_out < grid.len() && (grid[next_out] <= t_new || last) {
                let theta = ((grid[next_out] - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                for c in &cont {
                    values.push(c[0] + theta * (c[1] + theta1 * (c[2] + theta * (c[3] + theta1 * c[4]))));
                }
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);

            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            fac_old = e.max(1e-4);
            h = h_new.min(opts.max_step);
            rejected_last = false;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
    }
    Trajectory::new(grid, m, values)
}

fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let scale: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let d0 = weighted_rms(y, &scale);
    let d1 = weighted_rms(f0, &scale);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 }.min(opts.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = weighted_rms(&diff, &scale) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(opts.max_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(end: f64, points: usize) -> IntegratorOptions {
        IntegratorOptions { output_grid: UniformGrid::new(0.0, end, points).unwrap(), ..Default::default() }
    }

    #[test]
    fn exponential_decay() {
        let traj = integrate_rk45(|_, y, dy| dy[0] = -y[0], &[1.0], &opts(5.0, 51)).unwrap();
        let last = traj.value(50, 0);
        assert!((last - (-5.0f64).exp()).abs() < 1e-6, "{last}");
        // dense output is accurate between steps too
        for k in 0..51 {
            let t = traj.times()[k];
            assert!((traj.value(k, 0) - (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_field_is_constant() {
        let traj = integrate_rk45(|_, _, dy| dy.fill(0.0), &[2.5, -1.0], &opts(10.0, 11)).unwrap();
        for k in 0..11 {
            assert_eq!(traj.value(k, 0), 2.5);
            assert_eq!(traj.value(k, 1), -1.0);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let o = IntegratorOptions { rel_tol: 1e-9, abs_tol: 1e-12, ..opts(20.0, 201) };
        let traj = integrate_rk45(|_, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
        }, &[1.0, 0.0], &o)
        .unwrap();
        for k in 0..201 {
            let t = traj.times()[k];
            assert!((traj.value(k, 0) - t.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn blow_up_reports_failure_time() {
        // y' = y^2 with y(0) = 1 blows up at t = 1
        let r = integrate_rk45(|_, y, dy| dy[0] = y[0] * y[0], &[1.0], &opts(2.0, 3));
        match r {
            Err(Error::StepSizeUnderflow { t, .. }) | Err(Error::TooManySteps { t, .. }) => {
                assert!((t - 1.0).abs() < 1e-2, "{t}")
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        assert!(UniformGrid::new(0.0, 1.0, 1).is_err());
        assert!(UniformGrid::new(1.0, 1.0, 5).is_err());
        let g = UniformGrid::new(0.0, 300.0, 601).unwrap();
        let t = g.times();
        assert_eq!(t.len(), 601);
        assert_eq!(t[600], 300.0);
        assert_eq!(t[1], 0.5);
    }
}
