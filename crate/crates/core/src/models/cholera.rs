//! SIR model coupled to two environmental bacteria reservoirs with
//! saturating incidence.
//!
//! State order is `(S, I, R, B_H, B_L)`; time is in weeks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ode::{integrate_rk45, IntegratorOptions};
use crate::models::trajectory::Trajectory;

pub const N_POP: f64 = 10_000.0;
pub const STATE_NAMES: [&str; 5] = ["S", "I", "R", "B_H", "B_L"];
pub const PARAM_NAMES: [&str; 9] = ["beta_L", "beta_H", "kappa_L", "kappa_H", "b", "chi", "xi", "delta", "gamma"];
pub const INFECTED: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CholeraParams {
    /// Ingestion rate of low-infectious bacteria (1/week).
    pub beta_l: f64,
    /// Ingestion rate of high-infectious bacteria (1/week).
    pub beta_h: f64,
    /// `B_L` carrying capacity (bacteria/mL).
    pub kappa_l: f64,
    /// `B_H` carrying capacity (bacteria/mL).
    pub kappa_h: f64,
    /// Birth/death rate (1/week).
    pub b: f64,
    /// Decay rate from `B_H` to `B_L` (1/week).
    pub chi: f64,
    /// Shedding rate into `B_H` (bacteria/mL per individual per week).
    pub xi: f64,
    /// Death rate of `B_L` (1/week).
    pub delta: f64,
    /// Recovery rate (1/week).
    pub gamma: f64,
}

impl CholeraParams {
    pub fn nominal() -> Self {
        Self {
            beta_l: 1.5,
            beta_h: 7.5,
            kappa_l: 1e6,
            kappa_h: 7e8,
            b: 1.0 / 1560.0,
            chi: 1.0 / 168.0,
            xi: 70.0,
            delta: 7.0 / 30.0,
            gamma: 7.0 / 5.0,
        }
    }

    /// Values in [`PARAM_NAMES`] order.
    pub fn to_array(&self) -> [f64; 9] {
        [self.beta_l, self.beta_h, self.kappa_l, self.kappa_h, self.b, self.chi, self.xi, self.delta, self.gamma]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::DimensionMismatch { expected: 9, got: v.len() });
        }
        let p = Self {
            beta_l: v[0],
            beta_h: v[1],
            kappa_l: v[2],
            kappa_h: v[3],
            b: v[4],
            chi: v[5],
            xi: v[6],
            delta: v[7],
            gamma: v[8],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((name, v)) = PARAM_NAMES.iter().zip(self.to_array()).find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter { name: "cholera parameters", reason: format!("{name} must be positive, got {v}") });
        }
        Ok(())
    }
}

/// Right-hand side of the transmission model.
pub fn cholera_rhs(_t: f64, y: &[f64], p: &CholeraParams, n_pop: f64) -> [f64; 5] {
    let (s, i, r, bh, bl) = (y[0], y[1], y[2], y[3], y[4]);
    let infection = p.beta_l * s * bl / (p.kappa_l + bl) + p.beta_h * s * bh / (p.kappa_h + bh);
    [
        p.b * n_pop - infection - p.b * s,
        infection - (p.gamma + p.b) * i,
        p.gamma * i - p.b * r,
        p.xi * i - p.chi * bh,
        p.chi * bh - p.delta * bl,
    ]
}

pub fn initial_state(n_pop: f64) -> [f64; 5] {
    [n_pop - 1.0, 1.0, 0.0, 0.0, 0.0]
}

/// Full state trajectory from the standard initial condition.
pub fn simulate(p: &CholeraParams, opts: &IntegratorOptions) -> Result<Trajectory> {
    p.validate()?;
    integrate_rk45(
        |t, y, dy| dy.copy_from_slice(&cholera_rhs(t, y, p, N_POP)),
        &initial_state(N_POP),
        opts,
    )
}

/// `I(t)` on the output grid.
pub fn infected_curve(p: &CholeraParams, opts: &IntegratorOptions) -> Result<Trajectory> {
    Ok(simulate(p, opts)?.component(INFECTED))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_at_initial_state() {
        let p = CholeraParams::nominal();
        let d = cholera_rhs(0.0, &initial_state(N_POP), &p, N_POP);
        assert!((d[0] - 1.0 / 1560.0).abs() < 1e-15);
        assert!((d[0] - 6.410e-4).abs() < 1e-7);
        assert!((d[1] + (1.4 + 1.0 / 1560.0)).abs() < 1e-14);
        assert!((d[1] + 1.40064).abs() < 1e-5);
        assert_eq!(d[2], 1.4);
        assert_eq!(d[3], 70.0);
        assert_eq!(d[4], 0.0);
    }

    #[test]
    fn population_is_conserved() {
        let traj = simulate(&CholeraParams::nominal(), &IntegratorOptions::default()).unwrap();
        let worst = (0..traj.len())
            .map(|k| (traj.value(k, 0) + traj.value(k, 1) + traj.value(k, 2) - N_POP).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn params_round_trip_and_validate() {
        let p = CholeraParams::nominal();
        assert_eq!(CholeraParams::from_slice(&p.to_array()).unwrap(), p);
        let mut bad = p.to_array();
        bad[4] = 0.0;
        assert!(CholeraParams::from_slice(&bad).is_err());
        assert!(CholeraParams::from_slice(&bad[..8]).is_err());
    }
}
