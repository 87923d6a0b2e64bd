//! Benchmark models: Ishigami, the correlated linear portfolio and the
//! cholera transmission ODE, plus the integrator and trajectory geometry used
//! for function-valued outputs.

pub mod cholera;
pub mod ishigami;
pub mod ode;
pub mod portfolio;
pub mod trajectory;

pub use cholera::{cholera_rhs, CholeraParams};
pub use ishigami::{ishigami, ishigami_sobol_analytic};
pub use ode::{integrate_rk45, IntegratorOptions, UniformGrid};
pub use portfolio::{portfolio, portfolio_sigma, PORTFOLIO_COEFFICIENTS};
pub use trajectory::{trajectory_distance, Trajectory, TrajectorySet};
