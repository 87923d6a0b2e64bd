//! Function-valued outputs sampled on a shared time grid.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// A time grid with an `len x m` row-major table of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    m: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, m: usize, values: Vec<f64>) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter { name: "times", reason: "must be strictly increasing".into() });
        }
        if m == 0 || values.len() != times.len() * m {
            return Err(Error::DimensionMismatch { expected: times.len() * m.max(1), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "values", reason: "non-finite trajectory value".into() });
        }
        Ok(Self { times, m, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of components per time point.
    pub fn width(&self) -> usize {
        self.m
    }

    pub fn value(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.m + c]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Single-component trajectory holding component `c`.
    pub fn component(&self, c: usize) -> Trajectory {
        let values = (0..self.len()).map(|k| self.value(k, c)).collect();
        Trajectory { times: self.times.clone(), m: 1, values }
    }

    /// CSV with a `t` column followed by one column per component.
    pub fn write_csv<W: Write>(&self, mut w: W, headers: &[&str]) -> io::Result<()> {
        write!(w, "t")?;
        for c in 0..self.m {
            match headers.get(c) {
                Some(h) => write!(w, ",{h}")?,
                None => write!(w, ",y{c}")?,
            }
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for v in self.row(k) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Composite trapezoid weights for a grid.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// L2 distance `sqrt(int |y1 - y2|^2 dt)` by the trapezoid rule.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times != b.times || a.m != b.m {
        return Err(Error::GridMismatch);
    }
    let w = trapezoid_weights(&a.times);
    Ok(weighted_sq(&w, a.m, &a.values, &b.values).sqrt())
}

#[inline]
fn weighted_sq(w: &[f64], m: usize, a: &[f64], b: &[f64]) -> f64 {
    if m == 1 {
        return w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - y) * (x - y)).sum();
    }
    w.iter()
        .enumerate()
        .map(|(k, wk)| {
            let d: f64 = a[k * m..(k + 1) * m].iter().zip(&b[k * m..(k + 1) * m]).map(|(x, y)| (x - y) * (x - y)).sum();
            wk * d
        })
        .sum()
}

/// `n` trajectories on one grid, packed for fast pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    times: Vec<f64>,
    weights: Vec<f64>,
    m: usize,
    /// `n` consecutive blocks of `len * m` values.
    values: Vec<f64>,
}

impl TrajectorySet {
    pub fn new(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| Error::DegenerateSample("no trajectories".into()))?;
        let mut values = Vec::with_capacity(trajectories.len() * first.values.len());
        for t in trajectories {
            if t.times != first.times || t.m != first.m {
                return Err(Error::GridMismatch);
            }
            values.extend_from_slice(&t.values);
        }
        Ok(Self { weights: trapezoid_weights(&first.times), times: first.times.clone(), m: first.m, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn stride(&self) -> usize {
        self.times.len() * self.m
    }

    pub fn get(&self, s: usize) -> Trajectory {
        let st = self.stride();
        Trajectory { times: self.times.clone(), m: self.m, values: self.values[s * st..(s + 1) * st].to_vec() }
    }

    #[inline]
    pub fn squared_distance(&self, s: usize, t: usize) -> f64 {
        let st = self.stride();
        weighted_sq(&self.weights, self.m, &self.values[s * st..(s + 1) * st], &self.values[t * st..(t + 1) * st])
    }

    /// Pointwise mean over the set.
    pub fn mean(&self) -> Trajectory {
        let st = self.stride();
        let n = self.len() as f64;
        let mut acc = vec![0.0; st];
        for chunk in self.values.chunks_exact(st) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        Trajectory { times: self.times.clone(), m: self.m, values: acc }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let st = self.stride();
        let mut values = Vec::with_capacity(self.values.len());
        for &p in perm {
            values.extend_from_slice(&self.values[p * st..(p + 1) * st]);
        }
        Self { times: self.times.clone(), weights: self.weights.clone(), m: self.m, values }
    }
}
