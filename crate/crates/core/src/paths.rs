//! Continuous paths sampled on a uniform grid: interpolation, total variation,
//! moduli of continuity and the sliding-window mollifier.

use std::io::Read;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Relative slack used when checking that a time is a grid multiple.
pub const GRID_SLACK: f64 = 1e-9;

/// How a path is continued to times before its first node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionRule {
    /// `m(s) = 0`
    Zero,
    /// `x(s) = x(t0)`
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    t0: f64,
    dt: f64,
    values: Vec<Vector>,
}

impl SampledPath {
    pub fn new(t0: f64, dt: f64, values: Vec<Vector>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::InvalidInput(format!("path needs finite t0 and dt > 0 (dt = {dt})")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput("path needs at least two nodes".into()));
        }
        let d = values[0].len();
        if d == 0 {
            return Err(Error::InvalidInput("path values must be non-empty vectors".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("path value at node {i} is not finite")));
            }
        }
        Ok(Self { t0, dt, values })
    }

    /// Samples `f` on `t0 + i·dt`, `i = 0..=steps`.
    pub fn from_fn(t0: f64, dt: f64, steps: usize, mut f: impl FnMut(f64) -> Vector) -> Result<Self> {
        let values = (0..=steps).map(|i| f(t0 + i as f64 * dt)).collect();
        Self::new(t0, dt, values)
    }

    pub fn constant(t0: f64, dt: f64, steps: usize, value: Vector) -> Result<Self> {
        Self::new(t0, dt, vec![value; steps + 1])
    }

    /// Reads a CSV with header `t,v1,..,vd` and strictly increasing, uniform `t`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t") {
            return Err(Error::Parse("CSV path header must be t,v1,...,vd".into()));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let nums = rec.iter().map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{f:?}: {e}")))).collect::<Result<Vec<f64>>>()?;
            times.push(nums[0]);
            values.push(Vector::from_row_slice(&nums[1..]));
        }
        if times.len() < 2 {
            return Err(Error::Parse("CSV path needs at least two rows".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (i, w) in times.windows(2).enumerate() {
            let step = w[1] - w[0];
            if step <= 0.0 {
                return Err(Error::Parse(format!("CSV times must increase strictly (row {})", i + 1)));
            }
            if (step - dt).abs() > 1e-6 * dt {
                return Err(Error::GridMismatch(format!("CSV times are not uniform at row {}", i + 1)));
            }
        }
        Self::new(times[0], dt, values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of grid cells `N` (there are `N + 1` nodes).
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn node(&self, i: usize) -> &Vector {
        &self.values[i]
    }

    pub fn last(&self) -> &Vector {
        &self.values[self.steps()]
    }

    pub fn same_grid(&self, other: &SampledPath) -> bool {
        self.t0 == other.t0 && self.dt == other.dt && self.values.len() == other.values.len()
    }

    /// Linear interpolation; `rule` applies left of `t0`.
    pub fn eval(&self, t: f64, rule: ExtensionRule) -> Result<Vector> {
        if t < self.t0 {
            return Ok(match rule {
                ExtensionRule::Zero => Vector::zeros(self.dim()),
                ExtensionRule::Frozen => self.values[0].clone(),
            });
        }
        let pos = (t - self.t0) / self.dt;
        let n = self.steps() as f64;
        if pos > n * (1.0 + GRID_SLACK) + GRID_SLACK {
            return Err(Error::InvalidInput(format!("time {t} is past the path end {}", self.end_time())));
        }
        let pos = pos.min(n);
        let i = (pos.floor() as usize).min(self.steps() - 1);
        let w = pos - i as f64;
        Ok(&self.values[i] * (1.0 - w) + &self.values[i + 1] * w)
    }

    /// `sup_i |p(t_i)|`
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Sup of `|p(t_i) − q(t_i)|` over the shared grid.
    pub fn sup_distance(&self, other: &SampledPath) -> Result<f64> {
        if !self.same_grid(other) || self.dim() != other.dim() {
            return Err(Error::GridMismatch("paths live on different grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Node-wise difference `self − other`.
    pub fn difference(&self, other: &SampledPath) -> Result<SampledPath> {
        if !self.same_grid(other) || self.dim() != other.dim() {
            return Err(Error::GridMismatch("paths live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        SampledPath::new(self.t0, self.dt, values)
    }

    /// `S(k)` over `[from, to]`: the sum of increment norms over the grid
    /// nodes inside the interval, with interpolated endpoints. Exact for the
    /// piecewise-linear interpolant.
    pub fn total_variation(&self, from: f64, to: f64) -> Result<f64> {
        let end = self.end_time();
        let slack = GRID_SLACK * self.dt;
        if !(from <= to) || from < self.t0 - slack || to > end + slack {
            return Err(Error::InvalidInput(format!("total variation interval [{from}, {to}] is reversed or outside [{}, {end}]", self.t0)));
        }
        let from = from.max(self.t0);
        let to = to.min(end);
        let a = self.eval(from, ExtensionRule::Frozen)?;
        let b = self.eval(to, ExtensionRule::Frozen)?;
        // interior nodes strictly inside (from, to)
        let first = ((from - self.t0) / self.dt).floor() as usize + 1;
        let last = ((to - self.t0) / self.dt).ceil() as usize;
        let mut prev = a;
        let mut total = 0.0;
        for i in first..last.min(self.values.len()) {
            let ti = self.time(i);
            if ti <= from || ti >= to {
                continue;
            }
            total += (&self.values[i] - &prev).norm();
            prev = self.values[i].clone();
        }
        total += (b - prev).norm();
        Ok(total)
    }

    /// Total variation over the whole path.
    pub fn total_variation_full(&self) -> f64 {
        self.values.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
    }

    /// `m_p(δ) = max |p(t_i) − p(t_j)|` over node pairs with `|t_i − t_j| ≤ δ`.
    pub fn modulus_of_continuity(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!("modulus window must be > 0, got {delta}")));
        }
        let window = ((delta / self.dt) * (1.0 + GRID_SLACK)).floor() as usize;
        let window = window.min(self.steps());
        let mut worst: f64 = 0.0;
        for i in 0..self.values.len() {
            for j in (i + 1)..=(i + window).min(self.steps()) {
                worst = worst.max((&self.values[j] - &self.values[i]).norm());
            }
        }
        Ok(worst)
    }

    /// `μ_p(δ) = δ + m_p(δ)`
    pub fn mu_of(&self, delta: f64) -> Result<f64> {
        Ok(delta + self.modulus_of_continuity(delta)?)
    }

    /// Sliding-window average `p_ε(t) = (1/ε)∫_{t−ε}^{t} p(s) ds` with the zero
    /// extension before `t0`, by the trapezoidal rule on the grid.
    ///
    /// `eps` is snapped up to the next grid multiple; the snapped value is
    /// returned next to the path.
    pub fn mollify(&self, eps: f64) -> Result<(SampledPath, f64)> {
        let window = grid_multiple_ceil(eps, self.dt)?;
        let eps = window as f64 * self.dt;
        let d = self.dim();
        let zero = Vector::zeros(d);
        let node = |j: isize| -> &Vector {
            if j < 0 {
                &zero
            } else {
                &self.values[j as usize]
            }
        };
        // prefix[i] = ∫ from t0 − ε to t_i, cells starting at index −window
        let n = self.values.len();
        let mut prefix = Vec::with_capacity(n + window);
        let mut acc = Vector::zeros(d);
        prefix.push(acc.clone());
        for j in -(window as isize)..(n as isize - 1) {
            acc += (node(j) + node(j + 1)) * (0.5 * self.dt);
            prefix.push(acc.clone());
        }
        let values = (0..n).map(|i| (&prefix[i + window] - &prefix[i]) / eps).collect();
        Ok((SampledPath::new(self.t0, self.dt, values)?, eps))
    }

    /// Forward differences `(p_{i+1} − p_i)/dt` with the last node repeated.
    pub fn derivative(&self) -> SampledPath {
        let mut values: Vec<Vector> = self.values.windows(2).map(|w| (&w[1] - &w[0]) / self.dt).collect();
        values.push(values[values.len() - 1].clone());
        SampledPath { t0: self.t0, dt: self.dt, values }
    }

    /// The same values with the time origin moved.
    pub fn shifted(&self, new_t0: f64) -> SampledPath {
        SampledPath { t0: new_t0, dt: self.dt, values: self.values.clone() }
    }

    /// One coordinate as a scalar path.
    pub fn component(&self, i: usize) -> SampledPath {
        SampledPath { t0: self.t0, dt: self.dt, values: self.values.iter().map(|v| Vector::from_element(1, v[i])).collect() }
    }
}

/// `ceil(x / dt)` as a positive integer, rejecting `x < dt`.
pub fn grid_multiple_ceil(x: f64, dt: f64) -> Result<usize> {
    if !(x.is_finite() && x >= dt * (1.0 - GRID_SLACK)) {
        return Err(Error::InvalidInput(format!("window {x} is shorter than the grid step {dt}")));
    }
    Ok(((x / dt) * (1.0 - GRID_SLACK)).ceil().max(1.0) as usize)
}

/// `x / dt` as an integer, or `GridMismatch` when `x` is not a grid multiple.
pub fn grid_multiple_exact(x: f64, dt: f64) -> Result<usize> {
    let r = x / dt;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > GRID_SLACK * r.max(1.0) {
        return Err(Error::GridMismatch(format!("{x} is not a positive multiple of the grid step {dt}")));
    }
    Ok(k as usize)
}
