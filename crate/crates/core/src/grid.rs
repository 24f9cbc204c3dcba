//! Functions sampled on a uniform node grid over `[0, 1]`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("a grid needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("grid sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
}

/// Node `k` of a uniform grid with `n` nodes on `[0, 1]`.
#[inline]
pub fn node(k: usize, n: usize) -> f64 {
    if k + 1 == n {
        1.0
    } else {
        k as f64 / (n - 1) as f64
    }
}

/// Values of a function at the nodes `t_k = k / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() < 2 {
            return Err(GridError::TooFewNodes(values.len()));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { node, value });
        }
        Ok(Self { values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self, GridError> {
        if n < 2 {
            return Err(GridError::TooFewNodes(n));
        }
        Self::new((0..n).map(|k| f(node(k, n))).collect())
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, GridError> {
        Self::from_fn(n, |_| value)
    }

    pub fn zeros(n: usize) -> Result<Self, GridError> {
        Self::constant(n, 0.0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn step(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.len();
        (0..n).map(move |k| node(k, n))
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// True when no forward difference exceeds `tol`.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] - w[0] <= tol)
    }

    /// Piecewise-linear interpolation; `t` is clamped to `[0, 1]`.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.len();
        let x = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (x.floor() as usize).min(n - 2);
        let frac = x - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Component-wise `max(v, 0)`.
    pub fn clamp_nonnegative(&mut self) {
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Ordered pair `(u1, u2)` of grid functions on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPair {
    pub u1: GridFunction,
    pub u2: GridFunction,
}

impl GridPair {
    pub fn new(u1: GridFunction, u2: GridFunction) -> Result<Self, GridError> {
        if u1.len() != u2.len() {
            return Err(GridError::SizeMismatch(u1.len(), u2.len()));
        }
        Ok(Self { u1, u2 })
    }

    pub fn constant(n: usize, c1: f64, c2: f64) -> Result<Self, GridError> {
        Self::new(GridFunction::constant(n, c1)?, GridFunction::constant(n, c2)?)
    }

    pub fn zeros(n: usize) -> Result<Self, GridError> {
        Self::constant(n, 0.0, 0.0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.u1.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn component(&self, i: usize) -> &GridFunction {
        match i {
            0 => &self.u1,
            1 => &self.u2,
            _ => panic!("component index {i} out of range"),
        }
    }

    pub fn norms(&self) -> [f64; 2] {
        [self.u1.sup_norm(), self.u2.sup_norm()]
    }

    /// Sup-norm distance over both components.
    pub fn distance(&self, other: &GridPair) -> f64 {
        self.u1.distance(&other.u1).max(self.u2.distance(&other.u2))
    }

    /// Stacked `[u1; u2]` vector.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend_from_slice(self.u1.values());
        out.extend_from_slice(self.u2.values());
        out
    }

    pub fn from_stacked(v: &[f64]) -> Result<Self, GridError> {
        let n = v.len() / 2;
        Self::new(GridFunction::new(v[..n].to_vec())?, GridFunction::new(v[n..].to_vec())?)
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
