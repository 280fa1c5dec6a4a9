//! Uniform time grids and grid-valued paths.

use crate::error::{Error, Result};

/// Uniform partition `t_i = i·T/N`, `i = 0..=N`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node `t_i`; the last node is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    /// Same number of steps on `[0, factor·T]`.
    pub fn stretched(&self, factor: f64) -> Result<Self> {
        Self::new(self.horizon * factor, self.n_steps)
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        let close = (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon.max(other.horizon);
        if self.n_steps != other.n_steps || !close {
            return Err(Error::Dimension(format!(
                "{what}: grid ({}, {}) does not match ({}, {})",
                self.horizon, self.n_steps, other.horizon, other.n_steps
            )));
        }
        Ok(())
    }
}

/// A `dim`-vector at every node of a grid, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub grid: TimeGrid,
    pub dim: usize,
    values: Vec<f64>,
}

impl PathSample {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.n_nodes() * dim],
        }
    }

    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() * dim {
            return Err(Error::Dimension(format!(
                "path of dim {dim} on {} nodes needs {} values, got {}",
                grid.n_nodes(),
                grid.n_nodes() * dim,
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// Builds a path from `f(t) -> dim-vector`.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes() * dim);
        for i in 0..grid.n_nodes() {
            let v = f(grid.node(i));
            assert_eq!(v.len(), dim, "path function returned wrong dimension");
            values.extend(v);
        }
        Self { grid, dim, values }
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.dim + k]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.values[i * self.dim + k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> &[f64] {
        self.node(self.grid.n_steps())
    }

    /// One component as a node series.
    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..self.grid.n_nodes()).map(|i| self.get(i, k)).collect()
    }

    pub fn starts_at_origin(&self) -> bool {
        self.node(0).iter().all(|&v| v == 0.0)
    }

    /// `max_i ‖self(t_i) − other(t_i)‖_∞`.
    pub fn sup_distance(&self, other: &PathSample) -> Result<f64> {
        self.grid.ensure_same(&other.grid, "sup distance")?;
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "dims {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }
}
