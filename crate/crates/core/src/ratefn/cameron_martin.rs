use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::cell_weights;
use crate::grid::{PathSample, TimeGrid};
use crate::kernels::KernelBank;

/// An absolutely continuous path from the origin with piecewise-constant
/// derivative: `ḟ` is constant on each grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct CameronMartinPath {
    grid: TimeGrid,
    dim: usize,
    derivative: Vec<f64>,
    h1_norm_sq: f64,
}

impl CameronMartinPath {
    /// `derivative` is step-major, `N × dim`.
    pub fn new(grid: TimeGrid, dim: usize, derivative: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("path dimension must be positive".into()));
        }
        if derivative.len() != grid.n_steps() * dim {
            return Err(Error::Dimension(format!(
                "derivative needs {} values, got {}",
                grid.n_steps() * dim,
                derivative.len()
            )));
        }
        if derivative.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("derivative values must be finite".into()));
        }
        let h1_norm_sq = derivative.iter().map(|v| v * v).sum::<f64>() * grid.dt();
        Ok(Self {
            grid,
            dim,
            derivative,
            h1_norm_sq,
        })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            derivative: vec![0.0; grid.n_steps() * dim],
            h1_norm_sq: 0.0,
        }
    }

    /// `ḟ_j = g(t_j)` at the left node of every step.
    pub fn from_derivative_fn(
        grid: TimeGrid,
        dim: usize,
        g: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let mut d = Vec::with_capacity(grid.n_steps() * dim);
        for j in 0..grid.n_steps() {
            let v = g(grid.node(j));
            if v.len() != dim {
                return Err(Error::Dimension(
                    "derivative function returned wrong dimension".into(),
                ));
            }
            d.extend(v);
        }
        Self::new(grid, dim, d)
    }

    /// Constant-speed path from 0 to `z`.
    pub fn straight_line(grid: TimeGrid, z: &[f64]) -> Result<Self> {
        let t = grid.horizon();
        Self::from_derivative_fn(grid, z.len(), |_| z.iter().map(|v| v / t).collect())
    }

    /// Recovers the derivative from node values by finite differences.
    /// The path must start at the origin.
    pub fn from_path(path: &PathSample) -> Result<Self> {
        if !path.starts_at_origin() {
            return Err(Error::Domain(
                "a Cameron-Martin path must start at the origin".into(),
            ));
        }
        let dt = path.grid.dt();
        let mut d = Vec::with_capacity(path.grid.n_steps() * path.dim);
        for j in 0..path.grid.n_steps() {
            for k in 0..path.dim {
                d.push((path.get(j + 1, k) - path.get(j, k)) / dt);
            }
        }
        Self::new(path.grid, path.dim, d)
    }

    /// Optimizer variables `v_j = ḟ_j √dt`, for which `‖v‖² = ‖f‖²_{H¹}`.
    pub(crate) fn from_scaled(grid: TimeGrid, dim: usize, v: &[f64]) -> Result<Self> {
        let c = 1.0 / grid.dt().sqrt();
        Self::new(grid, dim, v.iter().map(|x| x * c).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn derivative(&self) -> &[f64] {
        &self.derivative
    }

    /// `ḟ_k` on step `j`.
    pub fn derivative_at(&self, j: usize, k: usize) -> f64 {
        self.derivative[j * self.dim + k]
    }

    pub fn step_derivative(&self, j: usize) -> &[f64] {
        &self.derivative[j * self.dim..(j + 1) * self.dim]
    }

    /// `Σ ‖ḟ_j‖² dt`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.h1_norm_sq
    }

    /// Node values, accumulated as `f(t_{j+1}) = f(t_j) + ḟ_j dt`.
    pub fn values(&self) -> PathSample {
        let dt = self.grid.dt();
        let mut out = PathSample::zeros(self.grid, self.dim);
        for j in 0..self.grid.n_steps() {
            for k in 0..self.dim {
                let v = out.get(j, k) + self.derivative_at(j, k) * dt;
                out.set(j + 1, k, v);
            }
        }
        out
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid, what: &str) -> Result<()> {
        self.grid.ensure_same(grid, what)
    }
}

/// The linear map `f ↦ f̂`, `f̂_ℓ(t_i) = Σ_{j<i} w_ij ḟ_ℓ(t_j) dt`, with the
/// same cell weights as the driver sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct HatMap {
    grid: TimeGrid,
    weights: Vec<DMatrix<f64>>,
}

impl HatMap {
    pub fn new(bank: &KernelBank, grid: &TimeGrid) -> Result<Self> {
        Ok(Self {
            grid: *grid,
            weights: cell_weights(bank, grid)?,
        })
    }

    pub fn p(&self) -> usize {
        self.weights.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn apply(&self, f: &CameronMartinPath) -> Result<PathSample> {
        f.check_grid(&self.grid, "hat map")?;
        if f.dim() != self.p() {
            return Err(Error::Dimension(format!(
                "control has dim {}, bank has {} factors",
                f.dim(),
                self.p()
            )));
        }
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        let p = self.p();
        let mut out = PathSample::zeros(self.grid, p);
        for (l, w) in self.weights.iter().enumerate() {
            for i in 1..=n {
                let mut acc = 0.0;
                for j in 0..i {
                    acc += w[(i - 1, j)] * (f.derivative_at(j, l) * dt);
                }
                out.set(i, l, acc);
            }
        }
        Ok(out)
    }

    /// Adjoint: given `∂F/∂f̂(t_i)` (node-major, `(N+1) × p`), returns `∂F/∂ḟ_j` (step-major).
    pub(crate) fn transpose_apply(&self, adj: &[f64]) -> Vec<f64> {
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        let p = self.p();
        let mut g = vec![0.0; n * p];
        for (l, w) in self.weights.iter().enumerate() {
            for j in 0..n {
                let mut acc = 0.0;
                for i in (j + 1)..=n {
                    acc += w[(i - 1, j)] * adj[i * p + l];
                }
                g[j * p + l] = acc * dt;
            }
        }
        g
    }
}

/// `f̂` on the grid of `f`.
pub fn hat_map(f: &CameronMartinPath, bank: &KernelBank) -> Result<PathSample> {
    HatMap::new(bank, f.grid())?.apply(f)
}
