//! Covariance of the Volterra process and joint sampling of `(B, B̂)`.
//!
//! The default sampler draws the Brownian increments `ΔB_j` and then
//! `B̂(t_i) = Σ_{j<i} w_ij ΔB_j + R_i`, where `w_ij = h⁻¹∫_{t_j}^{t_{j+1}} K(t_i,u)du`
//! and `R` is an independent Gaussian vector carrying the conditional
//! covariance `Cov(B̂ | ΔB) = Σ − h⁻¹WWᵀ`. The pair `(ΔB, B̂)` then has the
//! joint law of the continuous-time process restricted to the grid (up to
//! quadrature error in `Σ`), which the correlated model needs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{PathSample, TimeGrid};
use crate::kernels::{product_integral, KernelBank, KernelFamily, VolterraKernel};

/// Default number of quadrature cells for covariance entries.
pub const DEFAULT_N_QUAD: usize = 512;

/// Per-path generator: the run seed fixes the ChaCha key and path `k` reads
/// stream `k`, so every path is reproducible on its own and distinct seeds
/// give independent path sets.
pub fn path_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Block-diagonal covariance of `(B̂_1, …, B̂_p)` at the nodes `t_1..t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    pub grid: TimeGrid,
    pub blocks: Vec<DMatrix<f64>>,
}

impl BlockCovariance {
    /// Entry between factor `l1` at node `i` and factor `l2` at node `j` (nodes `1..=N`).
    pub fn entry(&self, l1: usize, i: usize, l2: usize, j: usize) -> f64 {
        if l1 != l2 || i == 0 || j == 0 {
            return 0.0;
        }
        self.blocks[l1][(i - 1, j - 1)]
    }

    /// Dense `pN × pN` matrix, factor-major.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.grid.n_steps();
        let p = self.blocks.len();
        let mut m = DMatrix::zeros(n * p, n * p);
        for (l, b) in self.blocks.iter().enumerate() {
            m.view_mut((l * n, l * n), (n, n)).copy_from(b);
        }
        m
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| SymmetricEigen::new(b.clone()).eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }
}

fn kernel_block(k: &VolterraKernel, grid: &TimeGrid, n_quad: usize) -> Result<DMatrix<f64>> {
    let n = grid.n_steps();
    let rows: Vec<Vec<f64>> = (1..=n)
        .into_par_iter()
        .map(|i| {
            let ti = grid.node(i);
            (1..=i)
                .map(|j| product_integral(k, ti, k, grid.node(j), 0.0, n_quad))
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Quadrature {
                    t: grid.node(r + 1),
                    s: grid.node(c + 1),
                });
            }
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    Ok(m)
}

/// Covariance `∫_0^{t∧s} K_ℓ(t,u)K_ℓ(s,u)du` on the grid, one block per factor.
pub fn covariance_matrix(
    bank: &KernelBank,
    grid: &TimeGrid,
    n_quad: usize,
) -> Result<BlockCovariance> {
    bank.ensure_covers(grid)?;
    if n_quad < 2 {
        return Err(Error::Domain(format!(
            "n_quad must be at least 2, got {n_quad}"
        )));
    }
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(bank.p());
    for (l, k) in bank.kernels().iter().enumerate() {
        if let Some(prev) = (0..l).find(|&q| bank.kernel(q) == k) {
            blocks.push(blocks[prev].clone());
        } else {
            blocks.push(kernel_block(k, grid, n_quad)?);
        }
    }
    Ok(BlockCovariance {
        grid: *grid,
        blocks,
    })
}

/// Symmetric square root `V diag(√λ₊)` of a PSD matrix, negative eigenvalues clipped.
fn psd_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

/// How `B̂` is formed from the increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionScheme {
    /// Exact cell weights plus the conditional residual (default).
    Conditional,
    /// Left-point kernel values with the last cell integrated exactly, no residual.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq)]
struct FactorPlan {
    /// `weights[(i−1, j)]` multiplies `ΔB_j` in `B̂(t_i)`.
    weights: DMatrix<f64>,
    /// `None` when the residual vanishes identically.
    residual: Option<DMatrix<f64>>,
}

/// One simulated driver path.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    /// `B`, dimension `p`.
    pub brownian: PathSample,
    /// `B̂`, dimension `p`.
    pub volterra: PathSample,
    /// `ΔB`, step-major, `N × p`.
    pub increments: Vec<f64>,
    /// Residual part of `B̂` at nodes `1..=N`, node-major, `N × p`.
    pub residual: Vec<f64>,
}

impl JointSample {
    pub fn increment(&self, j: usize, l: usize) -> f64 {
        self.increments[j * self.brownian.dim + l]
    }
}

/// Precomputed convolution weights and residual factors for a bank on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSampler {
    grid: TimeGrid,
    scheme: ConvolutionScheme,
    plans: Vec<FactorPlan>,
}

fn is_constant_kernel(k: &VolterraKernel) -> bool {
    k.family() == KernelFamily::RiemannLiouville && k.hurst() == 0.5
}

fn convolution_weights(
    k: &VolterraKernel,
    grid: &TimeGrid,
    scheme: ConvolutionScheme,
) -> DMatrix<f64> {
    let n = grid.n_steps();
    let h = grid.dt();
    let mut w = DMatrix::zeros(n, n);
    if is_constant_kernel(k) {
        let c = k.eval_unchecked(1.0, 0.0);
        for i in 1..=n {
            for j in 0..i {
                w[(i - 1, j)] = c;
            }
        }
        return w;
    }
    let singular_at_origin = matches!(
        k.family(),
        KernelFamily::FbmMolchanGolosov | KernelFamily::FractionalOU
    );
    for i in 1..=n {
        let ti = grid.node(i);
        for j in 0..i {
            let (a, b) = (grid.node(j), grid.node(j + 1));
            let cell_mean = || k.cell_integral(ti, a, b) / h;
            w[(i - 1, j)] = match scheme {
                ConvolutionScheme::Conditional => cell_mean(),
                ConvolutionScheme::Hybrid if j + 1 == i || (j == 0 && singular_at_origin) => {
                    cell_mean()
                }
                ConvolutionScheme::Hybrid => k.eval_unchecked(ti, a),
            };
        }
    }
    w
}

/// Cell-mean weights `w_ij = h⁻¹∫_{t_j}^{t_{j+1}} K_ℓ(t_i,u)du`, one `N × N`
/// matrix per factor with row `i − 1` holding node `t_i`. Shared by the
/// sampler and the hat map.
pub fn cell_weights(bank: &KernelBank, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    bank.ensure_covers(grid)?;
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(bank.p());
    for (l, k) in bank.kernels().iter().enumerate() {
        match (0..l).find(|&q| bank.kernel(q) == k) {
            Some(prev) => out.push(out[prev].clone()),
            None => out.push(convolution_weights(k, grid, ConvolutionScheme::Conditional)),
        }
    }
    Ok(out)
}

impl JointSampler {
    pub fn new(
        bank: &KernelBank,
        grid: &TimeGrid,
        n_quad: usize,
        scheme: ConvolutionScheme,
    ) -> Result<Self> {
        bank.ensure_covers(grid)?;
        let h = grid.dt();
        let mut plans: Vec<FactorPlan> = Vec::with_capacity(bank.p());
        for (l, k) in bank.kernels().iter().enumerate() {
            if let Some(prev) = (0..l).find(|&q| bank.kernel(q) == k) {
                plans.push(plans[prev].clone());
                continue;
            }
            let weights = convolution_weights(k, grid, scheme);
            let residual = match scheme {
                ConvolutionScheme::Hybrid => None,
                ConvolutionScheme::Conditional if is_constant_kernel(k) => None,
                ConvolutionScheme::Conditional => {
                    let sigma = kernel_block(k, grid, n_quad)?;
                    let mut cond = &sigma - &weights * weights.transpose() * h;
                    let tiny = 1e-12 * sigma.diagonal().max();
                    cond.apply(|v| {
                        if v.abs() <= tiny {
                            *v = 0.0
                        }
                    });
                    if cond.iter().all(|&v| v == 0.0) {
                        None
                    } else {
                        Some(psd_factor(cond))
                    }
                }
            };
            plans.push(FactorPlan { weights, residual });
        }
        Ok(Self {
            grid: *grid,
            scheme,
            plans,
        })
    }

    pub fn with_defaults(bank: &KernelBank, grid: &TimeGrid) -> Result<Self> {
        Self::new(bank, grid, DEFAULT_N_QUAD, ConvolutionScheme::Conditional)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.plans.len()
    }

    pub fn scheme(&self) -> ConvolutionScheme {
        self.scheme
    }

    /// Draws one path from `rng`: all `ΔB` (step-major), then the residual normals.
    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> JointSample {
        self.sample_shifted(rng, None)
    }

    /// As [`sample_with`](Self::sample_with), with `B` given the drift
    /// `drift[j·p + ℓ]` on step `j` (a Girsanov shift; `B̂` follows).
    pub fn sample_shifted<R: Rng>(&self, rng: &mut R, drift: Option<&[f64]>) -> JointSample {
        let n = self.grid.n_steps();
        let p = self.p();
        let h = self.grid.dt();
        let sqrt_h = h.sqrt();
        let mut increments = vec![0.0; n * p];
        for v in increments.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sqrt_h * z;
        }
        if let Some(c) = drift {
            assert_eq!(c.len(), n * p, "drift must have N·p entries");
            for (v, c) in increments.iter_mut().zip(c) {
                *v += c * h;
            }
        }
        let mut residual = vec![0.0; n * p];
        for (l, plan) in self.plans.iter().enumerate() {
            if let Some(f) = &plan.residual {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let r = f * z;
                for i in 0..n {
                    residual[i * p + l] = r[i];
                }
            }
        }
        let mut brownian = PathSample::zeros(self.grid, p);
        for j in 0..n {
            for l in 0..p {
                let v = brownian.get(j, l) + increments[j * p + l];
                brownian.set(j + 1, l, v);
            }
        }
        let volterra = self.convolve(&increments, &residual);
        JointSample {
            brownian,
            volterra,
            increments,
            residual,
        }
    }

    fn convolve(&self, increments: &[f64], residual: &[f64]) -> PathSample {
        let n = self.grid.n_steps();
        let p = self.p();
        let mut out = PathSample::zeros(self.grid, p);
        for (l, plan) in self.plans.iter().enumerate() {
            for i in 1..=n {
                let mut acc = 0.0;
                for j in 0..i {
                    acc += plan.weights[(i - 1, j)] * increments[j * p + l];
                }
                if plan.residual.is_some() {
                    acc += residual[(i - 1) * p + l];
                }
                out.set(i, l, acc);
            }
        }
        out
    }

    /// Recomputes `B̂` from the stored increments and residual.
    pub fn replay(&self, sample: &JointSample) -> PathSample {
        self.convolve(&sample.increments, &sample.residual)
    }

    /// Path `k` of a run with `seed`.
    pub fn sample_path(&self, seed: u64, k: u64) -> JointSample {
        self.sample_with(&mut path_rng(seed, k))
    }

    pub fn sample(&self, n_paths: usize, seed: u64) -> Vec<JointSample> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|k| self.sample_path(seed, k))
            .collect()
    }
}

/// `n_paths` joint samples with the default sampler.
pub fn sample_joint_paths(
    bank: &KernelBank,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<JointSample>> {
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    Ok(JointSampler::with_defaults(bank, grid)?.sample(n_paths, seed))
}

/// Cross-check sampler drawing `B̂` directly from a factor of the covariance.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: TimeGrid,
    factors: Vec<DMatrix<f64>>,
}

impl CholeskySampler {
    pub fn new(cov: &BlockCovariance) -> Self {
        let factors = cov
            .blocks
            .iter()
            .map(|b| match b.clone().cholesky() {
                Some(c) => c.l(),
                None => psd_factor(b.clone()),
            })
            .collect();
        Self {
            grid: cov.grid,
            factors,
        }
    }

    pub fn sample_path(&self, seed: u64, k: u64) -> PathSample {
        let mut rng = path_rng(seed, k);
        let n = self.grid.n_steps();
        let p = self.factors.len();
        let mut out = PathSample::zeros(self.grid, p);
        for (l, f) in self.factors.iter().enumerate() {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = f * z;
            for i in 0..n {
                out.set(i + 1, l, x[i]);
            }
        }
        out
    }

    pub fn sample(&self, n_paths: usize, seed: u64) -> Vec<PathSample> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|k| self.sample_path(seed, k))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Brownian,
    Volterra,
}

fn component_vectors(samples: &[JointSample], component: Component) -> Result<Vec<Vec<f64>>> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(
            "empirical covariance needs at least two samples".into(),
        ));
    }
    let grid = &samples[0].brownian.grid;
    let p = samples[0].brownian.dim;
    let n = grid.n_steps();
    samples
        .iter()
        .map(|s| {
            s.brownian.grid.ensure_same(grid, "sample grid")?;
            if s.brownian.dim != p {
                return Err(Error::Dimension("samples differ in factor count".into()));
            }
            let path = match component {
                Component::Brownian => &s.brownian,
                Component::Volterra => &s.volterra,
            };
            let mut v = vec![0.0; n * p];
            for l in 0..p {
                for i in 1..=n {
                    v[l * n + i - 1] = path.get(i, l);
                }
            }
            Ok(v)
        })
        .collect()
}

/// Unbiased sample covariance across paths, indexed like [`BlockCovariance::full`].
pub fn empirical_covariance(samples: &[JointSample], component: Component) -> Result<DMatrix<f64>> {
    Ok(empirical_covariance_with_stderr(samples, component)?.0)
}

/// Sample covariance and the standard error of each entry.
pub fn empirical_covariance_with_stderr(
    samples: &[JointSample],
    component: Component,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let vecs = component_vectors(samples, component)?;
    let dim = vecs[0].len();
    let n = vecs.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in &vecs {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut s1 = DMatrix::<f64>::zeros(dim, dim);
    let mut s2 = DMatrix::<f64>::zeros(dim, dim);
    for v in &vecs {
        for a in 0..dim {
            let da = v[a] - mean[a];
            for b in a..dim {
                let prod = da * (v[b] - mean[b]);
                s1[(a, b)] += prod;
                s2[(a, b)] += prod * prod;
            }
        }
    }
    let mut cov = DMatrix::zeros(dim, dim);
    let mut se = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let m1 = s1[(a, b)] / n;
            let var = (s2[(a, b)] / n - m1 * m1).max(0.0);
            cov[(a, b)] = s1[(a, b)] / (n - 1.0);
            cov[(b, a)] = cov[(a, b)];
            se[(a, b)] = (var / n).sqrt();
            se[(b, a)] = se[(a, b)];
        }
    }
    Ok((cov, se))
}
