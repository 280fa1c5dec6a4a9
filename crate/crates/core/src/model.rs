//! Coefficient maps, assumption probes and Euler simulation of the scaled
//! log-prices.
//!
//! The simulated process is
//!
//! ```text
//! dZ_i = (μ_i(B̂) − ½c Σ_j σ_ij(B̂)² − ½c Σ_ℓ σ̃_iℓ(B̂)²) dt + ε Σ_j σ_ij(B̂) dW_j + ε Σ_ℓ σ̃_iℓ(B̂) dB_ℓ
//! ```
//!
//! with `B̂` driven by the same increments `dB`, `W` independent of `B`, and
//! coefficients frozen at the left node. The small-noise family uses
//! `c = ε²`; the short-time route passes its own correction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{path_rng, JointSample, JointSampler};
use crate::grid::{PathSample, TimeGrid};
use crate::kernels::KernelBank;

/// Smallest `|det a|` accepted along a path.
pub const DET_TOLERANCE: f64 = 1e-12;

/// A parametric map `ℝ^p → ℝ^{r×c}`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixMap {
    Constant(DMatrix<f64>),
    /// `C·exp(wᵀy)`
    ExpLinear {
        base: DMatrix<f64>,
        weights: Vec<f64>,
    },
    /// `C + Σ_ℓ y_ℓ L_ℓ`
    Affine {
        base: DMatrix<f64>,
        slopes: Vec<DMatrix<f64>>,
    },
}

impl MatrixMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatrixMap::Constant(DMatrix::zeros(rows, cols))
    }

    pub fn identity(d: usize) -> Self {
        MatrixMap::Constant(DMatrix::identity(d, d))
    }

    pub fn shape(&self) -> (usize, usize) {
        let b = match self {
            MatrixMap::Constant(c) => c,
            MatrixMap::ExpLinear { base, .. } | MatrixMap::Affine { base, .. } => base,
        };
        (b.nrows(), b.ncols())
    }

    /// Number of inputs the map needs, if it constrains it.
    fn input_dim(&self) -> Option<usize> {
        match self {
            MatrixMap::Constant(_) => None,
            MatrixMap::ExpLinear { weights, .. } => Some(weights.len()),
            MatrixMap::Affine { slopes, .. } => Some(slopes.len()),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            MatrixMap::Constant(c) => c.iter().all(|&v| v == 0.0),
            MatrixMap::ExpLinear { base, .. } => base.iter().all(|&v| v == 0.0),
            MatrixMap::Affine { base, slopes } => {
                base.iter().all(|&v| v == 0.0) && slopes.iter().all(|s| s.iter().all(|&v| v == 0.0))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            MatrixMap::Constant(_) => true,
            MatrixMap::ExpLinear { base, weights } => {
                weights.iter().all(|&w| w == 0.0) || base.iter().all(|&v| v == 0.0)
            }
            MatrixMap::Affine { slopes, .. } => slopes.iter().all(|s| s.iter().all(|&v| v == 0.0)),
        }
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        match self {
            MatrixMap::Constant(c) => c.clone(),
            MatrixMap::ExpLinear { base, weights } => {
                let e: f64 = weights.iter().zip(y).map(|(w, v)| w * v).sum();
                base * e.exp()
            }
            MatrixMap::Affine { base, slopes } => {
                let mut m = base.clone();
                for (s, v) in slopes.iter().zip(y) {
                    m += s * *v;
                }
                m
            }
        }
    }

    /// `∂/∂y_ℓ` for `ℓ = 0..p`.
    pub fn jacobian(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let (r, c) = self.shape();
        match self {
            MatrixMap::Constant(_) => vec![DMatrix::zeros(r, c); y.len()],
            MatrixMap::ExpLinear { weights, .. } => {
                let v = self.eval(y);
                weights.iter().map(|w| &v * *w).collect()
            }
            MatrixMap::Affine { slopes, .. } => slopes.clone(),
        }
    }

    /// `c·F(y)`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            MatrixMap::Constant(m) => MatrixMap::Constant(m * c),
            MatrixMap::ExpLinear { base, weights } => MatrixMap::ExpLinear {
                base: base * c,
                weights: weights.clone(),
            },
            MatrixMap::Affine { base, slopes } => MatrixMap::Affine {
                base: base * c,
                slopes: slopes.iter().map(|s| s * c).collect(),
            },
        }
    }
}

/// `(μ, σ, σ̃)` with growth constants `(α, M₁, M₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients {
    d: usize,
    p: usize,
    mu: MatrixMap,
    sigma: MatrixMap,
    sigma_tilde: MatrixMap,
    pub growth_alpha: f64,
    pub growth_m1: f64,
    pub growth_m2: f64,
}

impl ModelCoefficients {
    /// `mu` is `d × 1`, `sigma` is `d × d`, `sigma_tilde` is `d × p`.
    pub fn new(
        d: usize,
        p: usize,
        mu: MatrixMap,
        sigma: MatrixMap,
        sigma_tilde: MatrixMap,
    ) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::Config("d and p must be positive".into()));
        }
        for (name, map, shape) in [
            ("mu", &mu, (d, 1)),
            ("sigma", &sigma, (d, d)),
            ("sigma_tilde", &sigma_tilde, (d, p)),
        ] {
            if map.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, expected {:?}",
                    map.shape(),
                    shape
                )));
            }
            if let Some(k) = map.input_dim() {
                if k != p {
                    return Err(Error::Dimension(format!(
                        "{name} takes {k} inputs, expected p = {p}"
                    )));
                }
            }
        }
        Ok(Self {
            d,
            p,
            mu,
            sigma,
            sigma_tilde,
            growth_alpha: 1.0,
            growth_m1: 10.0,
            growth_m2: 10.0,
        })
    }

    /// One asset, one factor: `σ = √(1−ρ²)·s`, `σ̃ = ρ·s`.
    pub fn one_factor_correlated(s: MatrixMap, mu: MatrixMap, rho: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (-1, 1), got {rho}")));
        }
        let sigma = s.scaled((1.0 - rho * rho).sqrt());
        let sigma_tilde = s.scaled(rho);
        Self::new(1, 1, mu, sigma, sigma_tilde)
    }

    pub fn with_growth(mut self, alpha: f64, m1: f64, m2: f64) -> Result<Self> {
        if !(alpha > 0.0 && m1 > 0.0 && m2 > 0.0) {
            return Err(Error::Config("growth constants must be positive".into()));
        }
        self.growth_alpha = alpha;
        self.growth_m1 = m1;
        self.growth_m2 = m2;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mu_map(&self) -> &MatrixMap {
        &self.mu
    }

    pub fn sigma_map(&self) -> &MatrixMap {
        &self.sigma
    }

    pub fn sigma_tilde_map(&self) -> &MatrixMap {
        &self.sigma_tilde
    }

    pub fn mu(&self, y: &[f64]) -> DVector<f64> {
        self.mu.eval(y).column(0).into_owned()
    }

    pub fn sigma(&self, y: &[f64]) -> DMatrix<f64> {
        self.sigma.eval(y)
    }

    pub fn sigma_tilde(&self, y: &[f64]) -> DMatrix<f64> {
        self.sigma_tilde.eval(y)
    }

    /// `a(y) = σ(y)σ(y)ᵀ`.
    pub fn a(&self, y: &[f64]) -> DMatrix<f64> {
        let s = self.sigma(y);
        &s * s.transpose()
    }

    pub fn is_correlated(&self) -> bool {
        !self.sigma_tilde.is_identically_zero()
    }

    pub fn mu_is_zero(&self) -> bool {
        self.mu.is_identically_zero()
    }

    /// Copy with `σ̃ ≡ 0`.
    pub fn uncorrelated(&self) -> Self {
        let mut c = self.clone();
        c.sigma_tilde = MatrixMap::zeros(self.d, self.p);
        c
    }

    fn check_input(&self, phi: &PathSample) -> Result<()> {
        if phi.dim != self.p {
            return Err(Error::Dimension(format!(
                "path has dim {}, model has p = {}",
                phi.dim, self.p
            )));
        }
        Ok(())
    }
}

/// `a(φ(t_i))` and its inverse along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrixPath {
    pub grid: TimeGrid,
    pub a_values: Vec<DMatrix<f64>>,
    pub a_inv_values: Vec<DMatrix<f64>>,
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
}

/// Inverse of `a(y)`, failing when `|det a| < 1e-12`.
pub(crate) fn invert_diffusion(a: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    let det = a.determinant();
    if !(det.abs() >= DET_TOLERANCE) {
        return Err(Error::Singular { node, det });
    }
    a.clone().try_inverse().ok_or(Error::Singular { node, det })
}

pub fn diffusion_path(coeffs: &ModelCoefficients, phi: &PathSample) -> Result<DiffusionMatrixPath> {
    coeffs.check_input(phi)?;
    let n = phi.grid.n_nodes();
    let mut out = DiffusionMatrixPath {
        grid: phi.grid,
        a_values: Vec::with_capacity(n),
        a_inv_values: Vec::with_capacity(n),
        lambda_min: Vec::with_capacity(n),
        lambda_max: Vec::with_capacity(n),
    };
    for i in 0..n {
        let a = coeffs.a(phi.node(i));
        let inv = invert_diffusion(&a, i)?;
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        out.lambda_min.push(eig.min());
        out.lambda_max.push(eig.max());
        out.a_values.push(a);
        out.a_inv_values.push(inv);
    }
    Ok(out)
}

/// Probe set for the assumption checks: a lattice on `[−r, r]^p` plus
/// uniform random points in the same box.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLattice {
    pub radius: f64,
    pub points_per_axis: usize,
    pub n_random: usize,
    pub seed: u64,
}

impl Default for ProbeLattice {
    fn default() -> Self {
        Self {
            radius: 10.0,
            points_per_axis: 11,
            n_random: 64,
            seed: 7,
        }
    }
}

impl ProbeLattice {
    pub fn points(&self, p: usize) -> Result<Vec<Vec<f64>>> {
        if self.points_per_axis == 0 && self.n_random == 0 {
            return Err(Error::Validation("probe lattice is empty".into()));
        }
        let m = self.points_per_axis;
        let mut pts = Vec::new();
        if m > 0 {
            let total = m
                .checked_pow(p as u32)
                .filter(|&t| t <= 1_000_000)
                .ok_or_else(|| {
                    Error::Validation(format!("probe lattice with {m}^{p} points is too large"))
                })?;
            let coord = |k: usize| {
                if m == 1 {
                    0.0
                } else {
                    -self.radius + 2.0 * self.radius * k as f64 / (m - 1) as f64
                }
            };
            for idx in 0..total {
                let mut rest = idx;
                let mut y = Vec::with_capacity(p);
                for _ in 0..p {
                    y.push(coord(rest % m));
                    rest /= m;
                }
                pts.push(y);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.n_random {
            pts.push(
                (0..p)
                    .map(|_| rng.random_range(-self.radius..=self.radius))
                    .collect(),
            );
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Probe where the check was tightest.
    pub worst_point: Vec<f64>,
    pub worst_value: f64,
    pub detail: String,
}

/// Probe-based assumption report. Passing means "no violation found on the probes".
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub n_probes: usize,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_DETERMINANT: &str = "nondegenerate-diffusion";
pub const CHECK_GROWTH: &str = "growth-bound";
pub const CHECK_EIGENVALUE: &str = "eigenvalue-bound";
pub const CHECK_CONTINUITY: &str = "sigma-tilde-local-continuity";

fn growth_bound(c: &ModelCoefficients, y: &[f64]) -> f64 {
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    c.growth_m1 + c.growth_m2 * norm.powf(c.growth_alpha)
}

/// Checks the standing assumptions on a probe set:
///
/// - `|det a(y)| > 1e-12`;
/// - every entry of `μ`, `σ`, `σ̃` is at most `M₁ + M₂‖y‖^α`;
/// - `λ_max(a(y)) ≤ d²(M₁ + M₂‖y‖^α)²`;
/// - `σ̃` is locally continuous, probed by `‖σ̃(y + r u) − σ̃(y)‖` shrinking
///   as `r ∈ {1e-2, 1e-3, 1e-4}` decreases along a random unit direction `u`.
pub fn validate_coefficients(
    coeffs: &ModelCoefficients,
    probe: &ProbeLattice,
) -> Result<ValidationReport> {
    let pts = probe.points(coeffs.p)?;
    let d = coeffs.d as f64;

    let mut det_worst = (f64::INFINITY, 0usize);
    let mut growth_worst = (f64::NEG_INFINITY, 0usize);
    let mut eig_worst = (f64::NEG_INFINITY, 0usize);
    for (k, y) in pts.iter().enumerate() {
        let a = coeffs.a(y);
        let det = a.determinant().abs();
        if det < det_worst.0 {
            det_worst = (det, k);
        }
        let entry_max = [coeffs.mu.eval(y), coeffs.sigma(y), coeffs.sigma_tilde(y)]
            .iter()
            .flat_map(|m| m.iter().map(|v| v.abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        let bound = growth_bound(coeffs, y);
        let excess = entry_max - bound;
        if excess > growth_worst.0 {
            growth_worst = (excess, k);
        }
        let lmax = SymmetricEigen::new(a).eigenvalues.max();
        let eig_excess = lmax - d * d * bound * bound;
        if eig_excess > eig_worst.0 {
            eig_worst = (eig_excess, k);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed.wrapping_add(1));
    let mut cont_worst = (f64::NEG_INFINITY, 0usize);
    let mut cont_ok = true;
    for (k, y) in pts.iter().enumerate() {
        let mut u: Vec<f64> = (0..coeffs.p).map(|_| rng.sample(StandardNormal)).collect();
        let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        u.iter_mut().for_each(|v| *v /= nu);
        let base = coeffs.sigma_tilde(y);
        let scale = 1.0 + base.norm();
        let diffs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|r| {
                let z: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + r * b).collect();
                (coeffs.sigma_tilde(&z) - &base).norm()
            })
            .collect();
        let finite = diffs.iter().all(|v| v.is_finite());
        let shrinking = diffs.windows(2).all(|w| w[1] <= w[0] + 1e-12 * scale);
        if !(finite && shrinking) {
            cont_ok = false;
        }
        if diffs[2] > cont_worst.0 {
            cont_worst = (diffs[2], k);
        }
    }

    let checks = vec![
        CheckResult {
            name: CHECK_DETERMINANT,
            passed: det_worst.0 > DET_TOLERANCE,
            worst_point: pts[det_worst.1].clone(),
            worst_value: det_worst.0,
            detail: format!("min |det a| = {:e}", det_worst.0),
        },
        CheckResult {
            name: CHECK_GROWTH,
            passed: growth_worst.0 <= 0.0,
            worst_point: pts[growth_worst.1].clone(),
            worst_value: growth_worst.0,
            detail: format!(
                "max entry excess over M1 + M2|y|^alpha = {:e} (alpha = {}, M1 = {}, M2 = {})",
                growth_worst.0, coeffs.growth_alpha, coeffs.growth_m1, coeffs.growth_m2
            ),
        },
        CheckResult {
            name: CHECK_EIGENVALUE,
            passed: eig_worst.0 <= 0.0,
            worst_point: pts[eig_worst.1].clone(),
            worst_value: eig_worst.0,
            detail: format!(
                "max excess of lambda_max(a) over d^2 (M1 + M2|y|^alpha)^2 = {:e}",
                eig_worst.0
            ),
        },
        CheckResult {
            name: CHECK_CONTINUITY,
            passed: cont_ok,
            worst_point: pts[cont_worst.1].clone(),
            worst_value: cont_worst.0,
            detail: "local continuity probe at radii 1e-2, 1e-3, 1e-4".into(),
        },
    ];
    Ok(ValidationReport {
        checks,
        n_probes: pts.len(),
    })
}

/// `C_φ = min_{n, t} λ_min(a⁻¹(φ_n(t)))`, which must be strictly positive.
pub fn uniform_inverse_positivity(coeffs: &ModelCoefficients, paths: &[PathSample]) -> Result<f64> {
    let mut c = f64::INFINITY;
    for phi in paths {
        let dp = diffusion_path(coeffs, phi)?;
        for m in &dp.a_inv_values {
            c = c.min(SymmetricEigen::new(m.clone()).eigenvalues.min());
        }
    }
    Ok(c)
}

/// Smallest `M ∈ {2, 4, 8, …}` with `M a⁻¹(φ_n(t)) − a⁻¹(φ(t))` positive
/// definite at every node.
pub fn dominating_multiplier(
    coeffs: &ModelCoefficients,
    phi_n: &PathSample,
    phi: &PathSample,
) -> Result<f64> {
    phi_n.grid.ensure_same(&phi.grid, "dominating multiplier")?;
    let an = diffusion_path(coeffs, phi_n)?;
    let a = diffusion_path(coeffs, phi)?;
    let mut m = 2.0;
    for _ in 0..60 {
        let ok = an.a_inv_values.iter().zip(&a.a_inv_values).all(|(x, y)| {
            let diff = x * m - y;
            SymmetricEigen::new(diff).eigenvalues.min() > 0.0
        });
        if ok {
            return Ok(m);
        }
        m *= 2.0;
    }
    Err(Error::Validation(
        "no multiplier up to 2^60 dominates the inverse diffusion".into(),
    ))
}

/// Drift shifts for importance sampling: `B` gets `b[j·p + ℓ]`, `W` gets `w[j·d + i]` on step `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tilt {
    pub b: Vec<f64>,
    pub w: Vec<f64>,
}

/// Euler scheme for `Z` with a fixed sampler for the drivers.
#[derive(Debug, Clone)]
pub struct EulerSimulator {
    coeffs: ModelCoefficients,
    sampler: JointSampler,
    noise: f64,
    ito_correction: f64,
    correlated: bool,
}

impl EulerSimulator {
    pub fn new(
        coeffs: &ModelCoefficients,
        sampler: JointSampler,
        noise: f64,
        ito_correction: f64,
        correlated: bool,
    ) -> Result<Self> {
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::Domain(format!(
                "noise level must be positive, got {noise}"
            )));
        }
        if sampler.p() != coeffs.p {
            return Err(Error::Dimension(format!(
                "kernel bank has {} factors, model has p = {}",
                sampler.p(),
                coeffs.p
            )));
        }
        Ok(Self {
            coeffs: coeffs.clone(),
            sampler,
            noise,
            ito_correction,
            correlated,
        })
    }

    /// Small-noise simulator: `c = ε²`, drivers from `bank` as given.
    pub fn small_noise(
        coeffs: &ModelCoefficients,
        bank: &KernelBank,
        grid: &TimeGrid,
        epsilon: f64,
        correlated: bool,
    ) -> Result<Self> {
        Self::new(
            coeffs,
            JointSampler::with_defaults(bank, grid)?,
            epsilon,
            epsilon * epsilon,
            correlated,
        )
    }

    pub fn grid(&self) -> &TimeGrid {
        self.sampler.grid()
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn coefficients(&self) -> &ModelCoefficients {
        &self.coeffs
    }

    /// Path `k` of a run seeded with `seed`.
    pub fn path(&self, seed: u64, k: u64) -> (PathSample, JointSample) {
        let (z, j, _) = self.path_tilted(seed, k, None);
        (z, j)
    }

    /// Path under the drift-shifted measure, with `log dP/dQ` of the shift.
    pub fn path_tilted(
        &self,
        seed: u64,
        k: u64,
        tilt: Option<&Tilt>,
    ) -> (PathSample, JointSample, f64) {
        let mut rng = path_rng(seed, k);
        let grid = *self.sampler.grid();
        let n = grid.n_steps();
        let (d, p) = (self.coeffs.d, self.coeffs.p);
        let h = grid.dt();
        let sqrt_h = h.sqrt();
        let joint = self
            .sampler
            .sample_shifted(&mut rng, tilt.map(|t| t.b.as_slice()));
        let mut dw = vec![0.0; n * d];
        for v in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sqrt_h * z;
        }
        let mut log_w = 0.0;
        if let Some(t) = tilt {
            assert_eq!(t.w.len(), n * d, "W drift must have N·d entries");
            for (v, c) in dw.iter_mut().zip(&t.w) {
                *v += c * h;
            }
            for (c, v) in t.b.iter().zip(&joint.increments) {
                log_w += -c * v + 0.5 * c * c * h;
            }
            for (c, v) in t.w.iter().zip(&dw) {
                log_w += -c * v + 0.5 * c * c * h;
            }
        }

        let mut z = PathSample::zeros(grid, d);
        let half_c = 0.5 * self.ito_correction;
        for j in 0..n {
            let y = joint.volterra.node(j);
            let mu = self.coeffs.mu(y);
            let s = self.coeffs.sigma(y);
            let st = if self.correlated {
                Some(self.coeffs.sigma_tilde(y))
            } else {
                None
            };
            for i in 0..d {
                let mut drift = mu[i];
                let mut diff = 0.0;
                for m in 0..d {
                    drift -= half_c * s[(i, m)] * s[(i, m)];
                    diff += s[(i, m)] * dw[j * d + m];
                }
                if let Some(st) = &st {
                    for l in 0..p {
                        drift -= half_c * st[(i, l)] * st[(i, l)];
                        diff += st[(i, l)] * joint.increments[j * p + l];
                    }
                }
                let v = z.get(j, i) + drift * h + self.noise * diff;
                z.set(j + 1, i, v);
            }
        }
        (z, joint, log_w)
    }

    pub fn simulate(&self, n_paths: usize, seed: u64) -> Vec<(PathSample, JointSample)> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|k| self.path(seed, k))
            .collect()
    }
}

/// `X^n` paths: the Euler scheme without the `σ̃` terms.
pub fn simulate_uncorrelated(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let sim = EulerSimulator::small_noise(coeffs, bank, grid, epsilon, false)?;
    Ok(sim
        .simulate(n_paths, seed)
        .into_iter()
        .map(|(z, _)| z)
        .collect())
}

/// `Z^n` paths together with the drivers that produced them.
pub fn simulate_correlated(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    epsilon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(PathSample, JointSample)>> {
    let sim = EulerSimulator::small_noise(coeffs, bank, grid, epsilon, true)?;
    Ok(sim.simulate(n_paths, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::VolterraKernel;

    fn scalar(v: f64) -> MatrixMap {
        MatrixMap::Constant(DMatrix::from_element(1, 1, v))
    }

    fn rl_bank(h: f64, p: usize) -> KernelBank {
        KernelBank::uniform(VolterraKernel::riemann_liouville(h, 1.0, 1.0).unwrap(), p).unwrap()
    }

    #[test]
    fn identity_sigma_gives_identity_a() {
        let c = ModelCoefficients::new(
            2,
            1,
            MatrixMap::zeros(2, 1),
            MatrixMap::identity(2),
            MatrixMap::zeros(2, 1),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let phi = PathSample::from_fn(grid, 1, |t| vec![t]);
        let dp = diffusion_path(&c, &phi).unwrap();
        for (a, b) in dp.a_values.iter().zip(&dp.a_inv_values) {
            assert_eq!(a, &DMatrix::<f64>::identity(2, 2));
            assert_eq!(b, &DMatrix::<f64>::identity(2, 2));
        }
    }

    #[test]
    fn exponential_sigma_scalar_case() {
        let s = MatrixMap::ExpLinear {
            base: DMatrix::from_element(1, 1, 1.0),
            weights: vec![1.0],
        };
        let c = ModelCoefficients::new(1, 1, scalar(0.0), s, scalar(0.0)).unwrap();
        let grid = TimeGrid::new(1.0, 9).unwrap();
        let phi = PathSample::from_fn(grid, 1, |t| vec![2.0 * t - 0.5]);
        let dp = diffusion_path(&c, &phi).unwrap();
        for i in 0..10 {
            let y = phi.get(i, 0);
            assert!((dp.a_values[i][(0, 0)] - (2.0 * y).exp()).abs() < 1e-12 * (2.0 * y).exp());
            assert!(
                (dp.a_inv_values[i][(0, 0)] - (-2.0 * y).exp()).abs() < 1e-12 * (-2.0 * y).exp()
            );
        }
    }

    #[test]
    fn zero_row_is_singular() {
        let sigma = MatrixMap::Constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let c = ModelCoefficients::new(2, 1, MatrixMap::zeros(2, 1), sigma, MatrixMap::zeros(2, 1))
            .unwrap();
        let phi = PathSample::zeros(TimeGrid::new(1.0, 3).unwrap(), 1);
        assert!(matches!(
            diffusion_path(&c, &phi),
            Err(Error::Singular { node: 0, .. })
        ));
    }

    #[test]
    fn validation_examples() {
        let ok = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), scalar(0.0)).unwrap();
        assert!(validate_coefficients(&ok, &ProbeLattice::default())
            .unwrap()
            .all_passed());

        let vanishing = MatrixMap::Affine {
            base: DMatrix::zeros(1, 1),
            slopes: vec![DMatrix::from_element(1, 1, 1.0)],
        };
        let c = ModelCoefficients::new(1, 1, scalar(0.0), vanishing, scalar(0.0)).unwrap();
        let r = validate_coefficients(&c, &ProbeLattice::default()).unwrap();
        let det = r.check(CHECK_DETERMINANT).unwrap();
        assert!(!det.passed);
        assert_eq!(det.worst_point, vec![0.0]);

        let exp = MatrixMap::ExpLinear {
            base: DMatrix::from_element(1, 1, 1.0),
            weights: vec![1.0],
        };
        let c = ModelCoefficients::new(1, 1, scalar(0.0), exp, scalar(0.0)).unwrap();
        let r = validate_coefficients(&c, &ProbeLattice::default()).unwrap();
        let g = r.check(CHECK_GROWTH).unwrap();
        assert!(!g.passed);
        assert_eq!(g.worst_point, vec![10.0]);
        assert!(r.check(CHECK_DETERMINANT).unwrap().passed);
    }

    #[test]
    fn zero_coefficients_give_zero_paths() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(0.0), scalar(0.0)).unwrap();
        for z in simulate_uncorrelated(&c, &rl_bank(0.3, 1), &grid, 0.5, 10, 1).unwrap() {
            assert!(z.values().iter().all(|&v| v == 0.0));
        }
        for (z, _) in simulate_correlated(&c, &rl_bank(0.3, 1), &grid, 0.5, 10, 1).unwrap() {
            assert!(z.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_sigma_tilde_matches_uncorrelated_pathwise() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let s = MatrixMap::ExpLinear {
            base: DMatrix::from_element(1, 1, 0.5),
            weights: vec![0.7],
        };
        let c = ModelCoefficients::new(1, 1, scalar(0.1), s, scalar(0.0)).unwrap();
        let bank = rl_bank(0.3, 1);
        let x = simulate_uncorrelated(&c, &bank, &grid, 0.3, 20, 9).unwrap();
        let z = simulate_correlated(&c, &bank, &grid, 0.3, 20, 9).unwrap();
        for (a, (b, _)) in x.iter().zip(&z) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let c = ModelCoefficients::one_factor_correlated(scalar(1.0), scalar(0.0), 0.5).unwrap();
        let a = simulate_correlated(&c, &rl_bank(0.3, 1), &grid, 0.5, 10, 11).unwrap();
        let b = simulate_correlated(&c, &rl_bank(0.3, 1), &grid, 0.5, 10, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_bound_helpers() {
        let s = MatrixMap::ExpLinear {
            base: DMatrix::from_element(1, 1, 1.0),
            weights: vec![1.0],
        };
        let c = ModelCoefficients::new(1, 1, scalar(0.0), s, scalar(0.0)).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let phi = PathSample::from_fn(grid, 1, |t| vec![t]);
        let paths: Vec<PathSample> = (1..6)
            .map(|n| PathSample::from_fn(grid, 1, move |t| vec![t + 1.0 / n as f64]))
            .collect();
        let c_phi = uniform_inverse_positivity(&c, &paths).unwrap();
        assert!((c_phi - (-2.0 * 2.0f64).exp()).abs() < 1e-12);
        for pn in &paths {
            let m = dominating_multiplier(&c, pn, &phi).unwrap();
            // a⁻¹(φ_n)/a⁻¹(φ) = e^{-2/n} ≥ e^{-2}, so M = 8 always suffices
            assert!(m <= 8.0);
        }
    }
}
