//! Randomized property suites for the rate functionals and the matrix bounds
//! on the coefficients. Each suite evaluates a checkable inequality on independent
//! random cases and counts violations; a healthy build reports none.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::gaussian::path_rng;
use crate::grid::{PathSample, TimeGrid};
use crate::kernels::{KernelBank, VolterraKernel};
use crate::model::{
    dominating_multiplier, uniform_inverse_positivity, validate_coefficients, MatrixMap,
    ModelCoefficients, ProbeLattice, CHECK_EIGENVALUE, CHECK_GROWTH,
};
use crate::optim::{finite_difference_gradient, Objective};
use crate::ratefn::{gamma_functional, phi_m, CameronMartinPath, HatMap, RateProblem};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest normalized violation `lhs/rhs − 1` (negative when all cases hold).
    pub worst_margin: f64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Per-case outcome: margin (≤ 0 means the inequality holds) or an error message.
type CaseOutcome = std::result::Result<f64, String>;

fn run_suite(
    name: &'static str,
    n_cases: usize,
    seed: u64,
    case: impl Fn(&mut ChaCha8Rng) -> CaseOutcome + Sync,
) -> SuiteReport {
    let outcomes: Vec<CaseOutcome> = (0..n_cases as u64)
        .into_par_iter()
        .map(|k| case(&mut path_rng(seed, k)))
        .collect();
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut first_failure = None;
    for (k, o) in outcomes.iter().enumerate() {
        let failed = match o {
            Ok(m) => {
                worst = worst.max(*m);
                *m > 0.0 || !m.is_finite()
            }
            Err(_) => true,
        };
        if failed {
            failures += 1;
            if first_failure.is_none() {
                first_failure = Some(match o {
                    Ok(m) => format!("case {k}: margin {m:e}"),
                    Err(e) => format!("case {k}: {e}"),
                });
            }
        }
    }
    SuiteReport {
        name,
        cases: n_cases,
        failures,
        worst_margin: worst,
        first_failure,
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let l = random_matrix(rng, d, d, 1.0);
    &l * l.transpose() + DMatrix::identity(d, d) * 0.05
}

fn random_cm_path(
    rng: &mut ChaCha8Rng,
    grid: TimeGrid,
    dim: usize,
    scale: f64,
) -> CameronMartinPath {
    let v = (0..grid.n_steps() * dim)
        .map(|_| scale * normal(rng))
        .collect();
    CameronMartinPath::new(grid, dim, v).expect("finite random derivative")
}

fn random_walk(rng: &mut ChaCha8Rng, grid: TimeGrid, dim: usize, scale: f64) -> PathSample {
    let mut p = PathSample::zeros(grid, dim);
    let s = scale * grid.dt().sqrt();
    for i in 1..grid.n_nodes() {
        for k in 0..dim {
            let v = p.get(i - 1, k) + s * normal(rng);
            p.set(i, k, v);
        }
    }
    p
}

/// With `with_fou`, one draw in 16 is a fractional OU kernel, which is two
/// orders of magnitude slower to build and evaluate than the others.
fn random_kernel(rng: &mut ChaCha8Rng, horizon: f64, with_fou: bool) -> VolterraKernel {
    let c = rng.random_range(0.5..1.5);
    let k = match rng.random_range(0..if with_fou { 16 } else { 15 }) {
        0..=4 => VolterraKernel::riemann_liouville(rng.random_range(0.1..0.9), c, horizon),
        5..=9 => VolterraKernel::molchan_golosov(rng.random_range(0.1..0.9), c, horizon),
        10..=14 => VolterraKernel::log_fbm(
            rng.random_range(0.1..0.5),
            rng.random_range(1.5..3.0),
            c,
            horizon,
        ),
        _ => VolterraKernel::fractional_ou(
            rng.random_range(0.1..0.9),
            rng.random_range(0.2..2.0),
            c,
            horizon,
        ),
    };
    k.expect("parameters drawn inside the valid ranges")
}

fn random_bank(rng: &mut ChaCha8Rng, p: usize, horizon: f64, with_fou: bool) -> KernelBank {
    KernelBank::new(
        (0..p)
            .map(|_| random_kernel(rng, horizon, with_fou))
            .collect(),
    )
    .expect("nonempty bank")
}

/// Nondegenerate random coefficients with `d, p ∈ {1, 2}` and small
/// slopes, so the default growth constants hold.
fn random_coefficients(rng: &mut ChaCha8Rng) -> ModelCoefficients {
    let d = rng.random_range(1..=2);
    let p = rng.random_range(1..=2);
    let mu = MatrixMap::Affine {
        base: random_matrix(rng, d, 1, 0.3),
        slopes: (0..p).map(|_| random_matrix(rng, d, 1, 0.2)).collect(),
    };
    let mut base = random_matrix(rng, d, d, 0.15);
    for i in 0..d {
        base[(i, i)] += rng.random_range(0.5..1.5);
    }
    let sigma = MatrixMap::ExpLinear {
        base,
        weights: (0..p).map(|_| 0.3 * normal(rng)).collect(),
    };
    let sigma_tilde = MatrixMap::Affine {
        base: random_matrix(rng, d, p, 0.3),
        slopes: (0..p).map(|_| random_matrix(rng, d, p, 0.2)).collect(),
    };
    ModelCoefficients::new(d, p, mu, sigma, sigma_tilde).expect("shapes are consistent")
}

fn grid_for(rng: &mut ChaCha8Rng) -> TimeGrid {
    let n = [4, 8, 16][rng.random_range(0..3)];
    TimeGrid::new(rng.random_range(0.5..0.9), n).expect("positive horizon")
}

fn rel_margin(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / rhs.abs().max(1e-300) - 1e-10
}

/// `Γ(x|B) ≥ Γ(x|A)` when `B − A` is positive semidefinite at every node.
pub fn gamma_monotone(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("gamma-monotone", n_cases, seed, |rng| {
        let grid = grid_for(rng);
        let d = rng.random_range(1..=3);
        let x = random_cm_path(rng, grid, d, 1.0);
        let a: Vec<_> = (0..grid.n_nodes()).map(|_| random_spd(rng, d)).collect();
        let b: Vec<_> = a
            .iter()
            .map(|m| {
                let p = random_matrix(rng, d, d, 0.5);
                m + &p * p.transpose()
            })
            .collect();
        let ga = gamma_functional(&x, &a).map_err(|e| e.to_string())?;
        let gb = gamma_functional(&x, &b).map_err(|e| e.to_string())?;
        Ok(rel_margin(ga, gb))
    })
}

/// `Γ(x+y|A) ≤ 2Γ(x|A) + 2Γ(y|A)`.
pub fn gamma_two_term(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("gamma-two-term", n_cases, seed, |rng| {
        let grid = grid_for(rng);
        let d = rng.random_range(1..=3);
        let x = random_cm_path(rng, grid, d, 1.0);
        let y = random_cm_path(rng, grid, d, 1.0);
        let a: Vec<_> = (0..grid.n_nodes()).map(|_| random_spd(rng, d)).collect();
        let sum = sum_paths(&[&x, &y]);
        let g = |p: &CameronMartinPath| gamma_functional(p, &a).map_err(|e| e.to_string());
        Ok(rel_margin(g(&sum)?, 2.0 * g(&x)? + 2.0 * g(&y)?))
    })
}

/// `Γ(x+y+z|A) ≤ 3Γ(x|A) + 3Γ(y|A) + 3Γ(z|A)`.
pub fn gamma_three_term(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("gamma-three-term", n_cases, seed, |rng| {
        let grid = grid_for(rng);
        let d = rng.random_range(1..=3);
        let x = random_cm_path(rng, grid, d, 1.0);
        let y = random_cm_path(rng, grid, d, 1.0);
        let z = random_cm_path(rng, grid, d, 1.0);
        let a: Vec<_> = (0..grid.n_nodes()).map(|_| random_spd(rng, d)).collect();
        let sum = sum_paths(&[&x, &y, &z]);
        let g = |p: &CameronMartinPath| gamma_functional(p, &a).map_err(|e| e.to_string());
        Ok(rel_margin(g(&sum)?, 3.0 * (g(&x)? + g(&y)? + g(&z)?)))
    })
}

fn sum_paths(paths: &[&CameronMartinPath]) -> CameronMartinPath {
    let first = paths[0];
    let mut v = first.derivative().to_vec();
    for p in &paths[1..] {
        v.iter_mut().zip(p.derivative()).for_each(|(a, b)| *a += b);
    }
    CameronMartinPath::new(*first.grid(), first.dim(), v).expect("same shape")
}

/// `max_i ‖f̂(t_i)‖² ≤ sup_t Σ_ℓ ∫₀ᵗ K_ℓ(t,u)² du · ‖f‖²_{H¹}`.
pub fn hat_map_bound(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("hat-map-bound", n_cases, seed, |rng| {
        let grid = grid_for(rng);
        let p = rng.random_range(1..=2);
        let bank = random_bank(rng, p, grid.horizon(), true);
        let f = random_cm_path(rng, grid, p, 2.0);
        let hat = HatMap::new(&bank, &grid)
            .and_then(|h| h.apply(&f))
            .map_err(|e| e.to_string())?;
        let mut sup_slice = 0.0_f64;
        for i in 1..grid.n_nodes() {
            let mut s = 0.0;
            for k in bank.kernels() {
                s += k.l2_slice(grid.node(i), 128).map_err(|e| e.to_string())?;
            }
            sup_slice = sup_slice.max(s);
        }
        let lhs = (0..grid.n_nodes())
            .map(|i| hat.node(i).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        // l2_slice is a 128-cell quadrature value; allow for its relative error.
        Ok(rel_margin(lhs, sup_slice * f.h1_norm_sq() * (1.0 + 1e-3)))
    })
}

/// `Σ_j ‖Φ̇^m_j‖² dt ≤ d·p·(M₁ + M₂‖f̂‖_∞^α)²·‖f‖²_{H¹}`, from the entrywise
/// growth bound on `σ̃` and Cauchy–Schwarz.
pub fn phi_bound(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("phi-bound", n_cases, seed, |rng| {
        let grid = TimeGrid::new(0.8, 16).expect("valid grid");
        let coeffs = random_coefficients(rng);
        let bank = random_bank(rng, coeffs.p(), grid.horizon(), false);
        let f = random_cm_path(rng, grid, coeffs.p(), 1.5);
        let m = [1, 2, 4, 8, 16][rng.random_range(0..5)];
        let hat = HatMap::new(&bank, &grid)
            .and_then(|h| h.apply(&f))
            .map_err(|e| e.to_string())?;
        let pm = phi_m(&f, &hat, m, &coeffs).map_err(|e| e.to_string())?;
        let dt = grid.dt();
        let mut lhs = 0.0;
        for j in 0..grid.n_steps() {
            for i in 0..coeffs.d() {
                lhs += ((pm.get(j + 1, i) - pm.get(j, i)) / dt).powi(2) * dt;
            }
        }
        let sup_hat = (0..grid.n_nodes())
            .map(|i| hat.node(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let g = coeffs.growth_m1 + coeffs.growth_m2 * sup_hat.powf(coeffs.growth_alpha);
        let mf = (coeffs.d() * coeffs.p()) as f64 * g * g;
        Ok(rel_margin(lhs, mf * f.h1_norm_sq()))
    })
}

fn convergent_family(
    rng: &mut ChaCha8Rng,
    grid: TimeGrid,
    p: usize,
) -> (PathSample, Vec<PathSample>) {
    let phi = random_walk(rng, grid, p, 1.0);
    let psi = random_walk(rng, grid, p, 1.0);
    let family = (1..=8)
        .map(|n| {
            let mut q = phi.clone();
            for i in 0..grid.n_nodes() {
                for k in 0..p {
                    q.set(i, k, phi.get(i, k) + psi.get(i, k) / n as f64);
                }
            }
            q
        })
        .collect();
    (phi, family)
}

/// `min_{n,t} λ_min(a⁻¹(φ_n(t))) > 0` for a random family `φ_n → φ`.
pub fn inverse_positivity(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("inverse-positivity", n_cases, seed, |rng| {
        let grid = grid_for(rng);
        let coeffs = random_coefficients(rng);
        let (_, family) = convergent_family(rng, grid, coeffs.p());
        let c = uniform_inverse_positivity(&coeffs, &family).map_err(|e| e.to_string())?;
        Ok(if c > 0.0 { -c } else { 1.0 })
    })
}

/// The search for `M` with `M a⁻¹(φ_n) − a⁻¹(φ)` positive definite terminates.
pub fn multiplier_search(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("multiplier-search", n_cases, seed, |rng| {
        let grid = grid_for(rng);
        let coeffs = random_coefficients(rng);
        let (phi, family) = convergent_family(rng, grid, coeffs.p());
        let mut worst = 0.0_f64;
        for q in &family {
            worst = worst.max(dominating_multiplier(&coeffs, q, &phi).map_err(|e| e.to_string())?);
        }
        Ok(-1.0 / worst)
    })
}

/// Coefficients passing the growth check satisfy the eigenvalue bound.
pub fn eigenvalue_bound(n_cases: usize, seed: u64) -> SuiteReport {
    let probe = ProbeLattice {
        points_per_axis: 5,
        n_random: 16,
        ..ProbeLattice::default()
    };
    run_suite("eigenvalue-bound", n_cases, seed, |rng| {
        let coeffs = random_coefficients(rng);
        let report = validate_coefficients(&coeffs, &probe).map_err(|e| e.to_string())?;
        let growth = report.check(CHECK_GROWTH).ok_or("missing growth check")?;
        let eig = report
            .check(CHECK_EIGENVALUE)
            .ok_or("missing eigenvalue check")?;
        if !growth.passed {
            return Ok(-1.0);
        }
        Ok(if eig.passed {
            eig.worst_value.min(0.0)
        } else {
            eig.worst_value.max(1e-300)
        })
    })
}

/// Adjoint gradients of random rate objectives agree with central
/// differences (step `1e-5`) to relative `1e-4`.
pub fn gradient_agreement(n_cases: usize, seed: u64) -> SuiteReport {
    run_suite("gradient-vs-fd", n_cases, seed, |rng| {
        let grid = TimeGrid::new(0.8, [4, 8][rng.random_range(0..2)]).expect("valid grid");
        let coeffs = random_coefficients(rng);
        let bank = random_bank(rng, coeffs.p(), grid.horizon(), false);
        let x = random_cm_path(rng, grid, coeffs.d(), 0.7);
        let z: Vec<f64> = (0..coeffs.d()).map(|_| normal(rng)).collect();
        let problem = match rng.random_range(0..4) {
            0 => RateProblem::Uncorrelated {
                x: &x,
                bank: &bank,
                coeffs: &coeffs,
            },
            1 => RateProblem::CorrelatedBlocks {
                x: &x,
                m: 2,
                bank: &bank,
                coeffs: &coeffs,
            },
            2 => RateProblem::Correlated {
                x: &x,
                bank: &bank,
                coeffs: &coeffs,
            },
            _ => RateProblem::Terminal {
                z: &z,
                grid,
                bank: &bank,
                coeffs: &coeffs,
            },
        };
        let obj = problem.objective().map_err(|e| e.to_string())?;
        let v: Vec<f64> = (0..obj.dim())
            .map(|_| rng.random_range(-0.6..0.6))
            .collect();
        let (_, g) = obj.value_grad(&v).map_err(|e| e.to_string())?;
        let fd = finite_difference_gradient(&obj, &v, 1e-5).map_err(|e| e.to_string())?;
        let scale = g.iter().map(|a| a.abs()).fold(1e-8, f64::max);
        let err = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(err / (1e-4 * scale) - 1.0)
    })
}

/// All suites with `n_cases` cases each.
pub fn run_all(n_cases: usize, seed: u64) -> Vec<SuiteReport> {
    vec![
        gamma_monotone(n_cases, seed),
        gamma_two_term(n_cases, seed),
        gamma_three_term(n_cases, seed),
        hat_map_bound(n_cases, seed),
        phi_bound(n_cases, seed),
        inverse_positivity(n_cases, seed),
        multiplier_search(n_cases, seed),
        eigenvalue_bound(n_cases, seed),
        gradient_agreement(n_cases, seed),
    ]
}
