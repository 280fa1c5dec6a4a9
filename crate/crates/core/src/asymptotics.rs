//! Monte Carlo checks of the large-deviation asymptotics.
//!
//! Finite-`ε` slope fits of `−log P` against `ε⁻²` are a desk-scale proxy
//! for the limits; they never prove them. Exponential equivalence of the
//! two short-time constructions is an asymptotic statement as well, so
//! [`equivalence_diagnostic`] only reports distributional closeness.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::JointSampler;
use crate::grid::{PathSample, TimeGrid};
use crate::kernels::{KernelBank, ScalingSchedule};
use crate::model::{EulerSimulator, ModelCoefficients, Tilt};
use crate::ratefn::RateSolution;
use crate::stats::{ks_two_sample, weighted_linear_fit, KsResult};

/// Log-weights above this are reported as a possible overflow.
pub const MAX_LOG_WEIGHT: f64 = 700.0;

/// Minimum number of paths for a tail estimate.
pub const MIN_PATHS: usize = 1000;

/// Events `{Z ∈ A}`.
#[derive(Debug, Clone, PartialEq)]
pub enum TailEvent {
    /// `vᵀZ(T) ≥ b`.
    HalfSpace { direction: Vec<f64>, level: f64 },
    /// `lower ≤ Z(T) ≤ upper` componentwise.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `max_i ‖Z(t_i) − x(t_i)‖_∞ ≤ radius`.
    SupNormTube { target: PathSample, radius: f64 },
}

impl TailEvent {
    pub fn validate(&self, d: usize, grid: &TimeGrid) -> Result<()> {
        match self {
            TailEvent::HalfSpace { direction, .. } => {
                if direction.len() != d {
                    return Err(Error::Dimension(format!(
                        "direction has dim {}, model has d = {d}",
                        direction.len()
                    )));
                }
                if direction.iter().all(|&v| v == 0.0) {
                    return Err(Error::Config("half-space direction must be nonzero".into()));
                }
            }
            TailEvent::Box { lower, upper } => {
                if lower.len() != d || upper.len() != d {
                    return Err(Error::Dimension("box bounds must have dim d".into()));
                }
                if lower.iter().zip(upper).any(|(a, b)| a > b) {
                    return Err(Error::Config("box lower bound exceeds upper bound".into()));
                }
            }
            TailEvent::SupNormTube { target, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("tube radius must be positive".into()));
                }
                target.grid.ensure_same(grid, "tube target")?;
                if target.dim != d {
                    return Err(Error::Dimension("tube target must have dim d".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, z: &PathSample) -> bool {
        match self {
            TailEvent::HalfSpace { direction, level } => {
                direction
                    .iter()
                    .zip(z.terminal())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    >= *level
            }
            TailEvent::Box { lower, upper } => z
                .terminal()
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (a, b))| *a <= *v && *v <= *b),
            TailEvent::SupNormTube { target, radius } => z
                .values()
                .iter()
                .zip(target.values())
                .all(|(a, b)| (a - b).abs() <= *radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    /// Paths that landed in the event.
    pub hits: usize,
    pub n_paths: usize,
    /// `√(p̂(1 − p̂)/n)`: the crude Monte Carlo standard error at the same
    /// probability and path count.
    pub binomial_stderr: f64,
    /// Largest log likelihood ratio (0 for crude Monte Carlo).
    pub max_log_weight: f64,
    pub warning: Option<String>,
}

impl TailEstimate {
    /// `stderr / binomial_stderr`; below 1 when tilting reduces variance.
    pub fn stderr_ratio(&self) -> f64 {
        self.stderr / self.binomial_stderr
    }
}

/// `B̂^n = ε B̂`, the driver of the small-noise family.
pub fn small_noise_bank(bank: &KernelBank, epsilon: f64) -> Result<KernelBank> {
    bank.scaled(epsilon)
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < MIN_PATHS {
        return Err(Error::Domain(format!(
            "tail estimates need at least {MIN_PATHS} paths, got {n_paths}"
        )));
    }
    Ok(())
}

/// Crude Monte Carlo frequency of `event` with binomial standard error.
///
/// `bank` is the kernel bank of the driver `B̂^n` as simulated; see [`small_noise_bank`].
pub fn estimate_tail_prob(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    epsilon: f64,
    event: &TailEvent,
    n_paths: usize,
    seed: u64,
) -> Result<TailEstimate> {
    check_paths(n_paths)?;
    event.validate(coeffs.d(), grid)?;
    let sim = EulerSimulator::small_noise(coeffs, bank, grid, epsilon, true)?;
    let hits: usize = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| usize::from(event.contains(&sim.path(seed, k).0)))
        .sum();
    let n = n_paths as f64;
    let p = hits as f64 / n;
    let warning = (hits == 0 || hits == n_paths)
        .then(|| format!("degenerate event: {hits} hits in {n_paths} paths"));
    let stderr = (p * (1.0 - p) / n).sqrt();
    Ok(TailEstimate {
        p_hat: p,
        stderr,
        hits,
        n_paths,
        binomial_stderr: stderr,
        max_log_weight: 0.0,
        warning,
    })
}

/// Importance-sampling estimate: `B` is shifted by `ḟ/ε` and `W` by `ẏ/ε`,
/// where `f` and `ẏ` come from the rate minimizer in `control`, and each hit
/// is weighted by the likelihood ratio.
#[allow(clippy::too_many_arguments)]
pub fn tilted_estimate(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    epsilon: f64,
    event: &TailEvent,
    control: &RateSolution,
    n_paths: usize,
    seed: u64,
) -> Result<TailEstimate> {
    check_paths(n_paths)?;
    event.validate(coeffs.d(), grid)?;
    if !control.converged {
        return Err(Error::Validation(
            "tilting needs a converged rate solution".into(),
        ));
    }
    control.control.check_grid(grid, "tilt control")?;
    if control.control.dim() != coeffs.p()
        || control.inner_drift.len() != grid.n_steps() * coeffs.d()
    {
        return Err(Error::Dimension(
            "control does not match the model dimensions".into(),
        ));
    }
    let tilt = Tilt {
        b: control
            .control
            .derivative()
            .iter()
            .map(|v| v / epsilon)
            .collect(),
        w: control.inner_drift.iter().map(|v| v / epsilon).collect(),
    };
    let sim = EulerSimulator::small_noise(coeffs, bank, grid, epsilon, true)?;
    // Hit log-weights are summed in path order so the estimate does not
    // depend on how the work was split across threads.
    let log_weights: Vec<Option<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let (z, _, lw) = sim.path_tilted(seed, k, Some(&tilt));
            event.contains(&z).then_some(lw)
        })
        .collect();
    let (mut s1, mut s2, mut hits, mut max_lw) = (0.0, 0.0, 0usize, f64::NEG_INFINITY);
    for lw in log_weights.into_iter().flatten() {
        let w = lw.exp();
        s1 += w;
        s2 += w * w;
        hits += 1;
        max_lw = max_lw.max(lw);
    }
    let n = n_paths as f64;
    let p = s1 / n;
    let var = (s2 / n - p * p).max(0.0) * n / (n - 1.0);
    let mut warning = None;
    if max_lw > MAX_LOG_WEIGHT {
        warning = Some(format!("log-weight {max_lw:.1} exceeds {MAX_LOG_WEIGHT}"));
    } else if hits == 0 {
        warning = Some(format!(
            "degenerate event: 0 hits in {n_paths} tilted paths"
        ));
    }
    Ok(TailEstimate {
        p_hat: p,
        stderr: (var / n).sqrt(),
        hits,
        n_paths,
        binomial_stderr: (p * (1.0 - p) / n).max(0.0).sqrt(),
        max_log_weight: if hits == 0 { 0.0 } else { max_lw },
        warning,
    })
}

/// Crude or importance-sampled estimation.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    Crude,
    Tilted(&'a RateSolution),
}

/// Tail estimates at every `ε` with driver `ε B̂`, all runs seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_over_schedule(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    epsilons: &[f64],
    event: &TailEvent,
    estimator: Estimator<'_>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<TailEstimate>> {
    epsilons
        .iter()
        .map(|&eps| {
            let driver = small_noise_bank(bank, eps)?;
            match estimator {
                Estimator::Crude => {
                    estimate_tail_prob(coeffs, &driver, grid, eps, event, n_paths, seed)
                }
                Estimator::Tilted(control) => {
                    tilted_estimate(coeffs, &driver, grid, eps, event, control, n_paths, seed)
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeEstimate {
    pub epsilons: Vec<f64>,
    /// `(p̂, stderr)` per epsilon.
    pub probs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Weighted regression of `−log p̂` on `ε⁻²`.
///
/// Weights are `p̂²/stderr²`, the inverse delta-method variance of
/// `log p̂`; points with `p̂ ∉ (0, 1)` are dropped. Unit weights are used if
/// any retained standard error is zero.
pub fn ldp_slope(epsilons: &[f64], estimates: &[(f64, f64)]) -> Result<SlopeEstimate> {
    if epsilons.len() != estimates.len() {
        return Err(Error::Dimension(
            "one estimate per epsilon is required".into(),
        ));
    }
    let kept: Vec<(f64, f64, f64)> = epsilons
        .iter()
        .zip(estimates)
        .filter(|(_, (p, _))| *p > 0.0 && *p < 1.0)
        .map(|(e, (p, s))| (*e, *p, *s))
        .collect();
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope needs at least 3 epsilons with 0 < p < 1, got {}",
            kept.len()
        )));
    }
    let x: Vec<f64> = kept.iter().map(|(e, _, _)| e.powi(-2)).collect();
    let y: Vec<f64> = kept.iter().map(|(_, p, _)| -p.ln()).collect();
    let w: Vec<f64> = if kept.iter().any(|(_, _, s)| *s <= 0.0) {
        vec![1.0; kept.len()]
    } else {
        kept.iter().map(|(_, p, s)| (p / s).powi(2)).collect()
    };
    let fit = weighted_linear_fit(&x, &y, &w)?;
    Ok(SlopeEstimate {
        epsilons: epsilons.to_vec(),
        probs: estimates.to_vec(),
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

fn check_short_time(
    coeffs: &ModelCoefficients,
    schedule: &ScalingSchedule,
    n_index: usize,
) -> Result<(f64, f64)> {
    if !coeffs.mu_is_zero() {
        return Err(Error::Validation(
            "the short-time rescaling requires mu = 0".into(),
        ));
    }
    schedule.validate()?;
    if n_index >= schedule.len() {
        return Err(Error::Domain(format!(
            "schedule index {n_index} out of range ({} entries)",
            schedule.len()
        )));
    }
    Ok((schedule.epsilon[n_index], schedule.delta[n_index]))
}

/// `ε_n δ_n^{-1/2} Z(δ_n t)` on `grid` via the rescaled kernels.
///
/// With `B̃(s) = δ^{-1/2}B(δs)` and `W̃` alike, `B̂(δs)` is the Volterra
/// process of the kernel `√δ K(δ·, δ·)` driven by `B̃`, and the rescaled
/// log-price solves the Euler scheme with noise `ε`, Itô correction
/// `εδ^{1/2}`, and that kernel bank.
#[allow(clippy::too_many_arguments)]
pub fn short_time_sample(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    n_index: usize,
    schedule: &ScalingSchedule,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let (eps, delta) = check_short_time(coeffs, schedule, n_index)?;
    let rescaled = bank.rescaled(delta)?;
    let sampler = JointSampler::with_defaults(&rescaled, grid)?;
    let sim = EulerSimulator::new(coeffs, sampler, eps, eps * delta.sqrt(), true)?;
    Ok(sim
        .simulate(n_paths, seed)
        .into_iter()
        .map(|(z, _)| z)
        .collect())
}

/// `ε_n δ_n^{-1/2} Z(δ_n t)` by simulating `Z` itself on `[0, δ_n T]` with
/// `refine·N` steps and keeping every `refine`-th node.
#[allow(clippy::too_many_arguments)]
pub fn short_time_direct(
    coeffs: &ModelCoefficients,
    bank: &KernelBank,
    grid: &TimeGrid,
    n_index: usize,
    schedule: &ScalingSchedule,
    refine: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let (eps, delta) = check_short_time(coeffs, schedule, n_index)?;
    if refine == 0 {
        return Err(Error::Domain("refine must be at least 1".into()));
    }
    let fine = TimeGrid::new(grid.horizon() * delta, grid.n_steps() * refine)?;
    let sampler = JointSampler::with_defaults(bank, &fine)?;
    let sim = EulerSimulator::new(coeffs, sampler, 1.0, 1.0, true)?;
    let c = eps / delta.sqrt();
    let d = coeffs.d();
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let (z, _) = sim.path(seed, k);
            let mut out = PathSample::zeros(*grid, d);
            for i in 0..=grid.n_steps() {
                for a in 0..d {
                    out.set(i, a, c * z.get(i * refine, a));
                }
            }
            out
        })
        .collect())
}

/// Sup-distance thresholds reported by [`equivalence_diagnostic`].
pub const EQUIVALENCE_THRESHOLDS: [f64; 3] = [0.05, 0.1, 0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub thresholds: Vec<f64>,
    /// Fraction of paired paths with `sup |a − b| > δ`, per threshold.
    pub exceedance: Vec<f64>,
    /// Two-sample KS test of the terminal values, per component.
    pub ks: Vec<KsResult>,
}

/// Pairwise sup-distance exceedances and terminal KS statistics of two path sets.
pub fn equivalence_diagnostic(a: &[PathSample], b: &[PathSample]) -> Result<EquivalenceReport> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "path sets must be nonempty and matched: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dists: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.sup_distance(y))
        .collect::<Result<_>>()?;
    let n = dists.len() as f64;
    let exceedance = EQUIVALENCE_THRESHOLDS
        .iter()
        .map(|t| dists.iter().filter(|&&d| d > *t).count() as f64 / n)
        .collect();
    let d = a[0].dim;
    let ks = (0..d)
        .map(|k| {
            let ta: Vec<f64> = a.iter().map(|p| p.terminal()[k]).collect();
            let tb: Vec<f64> = b.iter().map(|p| p.terminal()[k]).collect();
            ks_two_sample(&ta, &tb)
        })
        .collect::<Result<_>>()?;
    Ok(EquivalenceReport {
        thresholds: EQUIVALENCE_THRESHOLDS.to_vec(),
        exceedance,
        ks,
    })
}
