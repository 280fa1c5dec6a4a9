//! Limited-memory BFGS with backtracking line search and projection onto a
//! Euclidean ball, plus a multi-start driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Gradient supplied by the objective.
    Analytic,
    /// Central differences of the objective value.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Converged when `grad_norm < tol·(1 + |value|)`.
    pub tol: f64,
    pub memory: usize,
    /// Total starts including the origin.
    pub n_starts: usize,
    pub start_seed: u64,
    pub gradient: GradientMode,
    pub fd_step: f64,
    /// Relative spread between start values above which a warning is raised.
    pub spread_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            memory: 10,
            n_starts: 5,
            start_seed: 0x5eed,
            gradient: GradientMode::Analytic,
            fd_step: 1e-6,
            spread_tol: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn single_start(mut self) -> Self {
        self.n_starts = 1;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartResult {
    pub best: OptimResult,
    /// Final value of every start, origin first.
    pub start_values: Vec<f64>,
    /// `(max − min)/max(1, |min|)` over starts.
    pub spread: f64,
    pub spread_warning: bool,
}

/// Objective returning value and gradient.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_grad(x)?.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Central-difference gradient.
pub fn finite_difference_gradient<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for k in 0..x.len() {
        let h = step * (1.0 + x[k].abs());
        y[k] = x[k] + h;
        let fp = obj.value(&y)?;
        y[k] = x[k] - h;
        let fm = obj.value(&y)?;
        y[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

fn evaluate<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(f64, Vec<f64>)> {
    match cfg.gradient {
        GradientMode::Analytic => obj.value_grad(x),
        GradientMode::FiniteDifference => Ok((
            obj.value(x)?,
            finite_difference_gradient(obj, x, cfg.fd_step)?,
        )),
    }
}

/// Radial projection onto `‖x‖² ≤ r2`; returns whether `x` moved.
fn project(x: &mut [f64], r2: Option<f64>) -> bool {
    if let Some(r2) = r2 {
        let n2 = dot(x, x);
        if n2 > r2 {
            let c = (r2 / n2).sqrt();
            x.iter_mut().for_each(|v| *v *= c);
            return true;
        }
    }
    false
}

/// Gradient with the outward normal component removed on the boundary of the ball.
fn projected_gradient(x: &[f64], g: &[f64], r2: Option<f64>) -> Vec<f64> {
    if let Some(r2) = r2 {
        let n2 = dot(x, x);
        if n2 >= r2 * (1.0 - 1e-12) && n2 > 0.0 {
            let gx = dot(g, x);
            if gx < 0.0 {
                let c = gx / n2;
                return g.iter().zip(x).map(|(a, b)| a - c * b).collect();
            }
        }
    }
    g.to_vec()
}

/// Minimizes `obj` from `x0` over `{‖x‖² ≤ r2}` (unconstrained if `None`).
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: &[f64],
    r2: Option<f64>,
    cfg: &OptimizerConfig,
) -> Result<OptimResult> {
    let mut x = x0.to_vec();
    project(&mut x, r2);
    let (mut f, mut g) = evaluate(obj, &x, cfg)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut gn = norm(&projected_gradient(&x, &g, r2));
    while iterations < cfg.max_iter {
        if gn < cfg.tol * (1.0 + f.abs()) {
            return Ok(OptimResult {
                x,
                value: f,
                grad_norm: gn,
                iterations,
                converged: true,
            });
        }
        iterations += 1;
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for k in (0..m).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dot(&s_hist[k], &d);
            for (di, yi) in d.iter_mut().zip(&y_hist[k]) {
                *di -= alpha[k] * yi;
            }
        }
        let gamma = if m > 0 {
            dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            1.0 / norm(&g).max(1.0)
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for k in 0..m {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &d);
            for (di, si) in d.iter_mut().zip(&s_hist[k]) {
                *di += (alpha[k] - beta) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v / norm(&g).max(1.0)).collect();
            slope = dot(&g, &d);
        }

        // backtracking Armijo on the projected trial point
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let moved = project(&mut trial, r2);
            let armijo_ref = if moved {
                let disp: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                dot(&g, &disp)
            } else {
                step * slope
            };
            if let Ok((ft, gt)) = evaluate(obj, &trial, cfg) {
                if ft.is_finite()
                    && ft <= f + 1e-4 * armijo_ref.min(0.0)
                    && (ft < f || armijo_ref == 0.0)
                {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn_vec, moved)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn_vec.iter().zip(&g).map(|(a, b)| a - b).collect();
        if moved {
            s_hist.clear();
            y_hist.clear();
        } else if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > cfg.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = xn;
        f = fn_;
        g = gn_vec;
        gn = norm(&projected_gradient(&x, &g, r2));
    }
    let converged = gn < cfg.tol * (1.0 + f.abs());
    Ok(OptimResult {
        x,
        value: f,
        grad_norm: gn,
        iterations,
        converged,
    })
}

/// Runs from the origin and from `n_starts − 1` Gaussian points of norm
/// `½√r2` (norm 1 when unconstrained); keeps the lowest value.
pub fn minimize_multistart<O: Objective + ?Sized>(
    obj: &O,
    r2: Option<f64>,
    cfg: &OptimizerConfig,
) -> Result<MultiStartResult> {
    let n = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.start_seed);
    let radius = r2.map(|r| 0.5 * r.sqrt()).unwrap_or(1.0);
    let mut best: Option<OptimResult> = None;
    let mut values = Vec::with_capacity(cfg.n_starts.max(1));
    for k in 0..cfg.n_starts.max(1) {
        let x0 = if k == 0 || radius == 0.0 {
            vec![0.0; n]
        } else {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let c = radius / norm(&v).max(1e-300);
            v.iter_mut().for_each(|x| *x *= c);
            v
        };
        let r = minimize(obj, &x0, r2, cfg)?;
        values.push(r.value);
        let better = match &best {
            None => true,
            Some(b) => r.value < b.value,
        };
        if better {
            best = Some(r);
        }
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo.abs().max(1.0);
    Ok(MultiStartResult {
        best: best.expect("at least one start"),
        start_values: values,
        spread,
        spread_warning: spread > cfg.spread_tol,
    })
}
