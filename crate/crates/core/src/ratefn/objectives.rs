use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{PathSample, TimeGrid};
use crate::kernels::KernelBank;
use crate::model::{invert_diffusion, ModelCoefficients};
use crate::optim::{minimize_multistart, Objective, OptimizerConfig};

use super::cameron_martin::{CameronMartinPath, HatMap};
use super::RateSolution;

/// Smallest eigenvalue of `A_{f̂}` accepted by the terminal rate.
pub const TERMINAL_EIGEN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Target<'a> {
    /// Pathwise target; `block = Some(q)` freezes `σ̃` on blocks of `q` steps,
    /// `None` drops `σ̃` (uncorrelated model).
    Path {
        x: &'a CameronMartinPath,
        block: Option<usize>,
    },
    Terminal {
        z: DVector<f64>,
    },
}

/// `F(v) = ½‖v‖² + (conditional rate)` in the scaled variables `v_j = ḟ_j√dt`.
pub struct RateObjective<'a> {
    coeffs: &'a ModelCoefficients,
    hat: HatMap,
    target: Target<'a>,
}

struct Evaluation {
    value: f64,
    grad: Vec<f64>,
}

fn jacobian_of_a(sigma: &DMatrix<f64>, dsigma: &DMatrix<f64>) -> DMatrix<f64> {
    dsigma * sigma.transpose() + sigma * dsigma.transpose()
}

impl<'a> RateObjective<'a> {
    fn grid(&self) -> &TimeGrid {
        self.hat.grid()
    }

    fn evaluate(&self, v: &[f64], want_grad: bool) -> Result<Evaluation> {
        let grid = *self.grid();
        let p = self.coeffs.p();
        let d = self.coeffs.d();
        let n = grid.n_steps();
        let dt = grid.dt();
        let f = CameronMartinPath::from_scaled(grid, p, v)?;
        let y = self.hat.apply(&f)?;
        let mut adj_y = vec![0.0; (n + 1) * p];
        let mut g_fdot = vec![0.0; n * p];

        let rate = match &self.target {
            Target::Path { x, block } => {
                let mut val = 0.0;
                for j in 0..n {
                    let yj = y.node(j);
                    let sigma = self.coeffs.sigma(yj);
                    let a_inv = invert_diffusion(&(&sigma * sigma.transpose()), j)?;
                    let fd = DVector::from_column_slice(f.step_derivative(j));
                    let mut r =
                        DVector::from_column_slice(x.step_derivative(j)) - self.coeffs.mu(yj);
                    let anchor = block.map(|q| q * (j / q));
                    let st = anchor.map(|b| self.coeffs.sigma_tilde(y.node(b)));
                    if let Some(st) = &st {
                        r -= st * &fd;
                    }
                    let u = &a_inv * &r;
                    val += 0.5 * r.dot(&u) * dt;
                    if !want_grad {
                        continue;
                    }
                    let lambda = &u * dt;
                    if let Some(st) = &st {
                        let direct = st.transpose() * &lambda;
                        for l in 0..p {
                            g_fdot[j * p + l] -= direct[l];
                        }
                    }
                    let dmu = self.coeffs.mu_map().jacobian(yj);
                    let dsig = self.coeffs.sigma_map().jacobian(yj);
                    for l in 0..p {
                        let da = jacobian_of_a(&sigma, &dsig[l]);
                        adj_y[j * p + l] -=
                            lambda.dot(&dmu[l].column(0)) + 0.5 * dt * u.dot(&(da * &u));
                    }
                    if let Some(b) = anchor {
                        let dst = self.coeffs.sigma_tilde_map().jacobian(y.node(b));
                        for l in 0..p {
                            adj_y[b * p + l] -= lambda.dot(&(&dst[l] * &fd));
                        }
                    }
                }
                val
            }
            Target::Terminal { z } => {
                let mut a_sum = DMatrix::zeros(d, d);
                let mut m_sum = DVector::zeros(d);
                let mut phi_t = DVector::zeros(d);
                for j in 0..n {
                    let yj = y.node(j);
                    let sigma = self.coeffs.sigma(yj);
                    a_sum += (&sigma * sigma.transpose()) * dt;
                    m_sum += self.coeffs.mu(yj) * dt;
                    let fd = DVector::from_column_slice(f.step_derivative(j));
                    phi_t += self.coeffs.sigma_tilde(yj) * fd * dt;
                }
                let lmin = SymmetricEigen::new(a_sum.clone()).eigenvalues.min();
                if !(lmin >= TERMINAL_EIGEN_TOLERANCE) {
                    return Err(Error::SingularTerminal(lmin));
                }
                let a_inv = a_sum.try_inverse().ok_or(Error::SingularTerminal(lmin))?;
                let w = z - phi_t - m_sum;
                let u = &a_inv * &w;
                if want_grad {
                    for j in 0..n {
                        let yj = y.node(j);
                        let sigma = self.coeffs.sigma(yj);
                        let st = self.coeffs.sigma_tilde(yj);
                        let fd = DVector::from_column_slice(f.step_derivative(j));
                        let direct = st.transpose() * &u;
                        for l in 0..p {
                            g_fdot[j * p + l] -= direct[l] * dt;
                        }
                        let dmu = self.coeffs.mu_map().jacobian(yj);
                        let dsig = self.coeffs.sigma_map().jacobian(yj);
                        let dst = self.coeffs.sigma_tilde_map().jacobian(yj);
                        for l in 0..p {
                            let da = jacobian_of_a(&sigma, &dsig[l]);
                            adj_y[j * p + l] -= dt
                                * (u.dot(&dmu[l].column(0))
                                    + u.dot(&(&dst[l] * &fd))
                                    + 0.5 * u.dot(&(da * &u)));
                        }
                    }
                }
                0.5 * w.dot(&u)
            }
        };

        let value = 0.5 * v.iter().map(|x| x * x).sum::<f64>() + rate;
        let mut grad = Vec::new();
        if want_grad {
            let back = self.hat.transpose_apply(&adj_y);
            let c = 1.0 / dt.sqrt();
            grad = v
                .iter()
                .zip(g_fdot.iter().zip(&back))
                .map(|(vi, (a, b))| vi + (a + b) * c)
                .collect();
        }
        Ok(Evaluation { value, grad })
    }
}

impl Objective for RateObjective<'_> {
    fn dim(&self) -> usize {
        self.grid().n_steps() * self.coeffs.p()
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.evaluate(x, true)?;
        Ok((e.value, e.grad))
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x, false)?.value)
    }
}

impl<'a> RateObjective<'a> {
    fn new(
        coeffs: &'a ModelCoefficients,
        bank: &KernelBank,
        grid: &TimeGrid,
        target: Target<'a>,
    ) -> Result<Self> {
        if bank.p() != coeffs.p() {
            return Err(Error::Dimension(format!(
                "bank has {} factors, model has p = {}",
                bank.p(),
                coeffs.p()
            )));
        }
        match &target {
            Target::Path { x, .. } => {
                x.check_grid(grid, "rate target")?;
                if x.dim() != coeffs.d() {
                    return Err(Error::Dimension(format!(
                        "target has dim {}, model has d = {}",
                        x.dim(),
                        coeffs.d()
                    )));
                }
            }
            Target::Terminal { z } => {
                if z.len() != coeffs.d() {
                    return Err(Error::Dimension(format!(
                        "z has dim {}, model has d = {}",
                        z.len(),
                        coeffs.d()
                    )));
                }
            }
        }
        Ok(Self {
            coeffs,
            hat: HatMap::new(bank, grid)?,
            target,
        })
    }

    pub(crate) fn for_path(
        coeffs: &'a ModelCoefficients,
        bank: &KernelBank,
        x: &'a CameronMartinPath,
        block: Option<usize>,
    ) -> Result<Self> {
        Self::new(coeffs, bank, &x.grid().clone(), Target::Path { x, block })
    }

    pub(crate) fn for_terminal(
        coeffs: &'a ModelCoefficients,
        bank: &KernelBank,
        grid: &TimeGrid,
        z: &[f64],
    ) -> Result<Self> {
        Self::new(
            coeffs,
            bank,
            grid,
            Target::Terminal {
                z: DVector::from_column_slice(z),
            },
        )
    }

    fn solve(&self, opt: &OptimizerConfig) -> Result<RateSolution> {
        let grid = *self.grid();
        let p = self.coeffs.p();
        let d = self.coeffs.d();
        let n = grid.n_steps();
        let dt = grid.dt();
        let zero = vec![0.0; self.dim()];
        let upper = self.value(&zero)?;
        // ½‖f*‖² ≤ F(f*) ≤ F(0), so the minimizer lies in ‖f‖² ≤ 2F(0)
        let radius_sq = 2.0 * upper;
        let ms = minimize_multistart(self, Some(radius_sq), opt)?;
        let best = ms.best;
        let control = CameronMartinPath::from_scaled(grid, p, &best.x)?;
        let hat_path = self.hat.apply(&control)?;

        let mut phi_path = PathSample::zeros(grid, d);
        let mut inner = vec![0.0; n * d];
        match &self.target {
            Target::Path { x, block } => {
                for j in 0..n {
                    let yj = hat_path.node(j);
                    let fd = DVector::from_column_slice(control.step_derivative(j));
                    let phi_dot = match block {
                        Some(q) => self.coeffs.sigma_tilde(hat_path.node(q * (j / q))) * &fd,
                        None => DVector::zeros(d),
                    };
                    for i in 0..d {
                        let v = phi_path.get(j, i) + phi_dot[i] * dt;
                        phi_path.set(j + 1, i, v);
                    }
                    let r = DVector::from_column_slice(x.step_derivative(j))
                        - self.coeffs.mu(yj)
                        - phi_dot;
                    let ydot = self
                        .coeffs
                        .sigma(yj)
                        .lu()
                        .solve(&r)
                        .ok_or(Error::Singular { node: j, det: 0.0 })?;
                    inner[j * d..(j + 1) * d].copy_from_slice(ydot.as_slice());
                }
            }
            Target::Terminal { z } => {
                let mut a_sum = DMatrix::zeros(d, d);
                let mut m_sum = DVector::zeros(d);
                for j in 0..n {
                    let yj = hat_path.node(j);
                    let sigma = self.coeffs.sigma(yj);
                    a_sum += (&sigma * sigma.transpose()) * dt;
                    m_sum += self.coeffs.mu(yj) * dt;
                    let fd = DVector::from_column_slice(control.step_derivative(j));
                    let phi_dot = self.coeffs.sigma_tilde(yj) * fd;
                    for i in 0..d {
                        let v = phi_path.get(j, i) + phi_dot[i] * dt;
                        phi_path.set(j + 1, i, v);
                    }
                }
                let w = z - DVector::from_column_slice(phi_path.terminal()) - m_sum;
                let u = a_sum.try_inverse().ok_or(Error::SingularTerminal(0.0))? * w;
                for j in 0..n {
                    let ydot = self.coeffs.sigma(hat_path.node(j)).transpose() * &u;
                    inner[j * d..(j + 1) * d].copy_from_slice(ydot.as_slice());
                }
            }
        }

        Ok(RateSolution {
            value: best.value.max(0.0),
            control,
            hat_path,
            phi_path,
            iterations: best.iterations,
            grad_norm: best.grad_norm,
            converged: best.converged,
            upper_bound_used: upper,
            start_values: ms.start_values,
            spread_warning: ms.spread_warning,
            inner_drift: inner,
        })
    }
}

/// `I_X(x) = inf_f ½‖f‖² + J(x | f̂)`.
pub fn i_uncorrelated(
    x: &CameronMartinPath,
    bank: &KernelBank,
    coeffs: &ModelCoefficients,
    opt: &OptimizerConfig,
) -> Result<RateSolution> {
    RateObjective::for_path(coeffs, bank, x, None)?.solve(opt)
}

/// `I_Z^m(x) = inf_f ½‖f‖² + J(x − Φ^m(f, f̂) | f̂)`; needs `m | N`.
pub fn i_z_m(
    x: &CameronMartinPath,
    m: usize,
    bank: &KernelBank,
    coeffs: &ModelCoefficients,
    opt: &OptimizerConfig,
) -> Result<RateSolution> {
    let n = x.grid().n_steps();
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Divisibility { steps: n, m });
    }
    RateObjective::for_path(coeffs, bank, x, Some(n / m))?.solve(opt)
}

/// `𝓘_Z(x) = inf_f ½‖f‖² + J(x − Φ(f, f̂) | f̂)`.
pub fn i_z(
    x: &CameronMartinPath,
    bank: &KernelBank,
    coeffs: &ModelCoefficients,
    opt: &OptimizerConfig,
) -> Result<RateSolution> {
    RateObjective::for_path(coeffs, bank, x, Some(1))?.solve(opt)
}

/// Terminal rate `inf_f ½‖f‖² + ½ wᵀA_{f̂}⁻¹w`, `w = z − Φ(f, f̂)(T) − M_{f̂}`,
/// `A_{f̂} = ∫a(f̂)dt`, `M_{f̂} = ∫μ(f̂)dt`.
pub fn terminal_rate(
    z: &[f64],
    grid: &TimeGrid,
    bank: &KernelBank,
    coeffs: &ModelCoefficients,
    opt: &OptimizerConfig,
) -> Result<RateSolution> {
    RateObjective::for_terminal(coeffs, bank, grid, z)?.solve(opt)
}

/// A rate problem, used to reach the underlying objective directly.
#[derive(Debug, Clone)]
pub enum RateProblem<'a> {
    Uncorrelated {
        x: &'a CameronMartinPath,
        bank: &'a KernelBank,
        coeffs: &'a ModelCoefficients,
    },
    CorrelatedBlocks {
        x: &'a CameronMartinPath,
        m: usize,
        bank: &'a KernelBank,
        coeffs: &'a ModelCoefficients,
    },
    Correlated {
        x: &'a CameronMartinPath,
        bank: &'a KernelBank,
        coeffs: &'a ModelCoefficients,
    },
    Terminal {
        z: &'a [f64],
        grid: TimeGrid,
        bank: &'a KernelBank,
        coeffs: &'a ModelCoefficients,
    },
}

impl<'a> RateProblem<'a> {
    /// The objective in the scaled variables `v_j = ḟ_j√dt`.
    pub fn objective(&self) -> Result<RateObjective<'a>> {
        match self {
            RateProblem::Uncorrelated { x, bank, coeffs } => {
                RateObjective::for_path(coeffs, bank, x, None)
            }
            RateProblem::CorrelatedBlocks { x, m, bank, coeffs } => {
                let n = x.grid().n_steps();
                if *m == 0 || n % m != 0 {
                    return Err(Error::Divisibility { steps: n, m: *m });
                }
                RateObjective::for_path(coeffs, bank, x, Some(n / m))
            }
            RateProblem::Correlated { x, bank, coeffs } => {
                RateObjective::for_path(coeffs, bank, x, Some(1))
            }
            RateProblem::Terminal {
                z,
                grid,
                bank,
                coeffs,
            } => RateObjective::for_terminal(coeffs, bank, grid, z),
        }
    }

    /// Number of optimization variables `N·p`.
    pub fn dim(&self) -> Result<usize> {
        Ok(self.objective()?.dim())
    }
}
