use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::PathSample;
use crate::kernels::KernelBank;
use crate::model::{invert_diffusion, ModelCoefficients};

use super::cameron_martin::{CameronMartinPath, HatMap};

/// `Γ(x | A) = ½ Σ_j ẋ_jᵀ A(t_j) ẋ_j dt`, with `A` read at the left node of each step.
pub fn gamma_functional(x: &CameronMartinPath, a_path: &[DMatrix<f64>]) -> Result<f64> {
    let n = x.grid().n_steps();
    let d = x.dim();
    if a_path.len() < n {
        return Err(Error::Dimension(format!(
            "need {n} matrices, got {}",
            a_path.len()
        )));
    }
    let mut acc = 0.0;
    for (j, a) in a_path.iter().take(n).enumerate() {
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension(format!(
                "matrix at node {j} is {}x{}, expected {d}x{d}",
                a.nrows(),
                a.ncols()
            )));
        }
        let v = DVector::from_column_slice(x.step_derivative(j));
        acc += v.dot(&(a * &v));
    }
    Ok(0.5 * acc * x.grid().dt())
}

fn check_driver(phi: &PathSample, x: &CameronMartinPath, coeffs: &ModelCoefficients) -> Result<()> {
    phi.grid.ensure_same(x.grid(), "driver path")?;
    if x.dim() != coeffs.d() {
        return Err(Error::Dimension(format!(
            "target has dim {}, model has d = {}",
            x.dim(),
            coeffs.d()
        )));
    }
    if phi.dim != coeffs.p() {
        return Err(Error::Dimension(format!(
            "driver has dim {}, model has p = {}",
            phi.dim,
            coeffs.p()
        )));
    }
    Ok(())
}

/// Residual speed `ẋ_j − μ(φ(t_j)) − extra_j` and `a⁻¹(φ(t_j))` on every step.
fn residual_and_inverse(
    x: &CameronMartinPath,
    phi: &PathSample,
    coeffs: &ModelCoefficients,
    extra: Option<&PathSample>,
) -> Result<(CameronMartinPath, Vec<DMatrix<f64>>)> {
    let n = x.grid().n_steps();
    let d = x.dim();
    let dt = x.grid().dt();
    let mut r = Vec::with_capacity(n * d);
    let mut inv = Vec::with_capacity(n);
    for j in 0..n {
        let y = phi.node(j);
        let mu = coeffs.mu(y);
        for i in 0..d {
            let mut v = x.derivative_at(j, i) - mu[i];
            if let Some(e) = extra {
                v -= (e.get(j + 1, i) - e.get(j, i)) / dt;
            }
            r.push(v);
        }
        inv.push(invert_diffusion(&coeffs.a(y), j)?);
    }
    Ok((CameronMartinPath::new(*x.grid(), d, r)?, inv))
}

/// `J(x | φ) = Γ(x − ∫μ(φ) | a⁻¹(φ))`.
pub fn j_rate(x: &CameronMartinPath, phi: &PathSample, coeffs: &ModelCoefficients) -> Result<f64> {
    check_driver(phi, x, coeffs)?;
    let (r, inv) = residual_and_inverse(x, phi, coeffs, None)?;
    gamma_functional(&r, &inv)
}

/// `Φ` accumulated with `σ̃` frozen at node `anchor(j)` on step `j`.
fn frozen_integral(
    f: &CameronMartinPath,
    g: &PathSample,
    coeffs: &ModelCoefficients,
    anchor: impl Fn(usize) -> usize,
) -> Result<PathSample> {
    g.grid.ensure_same(f.grid(), "phi")?;
    if f.dim() != coeffs.p() || g.dim != coeffs.p() {
        return Err(Error::Dimension(format!(
            "phi needs p = {} dimensional f and g, got {} and {}",
            coeffs.p(),
            f.dim(),
            g.dim
        )));
    }
    let n = f.grid().n_steps();
    let d = coeffs.d();
    let dt = f.grid().dt();
    let mut out = PathSample::zeros(*f.grid(), d);
    let mut cache: Option<(usize, DMatrix<f64>)> = None;
    for j in 0..n {
        let a = anchor(j);
        if cache.as_ref().map(|c| c.0) != Some(a) {
            cache = Some((a, coeffs.sigma_tilde(g.node(a))));
        }
        let st = &cache.as_ref().expect("filled above").1;
        let fd = f.step_derivative(j);
        for i in 0..d {
            let mut inc = 0.0;
            for (l, v) in fd.iter().enumerate() {
                inc += st[(i, l)] * v;
            }
            let v = out.get(j, i) + inc * dt;
            out.set(j + 1, i, v);
        }
    }
    Ok(out)
}

/// `Φ^m(f, g)`: `σ̃` frozen at `g(kT/m)` on the `k`-th of `m` blocks.
///
/// On the grid this is `Φ^m(t_i) = Σ_{j<i} σ̃(g(t_{q⌊j/q⌋})) ḟ_j dt` with
/// `q = N/m`; a node on a block boundary belongs to the completed block.
pub fn phi_m(
    f: &CameronMartinPath,
    g: &PathSample,
    m: usize,
    coeffs: &ModelCoefficients,
) -> Result<PathSample> {
    let n = f.grid().n_steps();
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Divisibility { steps: n, m });
    }
    let q = n / m;
    frozen_integral(f, g, coeffs, |j| q * (j / q))
}

/// `Φ(f, f̂)(t_i) = Σ_{j<i} σ̃(f̂(t_j)) ḟ_j dt`.
pub fn phi(
    f: &CameronMartinPath,
    bank: &KernelBank,
    coeffs: &ModelCoefficients,
) -> Result<PathSample> {
    let hat = HatMap::new(bank, f.grid())?.apply(f)?;
    frozen_integral(f, &hat, coeffs, |j| j)
}

/// `𝓙^m(x | (f, g)) = J(x − Φ^m(f, g) | g)`.
pub fn j_m_correlated(
    x: &CameronMartinPath,
    f: &CameronMartinPath,
    g: &PathSample,
    m: usize,
    coeffs: &ModelCoefficients,
) -> Result<f64> {
    check_driver(g, x, coeffs)?;
    let pm = phi_m(f, g, m, coeffs)?;
    let (r, inv) = residual_and_inverse(x, g, coeffs, Some(&pm))?;
    gamma_functional(&r, &inv)
}
