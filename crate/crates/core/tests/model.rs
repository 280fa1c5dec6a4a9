use nalgebra::DMatrix;
use volterra_ldp::model::{simulate_correlated, simulate_uncorrelated, EulerSimulator, Tilt};
use volterra_ldp::stats::{mean, variance};
use volterra_ldp::{KernelBank, MatrixMap, ModelCoefficients, TimeGrid, VolterraKernel};

fn scalar(v: f64) -> MatrixMap {
    MatrixMap::Constant(DMatrix::from_element(1, 1, v))
}

fn exp_linear(c: f64, w: f64) -> MatrixMap {
    MatrixMap::ExpLinear {
        base: DMatrix::from_element(1, 1, c),
        weights: vec![w],
    }
}

fn rl_bank(h: f64) -> KernelBank {
    KernelBank::uniform(VolterraKernel::riemann_liouville(h, 1.0, 1.0).unwrap(), 1).unwrap()
}

fn within(sample: &[f64], want: f64, sd_of_mean: f64, what: &str) {
    let m = mean(sample);
    assert!(
        (m - want).abs() < 3.0 * sd_of_mean,
        "{what}: {m} vs {want} (3 se = {})",
        3.0 * sd_of_mean
    );
}

#[test]
fn constant_coefficient_terminal_law() {
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), scalar(0.0)).unwrap();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let eps = 0.3;
    let n = 100_000;
    let finals: Vec<f64> = simulate_uncorrelated(&c, &rl_bank(0.3), &grid, eps, n, 21)
        .unwrap()
        .iter()
        .map(|p| p.terminal()[0])
        .collect();
    let var_want = eps * eps;
    within(
        &finals,
        -0.5 * eps * eps,
        (var_want / n as f64).sqrt(),
        "mean of X(T)",
    );
    // Var of the sample variance of a Gaussian: 2σ⁴/(n − 1)
    let v = variance(&finals);
    let se = (2.0 * var_want * var_want / (n as f64 - 1.0)).sqrt();
    assert!(
        (v - var_want).abs() < 3.0 * se,
        "variance {v} vs {var_want}"
    );
}

#[test]
fn correlated_conditional_variance() {
    // d = p = 1, σ̃ = ρ s, σ = √(1 − ρ²) s: ΔZ given B̂ has variance ε² s(B̂)² dt
    let rho = 0.6;
    let s = exp_linear(1.0, 0.4);
    let c = ModelCoefficients::one_factor_correlated(s, scalar(0.0), rho).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let eps = 0.5;
    let n = 100_000;
    let h = grid.dt();
    let paths = simulate_correlated(&c, &rl_bank(0.3), &grid, eps, n, 8).unwrap();
    let mut standardized = Vec::with_capacity(n);
    for (z, joint) in &paths {
        let j = 5;
        let y = joint.volterra.node(j);
        let sv = (0.4 * y[0]).exp();
        let drift = -0.5 * eps * eps * sv * sv * h;
        standardized.push((z.get(j + 1, 0) - z.get(j, 0) - drift) / (eps * sv * h.sqrt()));
    }
    within(
        &standardized,
        0.0,
        (1.0 / n as f64).sqrt(),
        "standardized increment mean",
    );
    let v = variance(&standardized);
    let se = (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((v - 1.0).abs() < 3.0 * se, "conditional variance ratio {v}");
}

#[test]
fn exponential_is_a_martingale_proxy() {
    let rho = -0.5;
    let c =
        ModelCoefficients::one_factor_correlated(exp_linear(1.0, 0.5), scalar(0.0), rho).unwrap();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let n = 100_000;
    let prices: Vec<f64> = simulate_correlated(&c, &rl_bank(0.2), &grid, 0.3, n, 77)
        .unwrap()
        .iter()
        .map(|(z, _)| z.terminal()[0].exp())
        .collect();
    within(
        &prices,
        1.0,
        (variance(&prices) / n as f64).sqrt(),
        "E exp(Z(T))",
    );
}

#[test]
fn zero_tilt_is_identical_to_the_plain_path() {
    let c =
        ModelCoefficients::one_factor_correlated(exp_linear(0.8, 0.3), scalar(0.1), 0.4).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let sim = EulerSimulator::small_noise(&c, &rl_bank(0.4), &grid, 0.2, true).unwrap();
    let zero = Tilt {
        b: vec![0.0; 8],
        w: vec![0.0; 8],
    };
    for k in 0..20 {
        let (a, ja) = sim.path(3, k);
        let (b, jb, lw) = sim.path_tilted(3, k, Some(&zero));
        assert_eq!(a, b);
        assert_eq!(ja, jb);
        assert_eq!(lw, 0.0);
    }
}

#[test]
fn tilt_weights_average_to_one() {
    // E_Q[dP/dQ] = 1 for any bounded shift
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), scalar(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let sim = EulerSimulator::small_noise(&c, &rl_bank(0.5), &grid, 0.5, true).unwrap();
    let tilt = Tilt {
        b: vec![0.7; 8],
        w: vec![-0.4; 8],
    };
    let n = 50_000;
    let w: Vec<f64> = (0..n as u64)
        .map(|k| sim.path_tilted(1, k, Some(&tilt)).2.exp())
        .collect();
    within(
        &w,
        1.0,
        (variance(&w) / n as f64).sqrt(),
        "mean likelihood ratio",
    );
}
