use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volterra_ldp::optim::{finite_difference_gradient, Objective};
use volterra_ldp::ratefn::*;
use volterra_ldp::{
    Error, KernelBank, MatrixMap, ModelCoefficients, PathSample, TimeGrid, VolterraKernel,
};

fn scalar(v: f64) -> MatrixMap {
    MatrixMap::Constant(DMatrix::from_element(1, 1, v))
}

fn affine1(c: f64, s: f64) -> MatrixMap {
    MatrixMap::Affine {
        base: DMatrix::from_element(1, 1, c),
        slopes: vec![DMatrix::from_element(1, 1, s)],
    }
}

fn rl(h: f64, p: usize, horizon: f64) -> KernelBank {
    KernelBank::uniform(
        VolterraKernel::riemann_liouville(h, 1.0, horizon).unwrap(),
        p,
    )
    .unwrap()
}

#[test]
fn gamma_examples() {
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let a = vec![DMatrix::from_element(1, 1, 1.0); 11];
    let zero = CameronMartinPath::zeros(grid, 1);
    assert_eq!(gamma_functional(&zero, &a).unwrap(), 0.0);
    let x = CameronMartinPath::straight_line(grid, &[1.0]).unwrap();
    assert!((gamma_functional(&x, &a).unwrap() - 0.5).abs() < 1e-14);
    let wrong = vec![DMatrix::from_element(2, 2, 1.0); 11];
    assert!(matches!(
        gamma_functional(&x, &wrong),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn j_rate_examples() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let phi = PathSample::from_fn(grid, 1, |t| vec![t]);
    // ẋ = μ(φ)
    let c = ModelCoefficients::new(1, 1, affine1(0.2, 1.0), scalar(1.3), scalar(0.0)).unwrap();
    let x = CameronMartinPath::from_derivative_fn(grid, 1, |t| vec![0.2 + t]).unwrap();
    assert!(j_rate(&x, &phi, &c).unwrap().abs() < 1e-14);
    // straight line, a ≡ 1: z²/(2T)
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), scalar(0.0)).unwrap();
    let grid2 = TimeGrid::new(2.0, 8).unwrap();
    let x = CameronMartinPath::straight_line(grid2, &[1.5]).unwrap();
    let phi2 = PathSample::zeros(grid2, 1);
    assert!((j_rate(&x, &phi2, &c).unwrap() - 1.5 * 1.5 / 4.0).abs() < 1e-14);
    // a = diag(4, 1), ẋ = (1, 1): ½(1/4 + 1)
    let sigma = MatrixMap::Constant(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        2.0, 1.0,
    ])));
    let c = ModelCoefficients::new(2, 1, MatrixMap::zeros(2, 1), sigma, MatrixMap::zeros(2, 1))
        .unwrap();
    let x = CameronMartinPath::straight_line(grid, &[1.0, 1.0]).unwrap();
    assert!((j_rate(&x, &PathSample::zeros(grid, 1), &c).unwrap() - 0.625).abs() < 1e-14);
}

#[test]
fn hat_map_examples() {
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let zero = CameronMartinPath::zeros(grid, 1);
    assert!(hat_map(&zero, &rl(0.3, 1, 1.0))
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 0.0));

    let f = CameronMartinPath::from_derivative_fn(grid, 1, |t| vec![(3.0 * t).sin()]).unwrap();
    assert_eq!(hat_map(&f, &rl(0.5, 1, 1.0)).unwrap(), f.values());

    let one = CameronMartinPath::straight_line(grid, &[1.0]).unwrap();
    let hat = hat_map(&one, &rl(0.75, 1, 1.0)).unwrap();
    for i in (5..=50).step_by(5) {
        let t = grid.node(i);
        assert!((hat.get(i, 0) - t.powf(1.25) / 1.25).abs() < 1e-4);
    }
}

#[test]
fn phi_m_examples() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let f = CameronMartinPath::straight_line(grid, &[1.0]).unwrap();
    let g = PathSample::from_fn(grid, 1, |t| vec![t]);
    // σ̃(y) = y, m = 2: 0·(f(½) − f(0)) + ½·(f(1) − f(½))
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), affine1(0.0, 1.0)).unwrap();
    let pm = phi_m(&f, &g, 2, &c).unwrap();
    assert!((pm.terminal()[0] - 0.25).abs() < 1e-14);
    assert!(matches!(
        phi_m(&f, &g, 3, &c),
        Err(Error::Divisibility { steps: 8, m: 3 })
    ));

    // constant σ̃: Φ^m = c·f for every m
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), scalar(0.7)).unwrap();
    let f = CameronMartinPath::from_derivative_fn(grid, 1, |t| vec![1.0 + t * t]).unwrap();
    let fv = f.values();
    for m in [1, 2, 4, 8] {
        let pm = phi_m(&f, &g, m, &c).unwrap();
        for i in 0..=8 {
            assert!((pm.get(i, 0) - 0.7 * fv.get(i, 0)).abs() < 1e-14);
        }
    }
    let zero = CameronMartinPath::zeros(grid, 1);
    assert!(phi_m(&zero, &g, 4, &c)
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 0.0));
    assert!(phi(&zero, &rl(0.3, 1, 1.0), &c)
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn j_m_examples() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let f = CameronMartinPath::straight_line(grid, &[1.0]).unwrap();
    let g = PathSample::from_fn(grid, 1, |t| vec![t]);
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), affine1(0.0, 1.0)).unwrap();
    // x = Φ^m(f, g)
    let x = CameronMartinPath::from_path(&phi_m(&f, &g, 2, &c).unwrap()).unwrap();
    assert!(j_m_correlated(&x, &f, &g, 2, &c).unwrap() < 1e-14);
    // x(t) = t: Φ̇^m = 0 on [0, ½), ½ on [½, 1]; ½∫(1 − Φ̇^m)² = ½(½ + ¼·½) = 0.3125
    let x = CameronMartinPath::straight_line(grid, &[1.0]).unwrap();
    assert!((j_m_correlated(&x, &f, &g, 2, &c).unwrap() - 0.3125).abs() < 1e-14);
    // σ̃ ≡ 0 reduces to J
    let c0 = c.uncorrelated();
    assert_eq!(
        j_m_correlated(&x, &f, &g, 2, &c0).unwrap(),
        j_rate(&x, &g, &c0).unwrap()
    );
}

#[test]
fn uncorrelated_rate_examples() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let opt = OptimizerConfig::default();
    // ẋ = μ constant: value 0 at f = 0
    let s = MatrixMap::ExpLinear {
        base: DMatrix::from_element(1, 1, 0.5),
        weights: vec![1.0],
    };
    let c = ModelCoefficients::new(1, 1, scalar(0.3), s, scalar(0.0)).unwrap();
    let x = CameronMartinPath::straight_line(grid, &[0.3]).unwrap();
    let sol = i_uncorrelated(&x, &rl(0.3, 1, 1.0), &c, &opt).unwrap();
    assert!(sol.value < 1e-14 && sol.control.h1_norm_sq() < 1e-14);

    // constant σ = s: ∫ẋ²/(2s²)
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(0.8), scalar(0.0)).unwrap();
    let x = CameronMartinPath::from_derivative_fn(grid, 1, |t| vec![1.0 + t]).unwrap();
    let exact: f64 = x.derivative().iter().map(|v| v * v).sum::<f64>() * grid.dt() / (2.0 * 0.64);
    for bank in [rl(0.3, 1, 1.0), rl(0.75, 1, 1.0)] {
        let sol = i_uncorrelated(&x, &bank, &c, &opt).unwrap();
        assert!((sol.value - exact).abs() < 1e-6);
        assert!(sol.value <= sol.upper_bound_used + 1e-9);
    }
}

#[test]
fn correlated_rate_reduces_when_uncorrelated() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let opt = OptimizerConfig::default();
    let s = MatrixMap::ExpLinear {
        base: DMatrix::from_element(1, 1, 0.6),
        weights: vec![0.8],
    };
    let c = ModelCoefficients::new(1, 1, scalar(0.0), s, scalar(0.0)).unwrap();
    let x = CameronMartinPath::straight_line(grid, &[0.5]).unwrap();
    let bank = rl(0.3, 1, 1.0);
    let a = i_uncorrelated(&x, &bank, &c, &opt).unwrap();
    for m in [2, 4, 16] {
        let b = i_z_m(&x, m, &bank, &c, &opt).unwrap();
        assert!(
            (a.value - b.value).abs() < 1e-9,
            "m={m}: {} vs {}",
            a.value,
            b.value
        );
    }
    assert!(matches!(
        i_z_m(&x, 5, &bank, &c, &opt),
        Err(Error::Divisibility { steps: 16, m: 5 })
    ));
}

#[test]
fn constant_coefficients_give_zero_control() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let c = ModelCoefficients::new(1, 1, scalar(0.1), scalar(0.5), scalar(0.0)).unwrap();
    let x = CameronMartinPath::straight_line(grid, &[1.0]).unwrap();
    let sol = i_z(&x, &rl(0.3, 1, 1.0), &c, &OptimizerConfig::default()).unwrap();
    assert!(sol.control.h1_norm_sq().sqrt() < 1e-4);
    assert!((sol.value - 0.81 / (2.0 * 0.25)).abs() < 1e-9);
}

#[test]
fn terminal_examples() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let opt = OptimizerConfig::default();
    let c = ModelCoefficients::new(
        2,
        2,
        MatrixMap::zeros(2, 1),
        MatrixMap::identity(2),
        MatrixMap::zeros(2, 2),
    )
    .unwrap();
    let sol = terminal_rate(&[1.0, 1.0], &grid, &rl(0.3, 2, 1.0), &c, &opt).unwrap();
    assert!((sol.value - 1.0).abs() < 1e-12);
    assert!(sol.control.h1_norm_sq() < 1e-12);

    // σ = s·I, μ = m₀: ‖z − m₀T‖²/(2s²T)
    let grid = TimeGrid::new(2.0, 16).unwrap();
    let c = ModelCoefficients::new(
        2,
        1,
        MatrixMap::Constant(DMatrix::from_column_slice(2, 1, &[0.2, -0.1])),
        MatrixMap::Constant(DMatrix::identity(2, 2) * 0.7),
        MatrixMap::zeros(2, 1),
    )
    .unwrap();
    let z = [0.9, 0.4];
    let expect = ((0.9 - 0.4f64).powi(2) + (0.4 + 0.2f64).powi(2)) / (2.0 * 0.49 * 2.0);
    let sol = terminal_rate(&z, &grid, &rl(0.3, 1, 2.0), &c, &opt).unwrap();
    assert!((sol.value - expect).abs() < 1e-6);

    // singular A
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(0.0), scalar(0.0)).unwrap();
    assert!(matches!(
        terminal_rate(&[1.0], &grid, &rl(0.3, 1, 2.0), &c, &opt),
        Err(Error::SingularTerminal(_))
    ));
}

#[test]
fn terminal_rate_below_pathwise_rate() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let opt = OptimizerConfig::default();
    let bank = rl(0.3, 1, 1.0);
    let s = MatrixMap::ExpLinear {
        base: DMatrix::from_element(1, 1, 0.5),
        weights: vec![0.6],
    };
    let st = MatrixMap::ExpLinear {
        base: DMatrix::from_element(1, 1, -0.3),
        weights: vec![0.6],
    };
    let c = ModelCoefficients::new(1, 1, scalar(0.0), s, st).unwrap();
    let x = CameronMartinPath::straight_line(grid, &[0.8]).unwrap();
    let path = i_z(&x, &bank, &c, &opt).unwrap();
    let term = terminal_rate(&[0.8], &grid, &bank, &c, &opt).unwrap();
    assert!(
        term.value <= path.value + 1e-6,
        "{} > {}",
        term.value,
        path.value
    );
}

#[test]
fn terminal_grid_refinement_is_monotone() {
    let c = ModelCoefficients::new(1, 1, scalar(0.1), scalar(0.5), scalar(0.0)).unwrap();
    let closed = (1.0 - 0.1f64).powi(2) / (2.0 * 0.25);
    let mut errs = Vec::new();
    for n in [16, 64, 256] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let sol = terminal_rate(
            &[1.0],
            &grid,
            &rl(0.3, 1, 1.0),
            &c,
            &OptimizerConfig::default(),
        )
        .unwrap();
        errs.push((sol.value - closed).abs());
    }
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{errs:?}");
}

fn random_control(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.8..0.8)).collect()
}

#[test]
fn adjoint_gradients_match_finite_differences() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let bank = KernelBank::new(vec![
        VolterraKernel::riemann_liouville(0.3, 1.0, 1.0).unwrap(),
        VolterraKernel::riemann_liouville(0.7, 0.8, 1.0).unwrap(),
    ])
    .unwrap();
    let mu = MatrixMap::Affine {
        base: DMatrix::from_column_slice(2, 1, &[0.1, -0.2]),
        slopes: vec![
            DMatrix::from_column_slice(2, 1, &[0.3, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, -0.4]),
        ],
    };
    let sigma = MatrixMap::ExpLinear {
        base: DMatrix::from_row_slice(2, 2, &[0.8, 0.1, -0.2, 0.6]),
        weights: vec![0.4, -0.3],
    };
    let st = MatrixMap::Affine {
        base: DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, -0.2]),
        slopes: vec![
            DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.3]),
            DMatrix::from_row_slice(2, 2, &[-0.1, 0.0, 0.2, 0.1]),
        ],
    };
    let c = ModelCoefficients::new(2, 2, mu, sigma, st).unwrap();
    let x = CameronMartinPath::from_derivative_fn(grid, 2, |t| vec![0.5 + t, -0.3 * t]).unwrap();
    let z = [0.7, -0.4];
    let problems = [
        RateProblem::Uncorrelated {
            x: &x,
            bank: &bank,
            coeffs: &c,
        },
        RateProblem::CorrelatedBlocks {
            x: &x,
            m: 2,
            bank: &bank,
            coeffs: &c,
        },
        RateProblem::Correlated {
            x: &x,
            bank: &bank,
            coeffs: &c,
        },
        RateProblem::Terminal {
            z: &z,
            grid,
            bank: &bank,
            coeffs: &c,
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for problem in &problems {
        let obj = problem.objective().unwrap();
        for _ in 0..10 {
            let v = random_control(&mut rng, obj.dim());
            let (_, g) = obj.value_grad(&v).unwrap();
            let fd = finite_difference_gradient(&obj, &v, 1e-5).unwrap();
            let scale = g.iter().map(|x| x.abs()).fold(1e-8, f64::max);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-4 * scale, "{problem:?}: {a} vs {b}");
            }
        }
    }
}
