use volterra_ldp::gaussian::{
    covariance_matrix, empirical_covariance_with_stderr, sample_joint_paths, CholeskySampler,
    Component, ConvolutionScheme, JointSampler,
};
use volterra_ldp::stats::{ks_two_sample, skew_kurtosis, variance, weighted_linear_fit};
use volterra_ldp::{KernelBank, TimeGrid, VolterraKernel};

fn bank_of(k: VolterraKernel) -> KernelBank {
    KernelBank::uniform(k, 1).unwrap()
}

#[test]
fn covariance_structure() {
    let grid = TimeGrid::new(0.5, 8).unwrap();
    let bank = KernelBank::new(vec![
        VolterraKernel::riemann_liouville(0.3, 1.0, 0.5).unwrap(),
        VolterraKernel::molchan_golosov(0.7, 1.0, 0.5).unwrap(),
    ])
    .unwrap();
    let cov = covariance_matrix(&bank, &grid, 256).unwrap();
    for (l, k) in bank.kernels().iter().enumerate() {
        for i in 1..=8 {
            let slice = k.l2_slice(grid.node(i), 256).unwrap();
            assert!((cov.entry(l, i, l, i) - slice).abs() <= 1e-12 * slice.max(1.0));
            for j in 1..=8 {
                assert_eq!(cov.entry(l, i, 1 - l, j), 0.0);
                assert_eq!(cov.entry(l, i, l, j), cov.entry(l, j, l, i));
            }
        }
    }
    assert!(cov.min_eigenvalue() >= -1e-10 * cov.trace());
}

#[test]
fn covariance_is_psd_for_every_family() {
    let grid = TimeGrid::new(0.5, 12).unwrap();
    for k in [
        VolterraKernel::riemann_liouville(0.1, 1.0, 0.5).unwrap(),
        VolterraKernel::molchan_golosov(0.2, 1.0, 0.5).unwrap(),
        VolterraKernel::log_fbm(0.3, 2.0, 1.0, 0.5).unwrap(),
        VolterraKernel::fractional_ou(0.8, 1.0, 1.0, 0.5).unwrap(),
    ] {
        let cov = covariance_matrix(&bank_of(k.clone()), &grid, 128).unwrap();
        assert!(
            cov.min_eigenvalue() >= -1e-10 * cov.trace(),
            "{}",
            k.label()
        );
    }
}

#[test]
fn terminal_variance_within_three_stderr() {
    let grid = TimeGrid::new(0.5, 16).unwrap();
    for k in [
        VolterraKernel::molchan_golosov(0.3, 1.0, 0.5).unwrap(),
        VolterraKernel::log_fbm(0.4, 2.0, 1.0, 0.5).unwrap(),
        VolterraKernel::fractional_ou(0.7, 1.0, 1.0, 0.5).unwrap(),
    ] {
        let bank = bank_of(k.clone());
        let target = covariance_matrix(&bank, &grid, 512)
            .unwrap()
            .entry(0, 16, 0, 16);
        let paths = sample_joint_paths(&bank, &grid, 20_000, 5).unwrap();
        let (cov, se) = empirical_covariance_with_stderr(&paths, Component::Volterra).unwrap();
        let dev = (cov[(15, 15)] - target).abs();
        assert!(
            dev < 3.0 * se[(15, 15)],
            "{}: {} vs {target} (se {})",
            k.label(),
            cov[(15, 15)],
            se[(15, 15)]
        );
    }
}

#[test]
fn hybrid_scheme_tracks_quadrature_variance() {
    // the hybrid weights carry a small discretization bias, so only a loose check
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let bank = bank_of(VolterraKernel::riemann_liouville(0.3, 1.0, 1.0).unwrap());
    let sampler = JointSampler::new(&bank, &grid, 256, ConvolutionScheme::Hybrid).unwrap();
    let samples = sampler.sample(20_000, 3);
    let finals: Vec<f64> = samples.iter().map(|s| s.volterra.terminal()[0]).collect();
    let want = 1.0 / 0.6;
    assert!((variance(&finals) / want - 1.0).abs() < 0.05);
}

#[test]
fn gaussianity_proxy() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    for h in [0.3, 0.75] {
        let bank = bank_of(VolterraKernel::riemann_liouville(h, 1.0, 1.0).unwrap());
        let finals: Vec<f64> = sample_joint_paths(&bank, &grid, 100_000, 17)
            .unwrap()
            .iter()
            .map(|s| s.volterra.terminal()[0])
            .collect();
        let (skew, kurt) = skew_kurtosis(&finals);
        assert!(skew.abs() < 0.05, "H = {h}: skew {skew}");
        assert!((kurt - 3.0).abs() < 0.1, "H = {h}: kurtosis {kurt}");
    }
}

#[test]
fn holder_proxy_scaling() {
    // median of max_i |B̂(t_{i+1}) − B̂(t_i)| ~ dt^{α/2}, up to a √log N factor
    for h in [0.3, 0.5] {
        let k = VolterraKernel::riemann_liouville(h, 1.0, 1.0).unwrap();
        let target = k.holder_alpha() / 2.0;
        let bank = bank_of(k);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for n in [64, 128, 256, 512] {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let mut stats: Vec<f64> = sample_joint_paths(&bank, &grid, 200, 9)
                .unwrap()
                .iter()
                .map(|s| {
                    (0..n)
                        .map(|i| (s.volterra.get(i + 1, 0) - s.volterra.get(i, 0)).abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            stats.sort_by(f64::total_cmp);
            x.push(grid.dt().ln());
            y.push(stats[stats.len() / 2].ln());
        }
        let fit = weighted_linear_fit(&x, &y, &[1.0; 4]).unwrap();
        assert!(
            (fit.slope - target).abs() < 0.15,
            "H = {h}: slope {} vs {target}",
            fit.slope
        );
    }
}

#[test]
fn cholesky_cross_check_agrees_at_terminal_time() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let bank = bank_of(VolterraKernel::molchan_golosov(0.4, 1.0, 1.0).unwrap());
    let cov = covariance_matrix(&bank, &grid, 512).unwrap();
    let chol: Vec<f64> = CholeskySampler::new(&cov)
        .sample(20_000, 1)
        .iter()
        .map(|p| p.terminal()[0])
        .collect();
    let conv: Vec<f64> = sample_joint_paths(&bank, &grid, 20_000, 2)
        .unwrap()
        .iter()
        .map(|s| s.volterra.terminal()[0])
        .collect();
    let ks = ks_two_sample(&chol, &conv).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn identical_seeds_give_identical_paths() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let bank = bank_of(VolterraKernel::fractional_ou(0.35, 0.5, 1.0, 1.0).unwrap());
    let a = sample_joint_paths(&bank, &grid, 50, 42).unwrap();
    let b = sample_joint_paths(&bank, &grid, 50, 42).unwrap();
    assert_eq!(a, b);
    let c = sample_joint_paths(&bank, &grid, 50, 43).unwrap();
    assert_ne!(a, c);
}
