use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volterra_ldp::asymptotics::*;
use volterra_ldp::model::simulate_correlated;
use volterra_ldp::ratefn::{terminal_rate, OptimizerConfig};
use volterra_ldp::stats::normal_cdf;
use volterra_ldp::{
    Error, KernelBank, MatrixMap, ModelCoefficients, PathSample, ScalingSchedule, TimeGrid,
    VolterraKernel,
};

fn scalar(v: f64) -> MatrixMap {
    MatrixMap::Constant(DMatrix::from_element(1, 1, v))
}

fn schilder() -> (ModelCoefficients, KernelBank, TimeGrid) {
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.0), scalar(0.0)).unwrap();
    let bank =
        KernelBank::uniform(VolterraKernel::riemann_liouville(0.5, 1.0, 1.0).unwrap(), 1).unwrap();
    (c, bank, TimeGrid::new(1.0, 4).unwrap())
}

fn half_space(b: f64) -> TailEvent {
    TailEvent::HalfSpace {
        direction: vec![1.0],
        level: b,
    }
}

/// `P(Z(1) ≥ 1)` for `Z(1) ~ N(−ε²/2, ε²)`.
fn schilder_exact(eps: f64) -> f64 {
    1.0 - normal_cdf((1.0 + 0.5 * eps * eps) / eps)
}

#[test]
fn crude_estimator_examples() {
    let (c, bank, grid) = schilder();
    let sure = estimate_tail_prob(&c, &bank, &grid, 0.3, &half_space(-1e9), 1000, 1).unwrap();
    assert_eq!(sure.p_hat, 1.0);
    assert!(sure.warning.is_some());

    let eps = 0.1;
    let est = estimate_tail_prob(
        &c,
        &bank.scaled(eps).unwrap(),
        &grid,
        eps,
        &half_space(0.0),
        20_000,
        2,
    )
    .unwrap();
    let want = normal_cdf(-0.5 * eps);
    assert!(
        (est.p_hat - want).abs() < 3.0 * est.stderr,
        "{} vs {want}",
        est.p_hat
    );

    let again = estimate_tail_prob(
        &c,
        &bank.scaled(eps).unwrap(),
        &grid,
        eps,
        &half_space(0.0),
        20_000,
        2,
    )
    .unwrap();
    assert_eq!(est, again);
    assert!(matches!(
        estimate_tail_prob(&c, &bank, &grid, 0.3, &half_space(0.0), 999, 1),
        Err(Error::Domain(_))
    ));
}

#[test]
fn event_membership() {
    let grid = TimeGrid::new(1.0, 2).unwrap();
    let z = PathSample::from_values(grid, 2, vec![0.0, 0.0, 0.5, -0.5, 1.0, 0.2]).unwrap();
    assert!(TailEvent::HalfSpace {
        direction: vec![1.0, 1.0],
        level: 1.2
    }
    .contains(&z));
    assert!(!TailEvent::HalfSpace {
        direction: vec![1.0, 1.0],
        level: 1.3
    }
    .contains(&z));
    assert!(TailEvent::Box {
        lower: vec![0.9, 0.0],
        upper: vec![1.1, 0.3]
    }
    .contains(&z));
    assert!(!TailEvent::Box {
        lower: vec![0.9, 0.3],
        upper: vec![1.1, 0.4]
    }
    .contains(&z));
    let target = PathSample::from_values(grid, 2, vec![0.0, 0.0, 0.45, -0.45, 1.0, 0.25]).unwrap();
    assert!(TailEvent::SupNormTube {
        target: target.clone(),
        radius: 0.06
    }
    .contains(&z));
    assert!(!TailEvent::SupNormTube {
        target,
        radius: 0.04
    }
    .contains(&z));
    assert!(TailEvent::HalfSpace {
        direction: vec![0.0, 0.0],
        level: 1.0
    }
    .validate(2, &grid)
    .is_err());
}

#[test]
fn slope_regression_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = [0.5, 0.4, 0.3, 0.25, 0.2];
    let c = 0.8;
    let probs: Vec<(f64, f64)> = eps
        .iter()
        .map(|e: &f64| {
            let p = (-c / (e * e)).exp() * (1.0 + 0.01 * rng.random_range(-1.0..1.0));
            (p, 0.01 * p)
        })
        .collect();
    let s = ldp_slope(&eps, &probs).unwrap();
    assert!((s.slope / c - 1.0).abs() < 0.05, "{}", s.slope);
    assert!(s.r_squared > 0.99 && s.r_squared <= 1.0);
}

#[test]
fn zero_control_reproduces_crude_estimate() {
    let (c, bank, grid) = schilder();
    let control = terminal_rate(&[0.0], &grid, &bank, &c, &OptimizerConfig::default()).unwrap();
    assert!(control.converged);
    assert!(control.inner_drift.iter().all(|v| v.abs() < 1e-12));
    let eps = 0.3;
    let driver = small_noise_bank(&bank, eps).unwrap();
    let crude = estimate_tail_prob(&c, &driver, &grid, eps, &half_space(0.2), 5000, 6).unwrap();
    let tilted =
        tilted_estimate(&c, &driver, &grid, eps, &half_space(0.2), &control, 5000, 6).unwrap();
    assert_eq!(crude.p_hat, tilted.p_hat);
    assert_eq!(crude.hits, tilted.hits);
}

#[test]
fn unconverged_control_is_rejected() {
    let (c, bank, grid) = schilder();
    let mut control = terminal_rate(&[1.0], &grid, &bank, &c, &OptimizerConfig::default()).unwrap();
    control.converged = false;
    let r = tilted_estimate(&c, &bank, &grid, 0.2, &half_space(1.0), &control, 1000, 1);
    assert!(matches!(r, Err(Error::Validation(_))));
}

#[test]
fn schilder_tilting_reduces_variance() {
    let (c, bank, grid) = schilder();
    let control = terminal_rate(&[1.0], &grid, &bank, &c, &OptimizerConfig::default()).unwrap();
    assert!((control.value - 0.5).abs() < 1e-8);
    let eps = 0.2;
    let driver = small_noise_bank(&bank, eps).unwrap();
    let est = tilted_estimate(
        &c,
        &driver,
        &grid,
        eps,
        &half_space(1.0),
        &control,
        100_000,
        3,
    )
    .unwrap();
    let want = schilder_exact(eps);
    assert!(
        (est.p_hat - want).abs() < 3.0 * est.stderr,
        "{} vs {want} ± {}",
        est.p_hat,
        est.stderr
    );
    assert!(est.stderr_ratio() < 0.3, "ratio {}", est.stderr_ratio());
    assert!(est.warning.is_none());
}

#[test]
fn crude_and_tilted_agree_where_both_hit() {
    let (c, bank, grid) = schilder();
    let control = terminal_rate(&[1.0], &grid, &bank, &c, &OptimizerConfig::default()).unwrap();
    for eps in [0.5, 0.4] {
        let driver = small_noise_bank(&bank, eps).unwrap();
        let crude =
            estimate_tail_prob(&c, &driver, &grid, eps, &half_space(1.0), 100_000, 8).unwrap();
        let tilted = tilted_estimate(
            &c,
            &driver,
            &grid,
            eps,
            &half_space(1.0),
            &control,
            100_000,
            9,
        )
        .unwrap();
        assert!(crude.hits >= 50 && tilted.hits >= 50);
        let combined = (crude.stderr.powi(2) + tilted.stderr.powi(2)).sqrt();
        assert!(
            (crude.p_hat - tilted.p_hat).abs() < 3.0 * combined,
            "eps {eps}: {crude:?} vs {tilted:?}"
        );
    }
}

#[test]
fn schilder_slope_approaches_target_over_nested_schedules() {
    let (c, bank, grid) = schilder();
    let control = terminal_rate(&[1.0], &grid, &bank, &c, &OptimizerConfig::default()).unwrap();
    let schedules: [&[f64]; 3] = [
        &[0.5, 0.4, 0.3, 0.25],
        &[0.4, 0.3, 0.25, 0.2],
        &[0.25, 0.2, 0.15, 0.1],
    ];
    let mut gaps = Vec::new();
    for eps in schedules {
        let est = estimate_over_schedule(
            &c,
            &bank,
            &grid,
            eps,
            &half_space(1.0),
            Estimator::Tilted(&control),
            20_000,
            12,
        )
        .unwrap();
        let pairs: Vec<(f64, f64)> = est.iter().map(|e| (e.p_hat, e.stderr)).collect();
        gaps.push((ldp_slope(eps, &pairs).unwrap().slope - control.value).abs());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn short_time_requires_zero_drift() {
    let c = ModelCoefficients::new(1, 1, scalar(0.1), scalar(1.0), scalar(0.0)).unwrap();
    let bank =
        KernelBank::uniform(VolterraKernel::riemann_liouville(0.3, 1.0, 1.0).unwrap(), 1).unwrap();
    let sched = ScalingSchedule::power_law(vec![0.1], 0.3).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    assert!(matches!(
        short_time_sample(&c, &bank, &grid, 0, &sched, 10, 1),
        Err(Error::Validation(_))
    ));
}

#[test]
fn unit_scaling_reproduces_correlated_simulation() {
    let c = ModelCoefficients::one_factor_correlated(
        MatrixMap::ExpLinear {
            base: DMatrix::from_element(1, 1, 0.8),
            weights: vec![0.5],
        },
        scalar(0.0),
        0.3,
    )
    .unwrap();
    let bank =
        KernelBank::uniform(VolterraKernel::riemann_liouville(0.3, 1.0, 1.0).unwrap(), 1).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let sched = ScalingSchedule::explicit(vec![1.0], vec![1.0], vec![1.0]).unwrap();
    let a = short_time_sample(&c, &bank, &grid, 0, &sched, 50, 4).unwrap();
    let b = simulate_correlated(&c, &bank, &grid, 1.0, 50, 4).unwrap();
    for (x, (y, _)) in a.iter().zip(&b) {
        assert!(x.sup_distance(y).unwrap() < 1e-12);
    }
}

#[test]
fn constant_sigma_short_time_variance() {
    let c = ModelCoefficients::new(1, 1, scalar(0.0), scalar(1.5), scalar(0.0)).unwrap();
    let bank =
        KernelBank::uniform(VolterraKernel::riemann_liouville(0.3, 1.0, 1.0).unwrap(), 1).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let sched = ScalingSchedule::power_law(vec![0.5, 0.1, 0.01], 0.3).unwrap();
    let n = 100_000;
    let paths = short_time_sample(&c, &bank, &grid, 1, &sched, n, 10).unwrap();
    let finals: Vec<f64> = paths.iter().map(|p| p.terminal()[0]).collect();
    let v = volterra_ldp::stats::variance(&finals);
    let want = sched.epsilon[1].powi(2) * 1.5 * 1.5;
    let se = want * (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((v - want).abs() < 3.0 * se, "{v} vs {want}");
}

#[test]
fn rescaled_and_direct_routes_agree() {
    let c = ModelCoefficients::one_factor_correlated(
        MatrixMap::ExpLinear {
            base: DMatrix::from_element(1, 1, 1.0),
            weights: vec![0.5],
        },
        scalar(0.0),
        -0.4,
    )
    .unwrap();
    let bank =
        KernelBank::uniform(VolterraKernel::riemann_liouville(0.3, 1.0, 1.0).unwrap(), 1).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let sched = ScalingSchedule::power_law(vec![0.1, 0.01], 0.3).unwrap();
    let rescaled = short_time_sample(&c, &bank, &grid, 1, &sched, 10_000, 5).unwrap();
    // the same seed on the same grid couples the two routes path by path
    let coupled = short_time_direct(&c, &bank, &grid, 1, &sched, 1, 10_000, 5).unwrap();
    let report = equivalence_diagnostic(&rescaled, &coupled).unwrap();
    assert!(report.exceedance.iter().all(|&e| e == 0.0), "{report:?}");
    let fine = short_time_direct(&c, &bank, &grid, 1, &sched, 4, 10_000, 6).unwrap();
    let report = equivalence_diagnostic(&rescaled, &fine).unwrap();
    assert!(report.ks[0].p_value > 0.01, "{report:?}");
}

#[test]
fn ks_diagnostic_calibration() {
    let (c, bank, grid) = schilder();
    let sched = ScalingSchedule::explicit(vec![1.0], vec![0.5], vec![1.0]).unwrap();
    let mut below = 0;
    for r in 0..100u64 {
        let a = short_time_sample(&c, &bank, &grid, 0, &sched, 300, r << 20).unwrap();
        let b = short_time_sample(&c, &bank, &grid, 0, &sched, 300, (r << 20) + 1).unwrap();
        let ks = &equivalence_diagnostic(&a, &b).unwrap().ks[0];
        if ks.statistic < ks.critical_value(0.01) {
            below += 1;
        }
    }
    assert!(below >= 95, "{below} of 100 below the critical value");

    let wide = ModelCoefficients::new(1, 1, scalar(0.0), scalar(2.0), scalar(0.0)).unwrap();
    let a = short_time_sample(&c, &bank, &grid, 0, &sched, 2000, 1).unwrap();
    let b = short_time_sample(&wide, &bank, &grid, 0, &sched, 2000, 2).unwrap();
    let ks = &equivalence_diagnostic(&a, &b).unwrap().ks[0];
    assert!(ks.p_value < 0.01, "{ks:?}");
}
