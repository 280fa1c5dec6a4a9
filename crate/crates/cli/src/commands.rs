//! Subcommand runners. Each writes its CSV artifacts and returns a short
//! human-readable summary.

use std::path::Path;

use volterra_ldp::asymptotics::{
    equivalence_diagnostic, estimate_over_schedule, ldp_slope, short_time_direct,
    short_time_sample, Estimator,
};
use volterra_ldp::model::EulerSimulator;
use volterra_ldp::properties::run_all;
use volterra_ldp::ratefn::{
    i_uncorrelated, i_z, i_z_m, terminal_rate, CameronMartinPath, RateSolution,
};
use volterra_ldp::{PathSample, TimeGrid};

use crate::config::{Command, EstimatorKind, ExperimentConfig, Functional, PathSpec};
use crate::error::{CliError, Result};
use crate::output::{num, ArtifactDir, Table};

/// Outcome of a completed run. `failure` is set when the run finished and
/// wrote its artifacts but a check it performs did not pass.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    pub failure: Option<String>,
}

pub fn run(
    command: Command,
    cfg: &ExperimentConfig,
    seed: u64,
    out: &mut ArtifactDir,
) -> Result<Outcome> {
    cfg.require(command)?;
    match command {
        Command::KernelTable => kernel_table(cfg, out),
        Command::Simulate => simulate(cfg, seed, out),
        Command::Rate => rate(cfg, out),
        Command::TerminalRate => terminal(cfg, out),
        Command::VerifyLdp => verify_ldp(cfg, seed, out),
        Command::ShortTime => short_time(cfg, seed, out),
        Command::Selftest => selftest(cfg, seed, out),
    }
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}_{k}")).collect()
}

fn kernel_table(cfg: &ExperimentConfig, out: &mut ArtifactDir) -> Result<Outcome> {
    let grid = cfg.grid();
    let n_quad = cfg.kernel_table.n_quad;
    let mut info = Table::new([
        "factor",
        "family",
        "hurst",
        "scale",
        "holder_c",
        "holder_alpha",
    ]);
    let mut values = Table::new(["factor", "t", "s", "value"]);
    let mut slices = Table::new(["factor", "t", "l2_slice"]);
    for (l, k) in cfg.bank().kernels().iter().enumerate() {
        info.push(vec![
            l.to_string(),
            k.family().name().to_string(),
            num(k.hurst()),
            num(k.scale()),
            num(k.holder_c()),
            num(k.holder_alpha()),
        ]);
        for i in 1..=grid.n_steps() {
            let t = grid.node(i);
            for j in 0..i {
                let s = grid.node(j);
                values.push(vec![l.to_string(), num(t), num(s), num(k.eval(t, s)?)]);
            }
        }
        for t in grid.nodes() {
            slices.push(vec![l.to_string(), num(t), num(k.l2_slice(t, n_quad)?)]);
        }
    }
    out.write_table("kernels.csv", &info)?;
    out.write_table("kernel_values.csv", &values)?;
    out.write_table("l2_slices.csv", &slices)?;
    Ok(Outcome {
        summary: vec![format!(
            "{} kernels, {} kernel values, {} L2 slices",
            info.len(),
            values.len(),
            slices.len()
        )],
        failure: None,
    })
}

fn simulate(cfg: &ExperimentConfig, seed: u64, out: &mut ArtifactDir) -> Result<Outcome> {
    let params = cfg.simulate.as_ref().expect("checked by require");
    let (d, p) = (cfg.model().d(), cfg.model().p());
    let sim = EulerSimulator::small_noise(
        cfg.model(),
        cfg.bank(),
        cfg.grid(),
        params.epsilon,
        params.correlated,
    )?;
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend(numbered("z", d));
    header.extend(numbered("bhat", p));
    let mut table = Table::new(header);
    for (k, (z, joint)) in sim.simulate(params.n_paths, seed).iter().enumerate() {
        for i in 0..z.grid.n_nodes() {
            let mut row = vec![k.to_string(), num(z.grid.node(i))];
            row.extend(z.node(i).iter().map(|&v| num(v)));
            row.extend(joint.volterra.node(i).iter().map(|&v| num(v)));
            table.push(row);
        }
    }
    out.write_table("paths.csv", &table)?;
    Ok(Outcome {
        summary: vec![format!(
            "{} paths of {} nodes, epsilon = {}",
            params.n_paths,
            cfg.grid().n_nodes(),
            params.epsilon
        )],
        failure: None,
    })
}

/// Reads `t,x_1,…,x_d` rows on the grid nodes.
fn read_path(file: &Path, grid: &TimeGrid, d: usize) -> Result<CameronMartinPath> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let bad = |msg: String| CliError::config("rate.file", format!("{}: {msg}", file.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    if header.split(',').count() != d + 1 {
        return Err(bad(format!(
            "expected a header with t and {d} path columns"
        )));
    }
    let mut values = Vec::with_capacity(grid.n_nodes() * d);
    let mut n_rows = 0;
    for (i, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if fields.len() != d + 1 {
            return Err(bad(format!(
                "row {} has {} fields, expected {}",
                i + 1,
                fields.len(),
                d + 1
            )));
        }
        if i < grid.n_nodes() && (fields[0] - grid.node(i)).abs() > 1e-9 * grid.horizon() {
            return Err(bad(format!(
                "row {} is at t = {}, grid node is {}",
                i + 1,
                fields[0],
                grid.node(i)
            )));
        }
        values.extend_from_slice(&fields[1..]);
        n_rows += 1;
    }
    if n_rows != grid.n_nodes() {
        return Err(bad(format!(
            "{n_rows} rows, the grid has {} nodes",
            grid.n_nodes()
        )));
    }
    Ok(CameronMartinPath::from_path(&PathSample::from_values(
        *grid, d, values,
    )?)?)
}

fn rate(cfg: &ExperimentConfig, out: &mut ArtifactDir) -> Result<Outcome> {
    let params = cfg.rate.as_ref().expect("checked by require");
    let (grid, bank, model, opt) = (cfg.grid(), cfg.bank(), cfg.model(), &cfg.optimizer);
    let x = match &params.path {
        PathSpec::StraightLine(z) => CameronMartinPath::straight_line(*grid, z)?,
        PathSpec::File(file) => read_path(file, grid, model.d())?,
    };
    let runs: Vec<(String, Option<usize>, RateSolution)> = match params.functional {
        Functional::Uncorrelated => vec![(
            "uncorrelated".into(),
            None,
            i_uncorrelated(&x, bank, model, opt)?,
        )],
        Functional::Correlated => vec![("correlated".into(), None, i_z(&x, bank, model, opt)?)],
        Functional::Blocks => params
            .m
            .iter()
            .map(|&m| Ok(("blocks".into(), Some(m), i_z_m(&x, m, bank, model, opt)?)))
            .collect::<Result<_>>()?,
    };
    let mut table = Table::new([
        "functional",
        "m",
        "value",
        "converged",
        "iterations",
        "grad_norm",
        "control_norm_sq",
        "spread_warning",
    ]);
    let mut header = vec!["functional".to_string(), "m".to_string(), "t".to_string()];
    header.extend(numbered("f", model.p()));
    header.extend(numbered("fhat", model.p()));
    header.extend(numbered("phi", model.d()));
    let mut controls = Table::new(header);
    let mut summary = Vec::new();
    for (name, m, sol) in &runs {
        let m_field = m.map_or_else(String::new, |m| m.to_string());
        table.push(vec![
            name.clone(),
            m_field.clone(),
            num(sol.value),
            sol.converged.to_string(),
            sol.iterations.to_string(),
            num(sol.grad_norm),
            num(sol.control.h1_norm_sq()),
            sol.spread_warning.to_string(),
        ]);
        let f = sol.control.values();
        for i in 0..grid.n_nodes() {
            let mut row = vec![name.clone(), m_field.clone(), num(grid.node(i))];
            row.extend(f.node(i).iter().map(|&v| num(v)));
            row.extend(sol.hat_path.node(i).iter().map(|&v| num(v)));
            row.extend(sol.phi_path.node(i).iter().map(|&v| num(v)));
            controls.push(row);
        }
        let label = m.map_or_else(|| name.clone(), |m| format!("{name} (m = {m})"));
        summary.push(format!(
            "{label}: rate = {:.10} (converged: {})",
            sol.value, sol.converged
        ));
    }
    out.write_table("rate.csv", &table)?;
    out.write_table("rate_controls.csv", &controls)?;
    Ok(Outcome {
        summary,
        failure: None,
    })
}

fn terminal(cfg: &ExperimentConfig, out: &mut ArtifactDir) -> Result<Outcome> {
    let params = cfg.terminal_rate.as_ref().expect("checked by require");
    let d = cfg.model().d();
    let mut header = numbered("z", d);
    header.extend(["value", "converged", "iterations", "control_norm"].map(String::from));
    let mut table = Table::new(header);
    let mut summary = Vec::new();
    for z in &params.points {
        let sol = terminal_rate(z, cfg.grid(), cfg.bank(), cfg.model(), &cfg.optimizer)?;
        let mut row: Vec<String> = z.iter().map(|&v| num(v)).collect();
        row.extend([
            num(sol.value),
            sol.converged.to_string(),
            sol.iterations.to_string(),
            num(sol.control.h1_norm_sq().sqrt()),
        ]);
        table.push(row);
        summary.push(format!("z = {z:?}: rate = {:.10}", sol.value));
    }
    out.write_table("terminal_rate.csv", &table)?;
    Ok(Outcome {
        summary,
        failure: None,
    })
}

fn verify_ldp(cfg: &ExperimentConfig, seed: u64, out: &mut ArtifactDir) -> Result<Outcome> {
    let params = cfg.verify_ldp.as_ref().expect("checked by require");
    let (grid, bank, model) = (cfg.grid(), cfg.bank(), cfg.model());
    let target = terminal_rate(&params.target, grid, bank, model, &cfg.optimizer)?;
    let estimator = match params.estimator {
        EstimatorKind::Crude => Estimator::Crude,
        EstimatorKind::Tilted => Estimator::Tilted(&target),
    };
    let estimates = estimate_over_schedule(
        model,
        bank,
        grid,
        &params.epsilons,
        &params.event,
        estimator,
        params.n_paths,
        seed,
    )?;
    let mut table = Table::new(["epsilon", "p_hat", "stderr", "minus_log_p", "eps_inv_sq"]);
    let mut summary = Vec::new();
    for (eps, est) in params.epsilons.iter().zip(&estimates) {
        table.push(vec![
            num(*eps),
            num(est.p_hat),
            num(est.stderr),
            num(-est.p_hat.ln()),
            num(eps.powi(-2)),
        ]);
        if let Some(w) = &est.warning {
            summary.push(format!("warning at epsilon = {eps}: {w}"));
        }
    }
    out.write_table("verify_ldp.csv", &table)?;
    let pairs: Vec<(f64, f64)> = estimates.iter().map(|e| (e.p_hat, e.stderr)).collect();
    let fit = ldp_slope(&params.epsilons, &pairs)?;
    let gap = (fit.slope - target.value).abs() / target.value.abs();
    let mut block = Table::new([
        "slope",
        "target_rate",
        "relative_gap",
        "r_squared",
        "n_points",
    ]);
    block.push(vec![
        num(fit.slope),
        num(target.value),
        num(gap),
        num(fit.r_squared),
        fit.epsilons.len().to_string(),
    ]);
    out.write_table("verify_ldp_summary.csv", &block)?;
    summary.push(format!(
        "slope = {:.6}, target rate = {:.6}, relative gap = {:.2}%",
        fit.slope,
        target.value,
        100.0 * gap
    ));
    Ok(Outcome {
        summary,
        failure: None,
    })
}

fn short_time(cfg: &ExperimentConfig, seed: u64, out: &mut ArtifactDir) -> Result<Outcome> {
    let params = cfg.short_time.as_ref().expect("checked by require");
    let sched = cfg.schedule.as_ref().expect("checked by require");
    let (grid, bank, model) = (cfg.grid(), cfg.bank(), cfg.model());
    let d = model.d();
    let mut header = ["n", "eta", "epsilon", "delta", "route", "path"]
        .map(String::from)
        .to_vec();
    header.extend(numbered("z", d));
    let mut samples = Table::new(header);
    let mut report = Table::new([
        "n",
        "eta",
        "epsilon",
        "delta",
        "component",
        "ks_statistic",
        "ks_p_value",
        "ks_critical_01",
    ]);
    let mut summary = Vec::new();
    for n in 0..sched.len() {
        let rescaled = short_time_sample(model, bank, grid, n, sched, params.n_paths, seed)?;
        let direct = short_time_direct(
            model,
            bank,
            grid,
            n,
            sched,
            params.refine,
            params.n_paths,
            seed.wrapping_add(1),
        )?;
        let (eta, eps, delta) = (
            num(sched.eta[n]),
            num(sched.epsilon[n]),
            num(sched.delta[n]),
        );
        for (route, paths) in [("rescaled", &rescaled), ("direct", &direct)] {
            for (k, z) in paths.iter().enumerate() {
                let mut row = vec![
                    n.to_string(),
                    eta.clone(),
                    eps.clone(),
                    delta.clone(),
                    route.into(),
                    k.to_string(),
                ];
                row.extend(z.terminal().iter().map(|&v| num(v)));
                samples.push(row);
            }
        }
        let diag = equivalence_diagnostic(&rescaled, &direct)?;
        for (a, ks) in diag.ks.iter().enumerate() {
            report.push(vec![
                n.to_string(),
                eta.clone(),
                eps.clone(),
                delta.clone(),
                (a + 1).to_string(),
                num(ks.statistic),
                num(ks.p_value),
                num(ks.critical_value(0.01)),
            ]);
            summary.push(format!(
                "delta = {:e}, component {}: KS p = {:.4}",
                sched.delta[n],
                a + 1,
                ks.p_value
            ));
        }
    }
    out.write_table("short_time_samples.csv", &samples)?;
    out.write_table("short_time_report.csv", &report)?;
    summary.push(
        "note: this compares distributions at finite scale; exponential equivalence is an asymptotic statement \
         and is not checked here"
            .into(),
    );
    Ok(Outcome {
        summary,
        failure: None,
    })
}

fn selftest(cfg: &ExperimentConfig, seed: u64, out: &mut ArtifactDir) -> Result<Outcome> {
    let reports = run_all(cfg.selftest.cases, seed);
    let mut table = Table::new(["suite", "cases", "failures", "worst_margin", "passed"]);
    let mut summary = Vec::new();
    for r in &reports {
        table.push(vec![
            r.name.to_string(),
            r.cases.to_string(),
            r.failures.to_string(),
            num(r.worst_margin),
            r.passed().to_string(),
        ]);
        let status = if r.passed() { "ok" } else { "FAILED" };
        summary.push(format!(
            "{:<20} {status} ({} cases, {} failures)",
            r.name, r.cases, r.failures
        ));
        if let Some(first) = &r.first_failure {
            summary.push(format!("  first failure: {first}"));
        }
    }
    out.write_table("selftest.csv", &table)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name)
        .collect();
    let failure =
        (!failed.is_empty()).then(|| format!("property suites failed: {}", failed.join(", ")));
    Ok(Outcome { summary, failure })
}
