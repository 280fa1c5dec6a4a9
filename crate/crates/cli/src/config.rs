//! Experiment configuration: one flat TOML file per experiment.
//!
//! Parsing happens in two passes. `toml` + `serde` check the syntax and the
//! field names (unknown keys are rejected), then [`parse_config`] validates
//! ranges and cross-field constraints and reports every problem it finds,
//! each located by its field path.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;
use volterra_ldp::asymptotics::{TailEvent, MIN_PATHS};
use volterra_ldp::ratefn::OptimizerConfig;
use volterra_ldp::{
    KernelBank, MatrixMap, ModelCoefficients, ScalingSchedule, TimeGrid, VolterraKernel,
};

use crate::error::{CliError, ConfigIssue, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    grid: Option<RawGrid>,
    kernel: Option<Vec<RawKernel>>,
    model: Option<RawModel>,
    optimizer: Option<RawOptimizer>,
    schedule: Option<RawSchedule>,
    kernel_table: Option<RawKernelTable>,
    simulate: Option<RawSimulate>,
    rate: Option<RawRate>,
    terminal_rate: Option<RawTerminalRate>,
    verify_ldp: Option<RawVerifyLdp>,
    short_time: Option<RawShortTime>,
    selftest: Option<RawSelftest>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: f64,
    steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    family: String,
    hurst: f64,
    scale: Option<f64>,
    log_exponent: Option<f64>,
    mean_reversion: Option<f64>,
    /// Number of independent factors sharing this kernel.
    copies: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    d: usize,
    mu: Option<RawMap>,
    sigma: RawMap,
    sigma_tilde: Option<RawMap>,
    /// One-factor shortcut: `sigma` is read as `s`, with `σ = √(1−ρ²)s` and `σ̃ = ρs`.
    rho: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMap {
    Scalar(f64),
    Table(RawMapTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMapTable {
    constant: Option<Vec<Vec<f64>>>,
    exp_linear: Option<RawExpLinear>,
    affine: Option<RawAffine>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpLinear {
    base: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAffine {
    base: Vec<Vec<f64>>,
    slopes: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    max_iter: Option<usize>,
    tol: Option<f64>,
    n_starts: Option<usize>,
    memory: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    rule: String,
    eta: Vec<f64>,
    hurst: Option<f64>,
    log_exponent: Option<f64>,
    speed_log_exponent: Option<f64>,
    epsilon: Option<Vec<f64>>,
    delta: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernelTable {
    n_quad: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    epsilon: f64,
    n_paths: usize,
    correlated: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRate {
    functional: String,
    m: Option<Vec<usize>>,
    z: Option<Vec<f64>>,
    file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerminalRate {
    points: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerifyLdp {
    epsilons: Vec<f64>,
    n_paths: usize,
    estimator: Option<String>,
    target: Vec<f64>,
    event: RawEvent,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    half_space: Option<RawHalfSpace>,
    #[serde(rename = "box")]
    bounds: Option<RawBox>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHalfSpace {
    direction: Vec<f64>,
    level: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShortTime {
    n_paths: usize,
    refine: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSelftest {
    cases: Option<usize>,
}

/// Subcommands; each needs a subset of the config sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    KernelTable,
    Simulate,
    Rate,
    TerminalRate,
    VerifyLdp,
    ShortTime,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelTable => "kernel-table",
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::TerminalRate => "terminal-rate",
            Command::VerifyLdp => "verify-ldp",
            Command::ShortTime => "short-time",
            Command::Selftest => "selftest",
        }
    }

    fn sections(self) -> &'static [&'static str] {
        match self {
            Command::KernelTable => &["grid", "kernel"],
            Command::Simulate => &["grid", "kernel", "model", "simulate"],
            Command::Rate => &["grid", "kernel", "model", "rate"],
            Command::TerminalRate => &["grid", "kernel", "model", "terminal_rate"],
            Command::VerifyLdp => &["grid", "kernel", "model", "verify_ldp"],
            Command::ShortTime => &["grid", "kernel", "model", "schedule", "short_time"],
            Command::Selftest => &[],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Uncorrelated,
    Correlated,
    Blocks,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathSpec {
    StraightLine(Vec<f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTableParams {
    pub n_quad: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateParams {
    pub epsilon: f64,
    pub n_paths: usize,
    pub correlated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateParams {
    pub functional: Functional,
    pub m: Vec<usize>,
    pub path: PathSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalRateParams {
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Crude,
    Tilted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyParams {
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub estimator: EstimatorKind,
    pub target: Vec<f64>,
    pub event: TailEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortTimeParams {
    pub n_paths: usize,
    pub refine: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestParams {
    pub cases: usize,
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: Option<TimeGrid>,
    pub bank: Option<KernelBank>,
    pub model: Option<ModelCoefficients>,
    pub optimizer: OptimizerConfig,
    pub schedule: Option<ScalingSchedule>,
    pub kernel_table: KernelTableParams,
    pub simulate: Option<SimulateParams>,
    pub rate: Option<RateParams>,
    pub terminal_rate: Option<TerminalRateParams>,
    pub verify_ldp: Option<VerifyParams>,
    pub short_time: Option<ShortTimeParams>,
    pub selftest: SelftestParams,
}

impl ExperimentConfig {
    /// Checks that every section `command` reads is present.
    pub fn require(&self, command: Command) -> Result<()> {
        let mut issues = Vec::new();
        for &section in command.sections() {
            let present = match section {
                "grid" => self.grid.is_some(),
                "kernel" => self.bank.is_some(),
                "model" => self.model.is_some(),
                "schedule" => self.schedule.is_some(),
                "simulate" => self.simulate.is_some(),
                "rate" => self.rate.is_some(),
                "terminal_rate" => self.terminal_rate.is_some(),
                "verify_ldp" => self.verify_ldp.is_some(),
                "short_time" => self.short_time.is_some(),
                _ => true,
            };
            if !present {
                issues.push(ConfigIssue::new(
                    section,
                    format!("section is required by `{command}`"),
                ));
            }
        }
        if command == Command::ShortTime {
            if let Some(model) = &self.model {
                if !model.mu_is_zero() {
                    issues.push(ConfigIssue::new(
                        "model.mu",
                        "short-time scaling needs mu = 0",
                    ));
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(issues))
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.grid.as_ref().expect("checked by require")
    }

    pub fn bank(&self) -> &KernelBank {
        self.bank.as_ref().expect("checked by require")
    }

    pub fn model(&self) -> &ModelCoefficients {
        self.model.as_ref().expect("checked by require")
    }
}

/// Parses and validates a config; relative file references resolve against
/// the working directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_at(text, Path::new("."))
}

/// As [`parse_config`], resolving relative file references against `base`.
pub fn parse_config_at(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| syntax_issue(text, &e))?;
    let mut v = Validator { issues: Vec::new() };
    let cfg = v.config(raw, base);
    if v.issues.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(v.issues))
    }
}

fn syntax_issue(text: &str, e: &toml::de::Error) -> CliError {
    let location = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}")
        }
        None => "config".to_string(),
    };
    CliError::config(location, e.message())
}

struct Validator {
    issues: Vec<ConfigIssue>,
}

impl Validator {
    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue::new(location, message));
    }

    fn positive(&mut self, location: &str, v: f64) -> bool {
        let ok = v > 0.0 && v.is_finite();
        if !ok {
            self.push(location, format!("must be positive and finite, got {v}"));
        }
        ok
    }

    fn config(&mut self, raw: RawConfig, base: &Path) -> ExperimentConfig {
        let grid = raw.grid.and_then(|g| self.grid(g));
        let mut first_kernel = None;
        let bank = match (raw.kernel, grid) {
            (Some(kernels), Some(grid)) => {
                first_kernel = kernels.first().map(|k| (k.hurst, k.log_exponent));
                self.bank(kernels, &grid)
            }
            (Some(_), None) => {
                self.push(
                    "kernel",
                    "kernels need a valid [grid] section for their horizon",
                );
                None
            }
            (None, _) => None,
        };
        let model = match (raw.model, &bank) {
            (Some(m), Some(bank)) => self.model(m, bank.p()),
            (Some(_), None) => {
                self.push(
                    "model",
                    "the model needs at least one valid [[kernel]] for its factor count",
                );
                None
            }
            (None, _) => None,
        };
        let d = model.as_ref().map(|m| m.d());
        let optimizer = self.optimizer(raw.optimizer);
        let schedule = raw.schedule.and_then(|s| self.schedule(s, first_kernel));
        let kernel_table = self.kernel_table(raw.kernel_table);
        let simulate = raw.simulate.and_then(|s| self.simulate(s));
        let rate = raw.rate.and_then(|r| self.rate(r, grid.as_ref(), d, base));
        let terminal_rate = raw.terminal_rate.and_then(|t| self.terminal_rate(t, d));
        let verify_ldp = raw.verify_ldp.and_then(|v| self.verify(v, d));
        let short_time = raw.short_time.and_then(|s| self.short_time(s));
        let selftest = SelftestParams {
            cases: raw.selftest.and_then(|s| s.cases).unwrap_or(1000),
        };
        if selftest.cases == 0 {
            self.push("selftest.cases", "must be at least 1");
        }
        ExperimentConfig {
            seed: raw.seed,
            out: raw.out,
            grid,
            bank,
            model,
            optimizer,
            schedule,
            kernel_table,
            simulate,
            rate,
            terminal_rate,
            verify_ldp,
            short_time,
            selftest,
        }
    }

    fn grid(&mut self, g: RawGrid) -> Option<TimeGrid> {
        let ok = self.positive("grid.horizon", g.horizon);
        if g.steps == 0 {
            self.push("grid.steps", "must be at least 1");
            return None;
        }
        if !ok {
            return None;
        }
        TimeGrid::new(g.horizon, g.steps)
            .map_err(|e| self.push("grid", e.to_string()))
            .ok()
    }

    fn bank(&mut self, kernels: Vec<RawKernel>, grid: &TimeGrid) -> Option<KernelBank> {
        if kernels.is_empty() {
            self.push("kernel", "at least one kernel is required");
            return None;
        }
        let mut all = Vec::new();
        let mut ok = true;
        for (i, k) in kernels.iter().enumerate() {
            match self.kernel(i, k, grid.horizon()) {
                Some(built) => {
                    let copies = k.copies.unwrap_or(1);
                    if copies == 0 {
                        self.push(format!("kernel[{i}].copies"), "must be at least 1");
                        ok = false;
                    }
                    all.extend(std::iter::repeat_n(built, copies));
                }
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        KernelBank::new(all)
            .map_err(|e| self.push("kernel", e.to_string()))
            .ok()
    }

    fn kernel(&mut self, i: usize, k: &RawKernel, horizon: f64) -> Option<VolterraKernel> {
        let at = |field: &str| format!("kernel[{i}].{field}");
        let before = self.issues.len();
        if !(k.hurst > 0.0 && k.hurst < 1.0) {
            self.push(at("hurst"), format!("must lie in (0, 1), got {}", k.hurst));
        }
        let scale = k.scale.unwrap_or(1.0);
        self.positive(&at("scale"), scale);
        let family = k.family.as_str();
        let known = [
            "riemann-liouville",
            "molchan-golosov",
            "log-fbm",
            "fractional-ou",
        ];
        if !known.contains(&family) {
            self.push(
                at("family"),
                format!(
                    "unknown family `{family}`; expected one of {}",
                    known.join(", ")
                ),
            );
            return None;
        }
        if family != "log-fbm" && k.log_exponent.is_some() {
            self.push(at("log_exponent"), "only used by the log-fbm family");
        }
        if family != "fractional-ou" && k.mean_reversion.is_some() {
            self.push(
                at("mean_reversion"),
                "only used by the fractional-ou family",
            );
        }
        if self.issues.len() > before {
            return None;
        }
        let built = match family {
            "riemann-liouville" => VolterraKernel::riemann_liouville(k.hurst, scale, horizon),
            "molchan-golosov" => VolterraKernel::molchan_golosov(k.hurst, scale, horizon),
            "log-fbm" => {
                let Some(a) = k.log_exponent else {
                    self.push(at("log_exponent"), "required for the log-fbm family");
                    return None;
                };
                VolterraKernel::log_fbm(k.hurst, a, scale, horizon)
            }
            _ => {
                let Some(a) = k.mean_reversion else {
                    self.push(
                        at("mean_reversion"),
                        "required for the fractional-ou family",
                    );
                    return None;
                };
                VolterraKernel::fractional_ou(k.hurst, a, scale, horizon)
            }
        };
        built
            .map_err(|e| self.push(format!("kernel[{i}]"), e.to_string()))
            .ok()
    }

    fn matrix(&mut self, at: &str, rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || c == 0 || rows.iter().any(|r| r.len() != c) {
            self.push(at, "must be a nonempty list of equal-length rows");
            return None;
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            self.push(at, "entries must be finite");
            return None;
        }
        Some(DMatrix::from_row_slice(rows.len(), c, &rows.concat()))
    }

    /// A scalar `c` stands for `c·I` on square shapes and for the zero map
    /// when `c = 0`.
    fn map(&mut self, at: &str, raw: &RawMap, shape: (usize, usize)) -> Option<MatrixMap> {
        match raw {
            RawMap::Scalar(c) if *c == 0.0 => Some(MatrixMap::zeros(shape.0, shape.1)),
            RawMap::Scalar(c) if shape.0 == shape.1 => Some(MatrixMap::Constant(
                DMatrix::identity(shape.0, shape.1) * *c,
            )),
            RawMap::Scalar(_) => {
                self.push(
                    at,
                    format!(
                        "a nonzero scalar needs a square shape, this map is {}x{}",
                        shape.0, shape.1
                    ),
                );
                None
            }
            RawMap::Table(t) => {
                let set = [
                    t.constant.is_some(),
                    t.exp_linear.is_some(),
                    t.affine.is_some(),
                ];
                if set.iter().filter(|&&b| b).count() != 1 {
                    self.push(at, "set exactly one of `constant`, `exp_linear`, `affine`");
                    return None;
                }
                let map = if let Some(rows) = &t.constant {
                    MatrixMap::Constant(self.matrix(&format!("{at}.constant"), rows)?)
                } else if let Some(e) = &t.exp_linear {
                    let base = self.matrix(&format!("{at}.exp_linear.base"), &e.base)?;
                    MatrixMap::ExpLinear {
                        base,
                        weights: e.weights.clone(),
                    }
                } else {
                    let a = t.affine.as_ref().expect("one variant is set");
                    let base = self.matrix(&format!("{at}.affine.base"), &a.base)?;
                    let mut slopes = Vec::new();
                    for (l, s) in a.slopes.iter().enumerate() {
                        slopes.push(self.matrix(&format!("{at}.affine.slopes[{l}]"), s)?);
                    }
                    if slopes.iter().any(|s| s.shape() != base.shape()) {
                        self.push(
                            format!("{at}.affine.slopes"),
                            "every slope must have the shape of `base`",
                        );
                        return None;
                    }
                    MatrixMap::Affine { base, slopes }
                };
                if map.shape() != shape {
                    self.push(
                        at,
                        format!("has shape {:?}, expected {:?}", map.shape(), shape),
                    );
                    return None;
                }
                Some(map)
            }
        }
    }

    fn model(&mut self, m: RawModel, p: usize) -> Option<ModelCoefficients> {
        let d = m.d;
        if d == 0 {
            self.push("model.d", "must be at least 1");
            return None;
        }
        let mu = match &m.mu {
            Some(raw) => self.map("model.mu", raw, (d, 1)),
            None => Some(MatrixMap::zeros(d, 1)),
        };
        if let Some(rho) = m.rho {
            if d != 1 || p != 1 {
                self.push(
                    "model.rho",
                    format!("the one-factor shortcut needs d = p = 1, got d = {d}, p = {p}"),
                );
                return None;
            }
            if m.sigma_tilde.is_some() {
                self.push("model.sigma_tilde", "cannot be combined with `rho`");
                return None;
            }
            let s = self.map("model.sigma", &m.sigma, (1, 1))?;
            return ModelCoefficients::one_factor_correlated(s, mu?, rho)
                .map_err(|e| self.push("model.rho", e.to_string()))
                .ok();
        }
        let sigma = self.map("model.sigma", &m.sigma, (d, d));
        let sigma_tilde = match &m.sigma_tilde {
            Some(raw) => self.map("model.sigma_tilde", raw, (d, p)),
            None => Some(MatrixMap::zeros(d, p)),
        };
        ModelCoefficients::new(d, p, mu?, sigma?, sigma_tilde?)
            .map_err(|e| self.push("model", e.to_string()))
            .ok()
    }

    fn optimizer(&mut self, raw: Option<RawOptimizer>) -> OptimizerConfig {
        let mut opt = OptimizerConfig::default();
        let Some(r) = raw else { return opt };
        if let Some(v) = r.max_iter {
            if v == 0 {
                self.push("optimizer.max_iter", "must be at least 1");
            }
            opt.max_iter = v;
        }
        if let Some(v) = r.tol {
            self.positive("optimizer.tol", v);
            opt.tol = v;
        }
        if let Some(v) = r.n_starts {
            if v == 0 {
                self.push("optimizer.n_starts", "must be at least 1");
            }
            opt.n_starts = v;
        }
        if let Some(v) = r.memory {
            if v == 0 {
                self.push("optimizer.memory", "must be at least 1");
            }
            opt.memory = v;
        }
        opt
    }

    fn schedule(
        &mut self,
        s: RawSchedule,
        first_kernel: Option<(f64, Option<f64>)>,
    ) -> Option<ScalingSchedule> {
        let hurst = s.hurst.or(first_kernel.map(|k| k.0));
        let built = match s.rule.as_str() {
            "log-fbm" => {
                let a = s.log_exponent.or(first_kernel.and_then(|k| k.1));
                let (Some(h), Some(a)) = (hurst, a) else {
                    self.push(
                        "schedule",
                        "log-fbm rule needs `hurst` and `log_exponent` (or a log-fbm kernel)",
                    );
                    return None;
                };
                ScalingSchedule::log_fbm(s.eta, h, a, s.speed_log_exponent)
            }
            "power-law" => {
                let Some(h) = hurst else {
                    self.push("schedule.hurst", "required when no kernel is configured");
                    return None;
                };
                ScalingSchedule::power_law(s.eta, h)
            }
            "explicit" => {
                let (Some(eps), Some(delta)) = (s.epsilon, s.delta) else {
                    self.push("schedule", "explicit rule needs `epsilon` and `delta`");
                    return None;
                };
                ScalingSchedule::explicit(s.eta, eps, delta)
            }
            other => {
                self.push(
                    "schedule.rule",
                    format!("unknown rule `{other}`; expected log-fbm, power-law or explicit"),
                );
                return None;
            }
        };
        built.map_err(|e| self.push("schedule", e.to_string())).ok()
    }

    fn kernel_table(&mut self, raw: Option<RawKernelTable>) -> KernelTableParams {
        let n_quad = raw
            .and_then(|r| r.n_quad)
            .unwrap_or(volterra_ldp::gaussian::DEFAULT_N_QUAD);
        if n_quad < 8 {
            self.push(
                "kernel_table.n_quad",
                format!("must be at least 8, got {n_quad}"),
            );
        }
        KernelTableParams { n_quad }
    }

    fn simulate(&mut self, s: RawSimulate) -> Option<SimulateParams> {
        let ok = self.positive("simulate.epsilon", s.epsilon);
        if s.n_paths == 0 {
            self.push("simulate.n_paths", "must be at least 1");
            return None;
        }
        ok.then_some(SimulateParams {
            epsilon: s.epsilon,
            n_paths: s.n_paths,
            correlated: s.correlated.unwrap_or(true),
        })
    }

    fn rate(
        &mut self,
        r: RawRate,
        grid: Option<&TimeGrid>,
        d: Option<usize>,
        base: &Path,
    ) -> Option<RateParams> {
        let functional = match r.functional.as_str() {
            "uncorrelated" => Functional::Uncorrelated,
            "correlated" => Functional::Correlated,
            "blocks" => Functional::Blocks,
            other => {
                self.push(
                    "rate.functional",
                    format!(
                        "unknown functional `{other}`; expected uncorrelated, correlated or blocks"
                    ),
                );
                return None;
            }
        };
        let m = r.m.unwrap_or_default();
        match functional {
            Functional::Blocks if m.is_empty() => {
                self.push("rate.m", "required by the blocks functional")
            }
            Functional::Blocks => {
                if let Some(n) = grid.map(TimeGrid::n_steps) {
                    for (k, &mk) in m.iter().enumerate() {
                        if mk == 0 || n % mk != 0 {
                            self.push(
                                format!("rate.m[{k}]"),
                                format!("grid steps N = {n} is not divisible by m = {mk}"),
                            );
                        }
                    }
                }
            }
            _ if !m.is_empty() => self.push("rate.m", "only used by the blocks functional"),
            _ => {}
        }
        let path = match (r.z, r.file) {
            (Some(z), None) => {
                if let Some(d) = d {
                    if z.len() != d {
                        self.push(
                            "rate.z",
                            format!("has {} entries, model has d = {d}", z.len()),
                        );
                    }
                }
                PathSpec::StraightLine(z)
            }
            (None, Some(file)) => {
                let file = base.join(file);
                if !file.is_file() {
                    self.push("rate.file", format!("{} does not exist", file.display()));
                }
                PathSpec::File(file)
            }
            _ => {
                self.push(
                    "rate",
                    "set exactly one of `z` (straight line) or `file` (path values)",
                );
                return None;
            }
        };
        Some(RateParams {
            functional,
            m,
            path,
        })
    }

    fn terminal_rate(
        &mut self,
        t: RawTerminalRate,
        d: Option<usize>,
    ) -> Option<TerminalRateParams> {
        if t.points.is_empty() {
            self.push("terminal_rate.points", "needs at least one point");
        }
        if let Some(d) = d {
            for (k, z) in t.points.iter().enumerate() {
                if z.len() != d {
                    self.push(
                        format!("terminal_rate.points[{k}]"),
                        format!("has {} entries, model has d = {d}", z.len()),
                    );
                }
            }
        }
        Some(TerminalRateParams { points: t.points })
    }

    fn verify(&mut self, v: RawVerifyLdp, d: Option<usize>) -> Option<VerifyParams> {
        if v.epsilons.len() < 3 {
            self.push(
                "verify_ldp.epsilons",
                "a slope fit needs at least 3 noise levels",
            );
        }
        for (k, &e) in v.epsilons.iter().enumerate() {
            self.positive(&format!("verify_ldp.epsilons[{k}]"), e);
        }
        if v.n_paths < MIN_PATHS {
            self.push(
                "verify_ldp.n_paths",
                format!("must be at least {MIN_PATHS}, got {}", v.n_paths),
            );
        }
        let estimator = match v.estimator.as_deref().unwrap_or("crude") {
            "crude" => EstimatorKind::Crude,
            "tilted" => EstimatorKind::Tilted,
            other => {
                self.push(
                    "verify_ldp.estimator",
                    format!("unknown estimator `{other}`; expected crude or tilted"),
                );
                return None;
            }
        };
        let event = match (v.event.half_space, v.event.bounds) {
            (Some(h), None) => TailEvent::HalfSpace {
                direction: h.direction,
                level: h.level,
            },
            (None, Some(b)) => TailEvent::Box {
                lower: b.lower,
                upper: b.upper,
            },
            _ => {
                self.push(
                    "verify_ldp.event",
                    "set exactly one of `half_space` or `box`",
                );
                return None;
            }
        };
        if let Some(d) = d {
            if v.target.len() != d {
                self.push(
                    "verify_ldp.target",
                    format!("has {} entries, model has d = {d}", v.target.len()),
                );
            }
            let dims_ok = match &event {
                TailEvent::HalfSpace { direction, .. } => direction.len() == d,
                TailEvent::Box { lower, upper } => lower.len() == d && upper.len() == d,
                TailEvent::SupNormTube { .. } => true,
            };
            if !dims_ok {
                self.push(
                    "verify_ldp.event",
                    format!("event dimensions must match d = {d}"),
                );
            }
        }
        Some(VerifyParams {
            epsilons: v.epsilons,
            n_paths: v.n_paths,
            estimator,
            target: v.target,
            event,
        })
    }

    fn short_time(&mut self, s: RawShortTime) -> Option<ShortTimeParams> {
        let refine = s.refine.unwrap_or(4);
        if s.n_paths < 2 {
            self.push("short_time.n_paths", "must be at least 2");
        }
        if refine == 0 {
            self.push("short_time.refine", "must be at least 1");
        }
        Some(ShortTimeParams {
            n_paths: s.n_paths,
            refine,
        })
    }
}
