//! Volterra kernels `K(t, s)` and the quadrature built on them.
//!
//! Every family is written as `K(t, s) = (t − s)^{H − 1/2} · R(t, s)` with a
//! regular part `R`. Integrals of `K` over the last cell before the diagonal
//! are done by product integration: `R` is frozen at the cell midpoint and
//! the power law is integrated exactly. This removes the O(1) bias that a
//! plain midpoint rule has for rough kernels (`H < 1/2`).
//!
//! The Molchan–Golosov kernel of fractional Brownian motion is used as the
//! building block of the fractional Ornstein–Uhlenbeck kernel:
//!
//! ```text
//! K_H(t,s) = c_H [ (t/s)^{H−1/2} (t−s)^{H−1/2}
//!                  − (H − 1/2) s^{1/2−H} ∫_s^t u^{H−3/2} (u−s)^{H−1/2} du ],
//! c_H² = 2H Γ(3/2 − H) / (Γ(H + 1/2) Γ(2 − 2H)).
//! ```

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quadrature::GaussLegendre;

/// Largest horizon accepted for the log-fBm kernel, which needs `t − s < 1`.
pub const LOG_FBM_MAX_HORIZON: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// `C (t−s)^{H−1/2}`
    RiemannLiouville,
    /// Molchan–Golosov representation of fractional Brownian motion.
    FbmMolchanGolosov,
    /// `C (t−s)^{H−1/2} (−log(t−s))^{−a}`
    LogFbm,
    /// `K_H(t,s) − a ∫_s^t e^{−a(t−u)} K_H(u,s) du`
    FractionalOU,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::RiemannLiouville => "riemann-liouville",
            KernelFamily::FbmMolchanGolosov => "fbm-molchan-golosov",
            KernelFamily::LogFbm => "log-fbm",
            KernelFamily::FractionalOU => "fractional-ou",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "riemann-liouville" | "rl" => Ok(KernelFamily::RiemannLiouville),
            "fbm-molchan-golosov" | "fbm" | "molchan-golosov" => {
                Ok(KernelFamily::FbmMolchanGolosov)
            }
            "log-fbm" | "logfbm" => Ok(KernelFamily::LogFbm),
            "fractional-ou" | "fou" => Ok(KernelFamily::FractionalOU),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// An immutable Volterra kernel, possibly rescaled as `A·K(τt, τs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraKernel {
    family: KernelFamily,
    hurst: f64,
    log_exponent: f64,
    scale: f64,
    mean_reversion: f64,
    holder_c: f64,
    holder_alpha: f64,
    horizon: f64,
    time_scale: f64,
    amplitude: f64,
}

impl VolterraKernel {
    fn base(family: KernelFamily, hurst: f64, scale: f64, horizon: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::Config(format!(
                "hurst must lie in (0, 1), got {hurst}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "kernel scale must be positive, got {scale}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!(
                "kernel horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            family,
            hurst,
            log_exponent: 0.0,
            scale,
            mean_reversion: 0.0,
            holder_c: 0.0,
            holder_alpha: (2.0 * hurst).min(1.0),
            horizon,
            time_scale: 1.0,
            amplitude: 1.0,
        })
    }

    /// `C (t−s)^{H−1/2}`.
    pub fn riemann_liouville(hurst: f64, scale: f64, horizon: f64) -> Result<Self> {
        let mut k = Self::base(KernelFamily::RiemannLiouville, hurst, scale, horizon)?;
        let alpha = k.holder_alpha;
        // exact supremum of M(δ)/δ^α, plus 2% for the quadrature error of M itself
        k.holder_c = 1.02
            * scale
            * scale
            * (1.0 / (2.0 * hurst) + riemann_liouville_increment_integral(hurst))
            * horizon.powf(2.0 * hurst - alpha);
        Ok(k)
    }

    /// `C·K_H(t,s)` with the Molchan–Golosov kernel, so that `∫K dB` is `C` times fBm.
    pub fn molchan_golosov(hurst: f64, scale: f64, horizon: f64) -> Result<Self> {
        let mut k = Self::base(KernelFamily::FbmMolchanGolosov, hurst, scale, horizon)?;
        // ∫|K(t1,·) − K(t2,·)|² = C² |t1 − t2|^{2H} exactly
        k.holder_c = 1.02 * scale * scale * horizon.powf(2.0 * hurst - k.holder_alpha);
        Ok(k)
    }

    /// `C (t−s)^{H−1/2} (−log(t−s))^{−a}` with `H ∈ (0, 1/2]`, `a > 1`, `T ≤ 0.9`.
    pub fn log_fbm(hurst: f64, log_exponent: f64, scale: f64, horizon: f64) -> Result<Self> {
        if hurst > 0.5 {
            return Err(Error::Config(format!(
                "log-fbm needs hurst in (0, 1/2], got {hurst}"
            )));
        }
        if !(log_exponent > 1.0) {
            return Err(Error::Config(format!(
                "log-fbm needs log exponent a > 1, got {log_exponent}"
            )));
        }
        if horizon > LOG_FBM_MAX_HORIZON {
            return Err(Error::Config(format!(
                "log-fbm kernel requires horizon <= {LOG_FBM_MAX_HORIZON}, got {horizon}"
            )));
        }
        let mut k = Self::base(KernelFamily::LogFbm, hurst, scale, horizon)?;
        k.log_exponent = log_exponent;
        k.holder_c = k.calibrate_holder(12, 64);
        Ok(k)
    }

    /// Fractional Ornstein–Uhlenbeck kernel with mean reversion `a > 0`.
    pub fn fractional_ou(
        hurst: f64,
        mean_reversion: f64,
        scale: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(mean_reversion > 0.0 && mean_reversion.is_finite()) {
            return Err(Error::Config(format!(
                "mean reversion must be positive, got {mean_reversion}"
            )));
        }
        let mut k = Self::base(KernelFamily::FractionalOU, hurst, scale, horizon)?;
        k.mean_reversion = mean_reversion;
        k.holder_c = k.calibrate_holder(8, 32);
        Ok(k)
    }

    /// Overrides the modulus-of-continuity constants `(c, α)`.
    pub fn with_holder(mut self, c: f64, alpha: f64) -> Result<Self> {
        if !(c >= 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!(
                "holder constants need c >= 0 and alpha in (0, 1], got ({c}, {alpha})"
            )));
        }
        self.holder_c = c;
        self.holder_alpha = alpha;
        Ok(self)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn log_exponent(&self) -> f64 {
        self.log_exponent
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean_reversion(&self) -> f64 {
        self.mean_reversion
    }

    pub fn holder_c(&self) -> f64 {
        self.holder_c
    }

    pub fn holder_alpha(&self) -> f64 {
        self.holder_alpha
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn is_rescaled(&self) -> bool {
        self.time_scale != 1.0 || self.amplitude != 1.0
    }

    /// Family name, tagged when the kernel is a rescaling of a base kernel.
    pub fn label(&self) -> String {
        if self.is_rescaled() {
            format!("rescaled({})", self.family)
        } else {
            self.family.to_string()
        }
    }

    /// Exponent `H − 1/2` of the diagonal power law.
    pub fn singular_exponent(&self) -> f64 {
        self.hurst - 0.5
    }

    /// Exponent `γ ≤ 0` with `K(t, s) ~ s^γ` as `s → 0`: `−|H − 1/2|` for the
    /// Molchan–Golosov and fractional OU kernels, `0` otherwise.
    pub fn origin_exponent(&self) -> f64 {
        match self.family {
            KernelFamily::FbmMolchanGolosov | KernelFamily::FractionalOU => {
                -(self.hurst - 0.5).abs()
            }
            _ => 0.0,
        }
    }

    /// `√η·K(η t, η s)`, defined on `[0, T/η]`.
    pub fn rescaled(&self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!(
                "rescaling factor must be positive, got {eta}"
            )));
        }
        let mut k = self.clone();
        k.time_scale *= eta;
        k.amplitude *= eta.sqrt();
        k.horizon /= eta;
        // M^η(δ) = M(ηδ)
        k.holder_c *= eta.powf(k.holder_alpha);
        Ok(k)
    }

    /// `c·K(t, s)`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!(
                "kernel multiplier must be positive, got {c}"
            )));
        }
        let mut k = self.clone();
        k.amplitude *= c;
        k.holder_c *= c * c;
        Ok(k)
    }

    fn check_time(&self, t: f64, what: &str) -> Result<()> {
        let tol = 1e-12 * self.horizon;
        if !(t >= 0.0 && t <= self.horizon + tol) {
            return Err(Error::Domain(format!(
                "{what} = {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `K(t, s)`; zero whenever `s ≥ t`.
    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        self.check_time(t, "t")?;
        self.check_time(s, "s")?;
        if s >= t {
            return Ok(0.0);
        }
        let bt = self.time_scale * t;
        let bs = self.time_scale * s;
        if self.family == KernelFamily::LogFbm && bt - bs >= 1.0 {
            return Err(Error::Config(format!(
                "log-fbm kernel evaluated at t - s = {} >= 1",
                bt - bs
            )));
        }
        if bs == 0.0
            && matches!(
                self.family,
                KernelFamily::FbmMolchanGolosov | KernelFamily::FractionalOU
            )
            && self.hurst != 0.5
        {
            return Err(Error::Domain(format!(
                "{} kernel is singular at s = 0 for H != 1/2",
                self.family
            )));
        }
        Ok(self.eval_unchecked(t, s))
    }

    /// `K(t, s)` without domain checks.
    pub(crate) fn eval_unchecked(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let bt = self.time_scale * t;
        let bs = self.time_scale * s;
        self.amplitude * self.base_eval(bt, bs)
    }

    /// `R(t, s) = K(t, s) / (t − s)^{H−1/2}` for `s < t`.
    pub(crate) fn regular_part(&self, t: f64, s: f64) -> f64 {
        let bt = self.time_scale * t;
        let bs = self.time_scale * s;
        self.amplitude * self.time_scale.powf(self.singular_exponent()) * self.base_regular(bt, bs)
    }

    fn base_eval(&self, t: f64, s: f64) -> f64 {
        let x = t - s;
        let beta = self.singular_exponent();
        match self.family {
            KernelFamily::RiemannLiouville => self.scale * x.powf(beta),
            KernelFamily::LogFbm => self.scale * x.powf(beta) * (-x.ln()).powf(-self.log_exponent),
            _ => x.powf(beta) * self.base_regular(t, s),
        }
    }

    fn base_regular(&self, t: f64, s: f64) -> f64 {
        match self.family {
            KernelFamily::RiemannLiouville => self.scale,
            KernelFamily::LogFbm => self.scale * (-(t - s).ln()).powf(-self.log_exponent),
            KernelFamily::FbmMolchanGolosov => self.scale * fbm_regular(self.hurst, t, s),
            KernelFamily::FractionalOU => {
                self.scale * fou_regular(self.hurst, self.mean_reversion, t, s)
            }
        }
    }

    /// `∫_a^b K(t, u) du` for `0 ≤ a < b ≤ t`.
    pub fn cell_integral(&self, t: f64, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let beta = self.singular_exponent();
        let p = beta + 1.0;
        if self.family == KernelFamily::RiemannLiouville {
            let c = self.amplitude * self.scale * self.time_scale.powf(beta);
            return c * ((t - a).powf(p) - (t - b).max(0.0).powf(p)) / p;
        }
        let rule = GaussLegendre::cached(16);
        let gamma = self.origin_exponent();
        let mut a = a;
        let mut acc = 0.0;
        if a == 0.0 && gamma < 0.0 {
            // u = m w^{1/(1+γ)} turns u^γ du into m^{1+γ} dw/(1+γ)
            let m = if b < t { b } else { 0.5 * b };
            let q = 1.0 + gamma;
            acc += m.powf(q) / q
                * rule.integrate(0.0, 1.0, |w| {
                    let u = m * w.powf(1.0 / q);
                    self.eval_unchecked(t, u) * u.powf(-gamma)
                });
            if m == b {
                return acc;
            }
            a = m;
        }
        // v = (t − u)^{β+1} turns (t−u)^β du into dv/(β+1)
        let v_lo = (t - b).max(0.0).powf(p);
        let v_hi = (t - a).powf(p);
        let inv = 1.0 / p;
        acc + rule.integrate(v_lo, v_hi, |v| self.regular_part(t, t - v.powf(inv))) / p
    }

    /// `∫_0^t K(t, s)² ds`.
    ///
    /// `[0, t]` is cut into `n_quad` cells, each integrated exactly against
    /// the diagonal power law with the regular part frozen at its midpoint.
    pub fn l2_slice(&self, t: f64, n_quad: usize) -> Result<f64> {
        self.check_time(t, "t")?;
        if n_quad < 2 {
            return Err(Error::Domain(format!(
                "n_quad must be at least 2, got {n_quad}"
            )));
        }
        Ok(product_integral(self, t, self, t, 0.0, n_quad))
    }

    /// `M(δ)`: max over `n_probe` pairs with `|t₁ − t₂| = δ` of `∫_0^T |K(t₁,s) − K(t₂,s)|² ds`.
    pub fn modulus_of_continuity(&self, delta: f64, n_probe: usize, n_quad: usize) -> Result<f64> {
        if delta == 0.0 {
            return Ok(0.0);
        }
        if !(delta > 0.0 && delta <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "delta = {delta} outside (0, {}]",
                self.horizon
            )));
        }
        if n_quad < 2 || n_probe == 0 {
            return Err(Error::Domain(
                "modulus needs n_probe >= 1 and n_quad >= 2".into(),
            ));
        }
        let delta = delta.min(self.horizon);
        let span = self.horizon - delta;
        let mut best = 0.0_f64;
        for i in 0..n_probe {
            let t1 = if n_probe == 1 {
                0.0
            } else {
                span * i as f64 / (n_probe - 1) as f64
            };
            let t2 = (t1 + delta).min(self.horizon);
            best = best.max(increment_energy(self, t1, t2, n_quad));
        }
        Ok(best)
    }

    /// Smallest `c` (with 5% headroom) with `M(δ) ≤ c δ^α` on the dyadic
    /// probes `δ = T 2^{-k}`, `k = 0..7`.
    pub fn calibrate_holder(&self, n_probe: usize, n_quad: usize) -> f64 {
        let mut c = 0.0_f64;
        for k in 0..8 {
            let delta = self.horizon * 0.5_f64.powi(k);
            if let Ok(m) = self.modulus_of_continuity(delta, n_probe, n_quad) {
                c = c.max(m / delta.powf(self.holder_alpha));
            }
        }
        1.05 * c
    }
}

/// `∫_0^∞ ((1+v)^{H−1/2} − v^{H−1/2})² dv`, the stationary part of the
/// Riemann–Liouville increment energy.
fn riemann_liouville_increment_integral(hurst: f64) -> f64 {
    let beta = hurst - 0.5;
    if beta == 0.0 {
        return 0.0;
    }
    let rule = GaussLegendre::cached(32);
    let g = |v: f64| ((1.0 + v).powf(beta) - v.powf(beta)).powi(2);
    // [0,1] with v = w^{1/(2H)}, which makes the integrand bounded at 0
    let q = 1.0 / (2.0 * hurst);
    let head = rule.integrate_graded(1e-6, |w: f64| {
        if w == 0.0 {
            return 0.0;
        }
        g(w.powf(q)) * q * w.powf(q - 1.0)
    });
    // [1, ∞) with v = e^x; integrand decays like e^{(2H−2)x}
    let mut tail = 0.0;
    let mut lo = 0.0;
    while lo < 80.0 {
        tail += rule.integrate(lo, lo + 2.0, |x: f64| {
            let v = x.exp();
            g(v) * v
        });
        lo += 2.0;
    }
    head + tail
}

fn molchan_golosov_constant(hurst: f64) -> f64 {
    (2.0 * hurst * gamma(1.5 - hurst) / (gamma(hurst + 0.5) * gamma(2.0 - 2.0 * hurst))).sqrt()
}

/// `K_H(t,s) / (t−s)^{H−1/2}` for `0 < s < t`.
fn fbm_regular(hurst: f64, t: f64, s: f64) -> f64 {
    let beta = hurst - 0.5;
    let c = molchan_golosov_constant(hurst);
    if beta == 0.0 {
        return c;
    }
    let x = t - s;
    let p = beta + 1.0;
    // I(t,s)/x^β with u = s + x w^{1/(β+1)}
    let inv = 1.0 / p;
    let w0 = (s / x).powf(p).min(1.0);
    let inner = GaussLegendre::cached(16)
        .integrate_graded(w0, |w| (s + x * w.powf(inv)).powf(beta - 1.0))
        * x
        / p;
    c * ((t / s).powf(beta) - beta * s.powf(-beta) * inner)
}

/// Regular part of the fractional OU kernel; the inner integral uses a
/// 32-node Gauss–Legendre rule after removing the `(u−s)^{H−1/2}` singularity.
fn fou_regular(hurst: f64, a: f64, t: f64, s: f64) -> f64 {
    let beta = hurst - 0.5;
    let x = t - s;
    let p = beta + 1.0;
    let inv = 1.0 / p;
    let inner = GaussLegendre::cached(32).integrate(0.0, 1.0, |w| {
        let u = s + x * w.powf(inv);
        (-a * (t - u)).exp() * fbm_regular(hurst, u, s)
    });
    fbm_regular(hurst, t, s) - a * x * inner / p
}

/// `∫_lo^m K1(t1,u) K2(t2,u) du` with `m = min(t1, t2)`.
///
/// Product integration on cells of width `h = (m − lo)/n_quad`: on each
/// cell the factor that stays bounded at `u = m` is frozen at the midpoint
/// and the power law `(m − u)^e` is integrated exactly.
pub(crate) fn product_integral(
    k1: &VolterraKernel,
    t1: f64,
    k2: &VolterraKernel,
    t2: f64,
    lo: f64,
    n_quad: usize,
) -> f64 {
    let m = t1.min(t2);
    if m <= lo {
        return 0.0;
    }
    let h = (m - lo) / n_quad as f64;
    let (e, smooth): (f64, Box<dyn Fn(f64) -> f64>) = if t1 == t2 {
        (
            k1.singular_exponent() + k2.singular_exponent(),
            Box::new(|u| k1.regular_part(t1, u) * k2.regular_part(t2, u)),
        )
    } else if t1 < t2 {
        (
            k1.singular_exponent(),
            Box::new(|u| k1.regular_part(t1, u) * k2.eval_unchecked(t2, u)),
        )
    } else {
        (
            k2.singular_exponent(),
            Box::new(|u| k1.eval_unchecked(t1, u) * k2.regular_part(t2, u)),
        )
    };
    let p = e + 1.0;
    let mut acc = 0.0;
    let mut first = 0;
    let gamma = if lo == 0.0 {
        k1.origin_exponent() + k2.origin_exponent()
    } else {
        0.0
    };
    if gamma < 0.0 && n_quad > 1 {
        // first cell against u^γ, the power law at the origin
        let u = 0.5 * h;
        acc += k1.eval_unchecked(t1, u)
            * k2.eval_unchecked(t2, u)
            * u.powf(-gamma)
            * h.powf(1.0 + gamma)
            / (1.0 + gamma);
        first = 1;
    }
    acc *= p;
    // ∫ over cell c of (m − u)^e, from the distances of its endpoints to m
    let mut upper = (m - lo - first as f64 * h).powf(p);
    for c in first..n_quad {
        let lower = if c + 1 == n_quad {
            0.0
        } else {
            (m - lo - (c + 1) as f64 * h).powf(p)
        };
        let u = lo + (c as f64 + 0.5) * h;
        acc += smooth(u) * (upper - lower);
        upper = lower;
    }
    acc / p
}

/// `∫_0^T |K(t2,s) − K(t1,s)|² ds` for `t1 < t2`.
fn increment_energy(k: &VolterraKernel, t1: f64, t2: f64, n_quad: usize) -> f64 {
    let mut acc = 0.0;
    if t1 > 0.0 {
        let diff2 = |u: f64| {
            let d = k.eval_unchecked(t2, u) - k.eval_unchecked(t1, u);
            d * d
        };
        // resolve the near-diagonal layer on the scale of δ = t2 − t1
        let near = t1.min(8.0 * (t2 - t1));
        let split = t1 - near;
        if split > 0.0 {
            let h = split / n_quad as f64;
            acc += h
                * (0..n_quad)
                    .map(|c| diff2((c as f64 + 0.5) * h))
                    .sum::<f64>();
        }
        let h = near / n_quad as f64;
        acc += h
            * (0..n_quad - 1)
                .map(|c| diff2(split + (c as f64 + 0.5) * h))
                .sum::<f64>();
        // last cell: ∫ (K2 − R1 (t1−u)^β)² du with K2, R1 frozen
        let mid = t1 - 0.5 * h;
        let beta = k.singular_exponent();
        let k2 = k.eval_unchecked(t2, mid);
        let r1 = k.regular_part(t1, mid);
        acc += k2 * k2 * h - 2.0 * k2 * r1 * h.powf(beta + 1.0) / (beta + 1.0)
            + r1 * r1 * h.powf(2.0 * beta + 1.0) / (2.0 * beta + 1.0);
    }
    acc + product_integral(k, t2, k, t2, t1, n_quad)
}

/// `p` kernels, one per Brownian factor, on a common horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    kernels: Vec<VolterraKernel>,
}

impl KernelBank {
    pub fn new(kernels: Vec<VolterraKernel>) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::Config("kernel bank needs at least one kernel".into()))?;
        let h = first.horizon();
        for (i, k) in kernels.iter().enumerate() {
            if (k.horizon() - h).abs() > 1e-12 * h {
                return Err(Error::Config(format!(
                    "kernel {i} has horizon {} but kernel 0 has {h}",
                    k.horizon()
                )));
            }
        }
        Ok(Self { kernels })
    }

    /// `p` copies of the same kernel.
    pub fn uniform(kernel: VolterraKernel, p: usize) -> Result<Self> {
        Self::new(vec![kernel; p])
    }

    pub fn p(&self) -> usize {
        self.kernels.len()
    }

    pub fn horizon(&self) -> f64 {
        self.kernels[0].horizon()
    }

    pub fn kernels(&self) -> &[VolterraKernel] {
        &self.kernels
    }

    pub fn kernel(&self, l: usize) -> &VolterraKernel {
        &self.kernels[l]
    }

    pub fn rescaled(&self, eta: f64) -> Result<Self> {
        Ok(Self {
            kernels: self
                .kernels
                .iter()
                .map(|k| k.rescaled(eta))
                .collect::<Result<_>>()?,
        })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Ok(Self {
            kernels: self
                .kernels
                .iter()
                .map(|k| k.scaled(c))
                .collect::<Result<_>>()?,
        })
    }

    pub(crate) fn ensure_covers(&self, grid: &TimeGrid) -> Result<()> {
        if grid.horizon() > self.horizon() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "grid horizon {} exceeds kernel horizon {}",
                grid.horizon(),
                self.horizon()
            )));
        }
        Ok(())
    }
}

/// How `ε_n` is tied to `η_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedRule {
    /// `ε_n = η_n^H`
    PowerLaw,
    /// `ε_n^{-2} = η_n^{-2H} (−log η_n)^{q}`
    LogFbm,
    /// Sequences supplied directly.
    Explicit,
}

/// Sequences `η_n`, `ε_n`, `δ_n → 0` indexing the small-noise and short-time families.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSchedule {
    pub eta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub speed_exponent_hurst: f64,
    pub speed_log_exponent: f64,
    pub rule: SpeedRule,
}

impl ScalingSchedule {
    /// Log-fBm speed `ε_n^{-2} = η_n^{-2H}(−log η_n)^{q}`, `q` defaulting to `2a`;
    /// the short-time horizon is `δ_n = η_n`.
    pub fn log_fbm(
        etas: Vec<f64>,
        hurst: f64,
        log_exponent: f64,
        speed_log_exponent: Option<f64>,
    ) -> Result<Self> {
        let q = speed_log_exponent.unwrap_or(2.0 * log_exponent);
        if etas.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("log-fbm schedule needs eta in (0, 1)".into()));
        }
        let epsilon = etas
            .iter()
            .map(|&e| e.powf(hurst) * (-e.ln()).powf(-0.5 * q))
            .collect();
        let s = Self {
            delta: etas.clone(),
            eta: etas,
            epsilon,
            speed_exponent_hurst: hurst,
            speed_log_exponent: q,
            rule: SpeedRule::LogFbm,
        };
        s.validate()?;
        Ok(s)
    }

    /// Self-similar speed `ε_n = η_n^H`, `δ_n = η_n`.
    pub fn power_law(etas: Vec<f64>, hurst: f64) -> Result<Self> {
        let epsilon = etas.iter().map(|&e| e.powf(hurst)).collect();
        let s = Self {
            delta: etas.clone(),
            eta: etas,
            epsilon,
            speed_exponent_hurst: hurst,
            speed_log_exponent: 0.0,
            rule: SpeedRule::PowerLaw,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn explicit(eta: Vec<f64>, epsilon: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let s = Self {
            eta,
            epsilon,
            delta,
            speed_exponent_hurst: f64::NAN,
            speed_log_exponent: f64::NAN,
            rule: SpeedRule::Explicit,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `ε_n^{-2}`.
    pub fn speed(&self, n: usize) -> f64 {
        self.epsilon[n].powi(-2)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.eta.len();
        if n == 0 || self.epsilon.len() != n || self.delta.len() != n {
            return Err(Error::Config(
                "schedule sequences must be nonempty and of equal length".into(),
            ));
        }
        for (name, seq) in [
            ("eta", &self.eta),
            ("epsilon", &self.epsilon),
            ("delta", &self.delta),
        ] {
            if seq.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("schedule {name} must be positive")));
            }
            if seq.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Config(format!(
                    "schedule {name} must be strictly decreasing"
                )));
            }
        }
        if self.rule == SpeedRule::LogFbm {
            for (e, eps) in self.eta.iter().zip(&self.epsilon) {
                let speed = e.powf(-2.0 * self.speed_exponent_hurst)
                    * (-e.ln()).powf(self.speed_log_exponent);
                if ((eps.powi(-2) - speed) / speed).abs() > 1e-10 {
                    return Err(Error::Config(
                        "epsilon inconsistent with the log-fbm speed rule".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `max_{s<t on grid} |√η K(ηt, ηs)/ε − K_lim(t, s)|`.
pub fn limit_kernel_error(
    kernel: &VolterraKernel,
    eta: f64,
    epsilon: f64,
    limit: &VolterraKernel,
    grid: &TimeGrid,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let rescaled = kernel.rescaled(eta)?;
    let mut worst = 0.0_f64;
    for i in 1..grid.n_nodes() {
        let t = grid.node(i);
        for j in 0..i {
            let s = grid.node(j);
            let a = rescaled.eval(t, s)? / epsilon;
            let b = limit.eval(t, s)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
