//! Gauss–Legendre rules and a few integration helpers.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared rules of the orders used throughout the crate.
    pub fn cached(n: usize) -> &'static GaussLegendre {
        static R8: OnceLock<GaussLegendre> = OnceLock::new();
        static R16: OnceLock<GaussLegendre> = OnceLock::new();
        static R32: OnceLock<GaussLegendre> = OnceLock::new();
        match n {
            8 => R8.get_or_init(|| GaussLegendre::new(8)),
            16 => R16.get_or_init(|| GaussLegendre::new(16)),
            32 => R32.get_or_init(|| GaussLegendre::new(32)),
            _ => panic!("no cached Gauss-Legendre rule of order {n}"),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// `∫_0^1 f` split into geometric panels `[0, w0], [w0, 2w0], …, [·, 1]`.
    ///
    /// Resolves integrands with a kink or power-law transition near `w0`.
    pub fn integrate_graded(&self, w0: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if !(w0 > 0.0) || w0 >= 0.5 {
            return self.integrate(0.0, 1.0, f);
        }
        let mut acc = self.integrate(0.0, w0, &mut f);
        let mut lo = w0;
        while lo < 1.0 {
            let hi = (2.0 * lo).min(1.0);
            acc += self.integrate(lo, hi, &mut f);
            lo = hi;
        }
        acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let r = GaussLegendre::new(8);
        // degree 15 is exact for 8 points
        let v = r.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let w: f64 = r.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn graded_rule_handles_power_transitions() {
        let r = GaussLegendre::cached(16);
        let s = 1e-6_f64;
        // ∫_0^1 (s + w)^{-1/2} dw
        let v = r.integrate_graded(s, |w| (s + w).powf(-0.5));
        let exact = 2.0 * ((1.0 + s).sqrt() - s.sqrt());
        assert!((v - exact).abs() < 1e-10);
    }
}
