//! Smooth compactly supported bump profiles.
//!
//! `λ(s) = c·exp(−1/(s(h−s)))` on `(0, h)` with `∫λ = 1`, and
//! `γ(r) = e·exp(−1/(1−u²))`, `u = (r−δ)/ξ`, on `(δ−ξ, δ+ξ)` with `γ(δ) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

const NORMALIZATION_TOL: f64 = 1e-12;
const CUMULATIVE_TOL: f64 = 1e-14;

/// Height profile λ. The normalization is held as the reciprocal of
/// `∫ exp(4/h² − 1/(s(h−s))) ds`, which stays representable for small `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBump {
    pub h: f64,
    inv_integral: f64,
}

impl LambdaBump {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("bump height h must be > 0, got {h}")));
        }
        let peak = 4.0 / (h * h);
        let scaled = |s: f64| scaled_profile(s, h, peak);
        let integral = quadrature::integrate(scaled, 0.0, h, NORMALIZATION_TOL * h.min(1.0));
        Ok(LambdaBump { h, inv_integral: 1.0 / integral })
    }

    /// `ln c_λ`, the log of the normalization constant.
    pub fn log_normalization(&self) -> f64 {
        4.0 / (self.h * self.h) + self.inv_integral.ln()
    }

    pub fn value(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= self.h {
            return 0.0;
        }
        scaled_profile(s, self.h, 4.0 / (self.h * self.h)) * self.inv_integral
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= self.h {
            return 0.0;
        }
        let q = s * (self.h - s);
        self.value(s) * (self.h - 2.0 * s) / (q * q)
    }

    /// `∫_0^s λ`, clamped to 0 below the support and 1 above it.
    pub fn cumulative(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= self.h {
            1.0
        } else if s <= 0.5 * self.h {
            quadrature::integrate(|t| self.value(t), 0.0, s, CUMULATIVE_TOL)
        } else {
            1.0 - quadrature::integrate(|t| self.value(t), s, self.h, CUMULATIVE_TOL)
        }
    }
}

fn scaled_profile(s: f64, h: f64, peak: f64) -> f64 {
    if s <= 0.0 || s >= h {
        return 0.0;
    }
    let u = s - 0.5 * h;
    let q = 0.25 * h * h - u * u;
    if q <= 0.0 {
        return 0.0;
    }
    (peak - 1.0 / q).exp()
}

/// Radial profile γ, equal to one on the circle of radius δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBump {
    pub delta: f64,
    pub xi: f64,
}

impl GammaBump {
    pub fn new(delta: f64, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi < delta) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < xi < delta, got xi = {xi}, delta = {delta}"
            )));
        }
        Ok(GammaBump { delta, xi })
    }

    pub fn value(&self, r: f64) -> f64 {
        let u = (r - self.delta) / self.xi;
        let w = 1.0 - u * u;
        if w <= 0.0 {
            return 0.0;
        }
        // e·exp(−1/(1−u²)) = exp(−u²/(1−u²)), exactly 1 at u = 0.
        (-(u * u) / w).exp()
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let u = (r - self.delta) / self.xi;
        let w = 1.0 - u * u;
        if w <= 0.0 {
            return 0.0;
        }
        self.value(r) * (-2.0 * u / (w * w)) / self.xi
    }
}

/// The pair (λ, γ) that shapes one perturbation patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpPair {
    pub lambda: LambdaBump,
    pub gamma: GammaBump,
}

impl BumpPair {
    pub fn new(h: f64, delta: f64, xi: f64) -> Result<Self> {
        Ok(BumpPair { lambda: LambdaBump::new(h)?, gamma: GammaBump::new(delta, xi)? })
    }
}

/// λ(s) for height `h`.
pub fn bump_lambda(s: f64, params: &LambdaBump) -> f64 {
    params.value(s)
}

/// γ(r) for radius `δ` and half-width `ξ`.
pub fn bump_gamma(r: f64, params: &GammaBump) -> f64 {
    params.value(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn lambda_examples() {
        let l = LambdaBump::new(1.0).unwrap();
        assert_eq!(bump_lambda(-0.1, &l), 0.0);
        assert_eq!(bump_lambda(1.0, &l), 0.0);
        let total = simpson(|s| l.value(s), 0.0, 1.0, 400_000);
        assert!((total - 1.0).abs() < 1e-10, "{total}");
        for a in [0.1, 0.2] {
            assert!((l.value(0.5 - a) - l.value(0.5 + a)).abs() < 1e-15);
        }
        assert!(matches!(LambdaBump::new(0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn lambda_normalized_for_small_heights() {
        for h in [0.5, 0.1, 0.02] {
            let l = LambdaBump::new(h).unwrap();
            let total = simpson(|s| l.value(s), 0.0, h, 400_000);
            assert!((total - 1.0).abs() < 1e-10, "h = {h}: {total}");
            assert!(l.log_normalization().is_finite());
        }
    }

    #[test]
    fn cumulative_matches_simpson() {
        let l = LambdaBump::new(0.5).unwrap();
        for s in [0.1, 0.2, 0.25, 0.33, 0.45] {
            let reference = simpson(|t| l.value(t), 0.0, s, 200_000);
            assert!((l.cumulative(s) - reference).abs() < 1e-12);
        }
        assert_eq!(l.cumulative(0.5), 1.0);
        assert_eq!(l.cumulative(-1.0), 0.0);
    }

    #[test]
    fn gamma_examples() {
        let g = GammaBump::new(0.25, 0.1).unwrap();
        assert_eq!(bump_gamma(0.25, &g), 1.0);
        assert_eq!(bump_gamma(0.15, &g), 0.0);
        assert_eq!(bump_gamma(0.35, &g), 0.0);
        assert_eq!(bump_gamma(0.0, &g), 0.0);
        assert!(matches!(GammaBump::new(0.25, 0.25), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let l = LambdaBump::new(0.5).unwrap();
        let g = GammaBump::new(0.25, 0.1).unwrap();
        let e = 1e-6;
        for s in [0.05, 0.17, 0.3, 0.44] {
            let fd = (l.value(s + e) - l.value(s - e)) / (2.0 * e);
            assert!((fd - l.derivative(s)).abs() < 1e-5 * (1.0 + fd.abs()));
        }
        for r in [0.17, 0.22, 0.29, 0.33] {
            let fd = (g.value(r + e) - g.value(r - e)) / (2.0 * e);
            assert!((fd - g.derivative(r)).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }

    /// Derivatives of orders 1..4 tend to zero as r approaches the support edge.
    #[test]
    fn gamma_is_flat_at_support_boundary() {
        let g = GammaBump::new(0.25, 0.1).unwrap();
        let edge = 0.35;
        for order in 1..=4usize {
            let mut last = f64::INFINITY;
            for d in [2e-3, 1e-3, 5e-4, 2.5e-4] {
                let r = edge - d;
                let step = d / 20.0;
                let mut acc = 0.0;
                for j in 0..=order {
                    let binom = (0..j).fold(1.0, |b, i| b * (order - i) as f64 / (i + 1) as f64);
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * binom * g.value(r + (0.5 * order as f64 - j as f64) * step);
                }
                let deriv = (acc / step.powi(order as i32)).abs();
                assert!(deriv <= last, "order {order}: {deriv} > {last}");
                last = deriv;
            }
            assert!(last < 1e-6, "order {order}: {last}");
        }
    }
}
