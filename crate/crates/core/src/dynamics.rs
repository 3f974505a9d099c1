//! Orbit integration, the variational flow and Liouville checks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::geometry::Point;
use crate::quadrature::gauss_legendre_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedStepRk4,
    AdaptiveEmbedded,
}

/// What to do when an orbit leaves a non-periodic axis of the chart.
/// Periodic axes never trigger an escape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscapePolicy {
    Stop,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step for RK4; initial step hint for the adaptive method.
    pub step: f64,
    /// Relative and absolute tolerance of the adaptive method.
    pub tol: f64,
    /// Upper bound on accepted step sizes (the adaptive method also caps
    /// steps at one eighth of the thinnest patch height).
    pub max_step: f64,
    pub max_time: f64,
    pub escape: EscapePolicy,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::adaptive(1e-10)
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: Method::FixedStepRk4,
            step,
            tol: 0.0,
            max_step: f64::INFINITY,
            max_time: 1e6,
            escape: EscapePolicy::Stop,
            max_steps: 50_000_000,
        }
    }

    pub fn adaptive(tol: f64) -> Self {
        IntegratorConfig { method: Method::AdaptiveEmbedded, step: 1e-2, tol, ..Self::rk4(1e-3) }
    }

    pub fn with_escape(mut self, escape: EscapePolicy) -> Self {
        self.escape = escape;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::FixedStepRk4 => self.step > 0.0 && self.step.is_finite(),
            Method::AdaptiveEmbedded => self.tol > 0.0 && self.step > 0.0,
        };
        if !ok || !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter("integrator needs a positive step or tolerance".into()));
        }
        Ok(())
    }
}

/// An integrated trajectory. `times` starts at 0 and runs monotonically
/// toward the requested end time (decreasing for backward orbits); states
/// are in lifted chart coordinates and `derivs` holds `X` at each state,
/// which makes `at` a cubic Hermite interpolant in either direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub field_id: String,
    pub x0: Point,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    pub method: Method,
    pub step_or_tol: f64,
    /// Time at which the orbit left the chart, when it did.
    pub escaped_at: Option<f64>,
}

impl Orbit {
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty orbit")
    }

    pub fn end(&self) -> &[f64] {
        self.states.last().expect("non-empty orbit")
    }

    /// Index `i` with `t` between `times[i]` and `times[i+1]`.
    fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        let forward = self.times[n - 1] >= self.times[0];
        let idx = if forward {
            self.times.partition_point(|s| *s <= t)
        } else {
            self.times.partition_point(|s| *s >= t)
        };
        idx.clamp(1, n - 1) - 1
    }

    /// Dense output at signed time `t` (clamped to the covered range).
    pub fn at(&self, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.states[0].clone();
        }
        let i = self.segment(t);
        hermite(
            self.times[i],
            &self.states[i],
            &self.derivs[i],
            self.times[i + 1],
            &self.states[i + 1],
            &self.derivs[i + 1],
            t,
        )
    }

    /// CSV with header `t,x1..xn`.
    pub fn to_csv(&self) -> String {
        let n = self.x0.dim();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.17e}"));
            for v in s {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn hermite(t0: f64, y0: &[f64], d0: &[f64], t1: f64, y1: &[f64], d1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return y0.to_vec();
    }
    let s = ((t - t0) / h).clamp(0.0, 1.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i])
        .collect()
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = rhs(y)` over `[0, duration]` (duration ≥ 0). `visit`
/// sees the initial state and every accepted step as `(t, y, y')` and may
/// return `false` to stop early.
pub(crate) fn solve<F, V>(rhs: F, y0: &[f64], duration: f64, cfg: &IntegratorConfig, max_step: f64, mut visit: V) -> Result<()>
where
    F: Fn(&[f64], &mut [f64]),
    V: FnMut(f64, &[f64], &[f64]) -> bool,
{
    cfg.validate()?;
    let m = y0.len();
    let mut y = y0.to_vec();
    let mut dy = vec![0.0; m];
    rhs(&y, &mut dy);
    if !visit(0.0, &y, &dy) || duration == 0.0 {
        return Ok(());
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
    let mut tmp = vec![0.0; m];
    match cfg.method {
        Method::FixedStepRk4 => {
            let steps = (duration / cfg.step.min(max_step)).ceil().max(1.0);
            if steps > cfg.max_steps as f64 {
                return Err(Error::InvalidParameter("step budget exhausted".into()));
            }
            let steps = steps as usize;
            let h = duration / steps as f64;
            for s in 0..steps {
                k[0].copy_from_slice(&dy);
                for i in 0..m {
                    tmp[i] = y[i] + 0.5 * h * k[0][i];
                }
                rhs(&tmp, &mut k[1]);
                for i in 0..m {
                    tmp[i] = y[i] + 0.5 * h * k[1][i];
                }
                rhs(&tmp, &mut k[2]);
                for i in 0..m {
                    tmp[i] = y[i] + h * k[2][i];
                }
                rhs(&tmp, &mut k[3]);
                for i in 0..m {
                    y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
                }
                rhs(&y, &mut dy);
                let t = if s + 1 == steps { duration } else { (s + 1) as f64 * h };
                if !visit(t, &y, &dy) {
                    return Ok(());
                }
            }
        }
        Method::AdaptiveEmbedded => {
            let tol = cfg.tol;
            let cap = cfg.max_step.min(max_step);
            let mut h = cfg.step.min(cap).min(duration);
            let mut t = 0.0;
            let mut ynew = vec![0.0; m];
            let mut count = 0usize;
            while t < duration {
                count += 1;
                if count > cfg.max_steps {
                    return Err(Error::InvalidParameter("step budget exhausted".into()));
                }
                let last = t + h >= duration * (1.0 - 1e-15);
                if last {
                    h = duration - t;
                }
                k[0].copy_from_slice(&dy);
                for s in 0..6 {
                    for i in 0..m {
                        let mut acc = y[i];
                        for j in 0..=s {
                            acc += h * A[s][j] * k[j][i];
                        }
                        tmp[i] = acc;
                    }
                    if s == 5 {
                        ynew.copy_from_slice(&tmp);
                    }
                    let (head, tail) = k.split_at_mut(s + 1);
                    let _ = head;
                    rhs(&tmp, &mut tail[0]);
                }
                let mut err = 0.0;
                for i in 0..m {
                    let e: f64 = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                    let sc = tol + tol * y[i].abs().max(ynew[i].abs());
                    err += (e / sc).powi(2);
                }
                let err = (err / m as f64).sqrt();
                if !err.is_finite() {
                    return Err(Error::InvalidParameter("non-finite integration state".into()));
                }
                if err <= 1.0 {
                    t = if last { duration } else { t + h };
                    y.copy_from_slice(&ynew);
                    dy.copy_from_slice(&k[6]);
                    if !visit(t, &y, &dy) {
                        return Ok(());
                    }
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * factor).min(cap);
                if t < duration && h < 1e-14 * duration.max(1.0) && h < duration - t {
                    return Err(Error::InvalidParameter("step size underflow".into()));
                }
            }
        }
    }
    Ok(())
}

fn escaped(field: &VectorFieldSpec, y: &[f64]) -> bool {
    let c = &field.chart;
    (0..field.dim).any(|i| !c.periodic[i] && (y[i] < c.lo[i] - 1e-12 || y[i] > c.hi[i] + 1e-12))
}

/// Adaptive step cap: steps no longer than an eighth of the thinnest patch.
fn field_step_cap(field: &VectorFieldSpec) -> f64 {
    field
        .patches
        .iter()
        .map(|p| p.ring.h.min(2.0 * p.ring.xi) / 8.0)
        .fold(f64::INFINITY, f64::min)
}

/// Integrates like [`integrate`] but returns the partial orbit on escape
/// instead of an error.
pub fn integrate_partial(field: &VectorFieldSpec, x0: &Point, t_end: f64, cfg: &IntegratorConfig) -> Result<Orbit> {
    if x0.dim() != field.dim {
        return Err(Error::InvalidArgument("point and field dimensions differ".into()));
    }
    if !t_end.is_finite() || t_end.abs() > cfg.max_time {
        return Err(Error::InvalidParameter(format!("integration time {t_end} out of range")));
    }
    let backward = t_end < 0.0;
    let g = if backward { field.reversed() } else { field.clone() };
    let sign = if backward { -1.0 } else { 1.0 };
    let mut orbit = Orbit {
        field_id: field.id().to_string(),
        x0: x0.clone(),
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
        method: cfg.method,
        step_or_tol: match cfg.method {
            Method::FixedStepRk4 => cfg.step,
            Method::AdaptiveEmbedded => cfg.tol,
        },
        escaped_at: None,
    };
    let stop_on_escape = cfg.escape == EscapePolicy::Stop;
    solve(
        |y, out| g.eval_into(y, out),
        &x0.coords,
        t_end.abs(),
        cfg,
        field_step_cap(field),
        |t, y, dy| {
            orbit.times.push(sign * t);
            orbit.states.push(y.to_vec());
            orbit.derivs.push(dy.iter().map(|v| sign * v).collect());
            if stop_on_escape && escaped(field, y) {
                orbit.escaped_at = Some(sign * t);
                return false;
            }
            true
        },
    )?;
    Ok(orbit)
}

/// Integrates `field` from `x0` over `[0, t_end]` (or `[t_end, 0]` when
/// negative, by flowing the reversed field).
pub fn integrate(field: &VectorFieldSpec, x0: &Point, t_end: f64, cfg: &IntegratorConfig) -> Result<Orbit> {
    let orbit = integrate_partial(field, x0, t_end, cfg)?;
    if let Some(t) = orbit.escaped_at {
        return Err(Error::IntegrationEscape { t, last: orbit.end().to_vec() });
    }
    Ok(orbit)
}

/// Endpoint of the time-`t` flow, without storing the orbit.
pub fn flow(field: &VectorFieldSpec, x: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    let backward = t < 0.0;
    let g = if backward { field.reversed() } else { field.clone() };
    let mut end = x.to_vec();
    let mut escape_t = None;
    let stop = cfg.escape == EscapePolicy::Stop;
    solve(|y, out| g.eval_into(y, out), x, t.abs(), cfg, field_step_cap(field), |s, y, _| {
        end.copy_from_slice(y);
        if stop && escaped(field, y) {
            escape_t = Some(if backward { -s } else { s });
            return false;
        }
        true
    })?;
    match escape_t {
        Some(t) => Err(Error::IntegrationEscape { t, last: end }),
        None => Ok(end),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMethod {
    /// Integrate `M' = DX(x) M` alongside the orbit.
    Variational,
    /// Central differences of the flow over basis displacements.
    FiniteDifference,
}

/// Differential of the time-`t` map at `x0`.
pub fn flow_jacobian(
    field: &VectorFieldSpec,
    x0: &Point,
    t: f64,
    cfg: &IntegratorConfig,
    method: JacobianMethod,
) -> Result<DMatrix<f64>> {
    let n = field.dim;
    if x0.dim() != n {
        return Err(Error::InvalidArgument("point and field dimensions differ".into()));
    }
    match method {
        JacobianMethod::FiniteDifference => {
            let step = 1e-6;
            let cols = crate::par::map_range(n, |j| -> Result<Vec<f64>> {
                let mut xp = x0.coords.clone();
                let mut xm = x0.coords.clone();
                xp[j] += step;
                xm[j] -= step;
                let fp = flow(field, &xp, t, cfg)?;
                let fm = flow(field, &xm, t, cfg)?;
                Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
            });
            let mut m = DMatrix::zeros(n, n);
            for (j, col) in cols.into_iter().enumerate() {
                let col = col?;
                for i in 0..n {
                    m[(i, j)] = col[i];
                }
            }
            Ok(m)
        }
        JacobianMethod::Variational => {
            let backward = t < 0.0;
            let g = if backward { field.reversed() } else { field.clone() };
            let mut y0 = x0.coords.clone();
            for j in 0..n {
                for i in 0..n {
                    y0.push(if i == j { 1.0 } else { 0.0 });
                }
            }
            let rhs = |y: &[f64], out: &mut [f64]| {
                g.eval_into(&y[..n], &mut out[..n]);
                let jac = g.jacobian(&y[..n]);
                for col in 0..n {
                    for row in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += jac[(row, k)] * y[n + col * n + k];
                        }
                        out[n + col * n + row] = acc;
                    }
                }
            };
            let mut end = y0.clone();
            let mut esc = None;
            let stop = cfg.escape == EscapePolicy::Stop;
            solve(rhs, &y0, t.abs(), cfg, field_step_cap(field), |s, y, _| {
                end.copy_from_slice(y);
                if stop && escaped(field, &y[..n]) {
                    esc = Some(if backward { -s } else { s });
                    return false;
                }
                true
            })?;
            if let Some(t) = esc {
                return Err(Error::IntegrationEscape { t, last: end[..n].to_vec() });
            }
            Ok(DMatrix::from_column_slice(n, n, &end[n..]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub det_jacobian: f64,
    pub exp_integral_divergence: f64,
    pub abs_difference: f64,
}

/// Integral of `h` along the orbit's dense output, step by step.
fn integrate_along(orbit: &Orbit, h: impl Fn(&[f64]) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 0..orbit.times.len().saturating_sub(1) {
        let (a, b) = (orbit.times[i], orbit.times[i + 1]);
        total += gauss_legendre_5(
            |s| {
                let x = hermite(a, &orbit.states[i], &orbit.derivs[i], b, &orbit.states[i + 1], &orbit.derivs[i + 1], s);
                h(&x)
            },
            a,
            b,
        );
    }
    total
}

/// Compares `det Dφ_T(x0)` with `exp ∫₀ᵀ div X(φ_s x0) ds`.
pub fn liouville_check(field: &VectorFieldSpec, x0: &Point, t: f64, cfg: &IntegratorConfig) -> Result<LiouvilleReport> {
    let det = flow_jacobian(field, x0, t, cfg, JacobianMethod::Variational)?.determinant();
    let orbit = integrate(field, x0, t, cfg)?;
    let integral = integrate_along(&orbit, |x| field.divergence(x));
    let e = integral.exp();
    Ok(LiouvilleReport { det_jacobian: det, exp_integral_divergence: e, abs_difference: (det - e).abs() })
}

/// Liouville's formula for the volume form `ψ dz`: the `ψ`-determinant
/// `ψ(φ_T x)/ψ(x)·det Dφ_T` against `exp ∫ div_ψ X`, where
/// `div_ψ X = div X + ∇ψ·X/ψ`. The gradient uses central differences.
pub fn liouville_check_weighted(
    field: &VectorFieldSpec,
    psi: &(dyn Fn(&[f64]) -> f64 + Sync),
    x0: &Point,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<LiouvilleReport> {
    let n = field.dim;
    let det = flow_jacobian(field, x0, t, cfg, JacobianMethod::Variational)?.determinant();
    let orbit = integrate(field, x0, t, cfg)?;
    let p0 = psi(&x0.coords);
    let p1 = psi(orbit.end());
    if !(p0 > 0.0 && p1 > 0.0) {
        return Err(Error::InvalidDensity("density must be positive along the orbit".into()));
    }
    let weighted = |x: &[f64]| {
        let v = field.eval(x);
        let e = 1e-5;
        let mut grad_dot = 0.0;
        let mut xp = x.to_vec();
        for i in 0..n {
            let orig = xp[i];
            xp[i] = orig + e;
            let a = psi(&xp);
            xp[i] = orig - e;
            let b = psi(&xp);
            xp[i] = orig;
            grad_dot += (a - b) / (2.0 * e) * v[i];
        }
        field.divergence(x) + grad_dot / psi(x)
    };
    let e = integrate_along(&orbit, weighted).exp();
    let wdet = p1 / p0 * det;
    Ok(LiouvilleReport { det_jacobian: wdet, exp_integral_divergence: e, abs_difference: (wdet - e).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Patch;
    use crate::geometry::CylinderRingSpec;

    fn patched(theta: f64) -> VectorFieldSpec {
        let ring = CylinderRingSpec::canonical(3, 0.25, 0.5, 0.1).unwrap();
        VectorFieldSpec::constant_vertical(3).with_patch(Patch::new(ring, theta).unwrap()).unwrap()
    }

    #[test]
    fn constant_field_endpoint() {
        let f = VectorFieldSpec::constant_vertical(3);
        let o = integrate(&f, &Point::new(vec![0.0; 3]).unwrap(), 1.0, &IntegratorConfig::rk4(1e-3)).unwrap();
        assert!((o.end()[2] - 1.0).abs() < 1e-14);
        assert_eq!(o.times[0], 0.0);
        assert_eq!(o.states[0], vec![0.0; 3]);
    }

    #[test]
    fn patched_orbit_reaches_rotated_point() {
        let (d, h, th) = (0.25, 0.5, 0.2);
        let f = patched(th);
        let o = integrate(&f, &Point::new(vec![d, 0.0, 0.0]).unwrap(), h, &IntegratorConfig::default()).unwrap();
        let q = [d * th.cos(), d * th.sin(), h];
        let e = crate::geometry::norm(&o.end().iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn torus_flow_wraps_to_expected_point() {
        let a = 2f64.sqrt() - 1.0;
        let f = VectorFieldSpec::linear_torus(vec![a, 1.0, 1.0]).unwrap();
        let o = integrate(&f, &Point::new(vec![0.0; 3]).unwrap(), 1.0, &IntegratorConfig::rk4(1e-3)).unwrap();
        let (r, _) = f.chart.reduce(o.end());
        assert!((r[0] - a).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
    }

    #[test]
    fn escape_is_reported() {
        let f = VectorFieldSpec::constant_vertical(3);
        let err = integrate(&f, &Point::new(vec![0.0; 3]).unwrap(), 5.0, &IntegratorConfig::rk4(1e-2)).unwrap_err();
        assert!(matches!(err, Error::IntegrationEscape { .. }));
        let partial = integrate_partial(&f, &Point::new(vec![0.0; 3]).unwrap(), 5.0, &IntegratorConfig::rk4(1e-2)).unwrap();
        assert!(partial.escaped_at.unwrap() > 1.99);
    }

    #[test]
    fn jacobians_of_linear_flow() {
        let f = VectorFieldSpec::catalog("hyperbolic-shear", 3).unwrap();
        let x0 = Point::new(vec![0.1, 0.2, -1.0]).unwrap();
        for method in [JacobianMethod::Variational, JacobianMethod::FiniteDifference] {
            let j = flow_jacobian(&f, &x0, 1.0, &IntegratorConfig::default(), method).unwrap();
            let e = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1f64.exp(), (-1f64).exp(), 1.0]));
            assert!((j - e).abs().max() < 1e-6);
        }
    }

    #[test]
    fn liouville_for_divergence_one() {
        let f = VectorFieldSpec::catalog("div-test", 3).unwrap();
        let r = liouville_check(&f, &Point::new(vec![0.1, 0.0, 0.0]).unwrap(), 0.5, &IntegratorConfig::default()).unwrap();
        assert!((r.det_jacobian - 0.5f64.exp()).abs() < 1e-4);
        assert!((r.exp_integral_divergence - 0.5f64.exp()).abs() < 1e-4);
    }

    #[test]
    fn weighted_liouville_for_invariant_density() {
        let f = VectorFieldSpec::constant_vertical(3);
        let psi = |z: &[f64]| 1.0 + 0.25 * z[0].sin() * z[1].cos();
        let r = liouville_check_weighted(&f, &psi, &Point::new(vec![0.3, -0.2, -1.0]).unwrap(), 1.5, &IntegratorConfig::default()).unwrap();
        assert!((r.det_jacobian - 1.0).abs() < 1e-5);
        assert!((r.exp_integral_divergence - 1.0).abs() < 1e-5);
    }

    #[test]
    fn backward_orbit_times_decrease_and_dense_output_interpolates() {
        let f = patched(0.3);
        let x0 = Point::new(vec![0.25, 0.0, 0.45]).unwrap();
        let o = integrate(&f, &x0, -0.4, &IntegratorConfig::default()).unwrap();
        assert!(o.times.windows(2).all(|w| w[1] < w[0]));
        let mid = o.at(-0.2);
        let direct = flow(&f, &x0.coords, -0.2, &IntegratorConfig::default()).unwrap();
        for (a, b) in mid.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = patched(0.4);
        let x0 = [0.22, 0.05, 0.0];
        let reference = flow(&f, &x0, 0.5, &IntegratorConfig::adaptive(1e-13)).unwrap();
        let err = |h: f64| {
            let y = flow(&f, &x0, 0.5, &IntegratorConfig::rk4(h)).unwrap();
            crate::geometry::norm(&y.iter().zip(&reference).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let ratio = err(0.01) / err(0.005);
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn csv_header() {
        let f = VectorFieldSpec::constant_vertical(3);
        let o = integrate(&f, &Point::new(vec![0.0; 3]).unwrap(), 0.01, &IntegratorConfig::rk4(1e-2)).unwrap();
        assert!(o.to_csv().starts_with("t,x1,x2,x3\n"));
    }
}
