use serde::{Deserialize, Serialize};

use super::manifold::{ElementKind, FundamentalDomainSample};
use crate::dynamics::{integrate_partial, IntegratorConfig, Orbit};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::geometry::{BoxChart, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceHit {
    /// Time of closest approach during the first excursion into the ball.
    pub t: f64,
    pub dist: f64,
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 * (1.0 + a.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

fn scan(orbit: &Orbit, chart: &BoxChart, z: &[f64], eps: f64, speed: f64, min_t: f64) -> Option<RecurrenceHit> {
    let end = orbit.end_time();
    let stride = eps / (2.0 * speed);
    let dist = |t: f64| chart.distance(&orbit.at(t), z);
    let slack = speed * stride / 2.0;
    let mut k = 1usize;
    loop {
        let t = min_t + k as f64 * stride;
        if t > end {
            return None;
        }
        let d = dist(t);
        if d < eps + slack {
            // Walk downhill in stride steps to bracket the local minimum.
            let (mut lo, mut hi) = (t - stride, t + stride);
            let mut probe = t;
            let mut dp = d;
            let dir = if dist(t + 0.25 * stride) <= d { 1.0 } else { -1.0 };
            loop {
                let next = probe + dir * stride;
                if next <= min_t || next > end {
                    break;
                }
                let dn = dist(next);
                if dn >= dp {
                    break;
                }
                probe = next;
                dp = dn;
            }
            lo = lo.min(probe - stride).max(min_t);
            hi = hi.max(probe + stride).min(end);
            if dir > 0.0 {
                lo = lo.max(probe - stride);
            } else {
                hi = hi.min(probe + stride);
            }
            let (tm, dm) = golden_min(dist, lo, hi);
            if dm < eps && tm > min_t {
                return Some(RecurrenceHit { t: tm, dist: dm });
            }
            k = (((hi - min_t) / stride).ceil() as usize).max(k + 1);
        } else {
            // Skip ahead as far as the distance bound allows.
            let skip = (((d - eps - slack) / speed) / stride).floor() as usize;
            k += skip.max(1);
        }
    }
}

/// First time after `min_t` at which the orbit of `z` comes within `eps`
/// of `z`, scanning the dense output at stride `eps/(2·speed)`.
pub fn detect_recurrence(
    field: &VectorFieldSpec,
    z: &Point,
    eps: f64,
    min_t: f64,
    max_t: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<RecurrenceHit>> {
    if !(eps > 0.0) || !(max_t > min_t) || min_t < 0.0 {
        return Err(Error::InvalidParameter("need eps > 0 and 0 <= minT < maxT".into()));
    }
    let orbit = integrate_partial(field, z, max_t, cfg)?;
    let hit = scan(&orbit, &field.chart, &z.coords, eps, field.speed_bound().max(1e-12), min_t);
    match (hit, orbit.escaped_at) {
        (Some(h), _) => Ok(Some(h)),
        (None, Some(t)) => Err(Error::EscapeBeforeReturn { t }),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecurrence {
    pub z: Vec<f64>,
    pub t: Option<f64>,
    pub dist: Option<f64>,
    pub escaped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub element: String,
    pub k: usize,
    pub m: usize,
    pub density_defect: f64,
    #[serde(rename = "pass_A1")]
    pub pass_a1: bool,
    #[serde(rename = "pass_A2")]
    pub pass_a2: bool,
    pub per_point: Vec<PointRecurrence>,
}

/// (A1): the domain sample is `1/k`-dense in the domain, measured on a
/// reference mesh of spacing `1/(4k)`. (A2): every sample point returns
/// within `1/m` of itself after some time `> m`. Orbits that leave the
/// chart first count as failures.
pub fn check_genericity_conditions(
    field: &VectorFieldSpec,
    k: usize,
    m: usize,
    dom: &FundamentalDomainSample,
    max_t: f64,
    cfg: &IntegratorConfig,
) -> Result<GenericityReport> {
    if k == 0 || m == 0 {
        return Err(Error::InvalidParameter("k and m must be positive".into()));
    }
    if let Some(e) = &dom.element {
        let want_open = matches!(e.kind, ElementKind::PeriodicOrbit { .. });
        if dom.open_interior != want_open {
            return Err(Error::InvalidInput(
                "periodic orbits use the open domain, singularities the closed one".into(),
            ));
        }
    }
    let chart = &field.chart;
    let mesh = dom.geometry.mesh(1.0 / (4.0 * k as f64));
    let density_defect = crate::par::max_slice(&mesh, |x| {
        dom.points.iter().map(|p| chart.distance(x, &p.coords)).fold(f64::INFINITY, f64::min)
    });
    let eps = 1.0 / m as f64;
    let per = crate::par::map_slice(&dom.points, |p| -> Result<PointRecurrence> {
        match detect_recurrence(field, p, eps, m as f64, max_t, cfg) {
            Ok(h) => Ok(PointRecurrence { z: p.coords.clone(), t: h.map(|h| h.t), dist: h.map(|h| h.dist), escaped: false }),
            Err(Error::EscapeBeforeReturn { .. }) => Ok(PointRecurrence { z: p.coords.clone(), t: None, dist: None, escaped: true }),
            Err(e) => Err(e),
        }
    });
    let per_point = per.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GenericityReport {
        element: dom.element.as_ref().map(|e| e.label()).unwrap_or_else(|| "domain".into()),
        k,
        m,
        pass_a1: density_defect < 1.0 / k as f64,
        pass_a2: !per_point.is_empty() && per_point.iter().all(|p| p.t.is_some_and(|t| t > m as f64)),
        density_defect,
        per_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poincare::{fundamental_domain_sample, CriticalElement, Side};

    #[test]
    fn torus_point_recurs() {
        let f = VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
        let z = Point::new(vec![0.0; 3]).unwrap();
        let h = detect_recurrence(&f, &z, 0.05, 10.0, 2000.0, &IntegratorConfig::default()).unwrap().unwrap();
        assert!(h.t > 10.0 && h.dist < 0.05);
    }

    #[test]
    fn periodic_orbit_recurs_at_its_period() {
        let f = VectorFieldSpec::catalog("rotation", 3).unwrap();
        let z = Point::new(vec![1.0, 0.0, 0.5]).unwrap();
        let h = detect_recurrence(&f, &z, 0.1, 1.0, 20.0, &IntegratorConfig::default()).unwrap().unwrap();
        assert!((h.t - 2.0 * std::f64::consts::PI).abs() < 1e-5, "{}", h.t);
    }

    #[test]
    fn escaping_orbit_reports_escape() {
        let f = VectorFieldSpec::catalog("saddle", 3).unwrap();
        let z = Point::new(vec![0.1, 0.0, 0.0]).unwrap();
        let r = detect_recurrence(&f, &z, 0.05, 1.0, 50.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::EscapeBeforeReturn { .. })));
    }

    #[test]
    fn recurrence_is_monotone_in_eps() {
        let f = VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
        let z = Point::new(vec![0.2, 0.7, 0.4]).unwrap();
        let cfg = IntegratorConfig::default();
        let mut last = f64::INFINITY;
        for eps in [0.04, 0.06, 0.1, 0.2] {
            let h = detect_recurrence(&f, &z, eps, 3.0, 2000.0, &cfg).unwrap().unwrap();
            assert!(h.t <= last + 1e-9, "{eps}: {} > {last}", h.t);
            last = h.t;
        }
    }

    #[test]
    fn gap_breaks_density() {
        let f = VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
        let mut d = FundamentalDomainSample::segment(vec![0.1, 0.3, 0.3], vec![0.9, 0.3, 0.3], 41, false).unwrap();
        d.points.retain(|p| !(p.coords[0] > 0.25 && p.coords[0] < 0.75));
        let r = check_genericity_conditions(&f, 5, 3, &d, 200.0, &IntegratorConfig::default()).unwrap();
        assert!(!r.pass_a1 && r.density_defect >= 0.25);
    }

    #[test]
    fn saddle_domain_fails_a2() {
        let f = VectorFieldSpec::catalog("saddle", 3).unwrap();
        let e = CriticalElement::singularity(&f, Point::new(vec![0.0; 3]).unwrap()).unwrap();
        let d = fundamental_domain_sample(&f, &e, Side::Unstable, 8, false, 0.1, &IntegratorConfig::default()).unwrap();
        let r = check_genericity_conditions(&f, 5, 3, &d, 50.0, &IntegratorConfig::default()).unwrap();
        assert!(!r.pass_a2);
        assert!(r.per_point.iter().all(|p| p.t.is_none()));
    }
}
