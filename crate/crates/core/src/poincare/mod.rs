//! Transversal sections and return maps, critical elements, fundamental
//! domains and invariant manifolds, recurrence and the genericity checks.

mod manifold;
mod recurrence;

pub use manifold::{
    fundamental_domain_sample, grow_invariant_manifold, CriticalElement, DomainGeometry, ElementKind,
    FundamentalDomainSample, ManifoldCloud, Side,
};
pub use recurrence::{check_genericity_conditions, detect_recurrence, GenericityReport, PointRecurrence, RecurrenceHit};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, hermite, solve, IntegratorConfig};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::geometry::{dot, norm, unit, BoxChart, Point};

/// Tangency threshold on `|X·n|` at a crossing.
pub const TANGENCY: f64 = 1e-8;

/// A disk of the hyperplane through `base` orthogonal to `normal`, crossed
/// in the direction `orientation·normal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub base: Point,
    pub normal: Vec<f64>,
    pub radius: f64,
    pub orientation: i8,
}

impl SectionSpec {
    pub fn new(field: &VectorFieldSpec, base: Point, normal: Vec<f64>, radius: f64, orientation: i8) -> Result<Self> {
        if base.dim() != field.dim || normal.len() != field.dim {
            return Err(Error::InvalidArgument("section dimension mismatch".into()));
        }
        let len = norm(&normal);
        if !(len > 0.0) || !(radius > 0.0) || (orientation != 1 && orientation != -1) {
            return Err(Error::InvalidParameter("section needs a nonzero normal, positive radius and orientation ±1".into()));
        }
        let normal: Vec<f64> = normal.iter().map(|v| v / len).collect();
        let speed = dot(&field.eval(&base.coords), &normal);
        if speed.abs() <= TANGENCY {
            return Err(Error::Tangency { t: 0.0, normal_speed: speed });
        }
        Ok(SectionSpec { base, normal, radius, orientation })
    }

    /// The section orthogonal to the field at `base`, crossed along the flow.
    pub fn orthogonal(field: &VectorFieldSpec, base: Point, radius: f64) -> Result<Self> {
        let v = field.eval(&base.coords);
        Self::new(field, base, v, radius, 1)
    }

    /// Same disk, opposite crossing direction.
    pub fn flipped(&self) -> Self {
        let mut s = self.clone();
        s.orientation = -s.orientation;
        s
    }

    pub fn signed_distance(&self, chart: &BoxChart, x: &[f64]) -> f64 {
        dot(&chart.displacement(&self.base.coords, x), &self.normal)
    }

    /// Distance from the base within the hyperplane.
    pub fn in_plane_distance(&self, chart: &BoxChart, x: &[f64]) -> f64 {
        let d = chart.displacement(&self.base.coords, x);
        let s = dot(&d, &self.normal);
        norm(&d.iter().zip(&self.normal).map(|(a, b)| a - s * b).collect::<Vec<_>>())
    }

    /// Orthonormal basis of the hyperplane.
    pub fn basis(&self) -> Vec<Vec<f64>> {
        let n = self.normal.len();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let mut v = unit(n, i);
            for r in std::iter::once(&self.normal).chain(out.iter()) {
                let c = dot(&v, r);
                for (vk, rk) in v.iter_mut().zip(r) {
                    *vk -= c * rk;
                }
            }
            let l = norm(&v);
            if l > 1e-6 {
                out.push(v.iter().map(|x| x / l).collect());
            }
            if out.len() + 1 == n {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapSample {
    pub entry: Point,
    pub exit: Point,
    pub return_time: f64,
}

/// Step cap while scanning for crossings: a small fraction of the
/// smallest period (or unit length) at the fastest speed.
fn scan_cap(field: &VectorFieldSpec) -> f64 {
    let scale = (0..field.dim)
        .filter(|i| field.chart.periodic[*i])
        .map(|i| field.chart.period(i))
        .fold(1.0, f64::min);
    0.02 * scale / field.speed_bound().max(1e-12)
}

/// First oriented crossing of the section disk after time `1e−6`.
pub fn first_return(
    field: &VectorFieldSpec,
    section: &SectionSpec,
    x: &Point,
    max_t: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<ReturnMapSample>> {
    let chart = &field.chart;
    if x.dim() != field.dim {
        return Err(Error::InvalidArgument("point dimension mismatch".into()));
    }
    let s0 = section.signed_distance(chart, &x.coords);
    if s0.abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("entry point is {s0:e} off the section")));
    }
    let o = section.orientation as f64;
    let speed = field.speed_bound();
    let mut cfg = cfg.clone();
    cfg.max_step = cfg.max_step.min(scan_cap(field));
    let mut prev: Option<(f64, Vec<f64>, Vec<f64>, f64)> = None;
    let mut found: Option<(f64, Vec<f64>, f64)> = None;
    let mut failure: Option<Error> = None;
    solve(
        |y, out| field.eval_into(y, out),
        &x.coords,
        max_t,
        &cfg,
        f64::INFINITY,
        |t, y, dy| {
            if (0..field.dim).any(|i| !chart.periodic[i] && (y[i] < chart.lo[i] - 1e-12 || y[i] > chart.hi[i] + 1e-12)) {
                return false;
            }
            let s = section.signed_distance(chart, y);
            if let Some((tp, yp, dp, sp)) = &prev {
                let jump_ok = (s - sp).abs() <= 2.0 * (t - tp) * speed + 1e-12;
                if jump_ok && o * sp < 0.0 && o * s >= 0.0 && t > 1e-6 {
                    let sig = |tt: f64| section.signed_distance(chart, &hermite(*tp, yp, dp, t, y, dy, tt));
                    let (mut a, mut b) = (*tp, t);
                    while b - a > 1e-10 {
                        let mid = 0.5 * (a + b);
                        if o * sig(mid) < 0.0 {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    let tc = 0.5 * (a + b);
                    if tc > 1e-6 {
                        match polish(field, section, yp, tc - tp) {
                            Ok((xc, dt)) => {
                                if section.in_plane_distance(chart, &xc) <= section.radius {
                                    found = Some((tc + dt, xc, 0.0));
                                    return false;
                                }
                            }
                            Err(e) => {
                                failure = Some(e);
                                return false;
                            }
                        }
                    }
                }
            }
            prev = Some((t, y.to_vec(), dy.to_vec(), s));
            true
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(found.map(|(t, xc, _)| {
        let s = section.signed_distance(chart, &xc);
        let projected: Vec<f64> = xc.iter().zip(&section.normal).map(|(a, b)| a - s * b).collect();
        let (exit, _) = chart.reduce(&projected);
        let (entry, _) = chart.reduce(&x.coords);
        ReturnMapSample {
            entry: Point { coords: entry, chart_id: x.chart_id },
            exit: Point { coords: exit, chart_id: x.chart_id },
            return_time: t,
        }
    }))
}

/// Flows `y` for `tau`, then Newton-corrects the time so the state lies
/// on the hyperplane. Returns the state and the time correction.
fn polish(field: &VectorFieldSpec, section: &SectionSpec, y: &[f64], tau: f64) -> Result<(Vec<f64>, f64)> {
    let fine = IntegratorConfig::adaptive(1e-13);
    let mut x = flow(field, y, tau, &fine)?;
    let mut shift = 0.0;
    for _ in 0..3 {
        let v = field.eval(&x);
        let vn = dot(&v, &section.normal);
        if vn.abs() < TANGENCY {
            return Err(Error::Tangency { t: tau + shift, normal_speed: vn });
        }
        let s = section.signed_distance(&field.chart, &x);
        if s == 0.0 {
            break;
        }
        let dt = -s / vn;
        x = flow(field, &x, dt, &fine)?;
        shift += dt;
    }
    Ok((x, shift))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedReturn {
    /// Differential of the return map in the section basis.
    pub matrix: Vec<Vec<f64>>,
    pub basis: Vec<Vec<f64>>,
    /// Eigenvalues as `[re, im]`.
    pub eigenvalues: Vec<[f64; 2]>,
    pub moduli: Vec<f64>,
    pub hyperbolic: bool,
    /// Whether 1 is not an eigenvalue; reported, never used as a gate.
    pub elementary: bool,
    pub determinant: f64,
    pub period: f64,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub(crate) fn spectrum(m: &DMatrix<f64>) -> Vec<[f64; 2]> {
    let mut ev: Vec<[f64; 2]> = m.clone().complex_eigenvalues().iter().map(|c| [c.re, c.im]).collect();
    ev.sort_by(|a, b| b[0].hypot(b[1]).total_cmp(&a[0].hypot(a[1])).then(a[1].total_cmp(&b[1])));
    ev
}

/// Differential of the return map at a fixed point, by central
/// differences (step `1e−6`) in an orthonormal section basis.
pub fn linearized_return(
    field: &VectorFieldSpec,
    section: &SectionSpec,
    fixed: &Point,
    max_t: f64,
    cfg: &IntegratorConfig,
) -> Result<LinearizedReturn> {
    let ret = first_return(field, section, fixed, max_t, cfg)?
        .ok_or(Error::NotAFixedPoint { defect: f64::INFINITY })?;
    let defect = field.chart.distance(&ret.exit.coords, &fixed.coords);
    if defect > 1e-6 {
        return Err(Error::NotAFixedPoint { defect });
    }
    let basis = section.basis();
    let k = basis.len();
    let step = 1e-6;
    let displaced = |j: usize, sign: f64| -> Result<Vec<f64>> {
        let x: Vec<f64> = fixed.coords.iter().zip(&basis[j]).map(|(a, b)| a + sign * step * b).collect();
        let r = first_return(field, section, &Point { coords: x, chart_id: fixed.chart_id }, max_t, cfg)?
            .ok_or(Error::NotAFixedPoint { defect: f64::INFINITY })?;
        Ok(field.chart.displacement(&fixed.coords, &r.exit.coords))
    };
    let cols = crate::par::map_range(k, |j| -> Result<Vec<f64>> {
        let p = displaced(j, 1.0)?;
        let m = displaced(j, -1.0)?;
        Ok(basis.iter().map(|b| (dot(&p, b) - dot(&m, b)) / (2.0 * step)).collect())
    });
    let mut mat = DMatrix::zeros(k, k);
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            mat[(i, j)] = v;
        }
    }
    let eigenvalues = spectrum(&mat);
    let moduli: Vec<f64> = eigenvalues.iter().map(|e| e[0].hypot(e[1])).collect();
    Ok(LinearizedReturn {
        hyperbolic: moduli.iter().all(|m| (m - 1.0).abs() > 1e-6),
        elementary: eigenvalues.iter().all(|e| (e[0] - 1.0).hypot(e[1]) > 1e-6),
        determinant: mat.determinant(),
        matrix: matrix_rows(&mat),
        basis,
        eigenvalues,
        moduli,
        period: ret.return_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z_section(field: &VectorFieldSpec, x: f64, y: f64) -> SectionSpec {
        SectionSpec::new(field, Point::new(vec![x, y, 0.0]).unwrap(), vec![0.0, 0.0, 1.0], 2.0, 1).unwrap()
    }

    #[test]
    fn catmap_return_is_cat_map() {
        let f = VectorFieldSpec::catmap_suspension();
        let s = z_section(&f, 0.5, 0.5);
        for (x, y) in [(0.1, 0.2), (0.7, 0.35), (0.93, 0.61)] {
            let r = first_return(&f, &s, &Point::new(vec![x, y, 0.0]).unwrap(), 3.0, &IntegratorConfig::default())
                .unwrap()
                .unwrap();
            assert!((r.return_time - 1.0).abs() < 1e-9);
            let expect = [(2.0 * x + y) % 1.0, (x + y) % 1.0, 0.0];
            assert!(f.chart.distance(&r.exit.coords, &expect) < 1e-9, "{:?} vs {expect:?}", r.exit.coords);
        }
    }

    #[test]
    fn periodic_vertical_returns_to_entry() {
        let f = VectorFieldSpec::constant_vertical(3).with_chart(BoxChart::torus(3, 1.0)).unwrap();
        let s = z_section(&f, 0.0, 0.0);
        let x = Point::new(vec![0.3, 0.6, 0.0]).unwrap();
        let r = first_return(&f, &s, &x, 5.0, &IntegratorConfig::rk4(1e-3)).unwrap().unwrap();
        assert!((r.return_time - 1.0).abs() < 1e-10);
        assert!(f.chart.distance(&r.exit.coords, &x.coords) < 1e-12);
    }

    #[test]
    fn non_periodic_chart_never_returns() {
        let f = VectorFieldSpec::constant_vertical(3);
        let s = z_section(&f, 0.0, 0.0);
        let x = Point::new(vec![0.3, 0.6, 0.0]).unwrap();
        assert!(first_return(&f, &s, &x, 10.0, &IntegratorConfig::default()).unwrap().is_none());
    }

    #[test]
    fn tangent_section_is_rejected() {
        let f = VectorFieldSpec::constant_vertical(3);
        let r = SectionSpec::new(&f, Point::new(vec![0.0; 3]).unwrap(), vec![1.0, 0.0, 0.0], 1.0, 1);
        assert!(matches!(r, Err(Error::Tangency { .. })));
    }

    #[test]
    fn rotation_suspension_is_not_hyperbolic() {
        let f = VectorFieldSpec::rotation_suspension(0.3);
        let s = z_section(&f, 0.0, 0.0);
        let lr = linearized_return(&f, &s, &Point::new(vec![0.0; 3]).unwrap(), 3.0, &IntegratorConfig::default()).unwrap();
        assert!(!lr.hyperbolic);
        for m in &lr.moduli {
            assert!((m - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn non_fixed_point_is_rejected() {
        let f = VectorFieldSpec::catmap_suspension();
        let s = z_section(&f, 0.5, 0.5);
        let r = linearized_return(&f, &s, &Point::new(vec![0.2, 0.1, 0.0]).unwrap(), 3.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::NotAFixedPoint { .. })));
    }
}
