use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{first_return, linearized_return, matrix_rows, spectrum, SectionSpec};
use crate::dynamics::{integrate_partial, IntegratorConfig};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::geometry::{norm, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ElementKind {
    PeriodicOrbit { seed: Point, period: f64, section: SectionSpec },
    Singularity { point: Point },
}

/// A periodic orbit or singularity with its linear data: the return-map
/// differential (in `basis` coordinates) or the field Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalElement {
    pub kind: ElementKind,
    pub hyperbolic: bool,
    pub spectrum: Vec<[f64; 2]>,
    pub linear: Vec<Vec<f64>>,
    pub basis: Vec<Vec<f64>>,
}

impl CriticalElement {
    /// Periodic orbit through `seed`, with its section orthogonal to the
    /// flow at `seed`.
    pub fn periodic_orbit(
        field: &VectorFieldSpec,
        seed: Point,
        period: f64,
        section_radius: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        let end = crate::dynamics::flow(field, &seed.coords, period, cfg)?;
        let defect = field.chart.distance(&end, &seed.coords);
        if defect > 1e-7 {
            return Err(Error::NotAFixedPoint { defect });
        }
        let section = SectionSpec::orthogonal(field, seed.clone(), section_radius)?;
        let lr = linearized_return(field, &section, &seed, 1.5 * period, cfg)?;
        Ok(CriticalElement {
            kind: ElementKind::PeriodicOrbit { seed, period, section },
            hyperbolic: lr.hyperbolic,
            spectrum: lr.eigenvalues,
            linear: lr.matrix,
            basis: lr.basis,
        })
    }

    pub fn singularity(field: &VectorFieldSpec, point: Point) -> Result<Self> {
        let v = field.eval(&point.coords);
        let defect = norm(&v);
        if defect > 1e-10 {
            return Err(Error::NotAFixedPoint { defect });
        }
        let j = field.jacobian(&point.coords);
        let spec = spectrum(&j);
        Ok(CriticalElement {
            kind: ElementKind::Singularity { point },
            hyperbolic: spec.iter().all(|e| e[0].abs() > 1e-6),
            spectrum: spec,
            linear: matrix_rows(&j),
            basis: Vec::new(),
        })
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, ElementKind::PeriodicOrbit { .. })
    }

    /// The same element for the time-reversed field.
    pub fn for_reversed(&self, field: &VectorFieldSpec, cfg: &IntegratorConfig) -> Result<Self> {
        let rev = field.reversed();
        match &self.kind {
            ElementKind::PeriodicOrbit { seed, period, section } => {
                Self::periodic_orbit(&rev, seed.clone(), *period, section.radius, cfg)
            }
            ElementKind::Singularity { point } => Self::singularity(&rev, point.clone()),
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ElementKind::PeriodicOrbit { seed, period, .. } => format!("periodic-orbit({:?}, T={period})", seed.coords),
            ElementKind::Singularity { point } => format!("singularity({:?})", point.coords),
        }
    }
}

/// Real invariant subspace of `m` for the eigenvalues selected by `pick`,
/// as an orthonormal list.
fn invariant_subspace(m: &DMatrix<f64>, pick: impl Fn(f64, f64) -> bool) -> Vec<DVector<f64>> {
    let k = m.nrows();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for e in spectrum(m) {
        let (re, im) = (e[0], e[1]);
        if !pick(re, im) || im < -1e-9 {
            continue;
        }
        let id = DMatrix::<f64>::identity(k, k);
        let factor = if im.abs() <= 1e-9 {
            m - id * re
        } else {
            m * m - m * (2.0 * re) + id * (re * re + im * im)
        };
        let svd = factor.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let smax = svd.singular_values.max().max(1e-300);
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= 1e-8 * smax.max(1.0) {
                let mut v: DVector<f64> = vt.row(i).transpose();
                for u in &out {
                    let c = u.dot(&v);
                    v -= u * c;
                }
                let l = v.norm();
                if l > 1e-6 {
                    out.push(v / l);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Unstable,
    Stable,
}

/// Shape of a fundamental domain, used to build reference meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainGeometry {
    /// Straight pieces `[a, b]` in chart coordinates.
    Segments { pieces: Vec<(Vec<f64>, Vec<f64>)> },
    /// Sphere of `radius` in the span of `basis` (at most three vectors).
    Sphere { center: Vec<f64>, basis: Vec<Vec<f64>>, radius: f64 },
}

impl DomainGeometry {
    /// Mesh with spacing at most `h`.
    pub fn mesh(&self, h: f64) -> Vec<Vec<f64>> {
        match self {
            DomainGeometry::Segments { pieces } => {
                let mut out = Vec::new();
                for (a, b) in pieces {
                    let len = norm(&a.iter().zip(b).map(|(x, y)| y - x).collect::<Vec<_>>());
                    let steps = (len / h).ceil().max(1.0) as usize;
                    for j in 0..=steps {
                        let s = j as f64 / steps as f64;
                        out.push(a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect());
                    }
                }
                out
            }
            DomainGeometry::Sphere { center, basis, radius } => {
                let dirs = sphere_directions(basis.len(), ((2.0 * std::f64::consts::PI * radius / h).ceil() as usize).max(8));
                dirs.iter()
                    .map(|c| {
                        (0..center.len())
                            .map(|i| center[i] + radius * c.iter().zip(basis).map(|(ck, b)| ck * b[i]).sum::<f64>())
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// Unit directions in `R^u`: `±1` for `u = 1`, `count` equally spaced angles
/// for `u = 2`, a Fibonacci lattice of `count²/4` points for `u = 3`.
fn sphere_directions(u: usize, count: usize) -> Vec<Vec<f64>> {
    match u {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let m = (count * count / 4).max(count);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
    }
}

/// Sampled fundamental domain of a critical element. `element` is absent
/// for hand-built domains on systems without a distinguished element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDomainSample {
    pub element: Option<CriticalElement>,
    pub side: Side,
    pub points: Vec<Point>,
    pub open_interior: bool,
    pub geometry: DomainGeometry,
    /// Seed radius of the local manifold disk.
    pub r0: f64,
}

impl FundamentalDomainSample {
    /// `count` evenly spaced points of the segment `[a, b]` (endpoints
    /// excluded when `open_interior`).
    pub fn segment(a: Vec<f64>, b: Vec<f64>, count: usize, open_interior: bool) -> Result<Self> {
        if a.len() != b.len() || count == 0 {
            return Err(Error::InvalidParameter("segment needs matching endpoints and count > 0".into()));
        }
        let points = (0..count)
            .map(|i| {
                let s = if open_interior {
                    (i as f64 + 0.5) / count as f64
                } else if count == 1 {
                    0.5
                } else {
                    i as f64 / (count - 1) as f64
                };
                Point::new(a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FundamentalDomainSample {
            element: None,
            side: Side::Unstable,
            points,
            open_interior,
            geometry: DomainGeometry::Segments { pieces: vec![(a, b)] },
            r0: 0.0,
        })
    }
}

/// Samples the fundamental domain `P(Σᵘ) − Σᵘ` of a hyperbolic periodic
/// orbit (local disk of radius `r0` along the unstable direction), or the
/// sphere of radius `r0` in the unstable subspace of a singularity. The
/// stable side is the unstable side of the reversed field.
pub fn fundamental_domain_sample(
    field: &VectorFieldSpec,
    element: &CriticalElement,
    side: Side,
    count: usize,
    open_interior: bool,
    r0: f64,
    cfg: &IntegratorConfig,
) -> Result<FundamentalDomainSample> {
    if !element.hyperbolic {
        return Err(Error::HyperbolicityRequired);
    }
    if count == 0 || !(r0 > 0.0) {
        return Err(Error::InvalidParameter("need count > 0 and r0 > 0".into()));
    }
    if side == Side::Stable {
        let rev = element.for_reversed(field, cfg)?;
        let mut d = fundamental_domain_sample(&field.reversed(), &rev, Side::Unstable, count, open_interior, r0, cfg)?;
        d.side = Side::Stable;
        d.element = Some(element.clone());
        return Ok(d);
    }
    let lin = DMatrix::from_fn(element.linear.len(), element.linear.len(), |i, j| element.linear[i][j]);
    match &element.kind {
        ElementKind::PeriodicOrbit { seed, period, section } => {
            let sub = invariant_subspace(&lin, |re, im| re.hypot(im) > 1.0);
            if sub.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "periodic fundamental domains need a one-dimensional unstable direction, found {}",
                    sub.len()
                )));
            }
            let lambda = element.spectrum[0][0].hypot(element.spectrum[0][1]);
            let v: Vec<f64> = (0..field.dim)
                .map(|i| sub[0].iter().zip(&element.basis).map(|(c, b)| c * b[i]).sum())
                .collect();
            let along = |s: f64| -> Vec<f64> { seed.coords.iter().zip(&v).map(|(p, d)| p + s * d).collect() };
            let mut points = Vec::new();
            let per_side = [count - count / 2, count / 2];
            for (sign, c) in [1.0, -1.0].into_iter().zip(per_side) {
                for i in 0..c {
                    let s = r0 * lambda.powf((i as f64 + 0.5) / c as f64 - 1.0);
                    let x = Point::new(along(sign * s))?;
                    let r = first_return(field, section, &x, 1.5 * period, cfg)?
                        .ok_or(Error::NotAFixedPoint { defect: f64::INFINITY })?;
                    let dist = field.chart.distance(&r.exit.coords, &seed.coords);
                    let boundary_gap = (dist - r0).abs().min((dist - lambda * r0).abs());
                    if dist > r0 && (!open_interior || boundary_gap > 1e-6) {
                        points.push(r.exit);
                    }
                }
            }
            let pieces = [1.0, -1.0].iter().map(|sg| (along(sg * r0), along(sg * lambda * r0))).collect();
            Ok(FundamentalDomainSample {
                element: Some(element.clone()),
                side,
                points,
                open_interior,
                geometry: DomainGeometry::Segments { pieces },
                r0,
            })
        }
        ElementKind::Singularity { point } => {
            let sub = invariant_subspace(&lin, |re, _| re > 0.0);
            if sub.is_empty() || sub.len() > 3 {
                return Err(Error::InvalidInput(format!("unsupported unstable dimension {}", sub.len())));
            }
            let basis: Vec<Vec<f64>> = sub.iter().map(|v| v.iter().copied().collect()).collect();
            let dirs = sphere_directions(basis.len(), count);
            let points = dirs
                .iter()
                .map(|c| {
                    Point::new(
                        (0..field.dim)
                            .map(|i| point.coords[i] + r0 * c.iter().zip(&basis).map(|(ck, b)| ck * b[i]).sum::<f64>())
                            .collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FundamentalDomainSample {
                element: Some(element.clone()),
                side,
                points,
                open_interior,
                geometry: DomainGeometry::Sphere { center: point.coords.clone(), basis, radius: r0 },
                r0,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCloud {
    pub points: Vec<Vec<f64>>,
    /// Samples per domain point (shorter for escaped orbits).
    pub samples_per_point: Vec<usize>,
    pub escaped: bool,
}

/// Orbit samples of every domain point at times `0, stride, …, ≤ T`,
/// following the flow for the unstable side and the reversed flow for the
/// stable side.
pub fn grow_invariant_manifold(
    field: &VectorFieldSpec,
    dom: &FundamentalDomainSample,
    t_end: f64,
    stride: f64,
    cfg: &IntegratorConfig,
) -> Result<ManifoldCloud> {
    if !(stride > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter("need stride > 0 and T >= 0".into()));
    }
    let g = if dom.side == Side::Stable { field.reversed() } else { field.clone() };
    let count = (t_end / stride + 1e-9).floor() as usize + 1;
    let per = crate::par::map_slice(&dom.points, |p| -> Result<(Vec<Vec<f64>>, bool)> {
        let orbit = integrate_partial(&g, p, t_end, cfg)?;
        let limit = orbit.escaped_at.unwrap_or(f64::INFINITY);
        let pts = (0..count)
            .map(|i| i as f64 * stride)
            .take_while(|t| *t <= limit)
            .map(|t| g.chart.reduce(&orbit.at(t)).0)
            .collect();
        Ok((pts, orbit.escaped_at.is_some()))
    });
    let mut cloud = ManifoldCloud { points: Vec::new(), samples_per_point: Vec::new(), escaped: false };
    for r in per {
        let (pts, esc) = r?;
        cloud.samples_per_point.push(pts.len());
        cloud.points.extend(pts);
        cloud.escaped |= esc;
    }
    Ok(cloud)
}

/// Distance from `x` to the span of `basis` through `center`.
#[cfg(test)]
pub(crate) fn distance_to_plane(x: &[f64], center: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    for b in basis {
        let c = crate::geometry::dot(&d, b);
        for (di, bi) in d.iter_mut().zip(b) {
            *di -= c * bi;
        }
    }
    norm(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> (VectorFieldSpec, CriticalElement) {
        let f = VectorFieldSpec::catmap_suspension();
        let e = CriticalElement::periodic_orbit(&f, Point::new(vec![0.0; 3]).unwrap(), 1.0, 0.9, &IntegratorConfig::default()).unwrap();
        (f, e)
    }

    #[test]
    fn catmap_element_is_hyperbolic() {
        let (_, e) = cat();
        assert!(e.hyperbolic);
        let phi = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((e.spectrum[0][0] - phi).abs() < 1e-6);
        assert!((e.spectrum[1][0] - 1.0 / phi).abs() < 1e-6);
    }

    #[test]
    fn catmap_domain_points_come_back_inside_the_disk() {
        let (f, e) = cat();
        let d = fundamental_domain_sample(&f, &e, Side::Unstable, 16, true, 0.05, &IntegratorConfig::default()).unwrap();
        assert_eq!(d.points.len(), 16);
        let ElementKind::PeriodicOrbit { section, .. } = &e.kind else { unreachable!() };
        let rev = f.reversed();
        for p in &d.points {
            let back = first_return(&rev, &section.flipped(), p, 2.0, &IntegratorConfig::default()).unwrap().unwrap();
            assert!(f.chart.distance(&back.exit.coords, &[0.0; 3]) < 0.05);
        }
    }

    #[test]
    fn stable_side_is_unstable_side_of_reversal() {
        let (f, e) = cat();
        let cfg = IntegratorConfig::default();
        let s = fundamental_domain_sample(&f, &e, Side::Stable, 8, true, 0.05, &cfg).unwrap();
        let rev = f.reversed();
        let er = e.for_reversed(&f, &cfg).unwrap();
        let u = fundamental_domain_sample(&rev, &er, Side::Unstable, 8, true, 0.05, &cfg).unwrap();
        assert_eq!(s.points, u.points);
    }

    #[test]
    fn saddle_domain_and_manifold_lie_in_unstable_plane() {
        let f = VectorFieldSpec::catalog("saddle", 3).unwrap();
        let e = CriticalElement::singularity(&f, Point::new(vec![0.0; 3]).unwrap()).unwrap();
        let d = fundamental_domain_sample(&f, &e, Side::Unstable, 12, false, 0.1, &IntegratorConfig::default()).unwrap();
        for p in &d.points {
            assert!(p.coords[2].abs() < 1e-12);
            assert!((norm(&p.coords) - 0.1).abs() < 1e-12);
        }
        let cloud = grow_invariant_manifold(&f, &d, 5.0, 0.1, &IntegratorConfig::default()).unwrap();
        assert!(cloud.escaped);
        assert!(cloud.points.iter().all(|p| p[2].abs() < 1e-8));
        let none = grow_invariant_manifold(&f, &d, 0.0, 0.1, &IntegratorConfig::default()).unwrap();
        assert_eq!(none.points, d.points.iter().map(|p| p.coords.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn non_hyperbolic_domain_is_rejected() {
        let f = VectorFieldSpec::rotation_suspension(0.3);
        let e = CriticalElement::periodic_orbit(&f, Point::new(vec![0.0; 3]).unwrap(), 1.0, 0.5, &IntegratorConfig::default()).unwrap();
        let r = fundamental_domain_sample(&f, &e, Side::Unstable, 4, true, 0.05, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::HyperbolicityRequired)));
    }

    #[test]
    fn mesh_spacing() {
        let g = DomainGeometry::Segments { pieces: vec![(vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0])] };
        let m = g.mesh(0.05);
        assert_eq!(m.len(), 21);
        assert!(distance_to_plane(&[0.0, 1.0, 0.0], &[0.0; 3], &[vec![1.0, 0.0, 0.0]]) == 1.0);
    }
}
