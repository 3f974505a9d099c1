//! Explicit divergence-free local perturbations: a rotation by angle `θ`
//! inside a cylinder ring, its closed-form flow, and sampled C^r norms.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bump::BumpPair;
use crate::dynamics::{integrate, IntegratorConfig};
use crate::error::{Error, Result};
use crate::field::{FieldKind, Patch, VectorFieldSpec};
use crate::geometry::{dot, norm, unit, CylinderRingSpec, Point};

/// A ring plus the rotation angle. The rotation speed constant is tied to
/// the angle, so that the orbit of a point on the bottom circle ends
/// rotated by exactly `θ` on the top circle.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub ring: CylinderRingSpec,
    pub bumps: BumpPair,
    pub theta: f64,
}

impl PerturbationSpec {
    pub fn new(ring: CylinderRingSpec, theta: f64) -> Result<Self> {
        ring.validate()?;
        if !(theta > -PI && theta <= PI) {
            return Err(Error::InvalidParameter(format!("theta {theta} outside (-pi, pi]")));
        }
        let bumps = BumpPair::new(ring.h, ring.delta, ring.xi)?;
        Ok(PerturbationSpec { ring, bumps, theta })
    }

    /// Canonical frame: ring at the origin around the last axis.
    pub fn canonical(dim: usize, delta: f64, h: f64, xi: f64, theta: f64) -> Result<Self> {
        Self::new(CylinderRingSpec::canonical(dim, delta, h, xi)?, theta)
    }

    /// Re-frames `ring` with the plane read off an alignment matrix (rows
    /// `n−3`, `n−2` of the transform returned by [`align_endpoints`]).
    pub fn aligned(ring: &CylinderRingSpec, rotation: &DMatrix<f64>, theta: f64) -> Result<Self> {
        let n = ring.dim();
        let row = |i: usize| -> Vec<f64> { (0..n).map(|j| rotation[(i, j)]).collect() };
        let mut r = ring.clone();
        r.plane = [row(n - 3), row(n - 2)];
        Self::new(r, theta)
    }

    pub fn dim(&self) -> usize {
        self.ring.dim()
    }

    /// Orthogonal map from chart coordinates to the canonical frame: rows
    /// are a completion of the frame, then the plane, then the axis.
    pub fn rotation(&self) -> DMatrix<f64> {
        frame_matrix(&self.ring.plane[0], &self.ring.plane[1], &self.ring.axis)
    }

    /// The patch this spec installs (none when `θ = 0`).
    pub fn patch(&self) -> Option<Patch> {
        (self.theta != 0.0).then(|| Patch { ring: self.ring.clone(), bumps: self.bumps.clone(), theta: self.theta })
    }

    /// Total rotation angle of a point at radius `r` travelling from height
    /// `z` to `z + t`.
    pub fn angle(&self, r: f64, z: f64, t: f64) -> f64 {
        let l = &self.bumps.lambda;
        self.theta * self.bumps.gamma.value(r) * (l.cumulative(z + t) - l.cumulative(z))
    }
}

/// Rows: Gram–Schmidt completion of `{e1, e2, a}` from the standard basis,
/// then `e1`, `e2`, `a`.
fn frame_matrix(e1: &[f64], e2: &[f64], a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut rows: Vec<Vec<f64>> = vec![e1.to_vec(), e2.to_vec(), a.to_vec()];
    let mut extra = Vec::new();
    for i in 0..n {
        if extra.len() + 3 == n {
            break;
        }
        let mut v = unit(n, i);
        for r in rows.iter().chain(extra.iter()) {
            let c = dot(&v, r);
            for (vk, rk) in v.iter_mut().zip(r) {
                *vk -= c * rk;
            }
        }
        let len = norm(&v);
        if len > 1e-6 {
            extra.push(v.iter().map(|x| x / len).collect());
        }
    }
    rows = extra.into_iter().chain(rows).collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// The field generated along the ring axis (vertical in the canonical frame).
fn axis_field(ring: &CylinderRingSpec) -> VectorFieldSpec {
    let n = ring.dim();
    if ring.axis == unit(n, n - 1) {
        VectorFieldSpec::constant_vertical(n)
    } else {
        VectorFieldSpec::new(n, FieldKind::Linear { matrix: vec![vec![0.0; n]; n], offset: ring.axis.clone() })
            .expect("valid linear field")
    }
}

/// The perturbed field `Z = X + deviation` over the constant field `X`
/// along the ring axis. For `θ = 0` this is `X` itself.
pub fn build_perturbation(spec: &PerturbationSpec) -> Result<VectorFieldSpec> {
    let base = axis_field(&spec.ring);
    match spec.patch() {
        Some(p) => base.with_patch(p),
        None => Ok(base),
    }
}

/// Exact time-`t` flow of the perturbed field: rotate in the ring plane by
/// `θγ(r)(Λ(z+t) − Λ(z))` while translating by `t` along the axis.
pub fn closed_form_flow(spec: &PerturbationSpec, x0: &Point, t: f64) -> Point {
    let c = spec.ring.local(&x0.coords);
    let phi = spec.angle(c.radius, c.height, t);
    let (s, co) = phi.sin_cos();
    let d1 = c.u1 * (co - 1.0) - c.u2 * s;
    let d2 = c.u1 * s + c.u2 * (co - 1.0);
    let (e1, e2, a) = (&spec.ring.plane[0], &spec.ring.plane[1], &spec.ring.axis);
    let coords = (0..x0.dim())
        .map(|i| {
            let mut v = x0.coords[i];
            if e1[i] != 0.0 {
                v += d1 * e1[i];
            }
            if e2[i] != 0.0 {
                v += d2 * e2[i];
            }
            if a[i] != 0.0 {
                v += t * a[i];
            }
            v
        })
        .collect();
    Point { coords, chart_id: x0.chart_id }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEndpoints {
    pub p: Point,
    pub q: Point,
    pub theta: f64,
}

impl DeviationEndpoints {
    /// `p = C + δe₁` and `q = C + δ(cos θ e₁ + sin θ e₂) + h a`.
    pub fn for_spec(spec: &PerturbationSpec) -> Self {
        let r = &spec.ring;
        let (s, c) = spec.theta.sin_cos();
        let n = r.dim();
        let p = (0..n).map(|i| r.center[i] + r.delta * r.plane[0][i]).collect();
        let q = (0..n)
            .map(|i| r.center[i] + r.delta * (c * r.plane[0][i] + s * r.plane[1][i]) + r.h * r.axis[i])
            .collect();
        DeviationEndpoints {
            p: Point { coords: p, chart_id: 0 },
            q: Point { coords: q, chart_id: 0 },
            theta: spec.theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub closed_form_distance: f64,
    pub numeric_distance: f64,
    /// Largest drift, along the numerically integrated orbit, of the
    /// coordinates orthogonal to the ring plane and axis.
    pub plane_defect: f64,
    pub pass: bool,
}

/// Flows `p` for time `h` both in closed form and numerically, measuring
/// the distance to `q`.
pub fn verify_deviation(spec: &PerturbationSpec, ends: &DeviationEndpoints, tol: f64) -> Result<DeviationReport> {
    let r = &spec.ring;
    let cp = r.local(&ends.p.coords);
    let cq = r.local(&ends.q.coords);
    if (cp.radius - r.delta).abs() > 1e-9
        || (cq.radius - r.delta).abs() > 1e-9
        || cp.height.abs() > 1e-9
        || (cq.height - r.h).abs() > 1e-9
    {
        return Err(Error::InvalidEndpoints("endpoints are not on the ring circles".into()));
    }
    let field = build_perturbation(spec)?;
    let closed = closed_form_flow(spec, &ends.p, r.h);
    let dist = |a: &[f64]| norm(&a.iter().zip(&ends.q.coords).map(|(x, y)| x - y).collect::<Vec<_>>());
    let orbit = integrate(&field, &ends.p, r.h, &IntegratorConfig::adaptive(1e-12))?;
    let rot = spec.rotation();
    let n = spec.dim();
    let start = &rot * nalgebra::DVector::from_column_slice(&ends.p.coords);
    let mut plane_defect: f64 = 0.0;
    for s in &orbit.states {
        let v = &rot * nalgebra::DVector::from_column_slice(s);
        for i in 0..n - 3 {
            plane_defect = plane_defect.max((v[i] - start[i]).abs());
        }
    }
    let closed_form_distance = dist(&closed.coords);
    let numeric_distance = dist(orbit.end());
    Ok(DeviationReport {
        closed_form_distance,
        numeric_distance,
        plane_defect,
        pass: closed_form_distance <= 1e-12 && numeric_distance <= tol && plane_defect <= 1e-9,
    })
}

/// Axis-aligned grid: `resolution` points per axis over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

impl SampleGrid {
    /// Bounding box of the closed ring, for a ring in the canonical
    /// orientation (or any ring, via its axis-aligned hull).
    pub fn around_ring(ring: &CylinderRingSpec, resolution: usize) -> Self {
        let n = ring.dim();
        let rr = ring.outer_radius();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            let a = ring.axis[i];
            let spread = rr * (1.0 - a * a).max(0.0).sqrt();
            let (z0, z1) = (0.0f64.min(ring.h * a), 0.0f64.max(ring.h * a));
            lo[i] = ring.center[i] + z0 - spread;
            hi[i] = ring.center[i] + z1 + spread;
        }
        SampleGrid { lo, hi, resolution }
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.lo.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let n = self.lo.len();
        let mut x = vec![0.0; n];
        for i in 0..n {
            let k = idx % self.resolution;
            idx /= self.resolution;
            x[i] = if self.resolution == 1 {
                0.5 * (self.lo[i] + self.hi[i])
            } else {
                self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (self.resolution - 1) as f64
            };
        }
        x
    }
}

/// All multi-indices (as sorted axis lists) of the given order.
fn multi_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, order: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == order {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, order, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, order, 0, &mut Vec::new(), &mut out);
    out
}

/// Sampled C^r distance: the supremum over `grid` of the norms of all
/// partial derivatives of `a − b` up to order `r`, by central differences
/// (step `1e−3` for first order, `1e−2` above).
pub fn cr_norm_estimate(a: &VectorFieldSpec, b: &VectorFieldSpec, r: usize, grid: &SampleGrid) -> Result<f64> {
    if r > 4 {
        return Err(Error::UnsupportedOrder(r));
    }
    let n = a.dim;
    if b.dim != n || grid.lo.len() != n {
        return Err(Error::InvalidArgument("fields and grid must share a dimension".into()));
    }
    let orders: Vec<(Vec<Vec<usize>>, f64)> = (0..=r)
        .map(|k| (multi_indices(n, k), if k <= 1 { 1e-3 } else { 1e-2 }))
        .collect();
    let diff = |x: &[f64]| -> Vec<f64> {
        let mut u = a.eval(x);
        let v = b.eval(x);
        for (ui, vi) in u.iter_mut().zip(&v) {
            *ui -= vi;
        }
        u
    };
    let indices: Vec<usize> = (0..grid.len()).collect();
    let best = crate::par::max_slice(&indices, |&idx| {
        let x = grid.point(idx);
        let mut local: f64 = 0.0;
        let mut y = x.clone();
        for (k, (alphas, step)) in orders.iter().enumerate() {
            for alpha in alphas {
                let mut acc = vec![0.0; n];
                for mask in 0..(1usize << k) {
                    y.copy_from_slice(&x);
                    let mut sign = 1.0;
                    for (bit, &axis) in alpha.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            y[axis] += step;
                        } else {
                            y[axis] -= step;
                            sign = -sign;
                        }
                    }
                    let d = diff(&y);
                    for (ai, di) in acc.iter_mut().zip(&d) {
                        *ai += sign * di;
                    }
                }
                let scale = (2.0 * step).powi(k as i32);
                local = local.max(norm(&acc) / scale);
            }
        }
        local
    });
    Ok(best)
}

/// Orthogonal transform carrying `p − C` to `δe₁` and `q − C` to
/// `δ(cos θ e₁ + sin θ e₂) + h a` in the canonical frame, with
/// `θ ∈ (−π, π]`. In three dimensions `e₂ = a × e₁`, so `θ` is signed; in
/// higher dimensions `e₂` is taken toward `q` and `θ ∈ [0, π]`.
pub fn align_endpoints(p: &Point, q: &Point, ring: &CylinderRingSpec) -> Result<(DMatrix<f64>, f64)> {
    let n = ring.dim();
    if p.dim() != n || q.dim() != n {
        return Err(Error::InvalidArgument("endpoint dimension mismatch".into()));
    }
    let cp = ring.local(&p.coords);
    let cq = ring.local(&q.coords);
    if (cp.radius - ring.delta).abs() > 1e-9 || cp.height.abs() > 1e-9 {
        return Err(Error::InvalidEndpoints("p is not on the bottom circle".into()));
    }
    if (cq.radius - ring.delta).abs() > 1e-9 || (cq.height - ring.h).abs() > 1e-9 {
        return Err(Error::InvalidEndpoints("q is not on the top circle".into()));
    }
    let a = &ring.axis;
    let e1: Vec<f64> = cp.perp.iter().map(|v| v / cp.radius).collect();
    let e2: Vec<f64> = if n == 3 {
        vec![a[1] * e1[2] - a[2] * e1[1], a[2] * e1[0] - a[0] * e1[2], a[0] * e1[1] - a[1] * e1[0]]
    } else {
        let c = dot(&cq.perp, &e1);
        let w: Vec<f64> = cq.perp.iter().zip(&e1).map(|(v, e)| v - c * e).collect();
        let len = norm(&w);
        if len > 1e-12 * ring.delta {
            w.iter().map(|v| v / len).collect()
        } else {
            // Any direction orthogonal to e1 and a; prefer the ring's plane.
            let mut chosen = None;
            let candidates = [ring.plane[1].clone(), ring.plane[0].clone()]
                .into_iter()
                .chain((0..n).map(|i| unit(n, i)));
            for mut v in candidates {
                for r in [&e1, a] {
                    let c = dot(&v, r);
                    for (vk, rk) in v.iter_mut().zip(r.iter()) {
                        *vk -= c * rk;
                    }
                }
                let len = norm(&v);
                if len > 1e-6 {
                    chosen = Some(v.iter().map(|x| x / len).collect());
                    break;
                }
            }
            chosen.expect("n >= 3 leaves a free direction")
        }
    };
    let mut theta = dot(&cq.perp, &e2).atan2(dot(&cq.perp, &e1));
    if theta <= -PI {
        theta += 2.0 * PI;
    }
    Ok((frame_matrix(&e1, &e2, a), theta))
}
