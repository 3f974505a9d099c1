//! Points, box/torus charts and cylinder rings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<f64>,
    #[serde(default)]
    pub chart_id: u32,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "points need dimension >= 3, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(Point { coords, chart_id: 0 })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }
}

/// Identification applied to the first `n-1` coordinates each time the last
/// (periodic) axis wraps forward: `(x', hi) ~ (A x' + b, lo)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gluing {
    pub matrix: Vec<Vec<i64>>,
    #[serde(default)]
    pub shift: Vec<f64>,
    #[serde(skip)]
    inverse: Vec<Vec<i64>>,
}

impl Gluing {
    pub fn new(matrix: Vec<Vec<i64>>, shift: Vec<f64>) -> Result<Self> {
        let m = matrix.len();
        if matrix.iter().any(|r| r.len() != m) || (!shift.is_empty() && shift.len() != m) {
            return Err(Error::InvalidParameter("gluing matrix must be square".into()));
        }
        let inverse = integer_inverse(&matrix)?;
        let shift = if shift.is_empty() { vec![0.0; m] } else { shift };
        Ok(Gluing { matrix, shift, inverse })
    }

    fn ensure_inverse(&mut self) -> Result<()> {
        if self.inverse.is_empty() && !self.matrix.is_empty() {
            self.inverse = integer_inverse(&self.matrix)?;
            if self.shift.is_empty() {
                self.shift = vec![0.0; self.matrix.len()];
            }
        }
        Ok(())
    }

    fn forward(&self, x: &mut [f64]) {
        let y = mat_vec(&self.matrix, x);
        for (i, v) in y.into_iter().enumerate() {
            x[i] = v + self.shift[i];
        }
    }

    fn backward(&self, x: &mut [f64]) {
        let d: Vec<f64> = x.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        let y = mat_vec(&self.inverse, &d);
        x[..y.len()].copy_from_slice(&y);
    }

    /// Applies `A^{-k}` (linear part only) to a tangent vector.
    fn pull_vector(&self, k: i64, v: &mut [f64]) {
        let (m, steps) = if k > 0 { (&self.inverse, k) } else { (&self.matrix, -k) };
        for _ in 0..steps {
            let y = mat_vec(m, v);
            v[..y.len()].copy_from_slice(&y);
        }
    }
}

fn mat_vec(m: &[Vec<i64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| *a as f64 * b).sum())
        .collect()
}

fn integer_inverse(m: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    let n = m.len();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j] as f64);
    let det = a.determinant();
    if (det.abs() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("gluing matrix must be unimodular".into()));
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular gluing matrix".into()))?;
    Ok((0..n)
        .map(|i| (0..n).map(|j| inv[(i, j)].round() as i64).collect())
        .collect())
}

/// Axis-aligned chart: a box with optional per-axis periodicity and an
/// optional twisted identification along the last axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxChart {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gluing: Option<Gluing>,
}

impl BoxChart {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, periodic: Vec<bool>) -> Result<Self> {
        let chart = BoxChart { lo, hi, periodic, gluing: None };
        chart.validate()?;
        Ok(chart)
    }

    /// `(lo, hi)^n`, non-periodic.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        BoxChart { lo: vec![lo; n], hi: vec![hi; n], periodic: vec![false; n], gluing: None }
    }

    /// `[0, period)^n`, every axis periodic.
    pub fn torus(n: usize, period: f64) -> Self {
        BoxChart { lo: vec![0.0; n], hi: vec![period; n], periodic: vec![true; n], gluing: None }
    }

    pub fn with_gluing(mut self, gluing: Gluing) -> Result<Self> {
        self.gluing = Some(gluing);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lo.len();
        if self.hi.len() != n || self.periodic.len() != n {
            return Err(Error::InvalidParameter("chart arrays disagree in length".into()));
        }
        for i in 0..n {
            if !(self.lo[i] < self.hi[i]) {
                return Err(Error::InvalidParameter(format!("chart axis {i}: lo >= hi")));
            }
        }
        if let Some(g) = &self.gluing {
            if n < 2 || g.matrix.len() != n - 1 {
                return Err(Error::InvalidParameter("gluing must act on n-1 coordinates".into()));
            }
            if !self.periodic[n - 1] {
                return Err(Error::InvalidParameter("glued axis must be periodic".into()));
            }
        }
        Ok(())
    }

    /// Restores derived data after deserialization.
    pub(crate) fn finish(&mut self) -> Result<()> {
        if let Some(g) = &mut self.gluing {
            g.ensure_inverse()?;
        }
        self.validate()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn period(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Reduces lifted coordinates into the fundamental domain. Returns the
    /// number of forward wraps of the glued axis (0 without gluing).
    pub fn reduce(&self, x: &[f64]) -> (Vec<f64>, i64) {
        let mut r = x.to_vec();
        let n = r.len();
        let mut k = 0;
        if let Some(g) = &self.gluing {
            let l = self.period(n - 1);
            k = ((r[n - 1] - self.lo[n - 1]) / l).floor() as i64;
            r[n - 1] -= k as f64 * l;
            if r[n - 1] >= self.hi[n - 1] {
                r[n - 1] -= l;
                k += 1;
            }
            let head = &mut r[..n - 1];
            // Wrap between applications to keep magnitudes bounded.
            for _ in 0..k.max(0) {
                g.forward(head);
                self.wrap_head(head);
            }
            for _ in 0..(-k).max(0) {
                g.backward(head);
                self.wrap_head(head);
            }
        }
        for i in 0..n {
            if self.periodic[i] && !(self.gluing.is_some() && i == n - 1) {
                r[i] = wrap_into(r[i], self.lo[i], self.hi[i]);
            }
        }
        (r, k)
    }

    fn wrap_head(&self, head: &mut [f64]) {
        for (i, v) in head.iter_mut().enumerate() {
            if self.periodic[i] {
                *v = wrap_into(*v, self.lo[i], self.hi[i]);
            }
        }
    }

    /// Transforms a tangent vector from reduced coordinates back to the lift
    /// that was reduced with `k` wraps.
    pub fn lift_vector(&self, k: i64, v: &mut [f64]) {
        if k == 0 {
            return;
        }
        if let Some(g) = &self.gluing {
            let n = v.len();
            g.pull_vector(k, &mut v[..n - 1]);
        }
    }

    /// The matrix `A^k` (identity without gluing), as used to push
    /// Jacobians between lifted and reduced frames.
    pub fn gluing_power(&self, k: i64) -> Option<nalgebra::DMatrix<f64>> {
        let g = self.gluing.as_ref()?;
        let m = g.matrix.len();
        let (base, steps) = if k >= 0 { (&g.matrix, k) } else { (&g.inverse, -k) };
        let b = nalgebra::DMatrix::from_fn(m, m, |i, j| base[i][j] as f64);
        let mut acc = nalgebra::DMatrix::identity(m, m);
        for _ in 0..steps {
            acc = &b * acc;
        }
        Some(acc)
    }

    /// Shortest displacement from `from` to `to` under the chart's
    /// identifications (per-axis minimal representative, then Euclidean).
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        let (a, _) = self.reduce(from);
        let (b, _) = self.reduce(to);
        let n = a.len();
        let mut candidates = vec![b.clone()];
        if let Some(g) = &self.gluing {
            let l = self.period(n - 1);
            let mut up = b.clone();
            g.backward(&mut up[..n - 1]);
            self.wrap_head(&mut up[..n - 1]);
            up[n - 1] += l;
            let mut down = b.clone();
            g.forward(&mut down[..n - 1]);
            self.wrap_head(&mut down[..n - 1]);
            down[n - 1] -= l;
            candidates.push(up);
            candidates.push(down);
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for c in candidates {
            let d: Vec<f64> = (0..n)
                .map(|i| {
                    let raw = c[i] - a[i];
                    let glued_axis = self.gluing.is_some() && i == n - 1;
                    if self.periodic[i] && !glued_axis {
                        let l = self.period(i);
                        raw - l * (raw / l).round()
                    } else {
                        raw
                    }
                })
                .collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>();
            if best.as_ref().map_or(true, |(bn, _)| norm < *bn) {
                best = Some((norm, d));
            }
        }
        best.map(|(_, d)| d).unwrap_or_default()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        norm(&self.displacement(a, b))
    }

    /// Whether lifted coordinates lie inside the closed box on every
    /// non-periodic axis.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, v)| self.periodic[i] || (*v >= self.lo[i] && *v <= self.hi[i]))
    }

    pub fn is_compact(&self) -> bool {
        self.periodic.iter().all(|p| *p)
    }
}

pub(crate) fn wrap_into(v: f64, lo: f64, hi: f64) -> f64 {
    let l = hi - lo;
    let mut w = v - l * ((v - lo) / l).floor();
    if w >= hi {
        w -= l;
    }
    if w < lo {
        w = lo;
    }
    w
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Coordinates of a point relative to a cylinder ring's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RingCoords {
    /// Axial height above the bottom face.
    pub height: f64,
    /// Distance to the axis.
    pub radius: f64,
    /// Components along the two rotation-plane vectors.
    pub u1: f64,
    pub u2: f64,
    /// Perpendicular displacement from the axis.
    pub perp: Vec<f64>,
}

/// Cylinder `∂B_δ × [0, h]` and its ξ-thickening, placed by a bottom-face
/// center, a unit flow axis and an orthonormal rotation plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderRingSpec {
    pub delta: f64,
    pub h: f64,
    pub xi: f64,
    pub center: Vec<f64>,
    pub axis: Vec<f64>,
    /// Orthonormal basis of the plane in which points rotate.
    pub plane: [Vec<f64>; 2],
}

impl CylinderRingSpec {
    pub fn new(
        delta: f64,
        h: f64,
        xi: f64,
        center: Vec<f64>,
        axis: Vec<f64>,
        plane: [Vec<f64>; 2],
    ) -> Result<Self> {
        let ring = CylinderRingSpec { delta, h, xi, center, axis, plane };
        ring.validate()?;
        Ok(ring)
    }

    /// Ring centered at the origin around the last axis, rotating in the two
    /// coordinates just before it.
    pub fn canonical(dim: usize, delta: f64, h: f64, xi: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter("ring needs dimension >= 3".into()));
        }
        Self::new(
            delta,
            h,
            xi,
            vec![0.0; dim],
            unit(dim, dim - 1),
            [unit(dim, dim - 3), unit(dim, dim - 2)],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.h > 0.0) {
            return Err(Error::InvalidParameter("delta and h must be positive".into()));
        }
        if !(self.xi > 0.0 && self.xi < self.delta) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < xi < delta, got xi = {}, delta = {}",
                self.xi, self.delta
            )));
        }
        let n = self.center.len();
        if n < 3 || self.axis.len() != n || self.plane.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidParameter("ring frame dimension mismatch".into()));
        }
        let checks = [
            (dot(&self.axis, &self.axis) - 1.0).abs(),
            (dot(&self.plane[0], &self.plane[0]) - 1.0).abs(),
            (dot(&self.plane[1], &self.plane[1]) - 1.0).abs(),
            dot(&self.plane[0], &self.plane[1]).abs(),
            dot(&self.plane[0], &self.axis).abs(),
            dot(&self.plane[1], &self.axis).abs(),
        ];
        if checks.iter().any(|c| *c > 1e-12) {
            return Err(Error::InvalidParameter("ring frame is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn local(&self, x: &[f64]) -> RingCoords {
        let u: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let height = dot(&u, &self.axis);
        let perp: Vec<f64> = u.iter().zip(&self.axis).map(|(ui, ai)| ui - height * ai).collect();
        let radius = norm(&perp);
        RingCoords {
            height,
            radius,
            u1: dot(&u, &self.plane[0]),
            u2: dot(&u, &self.plane[1]),
            perp,
        }
    }

    /// Open annulus in radius, closed interval in height.
    pub fn contains(&self, x: &[f64]) -> bool {
        let c = self.local(x);
        c.radius > self.delta - self.xi
            && c.radius < self.delta + self.xi
            && c.height >= 0.0
            && c.height <= self.h
    }

    pub fn outer_radius(&self) -> f64 {
        self.delta + self.xi
    }

    /// Conservative disjointness test: `true` only when the closed rings
    /// certainly do not meet.
    pub fn disjoint_from(&self, other: &CylinderRingSpec) -> bool {
        let same_axis = self.axis.len() == other.axis.len()
            && self.axis.iter().zip(&other.axis).all(|(a, b)| (a - b).abs() < 1e-15);
        if same_axis {
            let base = dot(&self.axis, &self.center);
            let obase = dot(&other.axis, &other.center);
            let (a0, a1) = (base, base + self.h);
            let (b0, b1) = (obase, obase + other.h);
            if a1 < b0 || b1 < a0 {
                return true;
            }
            let c = other.local(&self.center);
            let d = c.radius;
            let (ri, ro) = (self.delta - self.xi, self.delta + self.xi);
            let (si, so) = (other.delta - other.xi, other.delta + other.xi);
            return d > ro + so || d + ro < si || d + so < ri;
        }
        let mid = |r: &CylinderRingSpec| -> Vec<f64> {
            r.center.iter().zip(&r.axis).map(|(c, a)| c + 0.5 * r.h * a).collect()
        };
        let reach = |r: &CylinderRingSpec| (r.outer_radius().powi(2) + 0.25 * r.h * r.h).sqrt();
        let d = norm(&mid(self).iter().zip(mid(other)).map(|(a, b)| a - b).collect::<Vec<_>>());
        d > reach(self) + reach(other)
    }
}

/// Whether `p` lies in the ring `A_ξ(C)`.
pub fn in_cylinder_ring(p: &Point, spec: &CylinderRingSpec) -> Result<bool> {
    if p.dim() != spec.dim() {
        return Err(Error::InvalidArgument(format!(
            "point has dimension {}, ring {}",
            p.dim(),
            spec.dim()
        )));
    }
    Ok(spec.contains(&p.coords))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring() -> CylinderRingSpec {
        CylinderRingSpec::canonical(3, 0.25, 0.5, 0.1).unwrap()
    }

    #[test]
    fn ring_membership_examples() {
        let r = ring();
        let at = |x: f64, z: f64| Point::new(vec![x, 0.0, z]).unwrap();
        assert!(in_cylinder_ring(&at(0.25, 0.25), &r).unwrap());
        assert!(!in_cylinder_ring(&at(0.0, 0.25), &r).unwrap());
        assert!(!in_cylinder_ring(&at(0.25, -0.01), &r).unwrap());
        let p4 = Point::new(vec![0.0; 4]).unwrap();
        assert!(matches!(in_cylinder_ring(&p4, &r), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ring_rejects_bad_xi() {
        assert!(CylinderRingSpec::canonical(3, 0.25, 0.5, 0.3).is_err());
        assert!(CylinderRingSpec::canonical(3, 0.25, -0.5, 0.1).is_err());
    }

    #[test]
    fn point_invariants() {
        assert!(Point::new(vec![0.0, 1.0]).is_err());
        assert!(Point::new(vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn torus_distance_wraps() {
        let t = BoxChart::torus(3, 1.0);
        let d = t.distance(&[0.05, 0.5, 0.5], &[0.95, 0.5, 0.5]);
        assert!((d - 0.1).abs() < 1e-12);
        assert!((t.distance(&[3.05, 0.5, 0.5], &[0.05, 0.5, 0.5])).abs() < 1e-12);
    }

    #[test]
    fn cat_gluing_identifies_top_with_image() {
        let g = Gluing::new(vec![vec![2, 1], vec![1, 1]], vec![]).unwrap();
        let c = BoxChart::torus(3, 1.0).with_gluing(g).unwrap();
        let (r, k) = c.reduce(&[0.1, 0.3, 1.25]);
        assert_eq!(k, 1);
        assert!((r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.4).abs() < 1e-12);
        assert!((r[2] - 0.25).abs() < 1e-12);
        // Just below and just above the seam are close.
        let d = c.distance(&[0.1, 0.3, 0.999], &[0.5, 0.4, 0.001]);
        assert!(d < 0.0021, "{d}");
    }

    #[test]
    fn disjointness_by_height_and_footprint() {
        let a = ring();
        let mut b = ring();
        b.center[2] = 0.6;
        assert!(a.disjoint_from(&b));
        let mut c = ring();
        c.center[0] = 1.0;
        assert!(a.disjoint_from(&c));
        let mut d = ring();
        d.center[0] = 0.1;
        assert!(!a.disjoint_from(&d));
    }
}
