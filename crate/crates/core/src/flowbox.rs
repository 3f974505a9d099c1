//! Volume-normalizing flow boxes: given a straightened field `(0,…,0,1)`
//! with invariant density `ψ dz`, the map `ξ` flattens the density and the
//! shear `γ` flattens a transversal section onto `{x_n = 0}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::geometry::BoxChart;
use crate::quadrature::{gauss_legendre_5, integrate};

/// Positive densities `ψ` from a small catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityKind {
    Constant { value: f64 },
    /// `1 + amp·sin(z₁)cos(z₂)`.
    SinCos { amp: f64 },
    /// `1 + z₁²`.
    Quadratic,
    /// `exp(z_n)`: varies along the flow, so it is never invariant.
    ExpLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub dim: usize,
    pub kind: DensityKind,
    pub chart: BoxChart,
}

impl DensityField {
    pub fn new(dim: usize, kind: DensityKind) -> Self {
        DensityField { dim, kind, chart: BoxChart::cube(dim, -1.0, 1.0) }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Constant { value } => *value,
            DensityKind::SinCos { amp } => 1.0 + amp * z[0].sin() * z[1].cos(),
            DensityKind::Quadratic => 1.0 + z[0] * z[0],
            DensityKind::ExpLast => z[self.dim - 1].exp(),
        }
    }

    /// `f(z₁,…,z_{n−1})`: the density on the slice `z_n = 0`.
    pub fn slice(&self, zp: &[f64]) -> f64 {
        let mut z = zp[..self.dim - 1].to_vec();
        z.push(0.0);
        self.eval(&z)
    }
}

fn sample_in(chart: &BoxChart, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..chart.dim()).map(|i| rng.gen_range(chart.lo[i]..chart.hi[i])).collect()
}

/// Whether `|∂ψ/∂z_n| ≤ tol` at `samples` seeded points of the chart
/// (central difference, step `1e−5`).
pub fn check_density_invariance(psi: &DensityField, tol: f64, samples: usize, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = psi.dim;
    let e = 1e-5;
    for _ in 0..samples {
        let mut z = sample_in(&psi.chart, &mut rng);
        let v = psi.eval(&z);
        if !(v > 0.0) {
            return Err(Error::InvalidDensity(format!("density {v} is not positive at {z:?}")));
        }
        let zn = z[n - 1];
        z[n - 1] = zn + e;
        let a = psi.eval(&z);
        z[n - 1] = zn - e;
        let b = psi.eval(&z);
        if ((a - b) / (2.0 * e)).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `ξ(z) = (z₁,…,z_{n−2}, ∫₀^{z_{n−1}} f(z₁,…,z_{n−2},t) dt, z_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiMap {
    pub psi: DensityField,
    pub quad_tol: f64,
}

impl XiMap {
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let n = self.psi.dim;
        let mut out = z.to_vec();
        let head = &z[..n - 2];
        out[n - 2] = integrate(
            |t| {
                let mut w = head.to_vec();
                w.push(t);
                self.psi.slice(&w)
            },
            0.0,
            z[n - 2],
            self.quad_tol,
        );
        out
    }

    /// `det Jξ(z) = f(z')`.
    pub fn jacobian_det(&self, z: &[f64]) -> f64 {
        self.psi.slice(z)
    }
}

/// Builds `ξ` after confirming that `ψ` does not depend on `z_n`.
pub fn build_xi(psi: &DensityField) -> Result<XiMap> {
    if psi.dim < 3 {
        return Err(Error::InvalidParameter("density dimension must be >= 3".into()));
    }
    if !check_density_invariance(psi, 1e-8, 256, 0)? {
        return Err(Error::InvalidDensity("density varies along the flow direction".into()));
    }
    Ok(XiMap { psi: psi.clone(), quad_tol: 1e-10 })
}

/// Section graphs `y_n = g(y₁,…,y_{n−1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphFunction {
    Constant { value: f64 },
    /// `a·|y'|²`.
    Paraboloid { a: f64 },
    /// `amp·sin(y₁ + … + y_{n−1})`.
    SinSum { amp: f64 },
}

impl GraphFunction {
    pub fn eval(&self, yp: &[f64]) -> f64 {
        match self {
            GraphFunction::Constant { value } => *value,
            GraphFunction::Paraboloid { a } => a * yp.iter().map(|v| v * v).sum::<f64>(),
            GraphFunction::SinSum { amp } => amp * yp.iter().sum::<f64>().sin(),
        }
    }
}

/// The shear `γ(y) = (y', y_n − s·g(y'))` with `s = ±1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTranslation {
    pub g: GraphFunction,
    pub sign: f64,
}

impl GraphTranslation {
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut out = y.to_vec();
        out[n - 1] = y[n - 1] - self.sign * self.g.eval(&y[..n - 1]);
        out
    }

    /// The shear by `−g`.
    pub fn inverse(&self) -> Self {
        GraphTranslation { g: self.g.clone(), sign: -self.sign }
    }
}

pub fn build_graph_translation(g: GraphFunction) -> GraphTranslation {
    GraphTranslation { g, sign: 1.0 }
}

/// The composed chart `α = γ ∘ ξ` on a box of straightened coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBoxChart {
    pub xi: XiMap,
    pub translation: GraphTranslation,
    pub domain: BoxChart,
}

impl FlowBoxChart {
    pub fn new(psi: &DensityField, g: GraphFunction) -> Result<Self> {
        Ok(FlowBoxChart { xi: build_xi(psi)?, translation: build_graph_translation(g), domain: psi.chart.clone() })
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.translation.eval(&self.xi.eval(z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBoxReport {
    pub pushforward_defect: f64,
    pub volume_rel_error: f64,
    pub section_defect: f64,
    pub min_det: f64,
    pub pass: bool,
}

/// Composite 5-point Gauss–Legendre over a rectangle, `panels²` cells.
fn tensor_gl(f: impl Fn(f64, f64) -> f64, (a0, a1): (f64, f64), (b0, b1): (f64, f64), panels: usize) -> f64 {
    let da = (a1 - a0) / panels as f64;
    let db = (b1 - b0) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let (s0, s1) = (a0 + i as f64 * da, a0 + (i + 1) as f64 * da);
        total += gauss_legendre_5(
            |s| {
                (0..panels)
                    .map(|j| gauss_legendre_5(|t| f(s, t), b0 + j as f64 * db, b0 + (j + 1) as f64 * db))
                    .sum()
            },
            s0,
            s1,
        );
    }
    total
}

/// Checks the three flow-box properties at seeded samples:
/// (i) `α` carries the vertical field to itself, (ii) `∫_B ψ` equals the
/// volume of `α(B)` on 50 random sub-boxes, (iii) section points land on
/// `{x_n = 0}`.
///
/// For (ii) both sides share the same Monte-Carlo samples of the first
/// `n−2` coordinates. Along the remaining two, `α` is a monotone map of
/// the `z_{n−1}` fiber followed by a fiberwise translation in `z_n`, so the
/// image measure is the product of the mapped fiber lengths, which come
/// from evaluating `α` itself; the `ψ` side uses a tensor Gauss rule.
pub fn verify_flowbox(
    chart: &FlowBoxChart,
    field: &VectorFieldSpec,
    psi: &DensityField,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<FlowBoxReport> {
    let n = psi.dim;
    if field.dim != n || chart.domain.dim() != n {
        return Err(Error::InvalidInput("dimension mismatch between chart, field and density".into()));
    }
    if !check_density_invariance(psi, 1e-8, samples.max(1), seed)? {
        return Err(Error::InvalidInput("density varies along the flow direction".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..samples).map(|_| sample_in(&chart.domain, &mut rng)).collect();
    let vertical: Vec<f64> = (0..n).map(|i| if i + 1 == n { 1.0 } else { 0.0 }).collect();
    for z in &pts {
        if field.eval(z) != vertical {
            return Err(Error::InvalidInput("field is not the straightened vertical field".into()));
        }
    }

    let eps = 1e-4;
    let push = crate::par::max_slice(&pts, |z| {
        let mut zp = z.clone();
        zp[n - 1] += eps;
        let a = chart.eval(&zp);
        let b = chart.eval(z);
        (0..n).map(|i| (a[i] - b[i] - eps * vertical[i]).abs()).fold(0.0, f64::max) / eps
    });
    let min_det = pts.iter().map(|z| chart.xi.jacobian_det(z)).fold(f64::INFINITY, f64::min);

    let boxes: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..50)
        .map(|_| {
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for i in 0..n {
                let (a, b) = (chart.domain.lo[i], chart.domain.hi[i]);
                let w = rng.gen_range(0.1..0.5f64).min(b - a);
                lo[i] = rng.gen_range(a..(b - w).max(a + f64::EPSILON));
                hi[i] = lo[i] + w;
            }
            (lo, hi, rng.gen())
        })
        .collect();
    let per_box = (samples / 10).max(16);
    let errors = crate::par::map_slice(&boxes, |(lo, hi, box_seed)| {
        let mut r = ChaCha8Rng::seed_from_u64(*box_seed);
        let head_vol: f64 = (0..n - 2).map(|i| hi[i] - lo[i]).product();
        let (mut side_a, mut side_b) = (0.0, 0.0);
        for _ in 0..per_box {
            let head: Vec<f64> = (0..n - 2).map(|i| r.gen_range(lo[i]..hi[i])).collect();
            side_a += tensor_gl(
                |s, t| {
                    let mut z = head.clone();
                    z.extend([s, t]);
                    psi.eval(&z)
                },
                (lo[n - 2], hi[n - 2]),
                (lo[n - 1], hi[n - 1]),
                4,
            );
            let end = |s: f64, t: f64| {
                let mut w = head.clone();
                w.extend([s, t]);
                chart.eval(&w)
            };
            let fiber = end(hi[n - 2], lo[n - 1])[n - 2] - end(lo[n - 2], lo[n - 1])[n - 2];
            let height = end(lo[n - 2], hi[n - 1])[n - 1] - end(lo[n - 2], lo[n - 1])[n - 1];
            side_b += fiber * height;
        }
        side_a *= head_vol / per_box as f64;
        side_b *= head_vol / per_box as f64;
        ((side_a - side_b) / side_a).abs()
    });
    let volume_rel_error = errors.into_iter().fold(0.0, f64::max);

    let section_defect = (0..100)
        .map(|_| {
            let yp: Vec<f64> = (0..n - 1).map(|i| rng.gen_range(chart.domain.lo[i]..chart.domain.hi[i])).collect();
            let mut y = yp.clone();
            y.push(chart.translation.g.eval(&yp));
            chart.translation.eval(&y)[n - 1].abs()
        })
        .fold(0.0, f64::max);

    Ok(FlowBoxReport {
        pushforward_defect: push,
        volume_rel_error,
        section_defect,
        min_det,
        pass: push <= tol && volume_rel_error <= 1e-3 && section_defect <= tol && min_det > 0.0,
    })
}
