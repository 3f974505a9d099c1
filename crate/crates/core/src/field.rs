//! Vector fields: a catalog of base systems plus additive perturbation
//! patches supported on cylinder rings.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bump::BumpPair;
use crate::error::{Error, Result};
use crate::geometry::{BoxChart, CylinderRingSpec, Gluing, Point};

/// Catalog systems.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    /// `(0, …, 0, 1)`.
    ConstantVertical,
    /// Constant field `ω` on the unit torus.
    LinearTorus { frequencies: Vec<f64> },
    /// `∂/∂z` on the mapping torus of the cat map `[[2,1],[1,1]]`.
    CatmapSuspension,
    /// `(−2πτ y, 2πτ x, 1)`: a rigid rotation by `τ` turns per unit time,
    /// suspended over a periodic last axis.
    RotationSuspension { turns: f64 },
    /// `(sin πx₁, −π/(n−1)·cos(πx₁)·x_i, …)`: two singularities on the x₁
    /// axis joined by a heteroclinic segment.
    SaddlePairDemo,
    /// `A x + b`.
    Linear { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

impl FieldKind {
    pub fn id(&self) -> &'static str {
        match self {
            FieldKind::ConstantVertical => "constant-vertical",
            FieldKind::LinearTorus { .. } => "linear-torus",
            FieldKind::CatmapSuspension => "catmap-suspension",
            FieldKind::RotationSuspension { .. } => "rotation-suspension",
            FieldKind::SaddlePairDemo => "saddle-pair-demo",
            FieldKind::Linear { .. } => "linear",
        }
    }

    fn position_independent(&self) -> bool {
        matches!(
            self,
            FieldKind::ConstantVertical | FieldKind::LinearTorus { .. } | FieldKind::CatmapSuspension
        )
    }

    fn default_chart(&self, dim: usize) -> BoxChart {
        match self {
            FieldKind::ConstantVertical | FieldKind::Linear { .. } => BoxChart::cube(dim, -2.0, 2.0),
            FieldKind::LinearTorus { .. } => BoxChart::torus(dim, 1.0),
            FieldKind::CatmapSuspension => BoxChart::torus(3, 1.0)
                .with_gluing(Gluing::new(vec![vec![2, 1], vec![1, 1]], vec![]).expect("cat map"))
                .expect("cat chart"),
            FieldKind::RotationSuspension { .. } => {
                let mut c = BoxChart::cube(dim, -2.0, 2.0);
                c.lo[dim - 1] = 0.0;
                c.hi[dim - 1] = 1.0;
                c.periodic[dim - 1] = true;
                c
            }
            FieldKind::SaddlePairDemo => {
                let mut c = BoxChart::cube(dim, -1.0, 1.0);
                c.lo[0] = -0.5;
                c.hi[0] = 1.5;
                c
            }
        }
    }
}

/// One additive deviation `θ·λ(height)·γ(radius)·J u` supported on a ring,
/// where `J` rotates the ring's plane by a quarter turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub ring: CylinderRingSpec,
    pub bumps: BumpPair,
    pub theta: f64,
}

impl Patch {
    pub fn new(ring: CylinderRingSpec, theta: f64) -> Result<Self> {
        ring.validate()?;
        if !theta.is_finite() {
            return Err(Error::InvalidParameter("theta must be finite".into()));
        }
        let bumps = BumpPair::new(ring.h, ring.delta, ring.xi)?;
        Ok(Patch { ring, bumps, theta })
    }

    /// Adds the deviation at `x` (chart coordinates) to `out`; returns
    /// whether `x` was inside the support.
    pub fn add_deviation(&self, x: &[f64], out: &mut [f64]) -> bool {
        let c = self.ring.local(x);
        let r = &self.ring;
        if !(c.height > 0.0 && c.height < r.h && c.radius > r.delta - r.xi && c.radius < r.delta + r.xi) {
            return false;
        }
        let amp = self.theta * self.bumps.lambda.value(c.height) * self.bumps.gamma.value(c.radius);
        for i in 0..out.len() {
            out[i] += amp * (c.u1 * r.plane[1][i] - c.u2 * r.plane[0][i]);
        }
        true
    }

    pub fn add_jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
        let c = self.ring.local(x);
        let r = &self.ring;
        if !(c.height > 0.0 && c.height < r.h && c.radius > r.delta - r.xi && c.radius < r.delta + r.xi) {
            return;
        }
        let n = x.len();
        let lam = self.bumps.lambda.value(c.height);
        let dlam = self.bumps.lambda.derivative(c.height);
        let gam = self.bumps.gamma.value(c.radius);
        let dgam = self.bumps.gamma.derivative(c.radius);
        let (e1, e2, a) = (&r.plane[0], &r.plane[1], &r.axis);
        for i in 0..n {
            let w = c.u1 * e2[i] - c.u2 * e1[i];
            for j in 0..n {
                let radial = if c.radius > 0.0 { c.perp[j] / c.radius } else { 0.0 };
                let d = dlam * gam * w * a[j]
                    + lam * dgam * w * radial
                    + lam * gam * (e2[i] * e1[j] - e1[i] * e2[j]);
                jac[(i, j)] += self.theta * d;
            }
        }
    }

    /// Upper bound on the deviation's magnitude.
    pub fn speed_bound(&self) -> f64 {
        self.theta.abs() * self.bumps.lambda.value(0.5 * self.ring.h) * self.ring.outer_radius()
    }
}

/// A vector field in chart coordinates: catalog base plus ordered patches.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSpec {
    pub dim: usize,
    pub kind: FieldKind,
    pub chart: BoxChart,
    pub patches: Vec<Patch>,
    /// Evaluate `−X` instead of `X`.
    pub reversed: bool,
}

impl VectorFieldSpec {
    pub fn new(dim: usize, kind: FieldKind) -> Result<Self> {
        Self::check_kind(dim, &kind)?;
        let chart = kind.default_chart(dim);
        Ok(VectorFieldSpec { dim, kind, chart, patches: Vec::new(), reversed: false })
    }

    fn check_kind(dim: usize, kind: &FieldKind) -> Result<()> {
        if dim < 3 {
            return Err(Error::InvalidField(format!("dimension must be >= 3, got {dim}")));
        }
        match kind {
            FieldKind::LinearTorus { frequencies } if frequencies.len() != dim => {
                Err(Error::InvalidField("frequency vector length != dim".into()))
            }
            FieldKind::CatmapSuspension if dim != 3 => {
                Err(Error::InvalidField("catmap-suspension is three-dimensional".into()))
            }
            FieldKind::Linear { matrix, offset }
                if matrix.len() != dim
                    || matrix.iter().any(|r| r.len() != dim)
                    || (!offset.is_empty() && offset.len() != dim) =>
            {
                Err(Error::InvalidField("linear field shape mismatch".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn constant_vertical(dim: usize) -> Self {
        Self::new(dim, FieldKind::ConstantVertical).expect("dim >= 3")
    }

    pub fn linear_torus(frequencies: Vec<f64>) -> Result<Self> {
        Self::new(frequencies.len(), FieldKind::LinearTorus { frequencies })
    }

    pub fn catmap_suspension() -> Self {
        Self::new(3, FieldKind::CatmapSuspension).expect("catalog")
    }

    pub fn rotation_suspension(turns: f64) -> Self {
        Self::new(3, FieldKind::RotationSuspension { turns }).expect("catalog")
    }

    pub fn saddle_pair_demo() -> Self {
        Self::new(3, FieldKind::SaddlePairDemo).expect("catalog")
    }

    pub fn linear(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let dim = matrix.len();
        let offset = if offset.is_empty() { vec![0.0; dim] } else { offset };
        Self::new(dim, FieldKind::Linear { matrix, offset })
    }

    /// Catalog lookup by id. Besides the kinds above, a few named linear
    /// demos are provided: `saddle` (diag(1, 1, −2)), `rotation` ((−y, x, 0)),
    /// `div-test` ((x, 0, 0)) and `hyperbolic-shear` ((x, −y, 1)).
    pub fn catalog(id: &str, dim: usize) -> Result<Self> {
        let diag = |d: &[f64]| -> Vec<Vec<f64>> {
            (0..dim).map(|i| (0..dim).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect()
        };
        let pad = |v: &[f64]| -> Vec<f64> { (0..dim).map(|i| v.get(i).copied().unwrap_or(0.0)).collect() };
        match id {
            "constant-vertical" => Self::new(dim, FieldKind::ConstantVertical),
            "linear-torus" => Self::linear_torus(default_frequencies(dim)),
            "catmap-suspension" => Self::new(dim, FieldKind::CatmapSuspension),
            "rotation-suspension" => Self::new(dim, FieldKind::RotationSuspension { turns: 0.3 }),
            "saddle-pair-demo" => Self::new(dim, FieldKind::SaddlePairDemo),
            "saddle" => {
                let mut d = vec![1.0; dim];
                d[dim - 1] = -((dim - 1) as f64);
                Self::linear(diag(&d), vec![])
            }
            "rotation" => {
                let mut m = diag(&vec![0.0; dim]);
                m[0][1] = -1.0;
                m[1][0] = 1.0;
                Self::linear(m, vec![])
            }
            "div-test" => Self::linear(diag(&pad(&[1.0])), vec![]),
            "hyperbolic-shear" => {
                let mut off = vec![0.0; dim];
                off[dim - 1] = 1.0;
                Self::linear(diag(&pad(&[1.0, -1.0])), off)
            }
            other => Err(Error::InvalidField(format!("unknown catalog id '{other}'"))),
        }
    }

    pub fn with_chart(mut self, chart: BoxChart) -> Result<Self> {
        chart.validate()?;
        if chart.dim() != self.dim {
            return Err(Error::InvalidField("chart dimension mismatch".into()));
        }
        self.chart = chart;
        Ok(self)
    }

    pub fn with_patch(mut self, patch: Patch) -> Result<Self> {
        if patch.ring.dim() != self.dim {
            return Err(Error::InvalidField("patch dimension mismatch".into()));
        }
        self.patches.push(patch);
        Ok(self)
    }

    /// The same system with the direction of time reversed.
    pub fn reversed(&self) -> Self {
        let mut f = self.clone();
        f.reversed = !f.reversed;
        f
    }

    /// The base system without its patches.
    pub fn base(&self) -> Self {
        let mut f = self.clone();
        f.patches.clear();
        f
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    /// Whether the unpatched system has zero divergence (patches always do).
    pub fn is_conservative(&self) -> bool {
        match &self.kind {
            FieldKind::Linear { matrix, .. } => {
                (0..self.dim).map(|i| matrix[i][i]).sum::<f64>().abs() < 1e-14
            }
            _ => true,
        }
    }

    fn base_into(&self, r: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match &self.kind {
            FieldKind::ConstantVertical | FieldKind::CatmapSuspension => {
                out.fill(0.0);
                out[n - 1] = 1.0;
            }
            FieldKind::LinearTorus { frequencies } => out.copy_from_slice(frequencies),
            FieldKind::RotationSuspension { turns } => {
                let w = 2.0 * PI * turns;
                out.fill(0.0);
                out[0] = -w * r[1];
                out[1] = w * r[0];
                out[n - 1] = 1.0;
            }
            FieldKind::SaddlePairDemo => {
                let c = -PI / (n - 1) as f64 * (PI * r[0]).cos();
                out[0] = (PI * r[0]).sin();
                for i in 1..n {
                    out[i] = c * r[i];
                }
            }
            FieldKind::Linear { matrix, offset } => {
                for i in 0..n {
                    out[i] = offset[i] + matrix[i].iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    fn base_jacobian(&self, r: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut j = DMatrix::zeros(n, n);
        match &self.kind {
            FieldKind::ConstantVertical | FieldKind::CatmapSuspension | FieldKind::LinearTorus { .. } => {}
            FieldKind::RotationSuspension { turns } => {
                let w = 2.0 * PI * turns;
                j[(0, 1)] = -w;
                j[(1, 0)] = w;
            }
            FieldKind::SaddlePairDemo => {
                let k = PI / (n - 1) as f64;
                j[(0, 0)] = PI * (PI * r[0]).cos();
                for i in 1..n {
                    j[(i, i)] = -k * (PI * r[0]).cos();
                    j[(i, 0)] = k * PI * (PI * r[0]).sin() * r[i];
                }
            }
            FieldKind::Linear { matrix, .. } => {
                for a in 0..n {
                    for b in 0..n {
                        j[(a, b)] = matrix[a][b];
                    }
                }
            }
        }
        j
    }

    /// Evaluates the field at lifted chart coordinates `x`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let sign = if self.reversed { -1.0 } else { 1.0 };
        if self.patches.is_empty() && self.kind.position_independent() {
            self.base_into(x, out);
        } else {
            let needs_reduce = self.chart.periodic.iter().any(|p| *p);
            if needs_reduce {
                let (r, k) = self.chart.reduce(x);
                self.base_into(&r, out);
                for p in &self.patches {
                    p.add_deviation(&r, out);
                }
                self.chart.lift_vector(k, out);
            } else {
                self.base_into(x, out);
                for p in &self.patches {
                    p.add_deviation(x, out);
                }
            }
        }
        if self.reversed {
            for v in out.iter_mut() {
                *v *= sign;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Analytic Jacobian `DX(x)` in lifted coordinates.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (r, k) = self.chart.reduce(x);
        let mut j = self.base_jacobian(&r);
        for p in &self.patches {
            p.add_jacobian(&r, &mut j);
        }
        if k != 0 {
            if let Some(ak) = self.chart.gluing_power(k) {
                let n = self.dim;
                let mut p = DMatrix::identity(n, n);
                p.view_mut((0, 0), (n - 1, n - 1)).copy_from(&ak);
                let pinv = p.clone().try_inverse().expect("unimodular");
                j = pinv * j * p;
            }
        }
        if self.reversed {
            j = -j;
        }
        j
    }

    /// Divergence as the trace of the analytic Jacobian.
    pub fn divergence(&self, x: &[f64]) -> f64 {
        self.jacobian(x).trace()
    }

    /// Upper bound on `|X|` over the chart.
    pub fn speed_bound(&self) -> f64 {
        let n = self.dim;
        let corners = |f: &dyn Fn(&[f64]) -> f64| -> f64 {
            let mut best: f64 = 0.0;
            for mask in 0..(1usize << n) {
                let c: Vec<f64> = (0..n)
                    .map(|i| if mask >> i & 1 == 1 { self.chart.hi[i] } else { self.chart.lo[i] })
                    .collect();
                best = best.max(f(&c));
            }
            best
        };
        let base = match &self.kind {
            FieldKind::ConstantVertical | FieldKind::CatmapSuspension => 1.0,
            FieldKind::LinearTorus { frequencies } => crate::geometry::norm(frequencies),
            FieldKind::RotationSuspension { turns } => {
                let w = 2.0 * PI * turns.abs();
                corners(&|c: &[f64]| (w * w * (c[0] * c[0] + c[1] * c[1]) + 1.0).sqrt())
            }
            FieldKind::SaddlePairDemo => {
                let k = PI / (n - 1) as f64;
                corners(&|c: &[f64]| (1.0 + k * k * c[1..].iter().map(|v| v * v).sum::<f64>()).sqrt())
            }
            FieldKind::Linear { .. } => corners(&|c: &[f64]| {
                let mut o = vec![0.0; n];
                self.base_into(c, &mut o);
                crate::geometry::norm(&o)
            }),
        };
        base + self.patches.iter().map(Patch::speed_bound).sum::<f64>()
    }

    pub fn to_document(&self) -> FieldDocument {
        let params = match &self.kind {
            FieldKind::LinearTorus { frequencies } => serde_json::json!({ "frequencies": frequencies }),
            FieldKind::RotationSuspension { turns } => serde_json::json!({ "turns": turns }),
            FieldKind::Linear { matrix, offset } => serde_json::json!({ "matrix": matrix, "offset": offset }),
            _ => serde_json::json!({}),
        };
        let chart = (self.chart != self.kind.default_chart(self.dim)).then(|| self.chart.clone());
        FieldDocument {
            dim: self.dim,
            kind: self.kind.id().to_string(),
            params,
            patches: self
                .patches
                .iter()
                .map(|p| PatchDocument {
                    delta: p.ring.delta,
                    h: p.ring.h,
                    xi: p.ring.xi,
                    center: p.ring.center.clone(),
                    axis: p.ring.axis.clone(),
                    theta: p.theta,
                    rotation: p.ring.plane.clone(),
                })
                .collect(),
            chart,
            reversed: self.reversed,
        }
    }

    pub fn from_document(doc: &FieldDocument) -> Result<Self> {
        let get = |key: &str| doc.params.get(key).cloned();
        let kind = match doc.kind.as_str() {
            "constant-vertical" => FieldKind::ConstantVertical,
            "linear-torus" => FieldKind::LinearTorus {
                frequencies: match get("frequencies") {
                    Some(v) => serde_json::from_value(v)?,
                    None => default_frequencies(doc.dim),
                },
            },
            "catmap-suspension" => FieldKind::CatmapSuspension,
            "rotation-suspension" => FieldKind::RotationSuspension {
                turns: match get("turns") {
                    Some(v) => serde_json::from_value(v)?,
                    None => 0.3,
                },
            },
            "saddle-pair-demo" => FieldKind::SaddlePairDemo,
            "linear" | "custom" => {
                let matrix: Vec<Vec<f64>> = serde_json::from_value(
                    get("matrix").ok_or_else(|| Error::InvalidField("linear field needs 'matrix'".into()))?,
                )?;
                let offset: Vec<f64> = match get("offset") {
                    Some(v) => serde_json::from_value(v)?,
                    None => vec![0.0; doc.dim],
                };
                FieldKind::Linear { matrix, offset }
            }
            other => return Err(Error::InvalidField(format!("unknown catalog id '{other}'"))),
        };
        let mut field = Self::new(doc.dim, kind)?;
        if let Some(chart) = &doc.chart {
            let mut chart = chart.clone();
            chart.finish()?;
            field = field.with_chart(chart)?;
        }
        for p in &doc.patches {
            let ring = CylinderRingSpec::new(
                p.delta,
                p.h,
                p.xi,
                p.center.clone(),
                p.axis.clone(),
                p.rotation.clone(),
            )?;
            field = field.with_patch(Patch::new(ring, p.theta)?)?;
        }
        field.reversed = doc.reversed;
        Ok(field)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FieldDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// `(1, √2, √3, √5, …)`: one followed by square roots of primes.
pub fn default_frequencies(dim: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut p = 2u64;
    while out.len() < dim {
        if (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0) {
            out.push((p as f64).sqrt());
        }
        p += 1;
    }
    out
}

/// Serialized form of a field: `{dim, kind, params, patches, chart?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDocument {
    pub dim: usize,
    pub kind: String,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
    #[serde(default)]
    pub patches: Vec<PatchDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<BoxChart>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub reversed: bool,
}

fn empty_object() -> serde_json::Value {
    serde_json::json!({})
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDocument {
    pub delta: f64,
    pub h: f64,
    pub xi: f64,
    pub center: Vec<f64>,
    pub axis: Vec<f64>,
    pub theta: f64,
    /// Orthonormal rotation-plane basis.
    pub rotation: [Vec<f64>; 2],
}

/// Evaluates `field` at `p`, checking dimensions.
pub fn evaluate(field: &VectorFieldSpec, p: &Point) -> Result<Vec<f64>> {
    if p.dim() != field.dim {
        return Err(Error::InvalidArgument(format!(
            "point dimension {} != field dimension {}",
            p.dim(),
            field.dim
        )));
    }
    Ok(field.eval(&p.coords))
}
