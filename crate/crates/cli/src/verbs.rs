use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use vpflow::chains::{build_chain_via_recurrence, RecurrentList, RecurrentSet, TorusLattice};
use vpflow::dynamics::{integrate, liouville_check, IntegratorConfig};
use vpflow::field::FieldKind;
use vpflow::flowbox::{verify_flowbox, DensityField, DensityKind, FlowBoxChart, GraphFunction};
use vpflow::perturb::{build_perturbation, cr_norm_estimate, verify_deviation, DeviationEndpoints, PerturbationSpec, SampleGrid};
use vpflow::poincare::{
    check_genericity_conditions, fundamental_domain_sample, grow_invariant_manifold, CriticalElement,
    FundamentalDomainSample, Side,
};
use vpflow::returnlemma::{extend_return_time, verify_return_lemma, ReturnScenario};
use vpflow::{Error, Point, Result, VectorFieldSpec};

use crate::{resolve_field, Common, Outcome};

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn orbit_csv(field: &VectorFieldSpec, x: &Point, t: f64) -> Result<String> {
    Ok(integrate(field, x, t, &IntegratorConfig::default())?.to_csv())
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub h: f64,
    #[arg(long, default_value_t = 0.1)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
    pub theta: f64,
    /// Seeded points outside the ring for the support check.
    #[arg(long, default_value_t = 100_000)]
    pub support_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub divergence_samples: usize,
    /// Grid points per axis for the C^r estimates (by dimension when absent).
    #[arg(long)]
    pub cr_resolution: Option<usize>,
}

fn sample_box(lo: &[f64], hi: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect()
}

/// Central-difference divergence with step `1e−5`.
fn fd_divergence(field: &VectorFieldSpec, x: &[f64]) -> f64 {
    let e = 1e-5;
    let mut y = x.to_vec();
    let mut total = 0.0;
    for i in 0..x.len() {
        y[i] = x[i] + e;
        let a = field.eval(&y)[i];
        y[i] = x[i] - e;
        let b = field.eval(&y)[i];
        y[i] = x[i];
        total += (a - b) / (2.0 * e);
    }
    total
}

pub fn verify_perturb(c: &Common, a: &PerturbArgs) -> Result<Outcome> {
    if let Some(f) = c.field.as_deref() {
        if f != "constant-vertical" {
            return Err(Error::InvalidInput("verify-perturb perturbs the constant-vertical field".into()));
        }
    }
    let spec = PerturbationSpec::canonical(a.dim, a.delta, a.h, a.xi, a.theta)?;
    let z = build_perturbation(&spec)?;
    let x = VectorFieldSpec::constant_vertical(a.dim);
    let ring = &spec.ring;
    let tol = c.tol.unwrap_or(1e-6);

    let ends = DeviationEndpoints::for_spec(&spec);
    let deviation = verify_deviation(&spec, &ends, tol)?;

    let hull = SampleGrid::around_ring(ring, 2);
    let margin = 0.5 * a.delta;
    let lo: Vec<f64> = hull.lo.iter().map(|v| v - margin).collect();
    let hi: Vec<f64> = hull.hi.iter().map(|v| v + margin).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut outside = Vec::with_capacity(a.support_samples);
    while outside.len() < a.support_samples {
        let p = sample_box(&lo, &hi, &mut rng);
        if !ring.contains(&p) {
            outside.push(p);
        }
    }
    let support_defect = vpflow::par::max_slice(&outside, |p| {
        z.eval(p).iter().zip(x.eval(p)).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    });

    // Half the divergence samples inside the ring, half anywhere in the hull.
    let mut div_points = Vec::with_capacity(a.divergence_samples);
    while div_points.len() < a.divergence_samples {
        let p = sample_box(&hull.lo, &hull.hi, &mut rng);
        if div_points.len() % 2 == 1 || ring.contains(&p) {
            div_points.push(p);
        }
    }
    let analytic_div = vpflow::par::max_slice(&div_points, |p| z.divergence(p).abs());
    let fd_div = vpflow::par::max_slice(&div_points, |p| fd_divergence(&z, p).abs());

    let res = a.cr_resolution.unwrap_or(match a.dim {
        3 => 12,
        4 => 9,
        _ => 6,
    });
    let grid = SampleGrid::around_ring(ring, res);
    let half = PerturbationSpec::canonical(a.dim, a.delta, a.h, a.xi, 0.5 * a.theta)?;
    let z_half = build_perturbation(&half)?;
    let mut cr_full = Vec::new();
    let mut cr_half = Vec::new();
    for r in 0..=2 {
        cr_full.push(cr_norm_estimate(&z, &x, r, &grid)?);
        cr_half.push(cr_norm_estimate(&z_half, &x, r, &grid)?);
    }
    let monotone = cr_full.iter().zip(&cr_half).all(|(f, h)| *h <= *f);
    let linear = a.theta == 0.0 || (cr_half[0] / cr_full[0] - 0.5).abs() <= 0.005;

    // Orbits through the ring, long enough to cross its whole height.
    let cfg = IntegratorConfig::adaptive(1e-11);
    let mut volume = Vec::new();
    for _ in 0..8 {
        let r = rng.gen_range(a.delta - a.xi..a.delta + a.xi);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let height = rng.gen_range(-0.5 * a.h..0.0);
        let mut p = ring.center.clone();
        for i in 0..a.dim {
            p[i] += r * (phi.cos() * ring.plane[0][i] + phi.sin() * ring.plane[1][i]) + height * ring.axis[i];
        }
        let rep = liouville_check(&z, &Point::new(p)?, 2.0 * a.h, &cfg)?;
        volume.push((rep.det_jacobian - 1.0).abs());
    }
    let det_defect = volume.iter().cloned().fold(0.0, f64::max);

    let checks = json!({
        "deviation": deviation.pass,
        "support": support_defect == 0.0,
        "divergence_analytic": analytic_div <= 1e-9,
        "divergence_finite_difference": fd_div <= 1e-5,
        "cr_monotone": monotone,
        "cr_linear_in_theta": linear,
        "volume": det_defect <= 1e-5,
    });
    let pass = checks.as_object().unwrap().values().all(|v| v == &Value::Bool(true));
    let report = json!({
        "verb": "verify-perturb",
        "params": {"dim": a.dim, "delta": a.delta, "h": a.h, "xi": a.xi, "theta": a.theta, "seed": c.seed, "tol": tol},
        "deviation": to_value(&deviation),
        "support": {"samples": outside.len(), "max_defect": support_defect},
        "divergence": {"samples": div_points.len(), "analytic_max": analytic_div, "finite_difference_max": fd_div},
        "cr": {"resolution": res, "theta": cr_full, "half_theta": cr_half},
        "volume": {"orbits": volume.len(), "time": 2.0 * a.h, "max_det_defect": det_defect},
        "checks": checks,
        "pass": pass,
    });
    let mut orbits = Vec::new();
    if c.emit_orbits {
        orbits.push(("deviation".to_string(), orbit_csv(&z, &ends.p, a.h)?));
    }
    Ok(Outcome { report, pass, orbits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityChoice {
    /// `1 + amp·sin(z₁)cos(z₂)`
    Sincos,
    /// `1 + z₁²`
    Quadratic,
    Constant,
    /// `exp(z_n)`
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphChoice {
    Flat,
    Paraboloid,
    Sinsum,
}

#[derive(Debug, Clone, Args)]
pub struct FlowboxArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = DensityChoice::Sincos)]
    pub density: DensityChoice,
    #[arg(long, default_value_t = 0.25, allow_hyphen_values = true)]
    pub amp: f64,
    #[arg(long, value_enum, default_value_t = GraphChoice::Paraboloid)]
    pub graph: GraphChoice,
    #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
    pub graph_amp: f64,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}

pub fn flowbox(c: &Common, a: &FlowboxArgs) -> Result<Outcome> {
    let field = resolve_field(c.field.as_deref(), "constant-vertical", a.dim)?;
    let kind = match a.density {
        DensityChoice::Sincos => DensityKind::SinCos { amp: a.amp },
        DensityChoice::Quadratic => DensityKind::Quadratic,
        DensityChoice::Constant => DensityKind::Constant { value: a.amp },
        DensityChoice::Exp => DensityKind::ExpLast,
    };
    let graph = match a.graph {
        GraphChoice::Flat => GraphFunction::Constant { value: 0.0 },
        GraphChoice::Paraboloid => GraphFunction::Paraboloid { a: a.graph_amp },
        GraphChoice::Sinsum => GraphFunction::SinSum { amp: a.graph_amp },
    };
    let psi = DensityField::new(a.dim, kind);
    let chart = FlowBoxChart::new(&psi, graph.clone())?;
    let tol = c.tol.unwrap_or(1e-6);
    let r = verify_flowbox(&chart, &field, &psi, a.samples, tol, c.seed)?;
    let report = json!({
        "verb": "flowbox",
        "params": {"dim": a.dim, "density": to_value(&psi.kind), "graph": to_value(&graph), "samples": a.samples, "seed": c.seed, "tol": tol},
        "report": to_value(&r),
        "pass": r.pass,
    });
    Ok(Outcome { report, pass: r.pass, orbits: Vec::new() })
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Minimal hop time.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Start point as comma-separated coordinates (seeded random when absent).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub from: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub to: Option<Vec<f64>>,
    /// Lattice points per axis for the torus recurrent set.
    #[arg(long, default_value_t = 80)]
    pub resolution: usize,
}

pub fn chain(c: &Common, a: &ChainArgs) -> Result<Outcome> {
    let field = resolve_field(c.field.as_deref(), "linear-torus", a.dim)?;
    let n = field.dim;
    if !(a.eps > 0.0) || !(a.t > 0.0) {
        return Err(Error::InvalidParameter("need eps > 0 and t > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut random_point = || -> Vec<f64> { sample_box(&field.chart.lo, &field.chart.hi, &mut rng) };
    let (recurrent, default_from, default_to): (Box<dyn RecurrentSet>, Vec<f64>, Vec<f64>) = match &field.kind {
        FieldKind::LinearTorus { .. } if field.patches.is_empty() => {
            let lattice = TorusLattice::for_linear_torus(&field, a.resolution, a.t, a.eps / 8.0)?;
            (Box::new(lattice), random_point(), random_point())
        }
        FieldKind::SaddlePairDemo if field.patches.is_empty() => {
            // The only recurrent points are the two equilibria.
            let mut right = vec![0.0; n];
            right[0] = 1.0;
            let list = RecurrentList { entries: vec![(Point::new(vec![0.0; n])?, a.t), (Point::new(right)?, a.t)] };
            let mut from = vec![0.0; n];
            from[0] = 0.98;
            let mut to = vec![0.0; n];
            to[0] = 0.02;
            (Box::new(list), from, to)
        }
        _ => {
            return Err(Error::InvalidInput(format!("no recurrent set is known for field {}", field.id())));
        }
    };
    let p = Point::new(a.from.clone().unwrap_or(default_from))?;
    let q = Point::new(a.to.clone().unwrap_or(default_to))?;
    if p.dim() != n || q.dim() != n {
        return Err(Error::InvalidArgument("endpoint dimension mismatch".into()));
    }
    let cfg = IntegratorConfig::default();
    let built = build_chain_via_recurrence(&field, &p, &q, a.eps, a.t, recurrent.as_ref(), None, &cfg)?;
    let pass = built.pass == Some(true);
    let report = json!({
        "verb": "chain",
        "field": field.id(),
        "params": {"eps": a.eps, "t": a.t, "seed": c.seed, "resolution": a.resolution},
        "from": p.coords,
        "to": q.coords,
        "hops": built.hop_times.len(),
        "chain": built.to_json(),
        "pass": pass,
    });
    let mut orbits = Vec::new();
    if c.emit_orbits {
        for (i, (x, t)) in built.points.iter().zip(&built.hop_times).enumerate() {
            orbits.push((format!("hop-{i}"), orbit_csv(&field, x, *t)?));
        }
    }
    Ok(Outcome { report, pass, orbits })
}

#[derive(Debug, Clone, Args)]
pub struct ReturnArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Return time to exceed.
    #[arg(long, default_value_t = 10.0)]
    pub target: f64,
    #[arg(long, default_value_t = 5)]
    pub max_iter: usize,
}

pub fn return_demo(c: &Common, a: &ReturnArgs) -> Result<Outcome> {
    if c.field.as_deref().is_some_and(|f| f != "constant-vertical") {
        return Err(Error::InvalidInput("return-demo runs on the straightened constant-vertical scenario".into()));
    }
    let scenario = ReturnScenario::standard(a.dim).with_seed(c.seed);
    let out = extend_return_time(&scenario, a.target, a.max_iter)?;
    let base = scenario.base_field()?;
    let lemma = verify_return_lemma(&out.field, &base, &scenario, a.target)?;
    let min_increment = c.tol.map_or(2.0 - 1e-6, |t| 2.0 - t);
    let increments_ok = out.trail.iter().all(|s| s.increment >= min_increment);
    let pass = out.success && lemma.pass && increments_ok && out.trail.len() <= a.max_iter;
    let report = json!({
        "verb": "return-demo",
        "params": {"dim": a.dim, "target": a.target, "max_iter": a.max_iter, "seed": c.seed},
        "initial_return_time": out.initial_return_time,
        "final_return_time": out.final_return_time(),
        "patches": out.trail.len(),
        "success": out.success,
        "increments_ok": increments_ok,
        "trail": out.trail_json(),
        "lemma": to_value(&lemma),
        "pass": pass,
    });
    let mut orbits = Vec::new();
    if c.emit_orbits {
        let t = out.final_return_time().or(out.initial_return_time).unwrap_or(0.0);
        orbits.push(("return".to_string(), orbit_csv(&out.field, &scenario.p(), t)?));
    }
    Ok(Outcome { report, pass, orbits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideChoice {
    Unstable,
    Stable,
}

impl From<SideChoice> for Side {
    fn from(s: SideChoice) -> Side {
        match s {
            SideChoice::Unstable => Side::Unstable,
            SideChoice::Stable => Side::Stable,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenericityArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = SideChoice::Unstable)]
    pub side: SideChoice,
    /// Domain sample size (catalog default when absent).
    #[arg(long)]
    pub count: Option<usize>,
    /// Integration horizon for the recurrence search.
    #[arg(long, default_value_t = 200.0)]
    pub max_t: f64,
}

/// The catalog's critical element for `field`: the suspended fixed point of
/// the cat map, or the origin of a linear saddle.
fn element_for(field: &VectorFieldSpec, cfg: &IntegratorConfig) -> Result<Option<CriticalElement>> {
    let origin = Point::new(vec![0.0; field.dim])?;
    match &field.kind {
        FieldKind::CatmapSuspension => Ok(Some(CriticalElement::periodic_orbit(field, origin, 1.0, 0.9, cfg)?)),
        FieldKind::Linear { .. } => Ok(Some(CriticalElement::singularity(field, origin)?)),
        _ => Ok(None),
    }
}

/// Fundamental domain for the field: the element's domain when it has one,
/// otherwise (linear torus flow) a segment transverse to the flow.
fn domain_for(
    field: &VectorFieldSpec,
    side: Side,
    count: Option<usize>,
    cfg: &IntegratorConfig,
) -> Result<FundamentalDomainSample> {
    match element_for(field, cfg)? {
        Some(e) if e.is_periodic() => fundamental_domain_sample(field, &e, side, count.unwrap_or(16), true, 0.05, cfg),
        Some(e) => fundamental_domain_sample(field, &e, side, count.unwrap_or(8), false, 0.1, cfg),
        None if matches!(field.kind, FieldKind::LinearTorus { .. }) => {
            let mut a = vec![0.3; field.dim];
            let mut b = vec![0.3; field.dim];
            a[0] = 0.1;
            b[0] = 0.9;
            FundamentalDomainSample::segment(a, b, count.unwrap_or(41), false)
        }
        None => Err(Error::InvalidInput(format!("no fundamental domain is known for field {}", field.id()))),
    }
}

pub fn genericity(c: &Common, a: &GenericityArgs) -> Result<Outcome> {
    let field = resolve_field(c.field.as_deref(), "catmap-suspension", a.dim)?;
    let cfg = IntegratorConfig::default();
    let dom = domain_for(&field, a.side.into(), a.count, &cfg)?;
    let r = check_genericity_conditions(&field, a.k, a.m, &dom, a.max_t, &cfg)?;
    let pass = r.pass_a1 && r.pass_a2;
    let report = json!({
        "verb": "genericity",
        "field": field.id(),
        "params": {"k": a.k, "m": a.m, "max_t": a.max_t, "domain_points": dom.points.len()},
        "report": to_value(&r),
        "pass": pass,
    });
    Ok(Outcome { report, pass, orbits: Vec::new() })
}

#[derive(Debug, Clone, Args)]
pub struct ManifoldArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = SideChoice::Unstable)]
    pub side: SideChoice,
    #[arg(long)]
    pub count: Option<usize>,
    /// Growth time.
    #[arg(long, default_value_t = 3.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.05)]
    pub stride: f64,
}

pub fn manifold(c: &Common, a: &ManifoldArgs) -> Result<Outcome> {
    let field = resolve_field(c.field.as_deref(), "catmap-suspension", a.dim)?;
    let cfg = IntegratorConfig::default();
    let element = element_for(&field, &cfg)?
        .ok_or_else(|| Error::InvalidInput(format!("field {} has no catalog critical element", field.id())))?;
    let side: Side = a.side.into();
    let dom = domain_for(&field, side, a.count, &cfg)?;
    let cloud = grow_invariant_manifold(&field, &dom, a.t_end, a.stride, &cfg)?;
    let pass = element.hyperbolic && !cloud.points.is_empty();
    let report = json!({
        "verb": "manifold",
        "field": field.id(),
        "element": element.label(),
        "hyperbolic": element.hyperbolic,
        "spectrum": element.spectrum,
        "params": {"side": to_value(&side), "t_end": a.t_end, "stride": a.stride},
        "domain": dom.points.iter().map(|p| p.coords.clone()).collect::<Vec<_>>(),
        "cloud": to_value(&cloud),
        "pass": pass,
    });
    let mut orbits = Vec::new();
    if c.emit_orbits {
        let g = if side == Side::Stable { field.reversed() } else { field.clone() };
        for (i, p) in dom.points.iter().enumerate() {
            match integrate(&g, p, a.t_end, &cfg) {
                Ok(o) => orbits.push((format!("orbit-{i}"), o.to_csv())),
                Err(Error::IntegrationEscape { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Outcome { report, pass, orbits })
}
