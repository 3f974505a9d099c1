//! (ε,t)-chains: verification, construction from recurrent points,
//! time reversal, and chain-transitivity tests on sampled sets.

use std::collections::HashMap;

use petgraph::algo::{condensation, tarjan_scc};
use petgraph::graph::DiGraph;
use petgraph::Direction;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, integrate_partial, IntegratorConfig};
use crate::error::{Error, Result};
use crate::field::{FieldKind, VectorFieldSpec};
use crate::geometry::{BoxChart, Point};

/// Points `x₀..x_m` with hop times `t₀..t_{m−1}`; `defect` and `pass` are
/// filled by [`verify_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsTChain {
    pub points: Vec<Point>,
    pub hop_times: Vec<f64>,
    pub eps: f64,
    pub t_min: f64,
    pub defect: Option<f64>,
    pub pass: Option<bool>,
}

impl EpsTChain {
    pub fn new(points: Vec<Point>, hop_times: Vec<f64>, eps: f64, t_min: f64) -> Self {
        EpsTChain { points, hop_times, eps, t_min, defect: None, pass: None }
    }

    pub fn first(&self) -> &Point {
        &self.points[0]
    }

    pub fn last(&self) -> &Point {
        self.points.last().expect("non-empty chain")
    }

    /// Whether the stored verification also certifies `(eps, t_min)`:
    /// larger ε and smaller t need no re-integration.
    pub fn certifies(&self, eps: f64, t_min: f64) -> bool {
        self.pass == Some(true)
            && self.defect.is_some_and(|d| d < eps)
            && self.hop_times.iter().all(|t| *t >= t_min)
    }

    /// Joins `self` (ending at `r`) with `other` (starting at `r`).
    pub fn concat(&self, other: &EpsTChain) -> EpsTChain {
        let mut points = self.points.clone();
        points.extend(other.points.iter().skip(1).cloned());
        let mut hop_times = self.hop_times.clone();
        hop_times.extend(&other.hop_times);
        EpsTChain::new(points, hop_times, self.eps.min(other.eps), self.t_min.max(other.t_min))
    }

    /// `{eps, t_min, points, hop_times, defect, pass}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps,
            "t_min": self.t_min,
            "points": self.points.iter().map(|p| p.coords.clone()).collect::<Vec<_>>(),
            "hop_times": self.hop_times,
            "defect": self.defect,
            "pass": self.pass,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainVerification {
    pub chain: EpsTChain,
    pub hop_defects: Vec<f64>,
    /// Hops with `t_i < t_min`.
    pub time_violations: Vec<usize>,
    pub pass: bool,
}

/// Integrates every hop and records `max_i d(X_{t_i}(x_i), x_{i+1})`.
pub fn verify_chain(field: &VectorFieldSpec, chain: &EpsTChain, cfg: &IntegratorConfig) -> Result<ChainVerification> {
    let m = chain.hop_times.len();
    if m == 0 || chain.points.len() != m + 1 {
        return Err(Error::InvalidInput("a chain needs m >= 1 hops and m + 1 points".into()));
    }
    if !(chain.eps > 0.0) || !(chain.t_min > 0.0) {
        return Err(Error::InvalidParameter("chain needs eps > 0 and t > 0".into()));
    }
    let hops = crate::par::map_range(m, |i| -> Result<f64> {
        let end = flow(field, &chain.points[i].coords, chain.hop_times[i], cfg)
            .map_err(|e| Error::Hop { hop: i, source: Box::new(e) })?;
        Ok(field.chart.distance(&end, &chain.points[i + 1].coords))
    });
    let hop_defects = hops.into_iter().collect::<Result<Vec<_>>>()?;
    let defect = hop_defects.iter().copied().fold(0.0, f64::max);
    let time_violations: Vec<usize> = (0..m).filter(|i| chain.hop_times[*i] < chain.t_min).collect();
    let pass = defect < chain.eps && time_violations.is_empty();
    let mut verified = chain.clone();
    verified.defect = Some(defect);
    verified.pass = Some(pass);
    Ok(ChainVerification { chain: verified, hop_defects, time_violations, pass })
}

/// A supply of recurrent points with their return times.
pub trait RecurrentSet {
    /// The recurrent point nearest to `y` within `radius` (ties broken
    /// lexicographically), with its return time.
    fn nearest(&self, chart: &BoxChart, y: &[f64], radius: f64) -> Option<(Point, f64)>;
}

/// An explicit list of `(point, return time)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentList {
    pub entries: Vec<(Point, f64)>,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

impl RecurrentSet for RecurrentList {
    fn nearest(&self, chart: &BoxChart, y: &[f64], radius: f64) -> Option<(Point, f64)> {
        let mut best: Option<(f64, &(Point, f64))> = None;
        for e in &self.entries {
            let d = chart.distance(&e.0.coords, y);
            if d >= radius {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, be)) => d < bd || (d == bd && lex_less(&e.0.coords, &be.0.coords)),
            };
            if better {
                best = Some((d, e));
            }
        }
        best.map(|(_, e)| e.clone())
    }
}

/// The implicit lattice of cell centers `(i + ½)/res` on a torus with a
/// linear flow. Every point of a linear torus flow returns after the same
/// times, so one common return time serves the whole lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusLattice {
    pub resolution: usize,
    pub return_time: f64,
    pub return_defect: f64,
}

impl TorusLattice {
    /// Lattice for `field` (a linear torus flow) whose common return time
    /// exceeds `t_min` with return defect below `max_defect`.
    pub fn for_linear_torus(field: &VectorFieldSpec, resolution: usize, t_min: f64, max_defect: f64) -> Result<Self> {
        let FieldKind::LinearTorus { frequencies } = &field.kind else {
            return Err(Error::InvalidField("lattice oracle needs a linear torus flow".into()));
        };
        if !field.patches.is_empty() || resolution == 0 {
            return Err(Error::InvalidField("lattice oracle needs an unpatched flow and resolution > 0".into()));
        }
        let (return_time, return_defect) = common_return_time(frequencies, &field.chart, t_min, max_defect)
            .ok_or_else(|| Error::OracleFailure("no simultaneous return found".into()))?;
        Ok(TorusLattice { resolution, return_time, return_defect })
    }
}

/// Smallest `T = k/ω₁ > t_min` (so the first coordinate returns exactly)
/// with `‖ωT mod 1‖ < max_defect`, searching `k` up to `10⁸`.
pub fn common_return_time(frequencies: &[f64], chart: &BoxChart, t_min: f64, max_defect: f64) -> Option<(f64, f64)> {
    let w0 = frequencies[0];
    if w0 == 0.0 {
        return None;
    }
    let period0 = chart.period(0);
    let start = (t_min * w0.abs() / period0).floor() as u64 + 1;
    let origin = vec![0.0; frequencies.len()];
    for k in start..start + 100_000_000 {
        let t = k as f64 * period0 / w0.abs();
        let mut sq = 0.0;
        for (i, w) in frequencies.iter().enumerate().skip(1) {
            let l = chart.period(i);
            let r = (w * t / l).rem_euclid(1.0);
            let d = r.min(1.0 - r) * l;
            sq += d * d;
            if sq >= max_defect * max_defect {
                break;
            }
        }
        if sq < max_defect * max_defect {
            let end: Vec<f64> = frequencies.iter().map(|w| w * t).collect();
            return Some((t, chart.distance(&end, &origin)));
        }
    }
    None
}

impl RecurrentSet for TorusLattice {
    fn nearest(&self, chart: &BoxChart, y: &[f64], radius: f64) -> Option<(Point, f64)> {
        let (r, _) = chart.reduce(y);
        let res = self.resolution as f64;
        let coords: Vec<f64> = r
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let l = chart.period(i);
                let cell = ((v - chart.lo[i]) / l * res - 0.5).round().rem_euclid(res);
                chart.lo[i] + (cell + 0.5) / res * l
            })
            .collect();
        (chart.distance(&coords, y) < radius).then(|| (Point { coords, chart_id: 0 }, self.return_time))
    }
}

/// Builds a chain from `p` to `q` (Proposition 2): flow `p` for the lead
/// time, walk a straight path to `q` in steps below `ε/4`, snap each
/// interior path point to a recurrent point within `ε/4`, and hop between
/// consecutive snapped points using their return times. With return
/// defects below `ε/8` each hop misses by less than `ε/8 + 3ε/4 < ε`.
pub fn build_chain_via_recurrence(
    field: &VectorFieldSpec,
    p: &Point,
    q: &Point,
    eps: f64,
    t_min: f64,
    recurrent: &dyn RecurrentSet,
    lead: Option<f64>,
    cfg: &IntegratorConfig,
) -> Result<EpsTChain> {
    if !(eps > 0.0) || !(t_min > 0.0) {
        return Err(Error::InvalidParameter("need eps > 0 and t > 0".into()));
    }
    let chart = &field.chart;
    let lead = lead.unwrap_or(t_min);
    if lead < t_min {
        return Err(Error::InvalidParameter("lead time must be at least t".into()));
    }
    let y0 = flow(field, &p.coords, lead, cfg)?;
    let disp = chart.displacement(&y0, &q.coords);
    let len = crate::geometry::norm(&disp);
    let steps = (len / (eps / 4.0)).floor() as usize + 1;
    let mut points = vec![p.clone()];
    let mut hop_times = vec![lead];
    for i in 1..steps {
        let s = i as f64 / steps as f64;
        let y: Vec<f64> = y0.iter().zip(&disp).map(|(a, d)| a + s * d).collect();
        let y = chart.reduce(&y).0;
        let (x, t) = recurrent
            .nearest(chart, &y, eps / 4.0)
            .ok_or(Error::DensityFailure { location: y.clone(), radius: eps / 4.0 })?;
        if t < t_min {
            return Err(Error::InvalidInput(format!("recurrent point return time {t} is below t = {t_min}")));
        }
        points.push(x);
        hop_times.push(t);
    }
    points.push(q.clone());
    let chain = EpsTChain::new(points, hop_times, eps, t_min);
    Ok(verify_chain(field, &chain, cfg)?.chain)
}

/// Turns a verified chain `[x₀ = b, …, x_m]` of the reversed flow `ψ` into
/// a chain of the forward flow ending at `b`:
/// `[a, ψ_{t_{m−1}}(x_{m−1}), …, ψ_{t₀}(x₀), b]` with hop times
/// `[T, t_{m−1}, …, t₀]` when `origin = Some((a, T))` and `x_m = φ_T(a)`;
/// without an origin the chain starts at `ψ_{t_{m−1}}(x_{m−1})`.
/// `field` is the forward field.
pub fn reverse_chain(
    field: &VectorFieldSpec,
    chain: &EpsTChain,
    origin: Option<(Point, f64)>,
    cfg: &IntegratorConfig,
) -> Result<EpsTChain> {
    if chain.pass != Some(true) {
        return Err(Error::RequiresVerifiedInput);
    }
    let m = chain.hop_times.len();
    let rev = field.reversed();
    let images = crate::par::map_range(m, |j| -> Result<Point> {
        let y = flow(&rev, &chain.points[j].coords, chain.hop_times[j], cfg)
            .map_err(|e| Error::Hop { hop: j, source: Box::new(e) })?;
        Ok(Point { coords: field.chart.reduce(&y).0, chart_id: chain.points[j].chart_id })
    });
    let images = images.into_iter().collect::<Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(m + 2);
    let mut hop_times = Vec::with_capacity(m + 1);
    if let Some((a, t)) = origin {
        points.push(a);
        hop_times.push(t);
    }
    for j in (0..m).rev() {
        points.push(images[j].clone());
        hop_times.push(chain.hop_times[j]);
    }
    points.push(chain.points[0].clone());
    Ok(EpsTChain::new(points, hop_times, chain.eps, chain.t_min))
}

/// Uniform-cell index over chart coordinates for `ε`-neighbor queries.
struct CellIndex {
    cell: f64,
    counts: Vec<i64>,
    periodic: Vec<bool>,
    lo: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl CellIndex {
    fn new(chart: &BoxChart, points: &[Vec<f64>], cell: f64) -> Self {
        let n = chart.dim();
        let counts = (0..n).map(|i| (chart.period(i) / cell).ceil().max(1.0) as i64).collect();
        let mut idx = CellIndex { cell, counts, periodic: chart.periodic.clone(), lo: chart.lo.clone(), cells: HashMap::new() };
        for (k, p) in points.iter().enumerate() {
            let key = idx.key(p);
            idx.cells.entry(key).or_default().push(k);
        }
        idx
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                let c = ((v - self.lo[i]) / self.cell).floor() as i64;
                if self.periodic[i] {
                    c.rem_euclid(self.counts[i])
                } else {
                    c
                }
            })
            .collect()
    }

    fn candidates(&self, x: &[f64], out: &mut Vec<usize>) {
        out.clear();
        let base = self.key(x);
        let n = base.len();
        let total = 3usize.pow(n as u32);
        let mut seen: Vec<Vec<i64>> = Vec::new();
        for code in 0..total {
            let mut c = code;
            let key: Vec<i64> = (0..n)
                .map(|i| {
                    let off = (c % 3) as i64 - 1;
                    c /= 3;
                    let v = base[i] + off;
                    if self.periodic[i] {
                        v.rem_euclid(self.counts[i])
                    } else {
                        v
                    }
                })
                .collect();
            if seen.contains(&key) {
                continue;
            }
            if let Some(members) = self.cells.get(&key) {
                out.extend(members);
            }
            seen.push(key);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitivityConfig {
    pub eps: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub max_samples: usize,
    /// Sampling stride; defaults to `ε/(2·speed)`, widened if needed to
    /// respect `max_samples`.
    pub stride: Option<f64>,
}

impl TransitivityConfig {
    pub fn new(eps: f64, t_min: f64, t_max: f64) -> Self {
        TransitivityConfig { eps, t_min, t_max, max_samples: 10_000, stride: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub nodes: usize,
    pub edges: usize,
    pub components: Vec<Component>,
    /// Indices into `components` with no incoming (resp. outgoing) edges in
    /// the condensation.
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
    pub strongly_connected: bool,
    /// Nodes whose orbit left the chart (edges use the samples before).
    pub flagged: Vec<usize>,
}

/// Directed graph with `i → j` iff some sampled `X_t(x_i)`, `t ∈ [t_min,
/// t_max]`, lies within `ε` of `x_j`; reports its strongly connected
/// components and the condensation's sources and sinks.
pub fn chain_transitivity_test(
    field: &VectorFieldSpec,
    cloud: &[Point],
    tc: &TransitivityConfig,
    cfg: &IntegratorConfig,
) -> Result<TransitivityReport> {
    if cloud.is_empty() || !(tc.t_max > tc.t_min) || !(tc.eps > 0.0) || tc.t_min < 0.0 {
        return Err(Error::InvalidParameter("need a nonempty cloud, eps > 0 and 0 <= t_min < t_max".into()));
    }
    let chart = &field.chart;
    let n = cloud.len();
    let span = tc.t_max - tc.t_min;
    let mut stride = tc.stride.unwrap_or(tc.eps / (2.0 * field.speed_bound().max(1e-12)));
    if span / stride + 1.0 > tc.max_samples as f64 {
        stride = span / (tc.max_samples.max(2) - 1) as f64;
    }
    let samples = (span / stride + 1e-9).floor() as usize + 1;
    let reduced: Vec<Vec<f64>> = cloud.iter().map(|p| chart.reduce(&p.coords).0).collect();
    let index = chart.gluing.is_none().then(|| CellIndex::new(chart, &reduced, tc.eps));
    let rows = crate::par::map_range(n, |i| -> Result<(Vec<usize>, bool)> {
        let orbit = integrate_partial(field, &cloud[i], tc.t_max, cfg)?;
        let limit = orbit.escaped_at.unwrap_or(f64::INFINITY);
        let mut hit = vec![false; n];
        let mut cand = Vec::new();
        for k in 0..samples {
            let t = tc.t_min + k as f64 * stride;
            if t > limit {
                break;
            }
            let x = chart.reduce(&orbit.at(t)).0;
            match &index {
                Some(ix) => ix.candidates(&x, &mut cand),
                None => {
                    cand.clear();
                    cand.extend(0..n);
                }
            }
            for &j in &cand {
                if !hit[j] && chart.distance(&x, &reduced[j]) < tc.eps {
                    hit[j] = true;
                }
            }
        }
        Ok(((0..n).filter(|j| hit[*j]).collect(), orbit.escaped_at.is_some()))
    });
    let mut graph = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    let mut flagged = Vec::new();
    let mut edges = 0;
    for (i, row) in rows.into_iter().enumerate() {
        let (targets, escaped) = row?;
        if escaped {
            flagged.push(i);
        }
        for j in targets {
            graph.add_edge(nodes[i], nodes[j], ());
            edges += 1;
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut m: Vec<usize> = c.into_iter().map(|ix| graph[ix]).collect();
            m.sort_unstable();
            m
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    let mut comp_of = vec![0usize; n];
    for (ci, c) in comps.iter().enumerate() {
        for &m in c {
            comp_of[m] = ci;
        }
    }
    let cond = condensation(graph.clone(), true);
    // Map condensation nodes back to our sorted component order.
    let order: Vec<usize> = cond.node_indices().map(|ix| comp_of[cond[ix][0]]).collect();
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for (k, ix) in cond.node_indices().enumerate() {
        let ci = order[k];
        if cond.neighbors_directed(ix, Direction::Incoming).next().is_none() {
            sources.push(ci);
        }
        if cond.neighbors_directed(ix, Direction::Outgoing).next().is_none() {
            sinks.push(ci);
        }
    }
    sources.sort_unstable();
    sinks.sort_unstable();
    Ok(TransitivityReport {
        nodes: n,
        edges,
        strongly_connected: comps.len() == 1,
        components: comps.into_iter().map(|members| Component { members }).collect(),
        sources,
        sinks,
        flagged,
    })
}

/// Points along the heteroclinic segment of the saddle-pair demo: both
/// singularities plus the orbit of `x₁ = ½` at times `k/4`, `|k| ≤ 8`.
pub fn saddle_pair_cloud(dim: usize) -> Vec<Point> {
    let mut out = Vec::new();
    let mut push = |x1: f64| {
        let mut c = vec![0.0; dim];
        c[0] = x1;
        out.push(Point { coords: c, chart_id: 0 });
    };
    push(0.0);
    for k in -8..=8 {
        let s = k as f64 * 0.25;
        push(2.0 / std::f64::consts::PI * (std::f64::consts::PI * s).exp().atan());
    }
    push(1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> VectorFieldSpec {
        VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap()
    }

    #[test]
    fn exact_orbit_hop_verifies() {
        let f = torus();
        let cfg = IntegratorConfig::default();
        let p = Point::new(vec![0.1, 0.2, 0.3]).unwrap();
        let end = flow(&f, &p.coords, 1.5, &cfg).unwrap();
        let chain = EpsTChain::new(vec![p, Point::new(f.chart.reduce(&end).0).unwrap()], vec![1.5], 1e-6, 1.0);
        let v = verify_chain(&f, &chain, &cfg).unwrap();
        assert!(v.pass && v.chain.defect.unwrap() < 1e-9);
        let short = EpsTChain { hop_times: vec![0.5], ..chain };
        let v = verify_chain(&f, &short, &cfg).unwrap();
        assert!(!v.pass && v.time_violations == vec![0]);
    }

    #[test]
    fn lattice_return_time_is_accurate() {
        let f = torus();
        let lat = TorusLattice::for_linear_torus(&f, 80, 1.0, 0.05 / 8.0).unwrap();
        assert!(lat.return_time > 1.0 && lat.return_defect < 0.05 / 8.0);
        let y = [0.333, 0.5, 0.901];
        let (x, _) = lat.nearest(&f.chart, &y, 0.0125).unwrap();
        assert!(f.chart.distance(&x.coords, &y) < 0.0125);
    }

    #[test]
    fn built_chain_verifies_and_reverses() {
        let f = torus();
        let cfg = IntegratorConfig::default();
        let lat = TorusLattice::for_linear_torus(&f, 80, 1.0, 0.05 / 8.0).unwrap();
        let p = Point::new(vec![0.1, 0.8, 0.4]).unwrap();
        let q = Point::new(vec![0.6, 0.2, 0.9]).unwrap();
        let c = build_chain_via_recurrence(&f, &p, &q, 0.05, 1.0, &lat, None, &cfg).unwrap();
        assert_eq!(c.pass, Some(true));
        assert_eq!(c.first(), &p);
        assert_eq!(c.last(), &q);

        let rev = f.reversed();
        let back = build_chain_via_recurrence(&rev, &q, &p, 0.05, 1.0, &lat, None, &cfg).unwrap();
        assert_eq!(back.pass, Some(true));
        let fwd = reverse_chain(&f, &back, None, &cfg).unwrap();
        let v = verify_chain(&f, &fwd, &cfg).unwrap();
        assert!(v.pass);
        assert_eq!(fwd.last(), &q);
    }

    #[test]
    fn unverified_input_is_rejected() {
        let f = torus();
        let p = Point::new(vec![0.1, 0.2, 0.3]).unwrap();
        let chain = EpsTChain::new(vec![p.clone(), p], vec![1.0], 0.1, 1.0);
        assert!(matches!(reverse_chain(&f, &chain, None, &IntegratorConfig::default()), Err(Error::RequiresVerifiedInput)));
    }

    #[test]
    fn saddle_pair_has_no_recurrent_points_to_snap_to() {
        let f = VectorFieldSpec::saddle_pair_demo();
        let list = RecurrentList {
            entries: vec![(Point::new(vec![0.0; 3]).unwrap(), 1e9), (Point::new(vec![1.0, 0.0, 0.0]).unwrap(), 1e9)],
        };
        let p = Point::new(vec![0.98, 0.0, 0.0]).unwrap();
        let q = Point::new(vec![0.02, 0.0, 0.0]).unwrap();
        let r = build_chain_via_recurrence(&f, &p, &q, 0.01, 1.0, &list, None, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::DensityFailure { .. })));
    }

    #[test]
    fn saddle_pair_cloud_is_not_transitive() {
        let f = VectorFieldSpec::saddle_pair_demo();
        let cloud = saddle_pair_cloud(3);
        let r = chain_transitivity_test(&f, &cloud, &TransitivityConfig::new(0.01, 0.5, 60.0), &IntegratorConfig::default()).unwrap();
        assert!(!r.strongly_connected);
        assert_eq!(r.sources.len(), 1);
        assert_eq!(r.sinks.len(), 1);
        assert!(r.components[r.sources[0]].members.contains(&0));
        assert!(r.components[r.sinks[0]].members.contains(&(cloud.len() - 1)));
    }

    #[test]
    fn periodic_orbit_cloud_is_transitive() {
        let f = VectorFieldSpec::catalog("rotation", 3).unwrap();
        let cloud: Vec<Point> = (0..50)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 50.0;
                Point::new(vec![a.cos(), a.sin(), 0.0]).unwrap()
            })
            .collect();
        let r = chain_transitivity_test(&f, &cloud, &TransitivityConfig::new(0.05, 1.0, 60.0), &IntegratorConfig::default()).unwrap();
        assert!(r.strongly_connected);
    }
}
