//! End-to-end acceptance suite: one PASS/FAIL line per criterion, nonzero
//! exit when any criterion fails.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpflow::chains::{
    build_chain_via_recurrence, chain_transitivity_test, reverse_chain, saddle_pair_cloud, verify_chain, TorusLattice,
    TransitivityConfig,
};
use vpflow::dynamics::{liouville_check, IntegratorConfig};
use vpflow::flowbox::{verify_flowbox, DensityField, DensityKind, FlowBoxChart, GraphFunction};
use vpflow::perturb::{
    build_perturbation, closed_form_flow, cr_norm_estimate, verify_deviation, DeviationEndpoints, PerturbationSpec,
    SampleGrid,
};
use vpflow::poincare::{
    check_genericity_conditions, fundamental_domain_sample, linearized_return, CriticalElement, FundamentalDomainSample,
    SectionSpec, Side,
};
use vpflow::returnlemma::{extend_return_time, verify_return_lemma, ReturnScenario};
use vpflow::{Error, Point, VectorFieldSpec};

type Verdict = Result<String, String>;

const DELTA: f64 = 0.25;
const H: f64 = 0.5;
const XI: f64 = 0.1;
const THETA: f64 = 0.2;

fn spec(dim: usize, theta: f64) -> PerturbationSpec {
    PerturbationSpec::canonical(dim, DELTA, H, XI, theta).unwrap()
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Closed ring around the last axis through the origin, tested directly
/// from the coordinates.
fn in_closed_ring(x: &[f64]) -> bool {
    let n = x.len();
    let r = x[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
    r >= DELTA - XI && r <= DELTA + XI && x[n - 1] >= 0.0 && x[n - 1] <= H
}

fn support_exactness() -> Verdict {
    let mut worst: f64 = 0.0;
    for dim in 3..=5 {
        let z = build_perturbation(&spec(dim, THETA)).unwrap();
        let x = VectorFieldSpec::constant_vertical(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
        let mut count = 0;
        while count < 100_000 {
            let mut p: Vec<f64> = (0..dim - 1).map(|_| rng.gen_range(-0.6..0.6)).collect();
            p.push(rng.gen_range(-0.3..0.8));
            if in_closed_ring(&p) {
                continue;
            }
            count += 1;
            let d = z.eval(&p).iter().zip(x.eval(&p)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    check(worst == 0.0, format!("max |Z-X| outside the ring over 3x10^5 points = {worst:e}"))
}

fn divergence_free() -> Verdict {
    let z = build_perturbation(&spec(3, THETA)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = 1e-5;
    let (mut analytic, mut fd) = (0.0f64, 0.0f64);
    for i in 0..10_000 {
        // Alternate between the ring and its neighbourhood.
        let r = if i % 2 == 0 { rng.gen_range(DELTA - XI..DELTA + XI) } else { rng.gen_range(0.0..0.5) };
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let p = [r * phi.cos(), r * phi.sin(), rng.gen_range(-0.1..0.6)];
        analytic = analytic.max(z.divergence(&p).abs());
        let mut div = 0.0;
        for k in 0..3 {
            let (mut a, mut b) = (p, p);
            a[k] += e;
            b[k] -= e;
            div += (z.eval(&a)[k] - z.eval(&b)[k]) / (2.0 * e);
        }
        fd = fd.max(div.abs());
    }
    check(analytic <= 1e-9 && fd <= 1e-5, format!("analytic {analytic:e}, finite difference {fd:e}"))
}

fn deviation() -> Verdict {
    let s3 = spec(3, THETA);
    let ends = DeviationEndpoints::for_spec(&s3);
    let got = closed_form_flow(&s3, &ends.p, H);
    let want = [DELTA * THETA.cos(), DELTA * THETA.sin(), H];
    let closed = got.coords.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let r3 = verify_deviation(&s3, &ends, 1e-6).unwrap();
    let s5 = spec(5, THETA);
    let r5 = verify_deviation(&s5, &DeviationEndpoints::for_spec(&s5), 1e-6).unwrap();
    check(
        closed <= 1e-12 && r3.numeric_distance <= 1e-6 && r5.pass && r5.plane_defect <= 1e-9,
        format!(
            "closed form {closed:e}, numeric {:e}, dim 5 numeric {:e}, invariant plane drift {:e}",
            r3.numeric_distance, r5.numeric_distance, r5.plane_defect
        ),
    )
}

fn cr_smallness() -> Verdict {
    let x = VectorFieldSpec::constant_vertical(3);
    let grid = SampleGrid::around_ring(&spec(3, THETA).ring, 14);
    let thetas = [0.2, 0.1, 0.05, 0.025];
    let norms: Vec<[f64; 3]> = thetas
        .iter()
        .map(|t| {
            let z = build_perturbation(&spec(3, *t)).unwrap();
            [0, 1, 2].map(|r| cr_norm_estimate(&z, &x, r, &grid).unwrap())
        })
        .collect();
    let decreasing = norms.windows(2).all(|w| (0..3).all(|r| w[1][r] < w[0][r]));
    let slope0 = norms[0][0] / thetas[0];
    let linear = norms.iter().zip(thetas).all(|(n, t)| (n[0] / t / slope0 - 1.0).abs() <= 0.01);
    check(decreasing && linear, format!("C^0,C^1,C^2 at theta=0.2: {:?}; at 0.025: {:?}", norms[0], norms[3]))
}

fn liouville() -> Verdict {
    let z = build_perturbation(&spec(3, THETA)).unwrap();
    let cfg = IntegratorConfig::adaptive(1e-11);
    let mut worst: f64 = 0.0;
    for (r, phi) in [(0.2, 0.3), (0.25, 1.9), (0.3, 4.0), (0.17, 5.5)] {
        let p = Point::new(vec![r * f64::cos(phi), r * f64::sin(phi), -0.2]).unwrap();
        let rep = liouville_check(&z, &p, 2.0 * H, &cfg).unwrap();
        worst = worst.max((rep.det_jacobian - 1.0).abs());
    }
    let div1 = VectorFieldSpec::catalog("div-test", 3).unwrap();
    let rep = liouville_check(&div1, &Point::new(vec![0.1, 0.2, 0.3]).unwrap(), 0.5, &cfg).unwrap();
    let expanding = (rep.det_jacobian - 0.5f64.exp()).abs();
    check(worst <= 1e-5 && expanding <= 1e-4, format!("|det-1| = {worst:e}; div-1 field |det-e^T| = {expanding:e}"))
}

fn flow_box() -> Verdict {
    let psi = DensityField::new(3, DensityKind::SinCos { amp: 0.25 });
    let chart = FlowBoxChart::new(&psi, GraphFunction::Paraboloid { a: 0.2 }).unwrap();
    let r = verify_flowbox(&chart, &VectorFieldSpec::constant_vertical(3), &psi, 2000, 1e-6, 1).unwrap();
    let exp = FlowBoxChart::new(&DensityField::new(3, DensityKind::ExpLast), GraphFunction::Constant { value: 0.0 });
    let rejected = matches!(exp, Err(Error::InvalidDensity(_)));
    check(
        r.pass && r.pushforward_defect <= 1e-6 && r.volume_rel_error <= 1e-3 && rejected,
        format!(
            "pushforward {:e}, volume rel. error {:e}, exp(z_n) rejected: {rejected}",
            r.pushforward_defect, r.volume_rel_error
        ),
    )
}

fn hyperbolicity() -> Verdict {
    let f = VectorFieldSpec::catmap_suspension();
    let s = SectionSpec::new(&f, Point::new(vec![0.0; 3]).unwrap(), vec![0.0, 0.0, 1.0], 0.9, 1).unwrap();
    let lr = linearized_return(&f, &s, &Point::new(vec![0.0; 3]).unwrap(), 1.5, &IntegratorConfig::default()).unwrap();
    let root5 = 5f64.sqrt();
    let want = [(3.0 + root5) / 2.0, (3.0 - root5) / 2.0];
    let err = lr.eigenvalues.iter().zip(want).map(|(e, w)| (e[0] - w).hypot(e[1])).fold(0.0, f64::max);
    let product: f64 = lr.moduli.iter().product();
    check(
        err <= 1e-6 && (product - 1.0).abs() <= 1e-6,
        format!("eigenvalue error {err:e}, modulus product {product}"),
    )
}

fn chains() -> Verdict {
    let f = VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
    let rev = f.reversed();
    let cfg = IntegratorConfig::default();
    let (eps, t) = (0.05, 1.0);
    let lattice = TorusLattice::for_linear_torus(&f, 80, t, eps / 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = Point::new((0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let q = Point::new((0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let Ok(c) = build_chain_via_recurrence(&f, &p, &q, eps, t, &lattice, None, &cfg) else { continue };
        let v = verify_chain(&f, &c, &cfg).unwrap();
        let Ok(back) = build_chain_via_recurrence(&rev, &q, &p, eps, t, &lattice, None, &cfg) else { continue };
        let Ok(fwd) = reverse_chain(&f, &back, None, &cfg) else { continue };
        let vr = verify_chain(&f, &fwd, &cfg).unwrap();
        worst = worst.max(v.hop_defects.iter().chain(&vr.hop_defects).cloned().fold(0.0, f64::max));
        if v.pass && vr.pass && fwd.last() == &q {
            ok += 1;
        }
    }
    check(ok == 20, format!("{ok}/20 pairs built, verified and reversed; worst hop defect {worst:.4}"))
}

fn non_transitive() -> Verdict {
    let f = VectorFieldSpec::saddle_pair_demo();
    let cloud = saddle_pair_cloud(3);
    let r = chain_transitivity_test(&f, &cloud, &TransitivityConfig::new(0.01, 0.5, 60.0), &IntegratorConfig::default())
        .unwrap();
    check(
        !r.strongly_connected && r.sources.len() == 1 && r.sinks.len() == 1,
        format!(
            "{} components, {} source, {} sink, strongly connected: {}",
            r.components.len(),
            r.sources.len(),
            r.sinks.len(),
            r.strongly_connected
        ),
    )
}

fn return_lemma() -> Verdict {
    let s = ReturnScenario::standard(3);
    let out = extend_return_time(&s, 10.0, 5).unwrap();
    let report = verify_return_lemma(&out.field, &s.base_field().unwrap(), &s, 10.0).unwrap();
    let t = out.final_return_time().unwrap_or(0.0);
    let min_inc = out.trail.iter().map(|a| a.increment).fold(f64::INFINITY, f64::min);
    check(
        out.success && t > 10.0 && out.trail.len() <= 5 && min_inc >= 2.0 - 1e-6 && report.pass,
        format!(
            "return time {t:.6} after {} patches, smallest increment {min_inc:.6}, items 1a/1b/2/3: {}/{}/{}/{}",
            out.trail.len(),
            report.item_1a,
            report.item_1b,
            report.item_2,
            report.item_3
        ),
    )
}

fn genericity() -> Verdict {
    let cfg = IntegratorConfig::default();
    let torus = VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
    let seg = FundamentalDomainSample::segment(vec![0.1, 0.3, 0.3], vec![0.9, 0.3, 0.3], 41, false).unwrap();
    let good = check_genericity_conditions(&torus, 5, 3, &seg, 200.0, &cfg).unwrap();
    let saddle = VectorFieldSpec::catalog("saddle", 3).unwrap();
    let e = CriticalElement::singularity(&saddle, Point::new(vec![0.0; 3]).unwrap()).unwrap();
    let dom = fundamental_domain_sample(&saddle, &e, Side::Unstable, 8, false, 0.1, &cfg).unwrap();
    let bad = check_genericity_conditions(&saddle, 5, 3, &dom, 50.0, &cfg).unwrap();
    check(
        good.pass_a1 && good.pass_a2 && !bad.pass_a2,
        format!("torus A1/A2: {}/{}; wandering saddle A2: {}", good.pass_a1, good.pass_a2, bad.pass_a2),
    )
}

fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("vpflow-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let verbs: [&[&str]; 6] = [
        &["verify-perturb"],
        &["flowbox"],
        &["chain"],
        &["return-demo"],
        &["genericity"],
        &["manifold"],
    ];
    let mut same = 0;
    for (i, args) in verbs.iter().enumerate() {
        let run = |tag: &str| -> Vec<u8> {
            let out = dir.join(format!("{i}-{tag}.json"));
            Command::new(env!("CARGO_BIN_EXE_vpflow")).args(*args).args(["--seed", "5", "--out"]).arg(&out).output().unwrap();
            std::fs::read(&out).unwrap_or_default()
        };
        let (a, b) = (run("a"), run("b"));
        if !a.is_empty() && a == b {
            same += 1;
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    check(same == verbs.len(), format!("{same}/{} verbs produced byte-identical reports", verbs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("perturbation support exactness", support_exactness),
        ("divergence-freeness", divergence_free),
        ("deviation and invariant plane", deviation),
        ("C^r smallness", cr_smallness),
        ("Liouville", liouville),
        ("flow box", flow_box),
        ("hyperbolicity", hyperbolicity),
        ("chain construction", chains),
        ("non-transitive contrast", non_transitive),
        ("return lemma", return_lemma),
        ("genericity conditions", genericity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {:>2} {name}: {d} ({secs:.2}s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
