use proptest::prelude::*;

use vpflow::dynamics::IntegratorConfig;
use vpflow::flowbox::{build_graph_translation, build_xi, DensityField, DensityKind, GraphFunction};
use vpflow::poincare::{
    detect_recurrence, first_return, fundamental_domain_sample, grow_invariant_manifold, linearized_return,
    CriticalElement, SectionSpec, Side,
};
use vpflow::{Point, VectorFieldSpec};

fn z_section(f: &VectorFieldSpec) -> SectionSpec {
    SectionSpec::new(f, Point::new(vec![0.5, 0.5, 0.0]).unwrap(), vec![0.0, 0.0, 1.0], 2.0, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn xi_fixes_every_coordinate_but_one(z in prop::collection::vec(-0.9f64..0.9, 4)) {
        let xi = build_xi(&DensityField::new(4, DensityKind::SinCos { amp: 0.25 })).unwrap();
        let w = xi.eval(&z);
        prop_assert_eq!(w[0].to_bits(), z[0].to_bits());
        prop_assert_eq!(w[1].to_bits(), z[1].to_bits());
        prop_assert_eq!(w[3].to_bits(), z[3].to_bits());
    }

    #[test]
    fn xi_commutes_with_the_vertical_flow(z in prop::collection::vec(-0.9f64..0.9, 3)) {
        let xi = build_xi(&DensityField::new(3, DensityKind::Quadratic)).unwrap();
        let e = 1e-4;
        let a = xi.eval(&z);
        let mut up = z.clone();
        up[2] += e;
        let b = xi.eval(&up);
        let drift = (b[0] - a[0]).abs() + (b[1] - a[1]).abs() + (b[2] - a[2] - e).abs();
        prop_assert!(drift <= 1e-9);
    }

    #[test]
    fn xi_jacobian_is_the_density(z in prop::collection::vec(-0.9f64..0.9, 3)) {
        let psi = DensityField::new(3, DensityKind::SinCos { amp: 0.25 });
        let xi = build_xi(&psi).unwrap();
        let e = 1e-5;
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let (mut p, mut m) = (z.clone(), z.clone());
            p[j] += e;
            m[j] -= e;
            let (a, b) = (xi.eval(&p), xi.eval(&m));
            for i in 0..3 {
                jac[i][j] = (a[i] - b[i]) / (2.0 * e);
            }
        }
        let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
            - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
            + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
        prop_assert!((det - psi.slice(&z)).abs() <= 1e-8, "{} vs {}", det, psi.slice(&z));
    }

    #[test]
    fn graph_translation_inverts(amp in -0.5f64..0.5, y in prop::collection::vec(-2.0f64..2.0, 4)) {
        let g = build_graph_translation(GraphFunction::SinSum { amp });
        let back = g.inverse().eval(&g.eval(&y));
        for (a, b) in back.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn catmap_return_is_the_cat_map(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let f = VectorFieldSpec::catmap_suspension();
        let r = first_return(&f, &z_section(&f), &Point::new(vec![x, y, 0.0]).unwrap(), 3.0, &IntegratorConfig::default())
            .unwrap()
            .unwrap();
        let want = [(2.0 * x + y).rem_euclid(1.0), (x + y).rem_euclid(1.0), 0.0];
        prop_assert!((r.return_time - 1.0).abs() <= 1e-9);
        prop_assert!(f.chart.distance(&r.exit.coords, &want) <= 1e-9);
    }

    #[test]
    fn reverse_return_recovers_the_entry(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let f = VectorFieldSpec::catmap_suspension();
        let s = z_section(&f);
        let cfg = IntegratorConfig::default();
        let p = Point::new(vec![x, y, 0.0]).unwrap();
        let r = first_return(&f, &s, &p, 3.0, &cfg).unwrap().unwrap();
        let back = first_return(&f.reversed(), &s.flipped(), &r.exit, 3.0, &cfg).unwrap().unwrap();
        prop_assert!(f.chart.distance(&back.exit.coords, &p.coords) <= 1e-7);
    }

    #[test]
    fn recurrence_is_monotone_in_eps(z in prop::collection::vec(0.0f64..1.0, 3), eps in 0.05f64..0.15) {
        let f = VectorFieldSpec::linear_torus(vec![1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
        let p = Point::new(z).unwrap();
        let cfg = IntegratorConfig::default();
        let small = detect_recurrence(&f, &p, eps, 3.0, 3000.0, &cfg).unwrap();
        let large = detect_recurrence(&f, &p, 1.5 * eps, 3.0, 3000.0, &cfg).unwrap();
        if let Some(s) = small {
            let l = large.expect("a hit at eps implies a hit at larger eps");
            // Same excursion at both radii: the closest-approach time is only
            // located to the precision of a flat minimum.
            prop_assert!(l.t <= s.t + 1e-6);
        }
    }
}

#[test]
fn catmap_return_map_preserves_area() {
    let f = VectorFieldSpec::catmap_suspension();
    let s = SectionSpec::new(&f, Point::new(vec![0.0; 3]).unwrap(), vec![0.0, 0.0, 1.0], 0.9, 1).unwrap();
    let lr = linearized_return(&f, &s, &Point::new(vec![0.0; 3]).unwrap(), 1.5, &IntegratorConfig::default()).unwrap();
    assert!((lr.determinant.abs() - 1.0).abs() <= 1e-6);
    assert!(lr.hyperbolic);
}

#[test]
fn saddle_domain_never_revisits_itself() {
    let f = VectorFieldSpec::catalog("saddle", 3).unwrap();
    let cfg = IntegratorConfig::default();
    let e = CriticalElement::singularity(&f, Point::new(vec![0.0; 3]).unwrap()).unwrap();
    let dom = fundamental_domain_sample(&f, &e, Side::Unstable, 12, false, 0.1, &cfg).unwrap();
    let radius = |x: &[f64]| (x[0] * x[0] + x[1] * x[1]).sqrt();
    // Forward orbits move away from the sphere of radius 0.1 in the unstable
    // plane, backward orbits toward the saddle.
    let fwd = grow_invariant_manifold(&f, &dom, 2.0, 0.05, &cfg).unwrap();
    let mut back_dom = dom.clone();
    back_dom.side = Side::Stable;
    let back = grow_invariant_manifold(&f, &back_dom, 2.0, 0.05, &cfg).unwrap();
    for cloud in [&fwd, &back] {
        let mut offset = 0;
        for &n in &cloud.samples_per_point {
            for (k, x) in cloud.points[offset..offset + n].iter().enumerate() {
                if k > 0 {
                    assert!((radius(x) - 0.1).abs() > 1e-3, "revisit at sample {k}: {x:?}");
                }
            }
            offset += n;
        }
    }
}
