use proptest::prelude::*;

use vpflow::dynamics::{integrate, IntegratorConfig};
use vpflow::returnlemma::{extend_return_time, verify_return_lemma, ReturnScenario};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn extension_keeps_every_guarantee(seed in 0u64..1000, target in 6.0f64..14.0) {
        let s = ReturnScenario::standard(3).with_seed(seed);
        let out = extend_return_time(&s, target, 8).unwrap();
        prop_assert!(out.success);
        prop_assert!(out.final_return_time().unwrap() > target);

        // Increments and containment of every patch in W.
        for step in &out.trail {
            prop_assert!(step.increment >= 2.0 - 1e-6);
        }
        for patch in &out.field.patches {
            let r = &patch.ring;
            for k in 0..64 {
                let a = std::f64::consts::TAU * k as f64 / 64.0;
                for z in [0.0, r.h] {
                    let x: Vec<f64> = (0..3)
                        .map(|i| r.center[i] + r.outer_radius() * (a.cos() * r.plane[0][i] + a.sin() * r.plane[1][i]) + z * r.axis[i])
                        .collect();
                    prop_assert!(s.in_w(&x), "ring point {:?} leaves W", x);
                }
            }
        }

        // Pairwise disjoint rings.
        let rings: Vec<_> = out.field.patches.iter().map(|p| &p.ring).collect();
        for i in 0..rings.len() {
            for j in i + 1..rings.len() {
                prop_assert!(rings[i].disjoint_from(rings[j]));
            }
        }

        let base = s.base_field().unwrap();
        let report = verify_return_lemma(&out.field, &base, &s, target).unwrap();
        prop_assert!(report.pass, "{:?}", report);
    }

    #[test]
    fn trails_are_reproducible(seed in 0u64..1000) {
        let s = ReturnScenario::standard(3).with_seed(seed);
        let a = extend_return_time(&s, 10.0, 5).unwrap();
        let b = extend_return_time(&s, 10.0, 5).unwrap();
        prop_assert_eq!(a.trail_json().to_string(), b.trail_json().to_string());
    }
}

#[test]
fn backward_orbits_of_p_are_untouched() {
    let s = ReturnScenario::standard(4).with_seed(3);
    let out = extend_return_time(&s, 10.0, 5).unwrap();
    let base = s.base_field().unwrap();
    let cfg = IntegratorConfig::adaptive(1e-12);
    let t = out.final_return_time().unwrap();
    let a = integrate(&out.field.reversed(), &s.p(), t, &cfg).unwrap();
    let b = integrate(&base.reversed(), &s.p(), t, &cfg).unwrap();
    for k in 0..=400 {
        let tk = t * k as f64 / 400.0;
        assert!(base.chart.distance(&a.at(tk), &b.at(tk)) <= 1e-8);
    }
    assert!(t > 10.0);
}

