use collider_bias::closedform::{self, Sign};
use collider_bias::joint::{self, build_joint};
use collider_bias::signmap::{self, classify_effects, Pattern};
use collider_bias::structures::{
    BiasQuery, BinaryConditional, ColliderTable, Conditioning, Level, Scale, StructureKind,
    StructureParams, ValidatedParams,
};
use proptest::prelude::*;

fn prob() -> impl Strategy<Value = f64> {
    0.02f64..0.98
}

fn pair() -> impl Strategy<Value = BinaryConditional> {
    (prob(), prob()).prop_map(|(a, b)| BinaryConditional::new(a, b))
}

fn params() -> impl Strategy<Value = ValidatedParams> {
    (
        prop::sample::select(StructureKind::ALL.to_vec()),
        prob(),
        prob(),
        (prob(), prob(), prob(), prob()),
        pair(),
        pair(),
        pair(),
    )
        .prop_map(|(kind, l, r, (a, b, c, d), xa, yb, dc)| {
            StructureParams {
                kind,
                p_left: l,
                p_right: (kind != StructureKind::Nabla).then_some(r),
                p_c_given: ColliderTable::new(a, b, c, d),
                p_x_given_a: kind.has_left_a().then_some(xa),
                p_y_given_b: (kind.has_right_b() || kind == StructureKind::Nabla).then_some(yb),
                p_d_given_c: kind.has_child_d().then_some(dc),
            }
            .validate(true)
            .unwrap()
        })
}

fn close(a: f64, b: f64, scale: Scale) -> bool {
    if scale.is_ratio() {
        (a - b).abs() <= 1e-10 * a.abs().max(b.abs())
    } else {
        (a - b).abs() <= 1e-12
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn joint_is_a_distribution(p in params()) {
        let t = build_joint(&p);
        prop_assert!((t.total() - 1.0).abs() < 1e-14);
        prop_assert!(t.mass.iter().all(|&m| m >= 0.0));
        prop_assert_eq!(t.mass.len(), 1 << p.kind().variables().len());
    }

    #[test]
    fn compute_matches_oracle_on_every_query(p in params()) {
        let g = p.kind().conditioning_var();
        let mut queries = vec![BiasQuery::linear_model()];
        for level in Level::BOTH {
            for scale in [Scale::Cov, Scale::Rd, Scale::Rr, Scale::Or] {
                queries.push(BiasQuery::stratum(g, level, scale));
            }
        }
        for q in queries {
            let c = closedform::compute(&p, &q).unwrap();
            let o = closedform::oracle_report(&p, &q).unwrap();
            prop_assert!(close(c.value, o.value, q.scale), "{:?}: {} vs {}", q, c.value, o.value);
        }
    }

    #[test]
    fn stratum_sign_is_scale_free(p in params()) {
        prop_assume!(p.kind() != StructureKind::Nabla);
        let g = p.kind().conditioning_var();
        for level in Level::BOTH {
            let values: Vec<f64> = [Scale::Cov, Scale::Rd, Scale::Rr, Scale::Or]
                .iter()
                .map(|&s| closedform::oracle_report(&p, &BiasQuery::stratum(g, level, s)).unwrap().value)
                .collect();
            let centred = [values[0], values[1], values[2].ln(), values[3].ln()];
            if centred.iter().all(|v| v.abs() > 1e-12) {
                let s = Sign::of(centred[0], 0.0);
                prop_assert!(centred.iter().all(|&v| Sign::of(v, 0.0) == s), "{:?}", centred);
            }
        }
    }

    #[test]
    fn sign_rules_match_oracle(p in params()) {
        let g = p.kind().conditioning_var();
        let mut conds = vec![Conditioning::Stratum { var: g, level: Level::One },
                             Conditioning::Stratum { var: g, level: Level::Zero }];
        if p.kind() != StructureKind::Nabla {
            conds.push(Conditioning::LinearModel);
        }
        for cond in conds {
            let q = match cond {
                Conditioning::LinearModel => BiasQuery::linear_model(),
                Conditioning::Stratum { var, level } if p.kind() == StructureKind::Nabla => {
                    BiasQuery::stratum(var, level, Scale::Or)
                }
                Conditioning::Stratum { var, level } => BiasQuery::stratum(var, level, Scale::Cov),
            };
            let o = closedform::oracle_report(&p, &q).unwrap();
            let centred = if q.scale.is_ratio() { o.value - 1.0 } else { o.value };
            if centred.abs() > 1e-9 {
                prop_assert_eq!(signmap::sign_extended(&p, cond).unwrap(), o.sign);
            }
        }
    }

    #[test]
    fn triple_sums_are_symmetric(p in params()) {
        let t = build_joint(&p);
        for &f in &t.order {
            for &g in &t.order {
                let a = t.triple_product_sum(f, g).unwrap();
                let b = t.triple_product_sum(g, f).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_json_round_trip(p in params()) {
        let raw = p.raw().clone();
        let back = StructureParams::from_json(&raw.to_json()).unwrap();
        prop_assert_eq!(back, raw);
    }

    #[test]
    fn swapping_parents_mirrors_the_pattern(a in prob(), b in prob(), c in prob(), d in prob()) {
        let t = ColliderTable::new(a, b, c, d);
        let swapped = ColliderTable::new(a, c, b, d);
        let (e, s) = (classify_effects(&t), classify_effects(&swapped));
        let expected = match e.pattern {
            Pattern::QualitativeInX => Pattern::QualitativeInY,
            Pattern::QualitativeInY => Pattern::QualitativeInX,
            other => other,
        };
        prop_assert_eq!(s.pattern, expected);
        prop_assert_eq!(s.interaction, e.interaction);
    }

    #[test]
    fn sample_counts_sum_to_n(p in params(), seed in any::<u64>()) {
        let s = joint::sample(&p, 500, seed).unwrap();
        prop_assert_eq!(s.counts.iter().sum::<u64>(), 500);
    }
}
