use proptest::prelude::*;

use super::*;

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("b{i}")).collect()
}

fn coef(s: &str) -> Term {
    Term::Coef(s.into())
}

fn validated(text: &str, n: usize) -> ValidatedHypothesis {
    parse_hypothesis("H", text)
        .unwrap()
        .validate(&names(n))
        .unwrap()
}

#[test]
fn parses_hsb_h4_with_mentions() {
    let h = parse_hypothesis("H4", "b1 > b2, b3, b4, b5, b6, b7 < 0").unwrap();
    assert_eq!(h.constraints.len(), 2);
    assert_eq!(
        h.constraints[0],
        Constraint::new(coef("b1"), coef("b2")).unwrap()
    );
    assert_eq!(
        h.constraints[1],
        Constraint::new(Term::Const(0.0), coef("b7")).unwrap()
    );
    assert_eq!(h.mentions, ["b3", "b4", "b5", "b6"]);
}

#[test]
fn chains_split_into_adjacent_pairs() {
    let h = parse_hypothesis("H2", "b6 > b4 > b5").unwrap();
    let printed: Vec<String> = h.constraints.iter().map(ToString::to_string).collect();
    assert_eq!(printed, ["b6 > b4", "b4 > b5"]);

    let mixed = parse_hypothesis("H", "{b1 < b2 > -1.5e-1}").unwrap();
    let printed: Vec<String> = mixed.constraints.iter().map(ToString::to_string).collect();
    assert_eq!(printed, ["b2 > b1", "b2 > -0.15"]);
}

#[test]
fn empty_text_is_encompassing() {
    for text in ["", "   "] {
        let h = parse_hypothesis("H1", text).unwrap();
        assert!(h.is_encompassing());
        assert!(h.validate(&names(3)).unwrap().satisfies(&[0.0, 0.0, 0.0]));
    }
}

#[test]
fn non_strict_relations_rejected() {
    for (text, col) in [
        ("b1 >= b2", 4),
        ("b1 <= 0", 4),
        ("b1 = b2", 4),
        ("b2, b1 ≥ b2", 8),
    ] {
        let err = parse_hypothesis("H", text).unwrap_err();
        assert_eq!(err, ConstraintError::NonStrict { col });
        assert!(err
            .to_string()
            .contains("only strict inequalities supported"));
    }
}

#[test]
fn syntax_errors_carry_columns() {
    let cases = [
        ("b1 >", 5),
        ("b1 > > b2", 6),
        ("3", 1),
        ("b1 b2", 4),
        ("{b1 > b2", 9),
        ("b1 > b2,", 9),
        ("b1 > b1", 6),
        ("1 < 2", 5),
        ("b1 > $", 6),
    ];
    for (text, col) in cases {
        match parse_hypothesis("H", text) {
            Err(ConstraintError::Syntax { col: c, .. }) => assert_eq!(c, col, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn validation_errors() {
    let cyclic = parse_hypothesis("H", "b1 > b2, b2 > b1").unwrap();
    let err = cyclic.validate(&names(2)).unwrap_err();
    assert!(err.to_string().contains("cyclic ordering"), "{err}");

    let long_cycle = parse_hypothesis("H", "b1 > b2 > b3 > b1").unwrap();
    assert!(matches!(
        long_cycle.validate(&names(3)),
        Err(ConstraintError::Cyclic { .. })
    ));

    let unknown = parse_hypothesis("H", "b1 > b2").unwrap();
    let err = unknown.validate(&names(1)).unwrap_err();
    assert!(err.to_string().contains("unknown coefficient b2"), "{err}");

    let mention = parse_hypothesis("H", "b1 > 0, b9").unwrap();
    assert!(matches!(
        mention.validate(&names(3)),
        Err(ConstraintError::UnknownCoefficient { .. })
    ));

    let contradictory = parse_hypothesis("H", "b1 > 3, b1 < 2").unwrap();
    assert!(matches!(
        contradictory.validate(&names(1)),
        Err(ConstraintError::Contradictory { .. })
    ));

    // contradiction only visible through the ordering
    let transitive = parse_hypothesis("H", "b1 > 3, b2 > b1, b2 < 1").unwrap();
    assert!(matches!(
        transitive.validate(&names(2)),
        Err(ConstraintError::Contradictory { .. })
    ));
}

#[test]
fn hsb_h5_validates() {
    let h = parse_hypothesis("H5", "{b1 > b2}, b3, {b4 < b5}, b6, b7 < 0").unwrap();
    let v = h.validate(&names(7)).unwrap();
    assert!(!v.is_encompassing());
    assert_eq!(
        (0..7).map(|p| v.constrains(p)).collect::<Vec<_>>(),
        [true, true, false, true, true, false, true]
    );
}

#[test]
fn satisfies_examples() {
    let v = validated("b1 > b2", 2);
    assert!(v.satisfies(&[14.33, 12.67]));
    assert!(!v.satisfies(&[12.67, 14.33]));
    assert!(!v.satisfies(&[1.0, 1.0]));

    let neg = validated("b7 < 0", 7);
    let mut beta = [0.0; 7];
    assert!(!neg.satisfies(&beta));
    beta[6] = -1e-300;
    assert!(neg.satisfies(&beta));

    let open = validated("", 4);
    assert!(open.satisfies(&[f64::MAX, -1.0, 0.0, 3.0]));
}

#[test]
fn bounds_examples() {
    let h5 = validated("{b1 > b2}, b3, {b4 < b5}, b6, b7 < 0", 7);
    let beta = [14.33, 12.67, 3.1, 1.0, 2.64, 1.0, -2.76];
    assert_eq!(h5.bounds_for(3, &beta), (f64::NEG_INFINITY, 2.64));
    assert_eq!(h5.bounds_for(4, &beta), (1.0, f64::INFINITY));
    assert_eq!(h5.bounds_for(6, &beta), (f64::NEG_INFINITY, 0.0));
    assert_eq!(h5.bounds_for(2, &beta), (f64::NEG_INFINITY, f64::INFINITY));

    let chain = validated("b6 > b4 > b5", 6);
    let beta = [0.0, 0.0, 0.0, 0.3, -1.0, 1.0];
    assert_eq!(chain.bounds_for(3, &beta), (-1.0, 1.0));
}

#[test]
fn repair_moves_only_violators() {
    let v = validated("b3 > b2 > b1, b1 > 0, b3 < 1", 4);
    let mut beta = [-2.0, 5.0, 0.5, 7.0];
    v.repair(&mut beta).unwrap();
    assert!(v.satisfies(&beta), "{beta:?}");
    assert_eq!(beta[3], 7.0);

    let mut ok = [0.1, 0.2, 0.3, -4.0];
    let before = ok;
    v.repair(&mut ok).unwrap();
    assert_eq!(ok, before);

    let upper_only = validated("b1 < -5, b2 < b1", 2);
    let mut beta = [0.0, 0.0];
    upper_only.repair(&mut beta).unwrap();
    assert!(upper_only.satisfies(&beta), "{beta:?}");
}

#[test]
fn duplicate_constraints_are_harmless() {
    let v = validated("b1 > b2, b2 < b1, {b1 > b2}", 2);
    assert_eq!(v.bounds_for(1, &[1.0, 0.0]), (f64::NEG_INFINITY, 1.0));
}

// Random hypotheses over b1..b5: a fixed random permutation induces an
// acyclic set of pairwise constraints, plus a few constant bounds.
fn hypothesis_strategy() -> impl Strategy<Value = String> {
    let pairs = prop::collection::vec((0usize..5, 0usize..5), 0..6);
    let consts = prop::collection::vec((0usize..5, any::<bool>(), -3i32..3), 0..3);
    (
        Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        pairs,
        consts,
    )
        .prop_map(|(rank, pairs, consts)| {
            let mut clauses = Vec::new();
            for (a, b) in pairs {
                if a == b {
                    continue;
                }
                let (hi, lo) = if rank[a] > rank[b] { (a, b) } else { (b, a) };
                clauses.push(format!("b{} > b{}", hi + 1, lo + 1));
            }
            for (p, above, c) in consts {
                let op = if above { '>' } else { '<' };
                clauses.push(format!("b{} {op} {}", p + 1, c as f64 * 0.5));
            }
            clauses.join(", ")
        })
}

proptest! {
    #[test]
    fn print_parse_round_trip(text in hypothesis_strategy()) {
        let h = parse_hypothesis("H", &text).unwrap();
        let again = parse_hypothesis("H", &h.to_string()).unwrap();
        prop_assert_eq!(h, again);
    }

    #[test]
    fn bound_moves_preserve_feasibility(
        text in hypothesis_strategy(),
        start in prop::collection::vec(-4.0f64..4.0, 5),
        moves in prop::collection::vec((0usize..5, 0.0f64..1.0), 1..30),
    ) {
        let h = parse_hypothesis("H", &text).unwrap();
        let v = match h.validate(&names(5)) {
            Ok(v) => v,
            Err(ConstraintError::Contradictory { .. }) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let mut beta = start;
        v.repair(&mut beta).unwrap();
        prop_assert!(v.satisfies(&beta));
        for (p, u) in moves {
            let (lo, hi) = v.bounds_for(p, &beta);
            prop_assert!(lo < hi);
            let lo = if lo.is_finite() { lo } else { beta[p].min(hi) - 10.0 };
            let hi = if hi.is_finite() { hi } else { beta[p].max(lo) + 10.0 };
            let x = lo + u * (hi - lo);
            if x > lo && x < hi {
                beta[p] = x;
            }
            prop_assert!(v.satisfies(&beta), "{} at {:?}", text, beta);
        }
    }

    #[test]
    fn satisfied_draws_lie_within_bounds(
        text in hypothesis_strategy(),
        beta in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let Ok(v) = parse_hypothesis("H", &text).unwrap().validate(&names(5)) else {
            return Ok(());
        };
        if v.satisfies(&beta) {
            for p in 0..5 {
                let (lo, hi) = v.bounds_for(p, &beta);
                prop_assert!(beta[p] > lo && beta[p] < hi);
            }
        }
    }

    #[test]
    fn chain_is_conjunction_of_links(beta in prop::collection::vec(-2i32..3, 3)) {
        // small integers make ties common
        let beta: Vec<f64> = beta.into_iter().map(f64::from).collect();
        let chain = validated("b1 > b2 > b3", 3).satisfies(&beta);
        let ab = validated("b1 > b2", 3).satisfies(&beta);
        let bc = validated("b2 > b3", 3).satisfies(&beta);
        prop_assert_eq!(chain, ab && bc);
    }
}
