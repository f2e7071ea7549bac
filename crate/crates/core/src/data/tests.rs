use std::collections::HashMap;

use proptest::prelude::*;

use super::*;

fn table(text: &str) -> RawTable {
    read_csv(text.as_bytes(), &HashMap::new()).unwrap()
}

fn term(name: &str, transform: Transform) -> NamedTransform {
    NamedTransform::new(name, transform)
}

fn ident(column: &str) -> Transform {
    Transform::Identity {
        column: column.into(),
    }
}

const SMALL: &str = "g,y,a,b,s\n\
                     x,1.0,2.0,0.5,cat\n\
                     x,2.0,4.0,1.5,pub\n\
                     y,3.5,1.0,-0.5,cat\n\
                     y,0.5,3.0,2.5,pub\n\
                     z,2.0,5.0,0.0,pub\n";

fn small_spec(fixed: Vec<NamedTransform>) -> ModelSpec {
    ModelSpec {
        response: "y".into(),
        group: "g".into(),
        variables: vec![],
        fixed,
        random: vec![RandomTerm::new("intercept", "1")],
    }
}

#[test]
fn identity_design_is_verbatim() {
    let t = table(SMALL);
    let spec = small_spec(vec![term("a", ident("a")), term("b", ident("b"))]);
    let d = build_dataset(&t, &spec).unwrap();
    assert_eq!(d.n(), 5);
    assert_eq!(d.n_groups(), 3);
    assert_eq!(d.x().column(0).as_slice(), t.numeric("a").unwrap());
    assert_eq!(d.x().column(1).as_slice(), t.numeric("b").unwrap());
    assert_eq!(d.y().as_slice(), t.numeric("y").unwrap());
    assert!(d.z().iter().all(|&v| v == 1.0));
    assert_eq!(d.group(), &[0, 0, 1, 1, 2]);
    assert_eq!(d.group_labels(), &["x", "y", "z"]);
    assert_eq!(d.group_sizes(), vec![2, 2, 1]);
    assert_eq!(d.coef_names(), &["a", "b"]);
}

#[test]
fn group_center_subtracts_group_means() {
    let t = table(SMALL);
    let spec = small_spec(vec![term(
        "ga",
        Transform::GroupCenter { column: "a".into() },
    )]);
    let d = build_dataset(&t, &spec).unwrap();
    // group means of a: x 3, y 2, z 5
    assert_eq!(d.x().column(0).as_slice(), &[-1.0, 1.0, -1.0, 1.0, 0.0]);
    let rec = d.transform_record("ga").unwrap();
    assert!(rec.is_slope());
    assert_eq!(rec.divisor, 1.0);
    assert_eq!(rec.transform.to_string(), "group_center(a)");
}

#[test]
fn indicator_pair_and_interactions() {
    let t = table(SMALL);
    let spec = ModelSpec {
        variables: vec![term(
            "sa",
            Transform::Scale2sd {
                column: "a".into(),
                center: None,
            },
        )],
        ..small_spec(vec![
            term(
                "cat",
                Transform::Indicator {
                    column: "s".into(),
                    level: Level::Text("cat".into()),
                },
            ),
            term(
                "pub",
                Transform::Indicator {
                    column: "s".into(),
                    level: Level::Text("pub".into()),
                },
            ),
            term(
                "cat_sa",
                Transform::Interaction {
                    left: "cat".into(),
                    right: "sa".into(),
                },
            ),
        ])
    };
    let d = build_dataset(&t, &spec).unwrap();
    let cat = d.x().column(0);
    let pubc = d.x().column(1);
    for k in 0..d.n() {
        assert_eq!(cat[k] + pubc[k], 1.0);
    }
    let a = t.numeric("a").unwrap();
    let (mean, sd) = (3.0, (2.5f64).sqrt());
    for k in 0..d.n() {
        let expected = cat[k] * (a[k] - mean) / (2.0 * sd);
        assert!((d.x()[(k, 2)] - expected).abs() < 1e-15);
    }
    let rec = d.transform_record("cat_sa").unwrap();
    assert!((rec.divisor - 2.0 * sd).abs() < 1e-15);
    assert!(!d.transform_record("cat").unwrap().is_slope());
}

#[test]
fn scale2sd_with_fixed_center() {
    let t = table("g,y,age\na,1,14\na,2,15\nb,3,16\nb,4,14\n");
    let spec = ModelSpec {
        random: vec![RandomTerm::new("intercept", "1"), RandomTerm::new("t", "t")],
        ..small_spec(vec![term(
            "t",
            Transform::Scale2sd {
                column: "age".into(),
                center: Some(14.0),
            },
        )])
    };
    let d = build_dataset(&t, &spec).unwrap();
    let sd = t.summary_stats("age").unwrap().sd;
    assert_eq!(d.x()[(0, 0)], 0.0);
    assert!((d.x()[(2, 0)] - 2.0 / (2.0 * sd)).abs() < 1e-15);
    assert_eq!(d.z().column(1), d.x().column(0));
}

#[test]
fn build_errors() {
    let t = table(SMALL);
    let unknown = small_spec(vec![term("q", ident("nope"))]);
    assert!(matches!(
        build_dataset(&t, &unknown),
        Err(DataError::UnknownColumn(c)) if c == "nope"
    ));

    let absent = small_spec(vec![term(
        "q",
        Transform::Indicator {
            column: "s".into(),
            level: Level::Text("private".into()),
        },
    )]);
    assert!(matches!(
        build_dataset(&t, &absent),
        Err(DataError::AbsentLevel { .. })
    ));

    let undeclared = small_spec(vec![term(
        "q",
        Transform::Interaction {
            left: "a".into(),
            right: "b".into(),
        },
    )]);
    assert!(matches!(
        build_dataset(&t, &undeclared),
        Err(DataError::UndeclaredOperand { .. })
    ));

    let flat = table("g,y,c\na,1,5\nb,2,5\n");
    let zero = small_spec(vec![term(
        "q",
        Transform::Scale2sd {
            column: "c".into(),
            center: None,
        },
    )]);
    assert!(matches!(
        build_dataset(&flat, &zero),
        Err(DataError::ZeroVariance(_))
    ));

    let one_group = table("g,y,a\na,1,5\na,2,6\n");
    let spec = small_spec(vec![term("a", ident("a"))]);
    assert!(build_dataset(&one_group, &spec).is_err());

    let no_random = ModelSpec {
        random: vec![],
        ..small_spec(vec![term("a", ident("a"))])
    };
    assert!(build_dataset(&t, &no_random).is_err());

    let dup = small_spec(vec![term("a", ident("a")), term("a", ident("b"))]);
    assert!(build_dataset(&t, &dup).is_err());

    let reserved = small_spec(vec![term("sigma2", ident("a"))]);
    assert!(build_dataset(&t, &reserved).is_err());
}

#[test]
fn missing_values_rejected_with_row() {
    let t = table("g,y,a\na,1,5\na,2,NA\nb,3,7\n");
    let spec = small_spec(vec![term("a", ident("a"))]);
    match build_dataset(&t, &spec) {
        Err(DataError::Missing { row, column }) => assert_eq!((row, column.as_str()), (2, "a")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn model_spec_reads_from_toml() {
    let text = r#"
        response = "y"
        group = "g"
        variables = [{ name = "sa", transform = { kind = "scale2sd", column = "a" } }]
        fixed = [
          { name = "cat", transform = { kind = "indicator", column = "s", level = "cat" } },
          { name = "cat_sa", transform = { kind = "interaction", left = "cat", right = "sa" } },
        ]
        random = [{ name = "intercept", source = "1" }, { name = "slope", source = "sa" }]
    "#;
    let spec: ModelSpec = toml::from_str(text).unwrap();
    let d = build_dataset(&table(SMALL), &spec).unwrap();
    assert_eq!((d.n_fixed(), d.n_random()), (2, 2));

    let bad = text.replace("column = \"a\" }", "column = \"a\", bogus = 1 }");
    assert!(toml::from_str::<ModelSpec>(&bad).is_err());
}

fn random_table(values: &[(f64, f64)]) -> RawTable {
    let a: Vec<f64> = values.iter().map(|v| v.0).collect();
    let b: Vec<f64> = values.iter().map(|v| v.1).collect();
    let n = values.len();
    let g: Vec<Option<String>> = (0..n).map(|i| Some(format!("g{}", i % 3))).collect();
    let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
    RawTable::new(
        vec!["g".into(), "y".into(), "a".into(), "b".into()],
        vec![
            Column::Categorical(g),
            Column::Numeric(y),
            Column::Numeric(a),
            Column::Numeric(b),
        ],
    )
    .unwrap()
}

fn sample_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

proptest! {
    #[test]
    fn transform_properties(values in prop::collection::vec((-50.0f64..50.0, -5.0f64..5.0), 6..40)) {
        let t = random_table(&values);
        prop_assume!(sample_sd(t.numeric("a").unwrap()).1 > 1e-6);
        prop_assume!(sample_sd(t.numeric("b").unwrap()).1 > 1e-6);
        let spec = ModelSpec {
            response: "y".into(),
            group: "g".into(),
            variables: vec![],
            fixed: vec![
                term("sa", Transform::Scale2sd { column: "a".into(), center: None }),
                term("cb", Transform::Center { column: "b".into() }),
                term("sb", Transform::Scale2sd { column: "b".into(), center: None }),
                term("sa_sb", Transform::Interaction { left: "sa".into(), right: "sb".into() }),
                term("ga", Transform::GroupCenter { column: "a".into() }),
            ],
            random: vec![RandomTerm::new("intercept", "1")],
        };
        let d = build_dataset(&t, &spec).unwrap();
        let sa = d.x().column(0).iter().copied().collect::<Vec<_>>();
        let cb = d.x().column(1).iter().copied().collect::<Vec<_>>();
        let sb = d.x().column(2).iter().copied().collect::<Vec<_>>();
        prop_assert!((sample_sd(&sa).1 - 0.5).abs() < 1e-10);
        prop_assert!(sample_sd(&cb).0.abs() < 1e-10);
        for k in 0..d.n() {
            prop_assert_eq!(d.x()[(k, 3)], sa[k] * sb[k]);
        }
        prop_assert_eq!(d.group_sizes().iter().sum::<usize>(), d.n());
        prop_assert!(d.group().iter().all(|&g| g < d.n_groups()));
        for (j, rows) in d.members().iter().enumerate() {
            prop_assert!(rows.iter().all(|&r| d.group()[r] == j));
            let within: f64 = rows.iter().map(|&r| d.x()[(r, 4)]).sum();
            prop_assert!(within.abs() < 1e-9);
        }
    }
}
