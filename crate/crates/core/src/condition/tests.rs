use super::*;

fn bool_decls(names: &[&str]) -> Vec<VarDecl> {
    names
        .iter()
        .map(|n| VarDecl { name: n.to_string(), domain: DomainKind::Boolean })
        .collect()
}

fn atom_true(var: &str) -> Atom {
    Atom::eq(var, Value::Bool(true))
}

fn atom_false(var: &str) -> Atom {
    Atom::eq(var, Value::Bool(false))
}

/// Independent truth-table check used to freeze derived expectations: walks
/// every valuation and evaluates atoms directly, bypassing `Condition`
/// evaluation order and normalization.
fn brute_satisfying(cond: &Condition, decls: &[VarDecl]) -> Vec<Valuation> {
    let mut out = Vec::new();
    for val in ValuationIter::new(decls).unwrap() {
        let sat = cond.clauses.iter().any(|clause| {
            clause.literals.iter().all(|lit| {
                let bound = val.get(&lit.var).expect("total valuation");
                match lit.predicate {
                    Predicate::Eq => bound == &lit.operand,
                    Predicate::Neq => bound != &lit.operand,
                    Predicate::Contains | Predicate::NotContains => {
                        let member = matches!(
                            (bound, &lit.operand),
                            (Value::Set(s), Value::Label(e)) if s.contains(e)
                        );
                        (lit.predicate == Predicate::Contains) == member
                    }
                }
            })
        });
        if sat {
            out.push(val);
        }
    }
    out
}

#[test]
fn evaluate_not_added_on_empty_list() {
    let cond = Condition::single(Atom::not_contains("alarm_list", "blood_sugar@08:00"));
    let mut val = Valuation::new();
    val.bind("alarm_list", Value::Set(Default::default()));
    assert!(cond.evaluate(&val).unwrap());
}

#[test]
fn evaluate_tautology_everywhere() {
    let mut val = Valuation::new();
    val.bind("x", Value::Int(42));
    assert!(Condition::tautology().evaluate(&val).unwrap());
}

#[test]
fn evaluate_picks_satisfied_clause() {
    // (x=1 && y=2) || (x=3) under {x:3, y:0}
    let cond = Condition {
        clauses: vec![
            Clause::new(vec![Atom::eq("x", Value::Int(1)), Atom::eq("y", Value::Int(2))]),
            Clause::new(vec![Atom::eq("x", Value::Int(3))]),
        ],
    };
    let mut val = Valuation::new();
    val.bind("x", Value::Int(3));
    val.bind("y", Value::Int(0));
    assert!(cond.evaluate(&val).unwrap());
}

#[test]
fn evaluate_unbound_variable_errors() {
    let cond = Condition::single(atom_true("p"));
    let val = Valuation::new();
    assert_eq!(cond.evaluate(&val), Err(ConditionError::UnboundVariable("p".into())));
}

#[test]
fn satisfiability_contradictory_clause() {
    let decls = vec![VarDecl {
        name: "x".into(),
        domain: DomainKind::Enum { labels: vec!["1".into(), "2".into()] },
    }];
    let cond = Condition {
        clauses: vec![Clause::new(vec![
            Atom::eq("x", Value::Label("1".into())),
            Atom::eq("x", Value::Label("2".into())),
        ])],
    };
    assert!(!is_satisfiable(&cond, &decls).unwrap());
    assert!(is_satisfiable(&Condition::tautology(), &decls).unwrap());
}

#[test]
fn satisfiability_xor_over_booleans() {
    let decls = bool_decls(&["p", "q"]);
    let cond = Condition {
        clauses: vec![
            Clause::new(vec![atom_true("p"), atom_false("q")]),
            Clause::new(vec![atom_true("q"), atom_false("p")]),
        ],
    };
    // Enumerating all four valuations finds {p, ¬q} and {q, ¬p}.
    assert_eq!(brute_satisfying(&cond, &decls).len(), 2);
    assert!(is_satisfiable(&cond, &decls).unwrap());
}

#[test]
fn satisfiability_cap_exceeded() {
    let decls = vec![VarDecl {
        name: "big".into(),
        domain: DomainKind::SetOf { universe: (0..25).map(|i| format!("e{i}")).collect() },
    }];
    let err = is_satisfiable(&Condition::single(atom_true("x")), &decls).unwrap_err();
    assert!(matches!(err, ConditionError::EnumerationCapExceeded { .. }));
}

#[test]
fn entailment_tautology_and_weakening() {
    let decls = bool_decls(&["x", "y"]);
    let phi = Condition::single(atom_true("x"));
    assert!(entails(&phi, &Condition::tautology(), &decls).unwrap());

    let strong = Condition::from_clause(Clause::new(vec![atom_true("x"), atom_true("y")]));
    let weak = Condition::single(atom_true("x"));
    assert!(entails(&strong, &weak, &decls).unwrap());
    assert!(!entails(&weak, &strong, &decls).unwrap());
}

#[test]
fn entailment_fast_path_agrees_with_enumeration() {
    let decls = bool_decls(&["p", "q"]);
    let a = Condition::from_clause(Clause::new(vec![atom_true("p"), atom_true("q")]));
    let b = Condition::single(atom_true("p"));
    // Subsumption answers this without touching the iterator.
    assert!(entails(&a, &b, &decls).unwrap());
    // And enumeration agrees.
    for val in ValuationIter::new(&decls).unwrap() {
        if a.evaluate(&val).unwrap() {
            assert!(b.evaluate(&val).unwrap());
        }
    }
}

#[test]
fn conjoin_negation_examples() {
    let decls = bool_decls(&["p", "q"]);
    let p = Condition::single(atom_true("p"));

    // true ∧ ¬p = ¬p
    let not_p = conjoin_negation(&Condition::tautology(), &p);
    assert_eq!(not_p, Condition::single(atom_true("p").negated()));

    // (p ∨ q) ∧ ¬q = p ∧ ¬q, frozen from the truth table over {p, q}.
    let p_or_q = disjoin(&p, &Condition::single(atom_true("q")));
    let q = Condition::single(atom_true("q"));
    let got = conjoin_negation(&p_or_q, &q);
    let expected =
        Condition::from_clause(Clause::new(vec![atom_true("p"), atom_true("q").negated()]));
    assert_eq!(got, expected);
    let sat = brute_satisfying(&got, &decls);
    assert_eq!(sat.len(), 1);
    assert_eq!(sat[0].get("p"), Some(&Value::Bool(true)));

    // Self-exclusion is false.
    assert!(conjoin_negation(&p, &p).is_false());
}

#[test]
fn conjoin_negation_matches_semantics_pointwise() {
    let decls = bool_decls(&["p", "q", "r"]);
    let a = Condition {
        clauses: vec![
            Clause::new(vec![atom_true("p"), atom_false("q")]),
            Clause::new(vec![atom_true("r")]),
        ],
    };
    let b = Condition {
        clauses: vec![Clause::new(vec![atom_true("q"), atom_true("r")])],
    };
    let result = conjoin_negation(&a, &b);
    for val in ValuationIter::new(&decls).unwrap() {
        let want = a.evaluate(&val).unwrap() && !b.evaluate(&val).unwrap();
        assert_eq!(result.evaluate(&val).unwrap(), want);
    }
}

#[test]
fn disjoin_examples() {
    let decls = bool_decls(&["p"]);
    let p = Condition::single(atom_true("p"));
    let not_p = Condition::single(atom_false("p"));

    assert_eq!(disjoin(&Condition::contradiction(), &p), p.normalized());

    // p ∨ ¬p is logically true even though the DNF is not syntactic `true`.
    let both = disjoin(&p, &not_p);
    assert!(equivalent(&both, &Condition::tautology(), &decls).unwrap());

    let x1 = Condition::single(Atom::eq("x", Value::Int(1)));
    let x2 = Condition::single(Atom::eq("x", Value::Int(2)));
    assert_eq!(disjoin(&x1, &x2).clauses.len(), 2);
}

#[test]
fn partition_examples() {
    let phi = Condition {
        clauses: vec![
            Clause::new(vec![atom_true("a")]),
            Clause::new(vec![atom_true("b")]),
            Clause::new(vec![atom_true("c")]),
        ],
    };
    let parts = partition_disjuncts(&phi);
    assert_eq!(parts.len(), 3);
    let rejoined = parts
        .iter()
        .fold(Condition::contradiction(), |acc, p| disjoin(&acc, p));
    let decls = bool_decls(&["a", "b", "c"]);
    assert!(equivalent(&rejoined, &phi, &decls).unwrap());

    assert_eq!(partition_disjuncts(&Condition::tautology()), vec![Condition::tautology()]);
    assert!(partition_disjuncts(&Condition::contradiction()).is_empty());
    let single = Condition::single(atom_true("a"));
    assert_eq!(partition_disjuncts(&single), vec![single.clone()]);
}

#[test]
fn minimal_violation_examples() {
    let decls = bool_decls(&["a", "b", "c"]);
    let clause = Clause::new(vec![atom_true("a"), atom_true("b")]);
    let targets = minimal_violation_targets(&clause).unwrap();
    assert_eq!(targets.len(), 2);
    assert_eq!(
        targets[0].1,
        Condition::from_clause(Clause::new(vec![atom_false("a"), atom_true("b")]))
    );
    assert_eq!(
        targets[1].1,
        Condition::from_clause(Clause::new(vec![atom_true("a"), atom_false("b")]))
    );

    let single = Clause::new(vec![atom_true("a")]);
    let targets = minimal_violation_targets(&single).unwrap();
    assert_eq!(targets, vec![(atom_true("a"), Condition::single(atom_false("a")))]);

    // Three literals: three targets, each disjoint from the source clause.
    let triple = Clause::new(vec![atom_true("a"), atom_true("b"), atom_true("c")]);
    let source = Condition::from_clause(triple.clone());
    let targets = minimal_violation_targets(&triple).unwrap();
    assert_eq!(targets.len(), 3);
    for (_, violating) in &targets {
        let joint = conjoin(&source, violating);
        assert!(!is_satisfiable(&joint, &decls).unwrap());
    }

    assert_eq!(
        minimal_violation_targets(&Clause::new(Vec::new())),
        Err(ConditionError::EmptyClause)
    );
}

#[test]
fn normalization_is_canonical() {
    let messy = Condition {
        clauses: vec![
            Clause::new(vec![atom_true("b"), atom_true("a"), atom_true("a")]),
            Clause::new(vec![atom_true("a"), atom_true("b")]),
            Clause::new(vec![atom_true("a")]),
        ],
    };
    let normalized = messy.normalized();
    // The two-literal clauses are subsumed by (a).
    assert_eq!(normalized, Condition::single(atom_true("a")));
    assert_eq!(normalized.normalized(), normalized);
}

#[test]
fn normalization_keeps_semantic_contradictions_out() {
    let cond = Condition {
        clauses: vec![Clause::new(vec![atom_true("p"), atom_false("p")])],
    };
    assert!(cond.normalized().is_false());
}

#[test]
fn render_parse_round_trip() {
    let cond = Condition {
        clauses: vec![
            Clause::new(vec![
                Atom::eq("chosen_type", Value::Label("bmi".into())),
                Atom::not_contains("alarm_list", "blood_sugar@08:00"),
            ]),
            Clause::new(vec![Atom::neq("count", Value::Int(3))]),
        ],
    }
    .normalized();
    let text = cond.render();
    let parsed = parse_condition(&text).unwrap().normalized();
    assert_eq!(parsed, cond);
    assert_eq!(parsed.render(), text);

    assert_eq!(parse_condition("true").unwrap(), Condition::tautology());
    assert_eq!(parse_condition("false").unwrap(), Condition::contradiction());
    assert_eq!(Condition::tautology().render(), "true");
    assert_eq!(Condition::contradiction().render(), "false");

    assert!(parse_condition("x == ").is_err());
    assert!(parse_condition("true || x == 1").is_err());
}

#[test]
fn atom_validation_checks_domains() {
    let decls = vec![
        VarDecl { name: "mode".into(), domain: DomainKind::Enum { labels: vec!["a".into()] } },
        VarDecl { name: "bag".into(), domain: DomainKind::SetOf { universe: vec!["x".into()] } },
    ];
    assert!(Atom::eq("mode", Value::Label("a".into())).validate(&decls).is_ok());
    assert!(matches!(
        Atom::eq("mode", Value::Label("z".into())).validate(&decls),
        Err(ConditionError::OperandOutsideDomain { .. })
    ));
    assert!(matches!(
        Atom::contains("mode", "a").validate(&decls),
        Err(ConditionError::PredicateDomainMismatch { .. })
    ));
    assert!(matches!(
        Atom::eq("bag", Value::Label("x".into())).validate(&decls),
        Err(ConditionError::PredicateDomainMismatch { .. })
    ));
    assert!(matches!(
        Atom::contains("ghost", "x").validate(&decls),
        Err(ConditionError::UndeclaredVariable(_))
    ));
}
