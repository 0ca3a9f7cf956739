use privlink::disclosure::{
    audit_verify, audit_verify_anchored, microaggregate, reident_risk, synthetic_microtable,
    Aggregate, AggregateKind, AuditLog, CmpOp, Gate, GateOutcome, Microtable, Policy, Predicate,
    Query, Stat,
};
use proptest::prelude::*;

const POLICY: &str = r#"
[[level]]
level = 0
max_risk = 0.0
method = "noise"
lambda = 0.1
seed = 5

[[level]]
level = 1
max_risk = 0.2
method = "microaggregate"
k = 4

[[level]]
level = 2
max_risk = 0.5
method = "noise"
lambda = 0.5
seed = 11

[[level]]
level = 3
max_risk = 1.0
method = "identity"
"#;

fn arb_table() -> impl Strategy<Value = Microtable> {
    (1usize..4, 2usize..60).prop_flat_map(|(d, n)| {
        prop::collection::vec(prop::collection::vec(-5i32..5, d), n).prop_map(move |rows| {
            Microtable::new(
                (0..d).map(|j| format!("c{j}")).collect(),
                rows.into_iter()
                    .enumerate()
                    .map(|(i, r)| (format!("r{i}"), r.into_iter().map(f64::from).collect()))
                    .collect(),
            )
            .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn microaggregation_groups_and_values(t in arb_table(), k in 2usize..8, sum in any::<bool>()) {
        prop_assume!(t.len() >= k);
        let stat = if sum { Stat::Sum } else { Stat::Mean };
        let m = microaggregate(&t, k, stat).unwrap();
        for size in m.group_sizes() {
            prop_assert!(size >= k && size < 2 * k, "size {size} for k {k}");
        }
        for g in 0..m.group_count() {
            let members: Vec<usize> = (0..t.len()).filter(|&i| m.groups[i] == g).collect();
            for j in 0..t.columns().len() {
                let mut acc = 0.0;
                for &i in &members {
                    acc += t.rows()[i][j];
                }
                let expected = if sum { acc } else { acc / members.len() as f64 };
                for &i in &members {
                    prop_assert_eq!(m.released.rows()[i][j], expected);
                }
            }
        }
        let risk = reident_risk(&t, &m.released).unwrap();
        prop_assert!(risk <= 1.0 / k as f64 + 1e-12, "risk {risk} k {k}");
    }
}

fn log_of(n: usize, salt: u8) -> AuditLog {
    let mut log = AuditLog::new();
    for i in 0..n {
        let b = (i as u8).wrapping_mul(31) ^ salt;
        log.append(
            &format!("t{i}"),
            &format!("actor{}", i % 3),
            [b; 32],
            [!b; 32],
        )
        .unwrap();
    }
    log
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_byte_change_is_detected(n in 1usize..20, salt in any::<u8>(), line in any::<prop::sample::Index>(), at in any::<prop::sample::Index>(), mask in 1u8..=255) {
        let log = log_of(n, salt);
        let mut lines: Vec<String> = log.to_text().lines().map(String::from).collect();
        let li = line.index(lines.len());
        let mut raw = hex::decode(&lines[li]).unwrap();
        let b = at.index(raw.len());
        raw[b] ^= mask;
        lines[li] = hex::encode(raw);
        prop_assert!(!audit_verify(&lines.join("\n")));
    }

    #[test]
    fn any_deletion_is_detected(n in 1usize..20, salt in any::<u8>(), victim in any::<prop::sample::Index>()) {
        let log = log_of(n, salt);
        let text = log.to_text();
        let mut lines: Vec<&str> = text.lines().collect();
        let i = victim.index(lines.len());
        lines.remove(i);
        let text = lines.join("\n");
        if i + 1 < n {
            prop_assert!(!audit_verify(&text));
        }
        prop_assert!(!audit_verify_anchored(&text, &log.head_hex()));
    }
}

fn arb_query() -> impl Strategy<Value = Query> {
    let cols = ["age", "income", "hours", "tenure"];
    let pred = (
        prop::sample::select(cols.to_vec()),
        prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Ne]),
        0.0f64..100.0,
    )
        .prop_map(|(c, op, v)| Predicate {
            column: c.into(),
            op,
            value: if c == "income" { v * 1000.0 } else { v },
        });
    (
        prop::collection::vec(pred, 0..3),
        prop::sample::select(vec![
            AggregateKind::Rows,
            AggregateKind::Count,
            AggregateKind::Mean,
            AggregateKind::Sum,
        ]),
        prop::sample::select(cols.to_vec()),
        0u32..4,
    )
        .prop_map(|(select, kind, col, level)| Query {
            id: "q".into(),
            actor: "analyst".into(),
            level,
            timestamp: "2024-01-01T00:00:00Z".into(),
            select,
            aggregate: Aggregate {
                kind,
                column: matches!(kind, AggregateKind::Mean | AggregateKind::Sum)
                    .then(|| col.into()),
            },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gate_releases_only_planned_values_and_is_monotone(q in arb_query()) {
        let table = synthetic_microtable(120, 77);
        let policy = Policy::from_toml(POLICY).unwrap();
        let gate = Gate::new(policy.clone(), table.clone());
        let indices: Vec<usize> = table
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, r)| q.select.iter().all(|p| {
                let x = r[table.column_index(&p.column).unwrap()];
                match p.op {
                    CmpOp::Eq => x == p.value,
                    CmpOp::Ne => x != p.value,
                    CmpOp::Lt => x < p.value,
                    CmpOp::Le => x <= p.value,
                    CmpOp::Gt => x > p.value,
                    CmpOp::Ge => x >= p.value,
                }
            }))
            .map(|(i, _)| i)
            .collect();
        let selection = table.select(&indices);

        let mut released_before = false;
        for level in 0..4 {
            let outcome = gate.evaluate(&q, level);
            if released_before {
                prop_assert!(outcome.is_released(), "level {level} refused after a lower release");
            }
            if let GateOutcome::Released(r) = &outcome {
                released_before = true;
                prop_assert!(r.plan_level <= level);
                prop_assert_eq!(r.rows_selected, indices.len());
                let plan = policy.get(r.plan_level).unwrap().plan;
                let expected = plan.apply(&selection).unwrap();
                prop_assert!(r.measured_risk <= policy.get(level).unwrap().max_risk);
                prop_assert_eq!(r.measured_risk, reident_risk(&selection, &expected).unwrap());
                if let Some(rows) = &r.rows {
                    prop_assert_eq!(rows.as_slice(), expected.rows());
                }
            }
        }
        prop_assert!(audit_verify(&gate.log().to_text()));
        prop_assert_eq!(gate.log().len(), 4);
    }
}
