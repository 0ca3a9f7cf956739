use std::path::Path;
use std::process::{Command, Output};

fn privlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privlink"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_then_link_recovers_a_clean_copy() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = privlink(&[
        "synth",
        "--n",
        "150",
        "--error-rate",
        "0",
        "--seed",
        "4",
        "--out",
        p(&corpus),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let links = dir.path().join("links.csv");
    let out = privlink(&[
        "link",
        "--a",
        p(&corpus.join("a.csv")),
        "--b",
        p(&corpus.join("b.csv")),
        "--truth",
        p(&corpus.join("truth.csv")),
        "--out",
        p(&links),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("precision=1.000000 recall=1.000000"),
        "{stdout}"
    );
}

#[test]
fn exit_codes_separate_usage_from_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(privlink(&["baseline"]).status.code(), Some(2));
    assert_eq!(privlink(&["no-such-command"]).status.code(), Some(2));
    let missing = dir.path().join("missing.log");
    assert_eq!(
        privlink(&["audit-verify", "--log", p(&missing)])
            .status
            .code(),
        Some(2)
    );

    let garbage = dir.path().join("garbage.log");
    std::fs::write(&garbage, "not hex\n").unwrap();
    let out = privlink(&["audit-verify", "--log", p(&garbage)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL seq=0"));
}

#[test]
fn tampered_gate_log_is_rejected_at_the_right_entry() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("micro");
    let out = privlink(&[
        "synth",
        "--n",
        "10",
        "--microdata",
        "80",
        "--seed",
        "1",
        "--out",
        p(&table),
    ]);
    assert!(out.status.success());
    let policy = dir.path().join("policy.toml");
    std::fs::write(
        &policy,
        "[[level]]\nlevel = 0\nmax_risk = 0.3\nmethod = \"microaggregate\"\nk = 3\n",
    )
    .unwrap();
    let queries = dir.path().join("q.jsonl");
    let q = |id: u32| {
        format!(
            r#"{{"id":"q{id}","actor":"a","level":0,"timestamp":"t{id}","select":[],"aggregate":{{"kind":"count"}}}}"#
        )
    };
    std::fs::write(&queries, format!("{}\n{}\n{}\n", q(1), q(2), q(3))).unwrap();
    let gate = dir.path().join("gate");
    let out = privlink(&[
        "gate",
        "--policy",
        p(&policy),
        "--table",
        p(&table.join("microdata.csv")),
        "--queries",
        p(&queries),
        "--out",
        p(&gate),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let log = gate.join("audit.log");
    let head = gate.join("audit.head");
    let out = privlink(&["audit-verify", "--log", p(&log), "--head", p(&head)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("OK entries=3"));

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut raw = hex::decode(&lines[1]).unwrap();
    raw[20] ^= 0x40;
    lines[1] = hex::encode(raw);
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    let out = privlink(&["audit-verify", "--log", p(&log)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL seq=1"));

    lines.truncate(1);
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    assert!(privlink(&["audit-verify", "--log", p(&log)])
        .status
        .success());
    let out = privlink(&["audit-verify", "--log", p(&log), "--head", p(&head)]);
    assert_eq!(out.status.code(), Some(1));
}
