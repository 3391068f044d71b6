use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dperiod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn degree_of_cubic1d_prints_minus_one() {
    let o = run(&["degree", "--example", "cubic1d"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("-1"));
}

#[test]
fn resonance_branch_is_vertical() {
    let o = run(&["branch", "--example", "resonance", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "termination Vertical");
}

#[test]
fn verify_passes() {
    let o = run(&["verify", "--quiet"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(!out.contains("FAIL"), "{out}");
}

#[test]
fn config_errors_exit_two_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[system]\nperiod = 1.0\n[manifold]\nkind = \"euclidean\"\ndim = 1\n[fields]\ng = [\"x1 *\"]\n",
    )
    .unwrap();
    let o = run(&["degree", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 7"));
    assert_eq!(
        run(&["degree", "--example", "missing"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["degree"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("degenerate.toml");
    std::fs::write(
        &path,
        "[system]\nperiod = 1.0\n[manifold]\nkind = \"euclidean\"\ndim = 1\n[fields]\ng = [\"x1^2\"]\n[region]\nlower = [-1.0]\nupper = [1.0]\n",
    )
    .unwrap();
    let o = run(&["degree", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn periodic_records_are_reproducible_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let o = run(&[
            "periodic",
            "--example",
            "delay_oscillator",
            "--quiet",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let rec: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(rec["lambda"], 1.0);
    let hist = rec["history"].as_array().unwrap();
    let last = &hist[hist.len() - 1];
    assert_eq!(last["theta"], 0.0);
    assert!(last["x"][0].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn flow_records_one_per_line() {
    let o = run(&["flow", "--example", "decay"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let last: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(last["t"], 2.0);
    assert!((last["x"][0].as_f64().unwrap() - (-2.0f64).exp()).abs() < 1e-8);
}

#[test]
fn every_example_is_runnable_by_name() {
    let list = run(&["examples"]);
    for name in stdout(&list).lines() {
        let o = run(&["degree", "--example", name, "--quiet"]);
        assert_eq!(o.status.code(), Some(0), "{name}");
    }
}
