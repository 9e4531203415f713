use std::path::Path;
use std::process::{Command, Output};

fn rotdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotdyn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rho_n_of_identity_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = rotdyn(&[
        "rho-n",
        "--map",
        "identity",
        "--n",
        "5",
        "--point",
        "0.3,0.0",
        "--out",
        out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("rho_n = 0\n"), "{}", stdout(&o));
    for f in ["record.jsonl", "run-info.json", "intervals.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn schema_errors_exit_2_with_a_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"schema":"rotdyn-config/1","map":{"family":"identity"},"operation":{"rho-n":{"point":[0,0],"n":5}},"seed":1,"extra":true}"#,
    )
    .unwrap();
    let o = rotdyn(&["--config", cfg.to_str().unwrap(), "rho-n", "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at `"), "{}", stderr(&o));

    let o = rotdyn(&["rho-n", "--map", "no-such-map"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at `map`"), "{}", stderr(&o));

    let o = rotdyn(&[
        "rho-loc",
        "--map",
        "rotation",
        "--shrink",
        "1.5",
        "--out",
        out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_must_match_subcommand() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance/c1-half.json");
    let o = rotdyn(&["--config", cfg.to_str().unwrap(), "rho-k"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at `operation`"), "{}", stderr(&o));
}

#[test]
fn refusals_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // no attracting curves: both ends of the rigid rotation are invariant
    let o = rotdyn(&["theorem-c", "--map", "rotation", "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn pinned_config_runs_checks_and_plots_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance/c1-quarter-half.json");
    let o = rotdyn(&[
        "--config",
        cfg.to_str().unwrap(),
        "rho-loc",
        "--out",
        out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));

    let rec = dir.path().join("record.jsonl");
    let o = rotdyn(&["check", rec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("ok     hausdorff"), "{}", stdout(&o));

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = rotdyn(&["plot", rec.to_str().unwrap(), "--out", out_arg(d)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let svg = std::fs::read(a.join("rho-loc-staircase.svg")).unwrap();
    assert_eq!(svg, std::fs::read(b.join("rho-loc-staircase.svg")).unwrap());
    assert!(svg.starts_with(b"<svg"));
}

#[test]
fn tampered_records_fail_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance/c1-half.json");
    let o = rotdyn(&[
        "--config",
        cfg.to_str().unwrap(),
        "rho-loc",
        "--out",
        out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rec = dir.path().join("record.jsonl");
    let text = std::fs::read_to_string(&rec).unwrap();
    // claim a looser expectation than the one that was checked
    let forged = text.replacen("\"tol\":0.001", "\"tol\":0.5", 1);
    assert_ne!(forged, text);
    std::fs::write(&rec, forged).unwrap();
    let o = rotdyn(&["check", rec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));
    assert!(stdout(&o).contains("MISMATCH"), "{}", stdout(&o));
}

#[test]
fn records_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for t in ["1", "4"] {
        let out = dir.path().join(t);
        let o = rotdyn(&[
            "--threads",
            t,
            "rho-k",
            "--map",
            "twist",
            "--nx",
            "16",
            "--ny",
            "16",
            "--horizon",
            "200",
            "--out",
            out_arg(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        records.push(std::fs::read_to_string(out.join("record.jsonl")).unwrap());
    }
    assert!(records[0] == records[1], "records differ");
}
