use std::path::Path;
use std::process::{Command, Output};

fn pqfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqfl")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL_RSA: &str = r#"{"n_clients":4,"rounds":2,"crypto_suite":"rsa_toy"}"#;

#[test]
fn run_prints_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "c.json", r#"{"n_clients":3,"rounds":2,"crypto_suite":"plaintext"}"#);
    let out = pqfl(&["run", "--config", &c]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.starts_with("round,"), "{stdout}");
    assert!(stdout.contains("# final accuracy="));
}

#[test]
fn bad_configs_exit_nonzero_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    for (body, field) in [
        (r#"{"n_clients":3,"rounds":2,"crypto_suite":"rot13"}"#, "crypto_suite"),
        (r#"{"n_clients":3,"crypto_suite":"pqc"}"#, "rounds"),
        (r#"{"n_clients":3,"rounds":2,"crypto_suite":"pqc","kem_rank":9}"#, "kem_rank"),
        (r#"{"n_clients":3,"rounds":2,"crypto_suite":"pqc","colour":1}"#, "colour"),
    ] {
        let c = config(dir.path(), "bad.json", body);
        let out = pqfl(&["run", "--config", &c]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        let err = text(&out.stderr);
        assert!(err.starts_with("error:") && err.contains(field), "{body}: {err}");
        assert!(out.stdout.is_empty());
    }
    let out = pqfl(&["run", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn harvest_and_inspect_read_a_run_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "rsa.json", SMALL_RSA);
    let t = dir.path().join("t.bin");
    let t = t.to_str().unwrap();
    let report = dir.path().join("report.md");
    let out = pqfl(&["run", "--config", &c, "--transcript", t, "--harvest", "--report", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(std::fs::read_to_string(&report).unwrap().contains("recovered 8/8 messages"));

    let h = pqfl(&["harvest", "--transcript", t, "--config", &c]);
    assert!(h.status.success());
    let stdout = text(&h.stdout);
    assert!(stdout.contains("recovered 8/8 messages"), "{stdout}");
    assert!(stdout.contains("factored"), "{stdout}");
    assert!(h.stderr.is_empty(), "{}", text(&h.stderr));

    let i = pqfl(&["inspect", "--transcript", t]);
    assert!(i.status.success());
    let stdout = text(&i.stdout);
    assert!(stdout.contains("3 rounds") && stdout.contains("upload/rsa") && stdout.contains("rsa-public-key"));
}

#[test]
fn hash_mismatch_warns_or_fails_when_strict() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "rsa.json", SMALL_RSA);
    let t = dir.path().join("t.bin");
    let t = t.to_str().unwrap();
    assert!(pqfl(&["run", "--config", &c, "--out", "/dev/null", "--transcript", t]).status.success());

    let lax = pqfl(&["harvest", "--transcript", t, "--config", &c, "--seed", "1"]);
    assert!(lax.status.success());
    assert!(text(&lax.stderr).contains("warning: transcript config hash"));

    let strict = pqfl(&["inspect", "--transcript", t, "--config", &c, "--seed", "1", "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(text(&strict.stderr).starts_with("error:"));
}

#[test]
fn corrupt_transcripts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("junk.bin");
    std::fs::write(&t, b"not a transcript").unwrap();
    let out = pqfl(&["harvest", "--transcript", t.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("magic"), "{}", text(&out.stderr));
}

#[test]
fn pqc_transcript_yields_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "pqc.json", r#"{"n_clients":3,"rounds":2,"crypto_suite":"pqc"}"#);
    let t = dir.path().join("t.bin");
    let t = t.to_str().unwrap();
    assert!(pqfl(&["run", "--config", &c, "--out", "/dev/null", "--transcript", t]).status.success());
    let out = pqfl(&["harvest", "--transcript", t]);
    let stdout = text(&out.stdout);
    assert!(stdout.contains("recovered 0/6 messages"), "{stdout}");
    assert!(stdout.contains("no applicable quantum attack"), "{stdout}");
}
