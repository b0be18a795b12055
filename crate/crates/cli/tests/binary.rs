use std::net::TcpListener;
use std::process::Command;

fn narrascope() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_narrascope"));
    c.env("STUB_MODE", "1");
    c
}

#[test]
fn demo_reports_json_and_succeeds() {
    let out = narrascope().args(["demo", "--json"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert!(report["views"].as_u64().unwrap() >= 6);
}

#[test]
fn ingest_reports_schema_or_the_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("crime.csv");
    std::fs::write(&good, "borough,year,crime_rate\nCamden,2019,10.5\nHackney,2019,9.1\n").unwrap();
    let out = narrascope().args(["ingest", good.to_str().unwrap(), "--json"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"]["table_name"], "crime");
    assert_eq!(v["schema"]["row_count"], 2);
    assert!(v["index_entries"].as_u64().unwrap() > 0);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3\n").unwrap();
    let out = narrascope().args(["ingest", bad.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("MalformedRow"));
}

#[test]
fn index_rebuild_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/travel_destinations.csv");
    let mut prints = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = narrascope().args(["index", "rebuild", csv, "--out", out_dir.to_str().unwrap()]).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(std::fs::read_to_string(out_dir.join("index.jsonl")).unwrap().lines().count() > 100);
        prints.push(std::fs::read_to_string(out_dir.join("index.fingerprint")).unwrap());
    }
    assert_eq!(prints[0], prints[1]);
}

#[test]
fn serve_fails_on_a_taken_port() {
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let out = narrascope().args(["serve", "--port", &port]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("binding"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[gateway]\nstub_mode = false\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_narrascope")).args(["--config", cfg.to_str().unwrap(), "demo"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("api_base"));
}
