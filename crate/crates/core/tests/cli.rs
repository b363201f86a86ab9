use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn pfikit(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfikit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn curves_writes_one_file_per_species() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfikit(&["curves", "--species", "si_clusters.json", "--grid", "10:30:0.5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    for s in ["Si", "Si2", "Si3", "Si4"] {
        let text = std::fs::read_to_string(dir.path().join(format!("curve_{s}.csv"))).unwrap();
        assert!(text.starts_with("field_Vnm,f1,f2,f3,csr\n"));
        assert_eq!(text.lines().count(), 42);
    }
}

#[test]
fn curves_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = pfikit(&["curves", "--species", "Si2", "--grid", "12:24:0.25"], d.path());
        assert!(o.status.success());
    }
    let x = std::fs::read(a.path().join("curve_Si2.csv")).unwrap();
    let y = std::fs::read(b.path().join("curve_Si2.csv")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = pfikit(&["curves", "--species", "Si", "--dry-run"], &out);
    assert!(o.status.success());
    assert!(!out.exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(pfikit(&["curves"], p).status.code(), Some(2));
    let o = pfikit(&["curves", "--species", "Si", "--phi", "12"], p);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(pfikit(&["curves", "--species", "Si", "--zmax", "20"], p).status.code(), Some(2));
    assert_eq!(pfikit(&["curves", "--species", "Si", "--grid", "5:70:1"], p).status.code(), Some(2));
    assert_eq!(pfikit(&["nonsense"], p).status.code(), Some(2));

    let o = pfikit(&["fit-z", "--species", "Si3", "--target", "70"], p);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("achievable interval"));

    let peaks = p.join("degenerate.csv");
    std::fs::write(&peaks, "mz_Da,counts,assignments\n28,100,Si:1:28;Si2:2:56\n").unwrap();
    let o = pfikit(&["deconv", "--peaks", peaks.to_str().unwrap()], p);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resolve_reports_flags_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("as_ingaas.json");
    let o = pfikit(&["resolve", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("resolve_report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["flags"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("resolve_report.txt").exists());
}

#[test]
fn f50_and_field_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfikit(&["f50", "--species", "Si"], dir.path());
    assert!(o.status.success());
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f50_report.json")).unwrap()).unwrap();
    let f = r["results"]["Si"]["f50_Vnm"].as_f64().unwrap();
    assert!((f - 19.6).abs() < 0.4);

    let o = pfikit(&["field", "--species", "Si", "--csr", "0.5", "--sigma", "0.01"], dir.path());
    assert!(o.status.success());
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("field_report.json")).unwrap()).unwrap();
    assert!((r["result"]["field_vnm"].as_f64().unwrap() - f).abs() < 0.05);

    let o = pfikit(&["kellogg", "--f0", "20", "--voltage", "5000", "--v0", "4000"], dir.path());
    assert!(o.status.success());
}
