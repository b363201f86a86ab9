use std::path::PathBuf;

use pfikit::PfiModel;
use pfikit::pipeline::{self, AuditKind, PipelineConfig};

fn run(name: &str) -> pipeline::ResolutionReport {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    let cfg = PipelineConfig::from_path(&path).unwrap();
    pipeline::run_pipeline(&cfg, &PfiModel::default()).unwrap()
}

#[test]
fn arsenic_fixture_raises_four_flags() {
    let r = run("as_ingaas.json");
    let kinds: Vec<AuditKind> = r.flags.iter().map(|f| f.kind).collect();
    assert_eq!(
        kinds,
        vec![
            AuditKind::CompositionExceedsNominal,
            AuditKind::PredictedCountsExceedPeak,
            AuditKind::UnexpectedChargeStatePresent,
            AuditKind::CsrMismatch,
        ]
    );
    let c = r.composition.as_ref().unwrap();
    assert!((c.before["As"] - 0.465).abs() < 5e-4, "{}", c.before["As"]);
    assert!((c.after["As"] - 0.530).abs() < 5e-4, "{}", c.after["As"]);
    let check = &r.csr_checks[0];
    assert!((check.observed.value - 0.600).abs() < 1e-3);
}

#[test]
fn consistent_fixture_is_clean() {
    let r = run("consistent.json");
    assert!(r.flags.is_empty(), "{:?}", r.flags);
    assert!((r.field.field_vnm - 19.6).abs() < 0.4);
    let res = &r.resolutions[0];
    assert!((res.hidden_counts - 400.0).abs() < 1e-9);
    assert!((res.remainder_counts - 10000.0).abs() < 1e-9);
}

#[test]
fn anchor_ratio_arithmetic() {
    let r = run("r02.json");
    let res = &r.resolutions[0];
    assert!((res.hidden_counts - 250.0).abs() < 1e-9);
    assert!((res.remainder_counts - 700.0).abs() < 1e-9);
    assert!(r.flags.is_empty());
}
