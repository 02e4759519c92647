use drivechar_core::cohortgen::{gen_cohort, load_cohort, write_cohort, CohortConfig};
use drivechar_core::evaluation::{run_experiment, ExperimentConfig, Variant, Workbench};
use drivechar_core::features::RoadScope;
use drivechar_core::models::ModelKind;
use drivechar_core::segmentation::SegmentConfig;
use drivechar_core::signals::Target;

fn small() -> CohortConfig {
    CohortConfig {
        n_drivers: 6,
        sessions_per_driver: vec![2, 1],
        seed: 9,
        ..Default::default()
    }
}

#[test]
fn features_survive_a_disk_round_trip() {
    let generated = gen_cohort(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cohort(&generated, dir.path()).unwrap();
    let loaded = load_cohort(dir.path(), None).unwrap();

    let a = Workbench::new(generated.cohort, &SegmentConfig::default()).unwrap();
    let b = Workbench::new(loaded, &SegmentConfig::default()).unwrap();
    for variant in Variant::ALL {
        for &scope in variant.road_scopes() {
            let fa = a.features(variant, scope, true).unwrap();
            let fb = b.features(variant, scope, true).unwrap();
            assert_eq!(fa.columns, fb.columns, "{variant} {scope:?}");
            let worst = (&fa.values - &fb.values).abs().max();
            assert!(worst < 1e-9, "{variant} {scope:?}: {worst}");
        }
    }
}

#[test]
fn evaluation_reports_one_prediction_per_driver() {
    let bench = Workbench::new(gen_cohort(&small()).unwrap().cohort, &SegmentConfig::default()).unwrap();
    let cfg = ExperimentConfig::new(
        vec![Target::TmtB, Target::Dsq(1)],
        Variant::Ii,
        RoadScope::Arterial,
        vec![ModelKind::Ridge, ModelKind::LogisticL2],
    );
    let report = run_experiment(&cfg, &bench).unwrap();
    assert!(!report.entries.is_empty());
    for entry in &report.entries {
        let ev = &entry.evaluation;
        assert_eq!(ev.predictions.len(), 6);
        assert_eq!(ev.folds.len(), 6);
        assert_eq!(entry.model.is_classifier(), ev.macro_f1.is_some());
    }
}
