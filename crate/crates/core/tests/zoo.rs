//! The trained default zoo against its committed accuracy fixture.

mod common;

use amga::zoo::{evaluate_accuracy, read_manifest};

#[test]
fn every_default_model_clears_085_and_matches_the_fixture() {
    let (dataset, zoo) = common::default_zoo();
    let fixture: serde_json::Value = serde_json::from_str(include_str!("fixtures/zoo_accuracy.json")).unwrap();
    let manifest = read_manifest(&common::zoo_dir()).unwrap();
    let val = dataset.validation();
    assert_eq!(zoo.len(), 6);
    for (m, entry) in zoo.iter().zip(&manifest.models) {
        let acc = evaluate_accuracy(m, &val.images, &val.labels).unwrap().value;
        assert!(acc >= 0.85, "{}: {acc}", m.name());
        assert_eq!(acc, m.clean_accuracy, "{}", m.name());
        assert_eq!(acc, entry.clean_accuracy, "{}", m.name());
        let pinned = fixture[m.name()].as_f64().unwrap();
        assert!((acc - pinned).abs() < 1e-9, "{}: measured {acc}, fixture {pinned}", m.name());
    }
}
