mod common;

use std::sync::Arc;

use common::{Mocks, DIGIT_ANSWER};
use semproj::gateway::{Gateway, UNKNOWN};
use semproj::{GuidingPrompt, Sample, TextLabel};

#[test]
fn golden_answers_parse_as_recorded() {
    let cases = common::label_golden();
    assert_eq!(cases.len(), 20);
    let bad = common::check_label_golden(&cases);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn parse_ok_tracks_unknown_slots() {
    for case in common::label_golden() {
        let prompt = GuidingPrompt::builtin(&case.prompt).unwrap();
        let id = semproj::SampleId::from_payload(case.answer.as_bytes());
        let label = TextLabel::from_answer(id, case.answer.clone(), &prompt, false).unwrap();
        assert_eq!(label.parse_ok, case.strict_error.is_none(), "{}", case.answer);
        assert_eq!(label.parse_ok, !label.slot_values.values().any(|v| v == UNKNOWN));
        // Lenient parsing is idempotent on the extracted values.
        let again = semproj::gateway::parse_label(&label.slot_values.values().cloned().collect::<Vec<_>>().join(" "), &prompt, false).unwrap();
        if label.parse_ok {
            assert_eq!(again, label.slot_values);
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn mock_classifier_round_trip_matches_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = common::load_images(&common::image_fixture(tmp.path(), 10, 5));
    let mocks = Mocks::for_dataset(&dataset, DIGIT_ANSWER, 8).await;
    let gw = Arc::new(Gateway::new(mocks.gateway(8)).unwrap());
    let prompt = GuidingPrompt::builtin("mnist_digits").unwrap();
    let refs: Vec<&Sample> = dataset.samples.iter().collect();
    let labels = gw.classify_batch(&refs, &prompt).await.unwrap();
    let agree = labels
        .iter()
        .zip(&dataset.samples)
        .filter(|(l, s)| l.slot_values.get("class") == s.truth_label.as_ref())
        .count();
    assert_eq!(agree, dataset.len());
}
