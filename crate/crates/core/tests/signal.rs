mod common;

use chromaqt::signal::{annotate_beats, central_beat, detect_r_peaks, DetectorParams};

/// Matches detections to truth within a tolerance; returns (tp, fp, fn).
fn match_peaks(found: &[usize], truth: &[usize], tol: usize) -> (usize, usize, usize) {
    let mut used = vec![false; truth.len()];
    let mut tp = 0;
    for &f in found {
        if let Some(j) = (0..truth.len()).find(|&j| !used[j] && f.abs_diff(truth[j]) <= tol) {
            used[j] = true;
            tp += 1;
        }
    }
    (tp, found.len() - tp, truth.len() - tp)
}

#[test]
fn detector_recall_and_precision_on_noiseless_corpus() {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for lr in common::noiseless_corpus(100, 31) {
        let found = detect_r_peaks(&lr.record, &DetectorParams::default()).unwrap();
        let truth = lr.record.known_r_peaks.as_ref().unwrap();
        // 10 ms at 500 Hz
        let (a, b, c) = match_peaks(&found, truth, 5);
        tp += a;
        fp += b;
        fneg += c;
    }
    let recall = tp as f64 / (tp + fneg) as f64;
    let precision = tp as f64 / (tp + fp) as f64;
    assert!(recall >= 0.99, "recall {recall}");
    assert!(precision >= 0.99, "precision {precision}");
}

#[test]
fn beats_anchor_to_record_qt_and_central_beat_is_inside() {
    for lr in common::noiseless_corpus(20, 32) {
        let r = &lr.record;
        let peaks = detect_r_peaks(r, &DetectorParams::default()).unwrap();
        let beats = annotate_beats(r, &peaks, 40.0).unwrap();
        assert!(!beats.is_empty());
        let qt_samples = r.qt_ms * r.sample_rate_hz / 1000.0;
        for b in &beats {
            assert!(b.qrs_onset_index < b.r_peak_index && b.qt_end_index < r.samples.len());
            assert!(((b.qt_end_index - b.qrs_onset_index) as f64 - qt_samples).abs() <= 1.0);
        }
        let c = central_beat(r, &beats).unwrap();
        assert!(beats.contains(c));
    }
}

#[test]
fn ground_truth_passthrough() {
    let lr = &common::corpus(1, 33)[0];
    let params = DetectorParams {
        trust_ground_truth: true,
        ..DetectorParams::default()
    };
    assert_eq!(
        &detect_r_peaks(&lr.record, &params).unwrap(),
        lr.record.known_r_peaks.as_ref().unwrap()
    );
}
