//! ECG records, R-peak detection and per-beat QT anchoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::median;

/// Internal sampling rate every record is resampled to at ingestion.
pub const PIPELINE_RATE_HZ: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal has no samples")]
    EmptySignal,
    #[error("no beats detected in record {record_id}")]
    NoBeatsDetected { record_id: String },
    #[error("sample index {index} outside record of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sample rate {rate_hz} Hz below the detector minimum of 100 Hz")]
    SampleRateTooLow { rate_hz: f64 },
    #[error("record {record_id}: {reason}")]
    InvalidRecord { record_id: String, reason: String },
}

/// A single-lead voltage time series with its ground-truth rate and QT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub record_id: String,
    /// Voltage in millivolts.
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub hr_bpm: f64,
    pub qt_ms: f64,
    /// Ground-truth R peaks, present for synthetic records.
    #[serde(default)]
    pub known_r_peaks: Option<Vec<usize>>,
    #[serde(default)]
    pub subject_id: Option<String>,
}

/// Accepted ranges checked by [`EcgRecord::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordLimits {
    pub hr_min_bpm: f64,
    pub hr_max_bpm: f64,
    /// Expected duration; `None` accepts any length.
    pub duration_s: Option<f64>,
}

impl Default for RecordLimits {
    fn default() -> Self {
        Self {
            hr_min_bpm: 20.0,
            hr_max_bpm: 220.0,
            duration_s: None,
        }
    }
}

impl EcgRecord {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// RR interval implied by the ground-truth heart rate.
    pub fn rr_ms(&self) -> f64 {
        60_000.0 / self.hr_bpm
    }

    pub fn validate(&self, limits: &RecordLimits) -> Result<(), SignalError> {
        let fail = |reason: String| {
            Err(SignalError::InvalidRecord {
                record_id: self.record_id.clone(),
                reason,
            })
        };
        if self.samples.is_empty() {
            return fail("no samples".into());
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return fail(format!("invalid sample rate {}", self.sample_rate_hz));
        }
        if let Some(bad) = self.samples.iter().position(|v| !v.is_finite()) {
            return fail(format!("non-finite sample at index {bad}"));
        }
        if !(self.hr_bpm >= limits.hr_min_bpm && self.hr_bpm <= limits.hr_max_bpm) {
            return fail(format!(
                "heart rate {} bpm outside [{}, {}]",
                self.hr_bpm, limits.hr_min_bpm, limits.hr_max_bpm
            ));
        }
        if !(self.qt_ms > 0.0 && self.qt_ms < self.rr_ms()) {
            return fail(format!(
                "QT {} ms not shorter than RR {:.1} ms",
                self.qt_ms,
                self.rr_ms()
            ));
        }
        if let Some(duration) = limits.duration_s {
            let expected = (duration * self.sample_rate_hz).round() as usize;
            if self.samples.len() != expected {
                return fail(format!(
                    "{} samples, expected {expected} for {duration} s",
                    self.samples.len()
                ));
            }
        }
        if let Some(peaks) = &self.known_r_peaks {
            if let Some(&p) = peaks.iter().find(|&&p| p >= self.samples.len()) {
                return fail(format!("known R peak {p} beyond record end"));
            }
        }
        Ok(())
    }

    /// Linearly resamples to `rate_hz`, rescaling known R-peak indices.
    pub fn resampled(&self, rate_hz: f64) -> EcgRecord {
        if (rate_hz - self.sample_rate_hz).abs() < 1e-9 {
            return self.clone();
        }
        let ratio = rate_hz / self.sample_rate_hz;
        let n_out = (self.samples.len() as f64 * ratio).round() as usize;
        let samples = resample_linear(&self.samples, self.sample_rate_hz, rate_hz, n_out);
        let known_r_peaks = self.known_r_peaks.as_ref().map(|peaks| {
            peaks
                .iter()
                .map(|&p| ((p as f64 * ratio).round() as usize).min(n_out.saturating_sub(1)))
                .collect()
        });
        EcgRecord {
            samples,
            sample_rate_hz: rate_hz,
            known_r_peaks,
            ..self.clone()
        }
    }
}

fn resample_linear(samples: &[f64], from_hz: f64, to_hz: f64, n_out: usize) -> Vec<f64> {
    let last = samples.len() - 1;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * from_hz / to_hz;
            let left = (pos.floor() as usize).min(last);
            let right = (left + 1).min(last);
            let frac = pos - left as f64;
            samples[left] + (samples[right] - samples[left]) * frac.clamp(0.0, 1.0)
        })
        .collect()
}

/// One beat anchored to the record-level QT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    pub r_peak_index: usize,
    pub qrs_onset_index: usize,
    pub qt_end_index: usize,
}

/// Settings for [`detect_r_peaks`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub refractory_ms: f64,
    /// Moving-average window applied to the squared first difference.
    pub smoothing_ms: f64,
    /// Threshold multiplier on the rolling median of the energy envelope.
    pub median_k: f64,
    /// Floor relative to the rolling envelope maximum; suppresses P and T waves.
    pub relative_floor: f64,
    /// Width of the rolling statistics window.
    pub window_s: f64,
    /// Return `known_r_peaks` verbatim when present.
    pub trust_ground_truth: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            refractory_ms: 250.0,
            smoothing_ms: 40.0,
            median_k: 3.0,
            relative_floor: 0.3,
            window_s: 2.0,
            trust_ground_truth: false,
        }
    }
}

/// Detects R peaks with a smoothed derivative-energy envelope and an adaptive
/// threshold, then snaps each detection to the local signal maximum.
pub fn detect_r_peaks(
    record: &EcgRecord,
    params: &DetectorParams,
) -> Result<Vec<usize>, SignalError> {
    let x = &record.samples;
    if x.is_empty() {
        return Err(SignalError::EmptySignal);
    }
    if params.trust_ground_truth {
        if let Some(peaks) = &record.known_r_peaks {
            return Ok(peaks.clone());
        }
    }
    let fs = record.sample_rate_hz;
    if fs < 100.0 {
        return Err(SignalError::SampleRateTooLow { rate_hz: fs });
    }
    let none = || SignalError::NoBeatsDetected {
        record_id: record.record_id.clone(),
    };
    let n = x.len();
    let ms = |v: f64| ((v * fs / 1000.0).round() as usize).max(1);

    let mut energy = vec![0.0; n];
    for i in 1..n {
        let d = x[i] - x[i - 1];
        energy[i] = d * d;
    }
    let envelope = moving_average(&energy, ms(params.smoothing_ms));
    if envelope.iter().all(|&e| e <= 0.0) {
        return Err(none());
    }

    let threshold = rolling_threshold(&envelope, fs, params);
    let refractory = ms(params.refractory_ms);
    let search = ms(60.0);

    // (peak index, envelope height) of accepted detections
    let mut accepted: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        if envelope[i] <= threshold[i] {
            i += 1;
            continue;
        }
        let start = i;
        let mut height = 0.0f64;
        while i < n && envelope[i] > threshold[i] {
            height = height.max(envelope[i]);
            i += 1;
        }
        let lo = start.saturating_sub(search);
        let hi = (i + search).min(n);
        let peak = (lo..hi)
            .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)))
            .expect("non-empty search range");
        match accepted.last_mut() {
            Some(last) if peak <= last.0 => {}
            Some(last) if peak - last.0 < refractory => {
                if height > last.1 {
                    *last = (peak, height);
                }
            }
            _ => accepted.push((peak, height)),
        }
    }
    if accepted.is_empty() {
        return Err(none());
    }
    Ok(accepted.into_iter().map(|(p, _)| p).collect())
}

fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let n = values.len();
    let half = width / 2;
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Piecewise-constant adaptive threshold evaluated on 250 ms blocks.
fn rolling_threshold(envelope: &[f64], fs: f64, params: &DetectorParams) -> Vec<f64> {
    let n = envelope.len();
    let block = ((0.25 * fs).round() as usize).max(1);
    let half_window = ((params.window_s * fs / 2.0).round() as usize).max(block);
    let mut threshold = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let center = (start + end) / 2;
        let lo = center.saturating_sub(half_window);
        let hi = (center + half_window).min(n);
        let window = &envelope[lo..hi];
        let med = median(window).unwrap_or(0.0);
        let max = window.iter().copied().fold(0.0, f64::max);
        let t = (params.median_k * med).max(params.relative_floor * max);
        threshold[start..end].fill(t);
        start = end;
    }
    threshold
}

/// Anchors the record-level QT to each R peak. Beats whose QT window would
/// leave the record are dropped.
pub fn annotate_beats(
    record: &EcgRecord,
    r_peaks: &[usize],
    qrs_offset_ms: f64,
) -> Result<Vec<BeatAnnotation>, SignalError> {
    let len = record.samples.len();
    if let Some(&bad) = r_peaks.iter().find(|&&p| p >= len) {
        return Err(SignalError::IndexOutOfRange { index: bad, len });
    }
    let fs = record.sample_rate_hz;
    let offset = (qrs_offset_ms * fs / 1000.0).round() as usize;
    let qt = (record.qt_ms * fs / 1000.0).round() as usize;
    Ok(r_peaks
        .iter()
        .filter_map(|&r| {
            let onset = r.checked_sub(offset)?;
            let end = onset + qt;
            (end < len && end > r).then_some(BeatAnnotation {
                r_peak_index: r,
                qrs_onset_index: onset,
                qt_end_index: end,
            })
        })
        .collect())
}

/// Beat window relative to QRS onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatWindow {
    pub pre_ms: f64,
    pub post_ms: f64,
}

impl Default for BeatWindow {
    fn default() -> Self {
        Self {
            pre_ms: 150.0,
            post_ms: 850.0,
        }
    }
}

impl BeatWindow {
    pub fn total_ms(&self) -> f64 {
        self.pre_ms + self.post_ms
    }

    pub fn len_samples(&self, fs: f64) -> usize {
        (self.total_ms() * fs / 1000.0).round() as usize
    }

    pub fn pre_samples(&self, fs: f64) -> usize {
        (self.pre_ms * fs / 1000.0).round() as usize
    }
}

/// Fixed-length voltage segment around a beat, zero-padded at record edges.
pub fn slice_beat_window(
    record: &EcgRecord,
    beat: &BeatAnnotation,
    window: &BeatWindow,
) -> Vec<f64> {
    let fs = record.sample_rate_hz;
    let len = window.len_samples(fs);
    let start = beat.qrs_onset_index as i64 - window.pre_samples(fs) as i64;
    (0..len as i64)
        .map(|k| {
            let idx = start + k;
            if idx >= 0 && (idx as usize) < record.samples.len() {
                record.samples[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// The beat whose R peak is nearest the record midpoint.
pub fn central_beat<'a>(
    record: &EcgRecord,
    beats: &'a [BeatAnnotation],
) -> Option<&'a BeatAnnotation> {
    let mid = record.samples.len() / 2;
    beats.iter().min_by_key(|b| b.r_peak_index.abs_diff(mid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(samples: Vec<f64>, qt_ms: f64) -> EcgRecord {
        EcgRecord {
            record_id: "r".into(),
            samples,
            sample_rate_hz: 500.0,
            hr_bpm: 60.0,
            qt_ms,
            known_r_peaks: None,
            subject_id: None,
        }
    }

    #[test]
    fn flat_signal_has_no_beats() {
        let rec = record(vec![0.0; 5000], 400.0);
        assert_eq!(
            detect_r_peaks(&rec, &DetectorParams::default()),
            Err(SignalError::NoBeatsDetected {
                record_id: "r".into()
            })
        );
    }

    #[test]
    fn empty_signal_is_rejected() {
        let rec = record(vec![], 400.0);
        assert_eq!(
            detect_r_peaks(&rec, &DetectorParams::default()),
            Err(SignalError::EmptySignal)
        );
    }

    #[test]
    fn trusted_ground_truth_passes_through() {
        let mut rec = record(vec![0.0; 5000], 400.0);
        rec.known_r_peaks = Some(vec![10, 600, 1200]);
        let params = DetectorParams {
            trust_ground_truth: true,
            ..Default::default()
        };
        assert_eq!(detect_r_peaks(&rec, &params).unwrap(), vec![10, 600, 1200]);
    }

    #[test]
    fn annotate_hand_example() {
        let rec = record(vec![0.0; 5000], 400.0);
        let beats = annotate_beats(&rec, &[500], 40.0).unwrap();
        assert_eq!(
            beats,
            vec![BeatAnnotation {
                r_peak_index: 500,
                qrs_onset_index: 480,
                qt_end_index: 680
            }]
        );
        let zero = annotate_beats(&rec, &[500], 0.0).unwrap();
        assert_eq!(zero[0].qrs_onset_index, 500);
    }

    #[test]
    fn annotate_drops_truncated_beats() {
        let rec = record(vec![0.0; 5000], 400.0);
        let beats = annotate_beats(&rec, &[500, 1500, 4900], 40.0).unwrap();
        assert_eq!(beats.len(), 2);
        assert!(beats.iter().all(|b| b.qt_end_index < 5000));
        let spans: Vec<_> = beats
            .iter()
            .map(|b| b.qt_end_index - b.qrs_onset_index)
            .collect();
        assert!(spans.iter().all(|&s| s == spans[0]));
    }

    #[test]
    fn annotate_rejects_out_of_range() {
        let rec = record(vec![0.0; 100], 100.0);
        assert_eq!(
            annotate_beats(&rec, &[100], 40.0),
            Err(SignalError::IndexOutOfRange {
                index: 100,
                len: 100
            })
        );
    }

    #[test]
    fn window_lengths_and_padding() {
        let rec = record((0..5000).map(|i| i as f64).collect(), 400.0);
        let w = BeatWindow::default();
        let edge = BeatAnnotation {
            r_peak_index: 30,
            qrs_onset_index: 10,
            qt_end_index: 210,
        };
        let seg = slice_beat_window(&rec, &edge, &w);
        assert_eq!(seg.len(), 500);
        // 75 pre samples requested, only 10 available
        assert!(seg[..65].iter().all(|&v| v == 0.0));
        assert_eq!(seg[65], 0.0);
        assert_eq!(seg[66], 1.0);
        let a = BeatAnnotation {
            r_peak_index: 1000,
            qrs_onset_index: 980,
            qt_end_index: 1180,
        };
        let b = BeatAnnotation {
            r_peak_index: 3000,
            qrs_onset_index: 2980,
            qt_end_index: 3180,
        };
        assert_eq!(
            slice_beat_window(&rec, &a, &w).len(),
            slice_beat_window(&rec, &b, &w).len()
        );
    }

    #[test]
    fn resampling_rescales_length_and_peaks() {
        let mut rec = record((0..2500).map(|i| (i as f64 * 0.01).sin()).collect(), 400.0);
        rec.sample_rate_hz = 250.0;
        rec.known_r_peaks = Some(vec![100, 350]);
        let out = rec.resampled(500.0);
        assert_eq!(out.samples.len(), 5000);
        assert_eq!(out.known_r_peaks, Some(vec![200, 700]));
        assert!((out.samples[200] - rec.samples[100]).abs() < 1e-12);
    }

    #[test]
    fn validation_guards() {
        let mut rec = record(vec![0.1; 5000], 1200.0);
        assert!(rec.validate(&RecordLimits::default()).is_err());
        rec.qt_ms = 400.0;
        assert!(rec.validate(&RecordLimits::default()).is_ok());
        rec.hr_bpm = 250.0;
        assert!(rec.validate(&RecordLimits::default()).is_err());
    }

    proptest! {
        #[test]
        fn detector_output_respects_refractory(
            samples in proptest::collection::vec(-2.0f64..2.0, 200..3000)
        ) {
            let rec = record(samples, 300.0);
            let params = DetectorParams::default();
            if let Ok(peaks) = detect_r_peaks(&rec, &params) {
                let refractory = (params.refractory_ms * 500.0 / 1000.0).round() as usize;
                for pair in peaks.windows(2) {
                    prop_assert!(pair[1] > pair[0]);
                    prop_assert!(pair[1] - pair[0] >= refractory);
                }
            }
        }

        #[test]
        fn window_length_is_position_independent(onset in 0usize..5000) {
            let rec = record(vec![1.0; 5000], 300.0);
            let beat = BeatAnnotation { r_peak_index: onset, qrs_onset_index: onset, qt_end_index: onset };
            prop_assert_eq!(slice_beat_window(&rec, &beat, &BeatWindow::default()).len(), 500);
        }
    }
}
