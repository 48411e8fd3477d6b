//! QT-vs-heart-rate risk boundary.
//!
//! The boundary is a piecewise-linear polyline loaded from data. Points on or
//! above it are labeled [`RiskLabel::AtRisk`]; points strictly below are
//! [`RiskLabel::NoRisk`].

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::EcgRecord;
use crate::util::canon_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NomogramError {
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("non-positive input: qt={qt_ms} ms, hr={hr_bpm} bpm")]
    NonPositiveInput { qt_ms: f64, hr_bpm: f64 },
    #[error("records missing QT/HR ground truth: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),
    #[error("boundary file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLabel {
    NoRisk,
    AtRisk,
}

impl RiskLabel {
    pub fn is_positive(self) -> bool {
        self == RiskLabel::AtRisk
    }

    /// Class index used by the episodic learner (NoRisk = 0, AtRisk = 1).
    pub fn class_index(self) -> usize {
        match self {
            RiskLabel::NoRisk => 0,
            RiskLabel::AtRisk => 1,
        }
    }

    pub fn from_class_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(RiskLabel::NoRisk),
            1 => Some(RiskLabel::AtRisk),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::NoRisk => "no_risk",
            RiskLabel::AtRisk => "at_risk",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RiskLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "at_risk" | "AtRisk" | "1" => Ok(RiskLabel::AtRisk),
            "no_risk" | "NoRisk" | "0" => Ok(RiskLabel::NoRisk),
            other => Err(format!("unknown risk label {other:?}")),
        }
    }
}

/// Where a heart rate fell relative to the breakpoint range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clamp {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLookup {
    pub qt_ms: f64,
    pub clamped: Option<Clamp>,
}

/// Piecewise-linear QT threshold as a function of heart rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundary", into = "RawBoundary")]
pub struct NomogramBoundary {
    breakpoints: Vec<(f64, f64)>,
    name: String,
    source: String,
    allow_rising: bool,
}

#[derive(Serialize, Deserialize)]
struct RawBoundary {
    breakpoints: Vec<(f64, f64)>,
    name: String,
    source: String,
    #[serde(default)]
    allow_rising: bool,
}

impl TryFrom<RawBoundary> for NomogramBoundary {
    type Error = NomogramError;

    fn try_from(raw: RawBoundary) -> Result<Self, Self::Error> {
        NomogramBoundary::with_options(raw.breakpoints, raw.name, raw.source, raw.allow_rising)
    }
}

impl From<NomogramBoundary> for RawBoundary {
    fn from(b: NomogramBoundary) -> Self {
        RawBoundary {
            breakpoints: b.breakpoints,
            name: b.name,
            source: b.source,
            allow_rising: b.allow_rising,
        }
    }
}

/// Optional sidecar JSON next to a boundary CSV.
#[derive(Debug, Default, Deserialize)]
struct Sidecar {
    name: Option<String>,
    source: Option<String>,
    #[serde(default)]
    allow_rising: bool,
}

impl NomogramBoundary {
    pub fn new(
        breakpoints: Vec<(f64, f64)>,
        name: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self, NomogramError> {
        Self::with_options(breakpoints, name, source, false)
    }

    /// `allow_rising` skips the non-increasing QT check.
    pub fn with_options(
        breakpoints: Vec<(f64, f64)>,
        name: impl Into<String>,
        source: impl Into<String>,
        allow_rising: bool,
    ) -> Result<Self, NomogramError> {
        let invalid = |m: String| Err(NomogramError::InvalidBoundary(m));
        if breakpoints.len() < 2 {
            return invalid(format!(
                "need at least 2 breakpoints, got {}",
                breakpoints.len()
            ));
        }
        for &(hr, qt) in &breakpoints {
            if !(hr.is_finite() && qt.is_finite() && hr > 0.0 && qt > 0.0) {
                return invalid(format!(
                    "breakpoint ({hr}, {qt}) must be positive and finite"
                ));
            }
        }
        for pair in breakpoints.windows(2) {
            let ((h0, q0), (h1, q1)) = (pair[0], pair[1]);
            if h1 <= h0 {
                return invalid(format!(
                    "heart rates not strictly increasing at {h0} -> {h1}"
                ));
            }
            if !allow_rising && q1 > q0 {
                return invalid(format!(
                    "QT rises from {q0} to {q1} between {h0} and {h1} bpm"
                ));
            }
        }
        Ok(Self {
            breakpoints,
            name: name.into(),
            source: source.into(),
            allow_rising,
        })
    }

    /// Test fixture `[(40,510),(60,460),(100,400)]`; not a clinical boundary.
    pub fn fixture() -> Self {
        Self::new(
            vec![(40.0, 510.0), (60.0, 460.0), (100.0, 400.0)],
            "fixture",
            "test fixture, not a clinical boundary",
        )
        .expect("fixture is valid")
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn hr_range(&self) -> (f64, f64) {
        (
            self.breakpoints[0].0,
            self.breakpoints[self.breakpoints.len() - 1].0,
        )
    }

    /// Interpolated threshold with clamp information.
    pub fn lookup(&self, hr_bpm: f64) -> BoundaryLookup {
        let bp = &self.breakpoints;
        let (first, last) = (bp[0], bp[bp.len() - 1]);
        if hr_bpm < first.0 {
            return BoundaryLookup {
                qt_ms: first.1,
                clamped: Some(Clamp::Below),
            };
        }
        if hr_bpm > last.0 {
            return BoundaryLookup {
                qt_ms: last.1,
                clamped: Some(Clamp::Above),
            };
        }
        // first segment whose right end is at or beyond hr
        let seg = bp
            .windows(2)
            .position(|w| hr_bpm <= w[1].0)
            .unwrap_or(bp.len() - 2);
        let ((h0, q0), (h1, q1)) = (bp[seg], bp[seg + 1]);
        let qt_ms = if hr_bpm == h1 {
            q1
        } else {
            q0 + (q1 - q0) * (hr_bpm - h0) / (h1 - h0)
        };
        BoundaryLookup {
            qt_ms,
            clamped: None,
        }
    }

    /// Threshold QT at `hr_bpm`. Out-of-range rates clamp to the nearest end
    /// and log a warning.
    pub fn qt_at(&self, hr_bpm: f64) -> f64 {
        let lookup = self.lookup(hr_bpm);
        if lookup.clamped.is_some() {
            let (lo, hi) = self.hr_range();
            log::warn!(
                "heart rate {hr_bpm} bpm outside boundary '{}' range [{lo}, {hi}]; clamped",
                self.name
            );
        }
        lookup.qt_ms
    }

    /// AtRisk iff `qt_ms` is on or above the boundary at `hr_bpm`.
    pub fn classify(&self, qt_ms: f64, hr_bpm: f64) -> Result<RiskLabel, NomogramError> {
        if !(qt_ms > 0.0 && hr_bpm > 0.0) {
            return Err(NomogramError::NonPositiveInput { qt_ms, hr_bpm });
        }
        Ok(if is_at_or_above(qt_ms, self.qt_at(hr_bpm)) {
            RiskLabel::AtRisk
        } else {
            RiskLabel::NoRisk
        })
    }

    /// Canonical text for provenance hashes.
    pub fn canonical(&self) -> String {
        let pts: Vec<String> = self
            .breakpoints
            .iter()
            .map(|(h, q)| format!("{}:{}", canon_f64(*h), canon_f64(*q)))
            .collect();
        format!("boundary={}", pts.join(","))
    }

    /// Reads `hr_bpm,qt_ms` rows.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        name: impl Into<String>,
        source: impl Into<String>,
        allow_rising: bool,
    ) -> Result<Self, NomogramError> {
        #[derive(Deserialize)]
        struct Row {
            hr_bpm: f64,
            qt_ms: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| NomogramError::InvalidBoundary(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["hr_bpm", "qt_ms"] {
            return Err(NomogramError::InvalidBoundary(format!(
                "expected header hr_bpm,qt_ms, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row =
                row.map_err(|e| NomogramError::InvalidBoundary(format!("row {}: {e}", i + 1)))?;
            points.push((row.hr_bpm, row.qt_ms));
        }
        Self::with_options(points, name, source, allow_rising)
    }

    /// Loads a boundary CSV. `name`/`source` come from a sidecar
    /// `<file>.json` when present, otherwise from the file stem.
    pub fn load(path: &Path) -> Result<Self, NomogramError> {
        let file_err = |message: String| NomogramError::File {
            path: path.display().to_string(),
            message,
        };
        let file = std::fs::File::open(path).map_err(|e| file_err(e.to_string()))?;
        let sidecar_path = path.with_extension("json");
        let sidecar: Sidecar = if sidecar_path.exists() {
            let text =
                std::fs::read_to_string(&sidecar_path).map_err(|e| file_err(e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| file_err(format!("sidecar: {e}")))?
        } else {
            Sidecar::default()
        };
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_reader(
            file,
            sidecar.name.unwrap_or(stem),
            sidecar.source.unwrap_or_else(|| path.display().to_string()),
            sidecar.allow_rising,
        )
        .map_err(|e| file_err(e.to_string()))
    }
}

/// Tie rule: points exactly on the line count as at risk.
#[inline]
fn is_at_or_above(qt_ms: f64, threshold_ms: f64) -> bool {
    qt_ms >= threshold_ms
}

/// A record paired with its boundary-derived label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub record: EcgRecord,
    pub label: RiskLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<LabeledRecord>,
    pub positive_count: usize,
    pub negative_count: usize,
}

/// Labels every record against `boundary`.
pub fn label_dataset(
    records: Vec<EcgRecord>,
    boundary: &NomogramBoundary,
) -> Result<LabeledDataset, NomogramError> {
    let missing: Vec<String> = records
        .iter()
        .filter(|r| {
            !(r.qt_ms.is_finite() && r.qt_ms > 0.0 && r.hr_bpm.is_finite() && r.hr_bpm > 0.0)
        })
        .map(|r| r.record_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(NomogramError::MissingGroundTruth(missing));
    }
    let mut positive_count = 0;
    let mut labeled = Vec::with_capacity(records.len());
    for record in records {
        let label = boundary.classify(record.qt_ms, record.hr_bpm)?;
        positive_count += label.is_positive() as usize;
        labeled.push(LabeledRecord { record, label });
    }
    let negative_count = labeled.len() - positive_count;
    Ok(LabeledDataset {
        records: labeled,
        positive_count,
        negative_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        let b = NomogramBoundary::fixture();
        assert_eq!(b.qt_at(60.0), 460.0);
        assert_eq!(b.qt_at(50.0), 485.0);
        assert_eq!(b.qt_at(110.0), 400.0);
        assert_eq!(b.lookup(110.0).clamped, Some(Clamp::Above));
        assert_eq!(b.lookup(30.0).qt_ms, 510.0);
        assert_eq!(b.lookup(80.0).clamped, None);
    }

    #[test]
    fn classify_examples() {
        let b = NomogramBoundary::fixture();
        assert_eq!(b.classify(470.0, 60.0).unwrap(), RiskLabel::AtRisk);
        assert_eq!(b.classify(460.0, 60.0).unwrap(), RiskLabel::AtRisk);
        assert_eq!(b.classify(480.0, 50.0).unwrap(), RiskLabel::NoRisk);
        assert!(b.classify(0.0, 60.0).is_err());
    }

    #[test]
    fn invalid_boundaries() {
        assert!(NomogramBoundary::new(vec![(60.0, 400.0)], "", "").is_err());
        assert!(NomogramBoundary::new(vec![(60.0, 400.0), (60.0, 390.0)], "", "").is_err());
        assert!(NomogramBoundary::new(vec![(60.0, 400.0), (80.0, 420.0)], "", "").is_err());
        assert!(
            NomogramBoundary::with_options(vec![(60.0, 400.0), (80.0, 420.0)], "", "", true)
                .is_ok()
        );
    }

    #[test]
    fn csv_loading() {
        let text = "hr_bpm,qt_ms\n40,510\n60,460\n100,400\n";
        let b = NomogramBoundary::from_csv_reader(text.as_bytes(), "x", "y", false).unwrap();
        assert_eq!(
            b,
            NomogramBoundary::with_options(b.breakpoints().to_vec(), "x", "y", false).unwrap()
        );
        assert_eq!(b.qt_at(50.0), 485.0);
        assert!(
            NomogramBoundary::from_csv_reader("qt,hr\n1,2\n".as_bytes(), "x", "y", false).is_err()
        );
    }

    #[test]
    fn serde_validates() {
        let bad = r#"{"breakpoints":[[60,400],[50,300]],"name":"n","source":"s"}"#;
        assert!(serde_json::from_str::<NomogramBoundary>(bad).is_err());
        let b = NomogramBoundary::fixture();
        let back: NomogramBoundary =
            serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn label_counts() {
        let b = NomogramBoundary::fixture();
        let empty = label_dataset(vec![], &b).unwrap();
        assert_eq!((empty.positive_count, empty.negative_count), (0, 0));
        let rec = |id: &str, qt: f64| EcgRecord {
            record_id: id.into(),
            samples: vec![0.0],
            sample_rate_hz: 500.0,
            hr_bpm: 60.0,
            qt_ms: qt,
            known_r_peaks: None,
            subject_id: None,
        };
        let out =
            label_dataset(vec![rec("a", 470.0), rec("b", 400.0), rec("c", 460.0)], &b).unwrap();
        assert_eq!((out.positive_count, out.negative_count), (2, 1));
        let err = label_dataset(vec![rec("a", f64::NAN), rec("b", 400.0)], &b).unwrap_err();
        assert_eq!(err, NomogramError::MissingGroundTruth(vec!["a".into()]));
    }

    proptest! {
        #[test]
        fn classify_monotone_in_qt(hr in 20.0f64..140.0, qt in 200.0f64..700.0, dq in 0.0f64..200.0) {
            let b = NomogramBoundary::fixture();
            let lo = b.classify(qt, hr).unwrap();
            let hi = b.classify(qt + dq, hr).unwrap();
            prop_assert!(!(lo == RiskLabel::AtRisk && hi == RiskLabel::NoRisk));
        }

        #[test]
        fn threshold_is_continuous(hr in 30.0f64..110.0, step in 1e-6f64..0.5) {
            let b = NomogramBoundary::fixture();
            // steepest fixture segment has slope 2.5 ms/bpm
            prop_assert!((b.qt_at(hr + step) - b.qt_at(hr)).abs() <= 2.5 * step + 1e-9);
        }
    }
}
