//! Classification metrics, two-stage aggregation and result tables.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Representation;
use crate::fewshot::EpisodeRecord;

/// Query outcomes of one episode with `AtRisk` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u32,
    pub fp: u32,
    pub tn: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
}

impl ConfusionCounts {
    pub fn record(&mut self, predicted_positive: bool, actual_positive: bool) {
        match (predicted_positive, actual_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentReason {
    EmptyEpisode,
    NoActualPositives,
    NoActualNegatives,
    NoPredictedPositives,
    ZeroPrecisionAndSensitivity,
}

impl AbsentReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbsentReason::EmptyEpisode => "empty episode",
            AbsentReason::NoActualPositives => "no actual positives",
            AbsentReason::NoActualNegatives => "no actual negatives",
            AbsentReason::NoPredictedPositives => "no predicted positives",
            AbsentReason::ZeroPrecisionAndSensitivity => "precision and sensitivity both zero",
        }
    }
}

/// A ratio that is either defined or absent because its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricValue {
    Value(f64),
    Absent(AbsentReason),
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::Absent(_) => None,
        }
    }

    fn ratio(num: u32, den: u32, reason: AbsentReason) -> Self {
        if den == 0 {
            MetricValue::Absent(reason)
        } else {
            MetricValue::Value(num as f64 / den as f64)
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{v:.4}"),
            MetricValue::Absent(r) => write!(f, "absent ({})", r.as_str()),
        }
    }
}

/// Metric rows in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Accuracy,
    Sensitivity,
    Specificity,
    Precision,
    F1,
    Loss,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Accuracy,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Precision,
        Metric::F1,
        Metric::Loss,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Precision => "Precision",
            Metric::F1 => "F1-Score",
            Metric::Loss => "Loss (query NLL)",
        }
    }

    /// Ratios are shown as percentages; the loss is shown as is.
    pub fn is_percentage(self) -> bool {
        self != Metric::Loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub accuracy: MetricValue,
    pub sensitivity: MetricValue,
    pub specificity: MetricValue,
    pub precision: MetricValue,
    pub f1: MetricValue,
}

impl MetricRecord {
    pub fn get(&self, metric: Metric) -> Option<MetricValue> {
        Some(match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Precision => self.precision,
            Metric::F1 => self.f1,
            Metric::Loss => return None,
        })
    }
}

pub fn metrics_from_counts(c: &ConfusionCounts) -> MetricRecord {
    let accuracy = MetricValue::ratio(c.tp + c.tn, c.total(), AbsentReason::EmptyEpisode);
    let sensitivity = MetricValue::ratio(c.tp, c.tp + c.fn_, AbsentReason::NoActualPositives);
    let specificity = MetricValue::ratio(c.tn, c.tn + c.fp, AbsentReason::NoActualNegatives);
    let precision = MetricValue::ratio(c.tp, c.tp + c.fp, AbsentReason::NoPredictedPositives);
    let f1 = match (precision, sensitivity) {
        (MetricValue::Value(p), MetricValue::Value(s)) if p + s > 0.0 => {
            MetricValue::Value(2.0 * p * s / (p + s))
        }
        (MetricValue::Value(_), MetricValue::Value(_)) => {
            MetricValue::Absent(AbsentReason::ZeroPrecisionAndSensitivity)
        }
        (MetricValue::Absent(r), _) | (_, MetricValue::Absent(r)) => MetricValue::Absent(r),
    };
    MetricRecord {
        accuracy,
        sensitivity,
        specificity,
        precision,
        f1,
    }
}

/// Mean over the defined values, with the number excluded as absent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanValue {
    pub mean: Option<f64>,
    pub defined: usize,
    pub absent: usize,
}

impl MeanValue {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut defined, mut absent) = (0.0, 0, 0);
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    defined += 1;
                }
                None => absent += 1,
            }
        }
        MeanValue {
            mean: (defined > 0).then(|| sum / defined as f64),
            defined,
            absent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: MeanValue,
    pub sensitivity: MeanValue,
    pub specificity: MeanValue,
    pub precision: MeanValue,
    pub f1: MeanValue,
    pub loss: MeanValue,
}

impl MetricSummary {
    pub fn get(&self, metric: Metric) -> MeanValue {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Precision => self.precision,
            Metric::F1 => self.f1,
            Metric::Loss => self.loss,
        }
    }

    fn build(mut per_metric: impl FnMut(Metric) -> MeanValue) -> Self {
        MetricSummary {
            accuracy: per_metric(Metric::Accuracy),
            sensitivity: per_metric(Metric::Sensitivity),
            specificity: per_metric(Metric::Specificity),
            precision: per_metric(Metric::Precision),
            f1: per_metric(Metric::F1),
            loss: per_metric(Metric::Loss),
        }
    }

    /// First stage: mean over episodes.
    pub fn from_episodes(records: &[EpisodeRecord]) -> Self {
        let metrics: Vec<MetricRecord> = records
            .iter()
            .map(|r| metrics_from_counts(&r.counts))
            .collect();
        Self::build(|m| match m {
            Metric::Loss => MeanValue::of(records.iter().map(|r| Some(r.loss))),
            _ => MeanValue::of(
                metrics
                    .iter()
                    .map(|r| r.get(m).and_then(MetricValue::value)),
            ),
        })
    }

    /// Second stage: mean over per-fold means.
    pub fn from_folds(folds: &[MetricSummary]) -> Self {
        Self::build(|m| MeanValue::of(folds.iter().map(|f| f.get(m).mean)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningMode {
    OneShot,
    FewShot,
}

impl LearningMode {
    pub const ALL: [LearningMode; 2] = [LearningMode::FewShot, LearningMode::OneShot];

    pub fn k_shot(self) -> usize {
        match self {
            LearningMode::OneShot => 1,
            LearningMode::FewShot => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LearningMode::OneShot => "one-shot",
            LearningMode::FewShot => "few-shot",
        }
    }
}

impl fmt::Display for LearningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LearningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-shot" => Ok(LearningMode::OneShot),
            "few-shot" => Ok(LearningMode::FewShot),
            other => Err(format!(
                "unknown mode {other:?} (expected one-shot or few-shot)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub episodes: usize,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub mode: LearningMode,
    pub representation: Representation,
    pub folds: Vec<FoldResult>,
    pub mean: MetricSummary,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no folds to aggregate")]
    NoFolds,
    #[error("fold {fold} has {have} episodes, expected {expected}")]
    UnevenEpisodes {
        fold: usize,
        have: usize,
        expected: usize,
    },
    #[error("table for {mode} is missing representation {representation}")]
    MissingCell {
        mode: String,
        representation: String,
    },
}

/// Two-stage mean: episodes within each fold, then folds.
pub fn aggregate(
    mode: LearningMode,
    representation: Representation,
    folds: &[(usize, Vec<EpisodeRecord>)],
) -> Result<ExperimentCell, ReportError> {
    let expected = folds.first().ok_or(ReportError::NoFolds)?.1.len();
    let mut results = Vec::with_capacity(folds.len());
    for (fold, records) in folds {
        if records.len() != expected {
            return Err(ReportError::UnevenEpisodes {
                fold: *fold,
                have: records.len(),
                expected,
            });
        }
        results.push(FoldResult {
            fold: *fold,
            episodes: records.len(),
            summary: MetricSummary::from_episodes(records),
        });
    }
    let summaries: Vec<MetricSummary> = results.iter().map(|r| r.summary).collect();
    Ok(ExperimentCell {
        mode,
        representation,
        mean: MetricSummary::from_folds(&summaries),
        folds: results,
    })
}

fn cell_value(cell: &ExperimentCell, metric: Metric) -> String {
    match cell.get_display(metric) {
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_string(),
    }
}

impl ExperimentCell {
    /// Fold-averaged value as shown in tables: percent for ratios.
    pub fn get_display(&self, metric: Metric) -> Option<f64> {
        let v = self.mean.get(metric).mean?;
        Some(if metric.is_percentage() { v * 100.0 } else { v })
    }
}

fn ordered_cells<'a>(
    mode: LearningMode,
    cells: &'a [ExperimentCell],
) -> Result<Vec<&'a ExperimentCell>, ReportError> {
    Representation::ALL
        .iter()
        .map(|rep| {
            cells
                .iter()
                .find(|c| c.mode == mode && c.representation == *rep)
                .ok_or_else(|| ReportError::MissingCell {
                    mode: mode.to_string(),
                    representation: rep.to_string(),
                })
        })
        .collect()
}

pub const TABLE_COLUMNS: [&str; 4] = [
    "Pseudo-Color Single Heartbeat",
    "Pseudo-Color Heart Rhythm",
    "No Color Single Heartbeat",
    "No Color Heart Rhythm",
];

/// Aligned plain-text table for one learning mode.
pub fn render_table(mode: LearningMode, cells: &[ExperimentCell]) -> Result<String, ReportError> {
    let cells = ordered_cells(mode, cells)?;
    let label_w = Metric::ALL
        .iter()
        .map(|m| m.label().len())
        .max()
        .unwrap_or(0);
    let mut out = format!("{mode} results, mean over {} folds\n", cells[0].folds.len());
    out.push_str(&format!(
        "{:label_w$}  {:>28}  {:>28}\n",
        "",
        "Pseudo-Color",
        "No Color",
        label_w = label_w
    ));
    out.push_str(&format!(
        "{:label_w$}  {:>13}  {:>13}  {:>13}  {:>13}\n",
        "",
        "Single Beat",
        "Rhythm",
        "Single Beat",
        "Rhythm",
        label_w = label_w
    ));
    for m in Metric::ALL {
        out.push_str(&format!("{:label_w$}", m.label(), label_w = label_w));
        for c in &cells {
            out.push_str(&format!("  {:>13}", cell_value(c, m)));
        }
        out.push('\n');
    }
    Ok(out)
}

/// The same table as CSV: `metric,<4 representation columns>`.
pub fn render_table_csv(
    mode: LearningMode,
    cells: &[ExperimentCell],
) -> Result<String, ReportError> {
    let cells = ordered_cells(mode, cells)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric"];
    header.extend(TABLE_COLUMNS);
    w.write_record(&header).expect("in-memory write");
    for m in Metric::ALL {
        let mut row = vec![m.label().to_string()];
        row.extend(cells.iter().map(|c| cell_value(c, m)));
        w.write_record(&row).expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii"))
}

/// Parses a table CSV back into `(metric label, 4 values)` rows.
pub fn parse_table_csv(text: &str) -> Result<Vec<(String, [Option<f64>; 4])>, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 5 {
            return Err(format!("expected 5 columns, found {}", rec.len()));
        }
        let mut vals = [None; 4];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = match &rec[i + 1] {
                "n/a" => None,
                s => Some(s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"))?),
            };
        }
        rows.push((rec[0].to_string(), vals));
    }
    Ok(rows)
}

/// Required pseudo-color lead over no-color, in accuracy points.
pub const COLOR_MARGIN: f64 = 3.0;
/// Required rhythm lead over single-beat, in accuracy points.
pub const RHYTHM_MARGIN: f64 = 2.0;

/// One effect-direction comparison on fold-averaged accuracy (percent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub description: String,
    pub better: f64,
    pub worse: f64,
    /// Required lead of `better` over `worse`, in points.
    pub margin: f64,
    pub holds: bool,
}

impl fmt::Display for OrderingCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.2} vs {:.2} (lead {:+.2}, need >= {:.2})",
            if self.holds { "ok  " } else { "FAIL" },
            self.description,
            self.better,
            self.worse,
            self.better - self.worse,
            self.margin
        )
    }
}

/// Pseudo-color over no-color and rhythm over single-beat within each mode
/// present, and few-shot at least one-shot per representation when both
/// modes are present.
pub fn ordering_checks(
    cells: &[ExperimentCell],
    color_margin: f64,
    rhythm_margin: f64,
) -> Result<Vec<OrderingCheck>, ReportError> {
    let modes: Vec<LearningMode> = LearningMode::ALL
        .into_iter()
        .filter(|m| cells.iter().any(|c| c.mode == *m))
        .collect();
    let acc = |mode: LearningMode, rep: Representation| -> Result<f64, ReportError> {
        let cell = cells
            .iter()
            .find(|c| c.mode == mode && c.representation == rep)
            .ok_or_else(|| ReportError::MissingCell {
                mode: mode.to_string(),
                representation: rep.to_string(),
            })?;
        Ok(cell.get_display(Metric::Accuracy).unwrap_or(f64::NAN))
    };
    let check = |description: String, better: f64, worse: f64, margin: f64| OrderingCheck {
        holds: better - worse >= margin,
        description,
        better,
        worse,
        margin,
    };
    let [sc, rc, sg, rg] = Representation::ALL;
    let mut out = Vec::new();
    for &mode in &modes {
        for (color, gray) in [(sc, sg), (rc, rg)] {
            out.push(check(
                format!("{mode} {color} > {gray}"),
                acc(mode, color)?,
                acc(mode, gray)?,
                color_margin,
            ));
        }
        for (rhythm, single) in [(rc, sc), (rg, sg)] {
            out.push(check(
                format!("{mode} {rhythm} > {single}"),
                acc(mode, rhythm)?,
                acc(mode, single)?,
                rhythm_margin,
            ));
        }
    }
    if modes.len() == 2 {
        for rep in Representation::ALL {
            out.push(check(
                format!("{rep} few-shot >= one-shot"),
                acc(LearningMode::FewShot, rep)?,
                acc(LearningMode::OneShot, rep)?,
                0.0,
            ));
        }
    }
    Ok(out)
}

/// Raw per-episode records as CSV.
pub fn write_episodes_csv(path: &Path, records: &[EpisodeRecord]) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| crate::Error::format(path.display().to_string(), e))?;
    let fmt_metric = |v: MetricValue| match v {
        MetricValue::Value(x) => format!("{x:?}"),
        MetricValue::Absent(r) => format!(
            "absent:{}",
            serde_json::to_value(r)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        ),
    };
    let header = [
        "episode",
        "tp",
        "fp",
        "tn",
        "fn",
        "accuracy",
        "sensitivity",
        "specificity",
        "precision",
        "f1",
        "loss",
    ];
    let to_err = |e: csv::Error| crate::Error::format(path.display().to_string(), e);
    w.write_record(header).map_err(to_err)?;
    for r in records {
        let m = metrics_from_counts(&r.counts);
        w.write_record([
            r.episode.to_string(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.tn.to_string(),
            r.counts.fn_.to_string(),
            fmt_metric(m.accuracy),
            fmt_metric(m.sensitivity),
            fmt_metric(m.specificity),
            fmt_metric(m.precision),
            fmt_metric(m.f1),
            format!("{:?}", r.loss),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn episodes_file_name(mode: LearningMode, rep: Representation, fold: usize) -> String {
    format!("episodes_{mode}_{rep}_{fold}.csv")
}

pub fn results_file_name(mode: LearningMode) -> String {
    format!("results_{mode}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u32, fn_: u32, tn: u32, fp: u32) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn hand_example() {
        let m = metrics_from_counts(&counts(9, 1, 8, 2));
        assert!((m.sensitivity.value().unwrap() - 0.9).abs() < 1e-12);
        assert!((m.specificity.value().unwrap() - 0.8).abs() < 1e-12);
        assert!((m.precision.value().unwrap() - 0.8182).abs() < 1e-4);
        assert!((m.accuracy.value().unwrap() - 0.85).abs() < 1e-12);
        assert!((m.f1.value().unwrap() - 0.8571).abs() < 1e-4);
    }

    #[test]
    fn zero_denominators_are_absent() {
        let m = metrics_from_counts(&counts(0, 0, 10, 0));
        assert_eq!(
            m.sensitivity,
            MetricValue::Absent(AbsentReason::NoActualPositives)
        );
        assert_eq!(m.specificity, MetricValue::Value(1.0));
        assert!(m.f1.value().is_none());
        let m = metrics_from_counts(&counts(0, 5, 5, 0));
        assert_eq!(
            m.precision,
            MetricValue::Absent(AbsentReason::NoPredictedPositives)
        );
    }

    #[test]
    fn perfect_predictor() {
        let m = metrics_from_counts(&counts(5, 0, 5, 0));
        for metric in &Metric::ALL[..5] {
            assert_eq!(m.get(*metric).unwrap(), MetricValue::Value(1.0));
        }
    }

    fn record(episode: usize, c: ConfusionCounts, loss: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode,
            counts: c,
            loss,
        }
    }

    #[test]
    fn fold_mean_and_passthrough() {
        let means = [0.90, 0.92, 0.94, 0.96, 0.98];
        let folds: Vec<MetricSummary> = means
            .iter()
            .map(|&a| MetricSummary {
                accuracy: MeanValue::of([Some(a)]),
                ..Default::default()
            })
            .collect();
        let s = MetricSummary::from_folds(&folds);
        assert!((s.accuracy.mean.unwrap() - 0.94).abs() < 1e-12);

        let rep = Representation::ALL[0];
        let cell = aggregate(
            LearningMode::FewShot,
            rep,
            &[(0, vec![record(0, counts(4, 1, 5, 0), 0.3)])],
        )
        .unwrap();
        assert!((cell.mean.accuracy.mean.unwrap() - 0.9).abs() < 1e-12);
        assert!((cell.mean.loss.mean.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn absent_values_are_counted_not_zeroed() {
        let recs = vec![
            record(0, counts(0, 0, 10, 0), 0.1),
            record(1, counts(5, 0, 5, 0), 0.1),
        ];
        let s = MetricSummary::from_episodes(&recs);
        assert_eq!(s.sensitivity.mean, Some(1.0));
        assert_eq!(s.sensitivity.absent, 1);
        assert_eq!(s.sensitivity.defined, 1);
    }

    #[test]
    fn uneven_folds_rejected() {
        let rep = Representation::ALL[0];
        let r = record(0, counts(1, 0, 1, 0), 0.0);
        let err =
            aggregate(LearningMode::OneShot, rep, &[(0, vec![r]), (1, vec![r, r])]).unwrap_err();
        assert!(matches!(err, ReportError::UnevenEpisodes { fold: 1, .. }));
    }

    fn paper_cell(rep: Representation, vals: [f64; 6]) -> ExperimentCell {
        let mv = |v: f64| MeanValue::of([Some(v)]);
        ExperimentCell {
            mode: LearningMode::FewShot,
            representation: rep,
            folds: vec![],
            mean: MetricSummary {
                accuracy: mv(vals[0] / 100.0),
                sensitivity: mv(vals[1] / 100.0),
                specificity: mv(vals[2] / 100.0),
                precision: mv(vals[3] / 100.0),
                f1: mv(vals[4] / 100.0),
                loss: mv(vals[5]),
            },
        }
    }

    #[test]
    fn few_shot_table_layout_matches_published_order() {
        // Published few-shot table, columns in representation order.
        let cells = vec![
            paper_cell(
                Representation::ALL[0],
                [92.15, 87.38, 96.92, 97.04, 91.32, 0.26],
            ),
            paper_cell(
                Representation::ALL[1],
                [98.1, 97.8, 98.4, 98.53, 98.06, 0.09],
            ),
            paper_cell(
                Representation::ALL[2],
                [87.32, 82.0, 92.64, 92.53, 85.33, 0.47],
            ),
            paper_cell(
                Representation::ALL[3],
                [93.69, 90.56, 96.82, 96.96, 93.05, 0.22],
            ),
        ];
        let csv = render_table_csv(LearningMode::FewShot, &cells).unwrap();
        let rows = parse_table_csv(&csv).unwrap();
        assert_eq!(rows[0].0, "Accuracy");
        assert_eq!(
            rows[0].1,
            [Some(92.15), Some(98.10), Some(87.32), Some(93.69)]
        );
        assert_eq!(rows[4].0, "F1-Score");
        assert_eq!(rows[5].1, [Some(0.26), Some(0.09), Some(0.47), Some(0.22)]);
        let text = render_table(LearningMode::FewShot, &cells).unwrap();
        assert!(text
            .lines()
            .any(|l| l.starts_with("Accuracy") && l.contains("98.10") && l.contains("87.32")));
    }

    #[test]
    fn dummy_cells_render_zeros() {
        let cells: Vec<ExperimentCell> = Representation::ALL
            .iter()
            .map(|&r| paper_cell(r, [0.0; 6]))
            .collect();
        let text = render_table(LearningMode::FewShot, &cells).unwrap();
        assert_eq!(text.matches("0.00").count(), 24);
        assert!(render_table(LearningMode::OneShot, &cells).is_err());
    }
}
