//! Manifest ingestion, four-way image corpora and cross-validation folds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nomogram::{LabeledRecord, NomogramBoundary, RiskLabel};
use crate::render::BeatChoice;
use crate::render::{
    encode_png_with_text, rasterize_beat, rasterize_rhythm, read_png_text, EcgImage, ImageKind,
    RenderConfig, RenderError,
};
use crate::signal::{
    annotate_beats, central_beat, detect_r_peaks, DetectorParams, EcgRecord, RecordLimits,
    SignalError, PIPELINE_RATE_HZ,
};
use crate::synth::MANIFEST_HEADER;
use crate::util::sha256_bytes_hex;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: row {row}: {message}")]
    Schema {
        path: String,
        row: usize,
        message: String,
    },
    #[error("{} record(s) failed validation: {}", .0.len(), .0.iter().map(|(id, why)| format!("{id} ({why})")).collect::<Vec<_>>().join("; "))]
    Validation(Vec<(String, String)>),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("class {class} has {count} member(s), fewer than k={k}")]
    InfeasibleStratification {
        class: RiskLabel,
        count: usize,
        k: usize,
    },
    #[error("fold count must be positive")]
    ZeroFolds,
    #[error("record {record_id}: {source}")]
    Signal {
        record_id: String,
        #[source]
        source: SignalError,
    },
    #[error("record {record_id}: {source}")]
    Render {
        record_id: String,
        #[source]
        source: RenderError,
    },
    #[error("record {record_id}: no complete beat to render")]
    NoRenderableBeat { record_id: String },
}

fn io_err(path: &Path, e: impl fmt::Display) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One of the four image representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Representation {
    pub kind: ImageKind,
    pub colored: bool,
}

impl Representation {
    /// Table column order: pseudo-color single, rhythm, then no-color single, rhythm.
    pub const ALL: [Representation; 4] = [
        Representation {
            kind: ImageKind::SingleBeat,
            colored: true,
        },
        Representation {
            kind: ImageKind::Rhythm,
            colored: true,
        },
        Representation {
            kind: ImageKind::SingleBeat,
            colored: false,
        },
        Representation {
            kind: ImageKind::Rhythm,
            colored: false,
        },
    ];

    pub fn as_str(self) -> &'static str {
        match (self.kind, self.colored) {
            (ImageKind::SingleBeat, true) => "single_color",
            (ImageKind::SingleBeat, false) => "single_gray",
            (ImageKind::Rhythm, true) => "rhythm_color",
            (ImageKind::Rhythm, false) => "rhythm_gray",
        }
    }

    pub fn file_name(self, record_id: &str) -> String {
        format!(
            "{record_id}_{}_{}.png",
            self.kind.as_str(),
            if self.colored { "color" } else { "gray" }
        )
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Representation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown representation {s:?} (expected single_color, rhythm_color, single_gray or rhythm_gray)"))
    }
}

/// Reads a single-column voltage CSV (optional `mv` header).
pub fn read_signal_csv(path: &Path) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.parse::<f64>().is_err()) {
            continue;
        }
        out.push(
            line.parse::<f64>()
                .map_err(|e| format!("line {}: {e}", i + 1))?,
        );
    }
    Ok(out)
}

/// Loads every manifest row, resampling to the pipeline rate. Schema problems
/// fail on the first bad row; record-level validation failures are collected.
pub fn ingest_manifest(path: &Path) -> Result<Vec<EcgRecord>, DatasetError> {
    ingest_manifest_with(path, &RecordLimits::default())
}

pub fn ingest_manifest_with(
    path: &Path,
    limits: &RecordLimits,
) -> Result<Vec<EcgRecord>, DatasetError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let schema = |row: usize, message: String| DatasetError::Schema {
        path: path.display().to_string(),
        row,
        message,
    };
    let headers = rdr.headers().map_err(|e| schema(0, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(schema(
            0,
            format!("expected header {}", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| schema(row_no, e.to_string()))?;
        let field = |j: usize| row.get(j).unwrap_or("").to_string();
        let num = |j: usize| -> Result<f64, DatasetError> {
            field(j)
                .parse::<f64>()
                .map_err(|e| schema(row_no, format!("{}: {e}", MANIFEST_HEADER[j])))
        };
        let record_id = field(0);
        if record_id.is_empty() {
            return Err(schema(row_no, "empty record_id".into()));
        }
        let signal_path = base.join(field(1));
        if !signal_path.is_file() {
            return Err(schema(
                row_no,
                format!("signal file {} not found", signal_path.display()),
            ));
        }
        let (rate, hr, qt) = (num(2)?, num(3)?, num(4)?);
        if !field(5).is_empty() {
            field(5)
                .parse::<RiskLabel>()
                .map_err(|e| schema(row_no, e))?;
        }
        let subject = field(6);
        let samples = read_signal_csv(&signal_path)
            .map_err(|e| schema(row_no, format!("{}: {e}", signal_path.display())))?;
        let record = EcgRecord {
            record_id,
            samples,
            sample_rate_hz: rate,
            hr_bpm: hr,
            qt_ms: qt,
            known_r_peaks: None,
            subject_id: (!subject.is_empty()).then_some(subject),
        };
        let checked = record
            .validate(&RecordLimits {
                duration_s: None,
                ..*limits
            })
            .map(|_| record.resampled(PIPELINE_RATE_HZ))
            .and_then(|r| r.validate(limits).map(|_| r));
        match checked {
            Ok(r) => records.push(r),
            Err(e) => failures.push((field(0), e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(DatasetError::Validation(failures));
    }
    Ok(records)
}

/// One record's row in `catalog.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub record_id: String,
    /// Paths relative to the catalog directory, in [`Representation::ALL`] order.
    pub images: [PathBuf; 4],
    pub label: RiskLabel,
    pub hr_bpm: f64,
    pub qt_ms: f64,
    pub subject_id: Option<String>,
    pub fold_id: Option<usize>,
}

impl CatalogEntry {
    pub fn image(&self, rep: Representation) -> &Path {
        let i = Representation::ALL
            .iter()
            .position(|r| *r == rep)
            .expect("known representation");
        &self.images[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    /// Directory the image paths are relative to.
    pub root: PathBuf,
    pub entries: Vec<CatalogEntry>,
}

const CATALOG_HEADER: [&str; 10] = [
    "record_id",
    "single_color",
    "rhythm_color",
    "single_gray",
    "rhythm_gray",
    "label",
    "hr_bpm",
    "qt_ms",
    "subject_id",
    "fold_id",
];

impl Catalog {
    pub fn image_path(&self, entry: &CatalogEntry, rep: Representation) -> PathBuf {
        self.root.join(entry.image(rep))
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self
            .entries
            .iter()
            .filter(|e| e.label.is_positive())
            .count();
        (pos, self.entries.len() - pos)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(CATALOG_HEADER)
            .map_err(|e| io_err(path, e))?;
        for e in &self.entries {
            let mut row: Vec<String> = vec![e.record_id.clone()];
            row.extend(e.images.iter().map(|p| p.display().to_string()));
            row.extend([
                e.label.to_string(),
                format!("{:?}", e.hr_bpm),
                format!("{:?}", e.qt_ms),
                e.subject_id.clone().unwrap_or_default(),
                e.fold_id.map(|f| f.to_string()).unwrap_or_default(),
            ]);
            w.write_record(&row).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Reads `catalog.csv`; image paths resolve against its directory.
    pub fn read_csv(path: &Path) -> Result<Catalog, DatasetError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
        let schema = |row: usize, message: String| DatasetError::Schema {
            path: path.display().to_string(),
            row,
            message,
        };
        let headers = rdr.headers().map_err(|e| schema(0, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != CATALOG_HEADER {
            return Err(schema(
                0,
                format!("expected header {}", CATALOG_HEADER.join(",")),
            ));
        }
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| schema(row_no, e.to_string()))?;
            let f = |j: usize| row.get(j).unwrap_or("").to_string();
            let num = |j: usize| {
                f(j).parse::<f64>()
                    .map_err(|e| schema(row_no, format!("{}: {e}", CATALOG_HEADER[j])))
            };
            entries.push(CatalogEntry {
                record_id: f(0),
                images: [1, 2, 3, 4].map(|j| PathBuf::from(f(j))),
                label: f(5).parse().map_err(|e| schema(row_no, e))?,
                hr_bpm: num(6)?,
                qt_ms: num(7)?,
                subject_id: Some(f(8)).filter(|s| !s.is_empty()),
                fold_id: match f(9).as_str() {
                    "" => None,
                    s => Some(
                        s.parse()
                            .map_err(|e| schema(row_no, format!("fold_id: {e}")))?,
                    ),
                },
            });
        }
        Ok(Catalog {
            root: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            entries,
        })
    }

    pub fn apply_folds(&mut self, plan: &FoldPlan) {
        for e in &mut self.entries {
            e.fold_id = plan.assignment.get(&e.record_id).copied();
        }
    }
}

/// Files written or skipped by [`materialize_images`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaterializeStats {
    pub written: usize,
    pub skipped: usize,
}

/// Renders the four representations of one record in memory.
pub fn render_record(
    record: &EcgRecord,
    boundary: &NomogramBoundary,
    config: &RenderConfig,
    detector: &DetectorParams,
) -> Result<[EcgImage; 4], DatasetError> {
    let id = || record.record_id.clone();
    let peaks = detect_r_peaks(record, detector).map_err(|source| DatasetError::Signal {
        record_id: id(),
        source,
    })?;
    let beats = annotate_beats(record, &peaks, config.qrs_offset_ms).map_err(|source| {
        DatasetError::Signal {
            record_id: id(),
            source,
        }
    })?;
    let beat = match config.beat_choice {
        BeatChoice::Central => central_beat(record, &beats),
        BeatChoice::First => beats.first(),
    }
    .ok_or_else(|| DatasetError::NoRenderableBeat { record_id: id() })?;
    let render = |rep: Representation| -> Result<EcgImage, DatasetError> {
        match rep.kind {
            ImageKind::SingleBeat => rasterize_beat(record, beat, boundary, config, rep.colored),
            ImageKind::Rhythm => rasterize_rhythm(record, &beats, boundary, config, rep.colored),
        }
        .map_err(|source| DatasetError::Render {
            record_id: id(),
            source,
        })
    };
    Ok([
        render(Representation::ALL[0])?,
        render(Representation::ALL[1])?,
        render(Representation::ALL[2])?,
        render(Representation::ALL[3])?,
    ])
}

/// Digest of everything about a record that feeds rendering.
fn input_digest(record: &EcgRecord, detector: &DetectorParams) -> String {
    let mut bytes = Vec::with_capacity(record.samples.len() * 8 + 64);
    for v in &record.samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in [record.sample_rate_hz, record.hr_bpm, record.qt_ms] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(format!("{detector:?}").as_bytes());
    if detector.trust_ground_truth {
        if let Some(peaks) = &record.known_r_peaks {
            bytes.extend_from_slice(format!("{peaks:?}").as_bytes());
        }
    }
    sha256_bytes_hex(&bytes)
}

const KEY_INPUT: &str = "input_digest";

fn up_to_date(path: &Path, hash: &str, digest: &str) -> bool {
    match read_png_text(path) {
        Ok((_, _, text)) => {
            let get = |k: &str| {
                text.iter()
                    .find(|(key, _)| key == k)
                    .map(|(_, v)| v.as_str())
            };
            get("render_config_hash") == Some(hash) && get(KEY_INPUT) == Some(digest)
        }
        Err(_) => false,
    }
}

/// Renders all four images per record into `out_dir/images/`. Files whose
/// stored config hash and input digest already match are left untouched.
pub fn materialize_images(
    records: &[LabeledRecord],
    boundary: &NomogramBoundary,
    config: &RenderConfig,
    detector: &DetectorParams,
    out_dir: &Path,
) -> Result<(Catalog, MaterializeStats), DatasetError> {
    config.validate().map_err(|source| DatasetError::Render {
        record_id: String::new(),
        source,
    })?;
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| io_err(&img_dir, e))?;

    let work = |lr: &LabeledRecord| -> Result<(CatalogEntry, MaterializeStats), DatasetError> {
        let record = &lr.record;
        let digest = input_digest(record, detector);
        let rel: [PathBuf; 4] = Representation::ALL
            .map(|rep| PathBuf::from("images").join(rep.file_name(&record.record_id)));
        let stale: Vec<bool> = Representation::ALL
            .iter()
            .zip(&rel)
            .map(|(rep, p)| {
                !up_to_date(
                    &out_dir.join(p),
                    &config.variant_hash(rep.kind, rep.colored, boundary),
                    &digest,
                )
            })
            .collect();
        let mut stats = MaterializeStats::default();
        if stale.iter().any(|&s| s) {
            let images = render_record(record, boundary, config, detector)?;
            for ((image, p), &is_stale) in images.iter().zip(&rel).zip(&stale) {
                if is_stale {
                    let path = out_dir.join(p);
                    encode_png_with_text(image, &path, &[(KEY_INPUT, &digest)]).map_err(
                        |source| DatasetError::Render {
                            record_id: record.record_id.clone(),
                            source,
                        },
                    )?;
                    stats.written += 1;
                } else {
                    stats.skipped += 1;
                }
            }
        } else {
            stats.skipped += 4;
        }
        Ok((
            CatalogEntry {
                record_id: record.record_id.clone(),
                images: rel,
                label: lr.label,
                hr_bpm: record.hr_bpm,
                qt_ms: record.qt_ms,
                subject_id: record.subject_id.clone(),
                fold_id: None,
            },
            stats,
        ))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        records.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = records.iter().map(work).collect();

    let mut entries = Vec::with_capacity(records.len());
    let mut total = MaterializeStats::default();
    for r in results {
        let (entry, stats) = r?;
        total.written += stats.written;
        total.skipped += stats.skipped;
        entries.push(entry);
    }
    Ok((
        Catalog {
            root: out_dir.to_path_buf(),
            entries,
        },
        total,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    #[default]
    ByRecord,
    BySubject,
}

impl std::str::FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "by-record" => Ok(Grouping::ByRecord),
            "by-subject" => Ok(Grouping::BySubject),
            other => Err(format!(
                "unknown grouping {other:?} (expected by-record or by-subject)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub stratified: bool,
    pub grouping: Grouping,
}

impl FoldPlan {
    pub fn fold_of(&self, record_id: &str) -> Option<usize> {
        self.assignment.get(record_id).copied()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(["record_id", "fold_id"])
            .map_err(|e| io_err(path, e))?;
        for (id, fold) in &self.assignment {
            w.write_record([id.as_str(), &fold.to_string()])
                .map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// Assigns every catalog entry to one of `k` folds.
///
/// By record: each class is shuffled with `seed` and dealt round-robin, so
/// folds are exactly stratified when class counts divide by `k`. By subject:
/// whole subjects are placed greedily to keep per-fold class counts near
/// their targets.
pub fn make_folds(
    entries: &[CatalogEntry],
    k: usize,
    stratified: bool,
    grouping: Grouping,
    seed: u64,
) -> Result<FoldPlan, DatasetError> {
    if k == 0 {
        return Err(DatasetError::ZeroFolds);
    }
    if stratified && k > 1 {
        for class in [RiskLabel::AtRisk, RiskLabel::NoRisk] {
            let count = entries.iter().filter(|e| e.label == class).count();
            if count < k {
                return Err(DatasetError::InfeasibleStratification { class, count, k });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    match grouping {
        Grouping::ByRecord => {
            let strata: Vec<Vec<&CatalogEntry>> = if stratified {
                [RiskLabel::AtRisk, RiskLabel::NoRisk]
                    .iter()
                    .map(|&c| entries.iter().filter(|e| e.label == c).collect())
                    .collect()
            } else {
                vec![entries.iter().collect()]
            };
            let mut next = 0;
            for mut stratum in strata {
                stratum.sort_by(|a, b| a.record_id.cmp(&b.record_id));
                stratum.shuffle(&mut rng);
                for e in stratum {
                    assignment.insert(e.record_id.clone(), next % k);
                    next += 1;
                }
            }
        }
        Grouping::BySubject => {
            let mut groups: BTreeMap<String, (usize, usize, Vec<&str>)> = BTreeMap::new();
            for e in entries {
                let key = e
                    .subject_id
                    .clone()
                    .unwrap_or_else(|| format!("record:{}", e.record_id));
                let g = groups.entry(key).or_default();
                g.0 += e.label.is_positive() as usize;
                g.1 += 1;
                g.2.push(&e.record_id);
            }
            let mut groups: Vec<_> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            // largest groups first; stable sort keeps the shuffled order among ties
            groups.sort_by(|a, b| (b.0, b.1).cmp(&(a.0, a.1)));
            let total_pos: usize = entries.iter().filter(|e| e.label.is_positive()).count();
            let target_pos = (total_pos as f64 / k as f64).max(1.0);
            let target_n = (entries.len() as f64 / k as f64).max(1.0);
            let mut load = vec![(0usize, 0usize); k];
            for (pos, n, ids) in groups {
                let cost = |f: usize| {
                    let (p, c) = load[f];
                    let pos_term = if stratified {
                        (p + pos) as f64 / target_pos
                    } else {
                        0.0
                    };
                    pos_term + (c + n) as f64 / target_n
                };
                let fold = (0..k)
                    .min_by(|&a, &b| cost(a).total_cmp(&cost(b)).then(a.cmp(&b)))
                    .expect("k > 0");
                load[fold].0 += pos;
                load[fold].1 += n;
                for id in ids {
                    assignment.insert(id.to_string(), fold);
                }
            }
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        stratified,
        grouping,
    })
}

/// Train/eval split for one cross-validation fold.
pub fn split_fold(
    entries: &[CatalogEntry],
    plan: &FoldPlan,
    eval_fold: usize,
) -> (Vec<CatalogEntry>, Vec<CatalogEntry>) {
    entries
        .iter()
        .cloned()
        .partition(|e| plan.fold_of(&e.record_id) != Some(eval_fold))
}

/// Ids of subjects present in each fold.
pub fn subjects_by_fold(entries: &[CatalogEntry], plan: &FoldPlan) -> Vec<BTreeSet<String>> {
    let mut out = vec![BTreeSet::new(); plan.k];
    for e in entries {
        if let (Some(fold), Some(s)) = (plan.fold_of(&e.record_id), &e.subject_id) {
            out[fold].insert(s.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entries(n: usize, positives: usize, subjects: usize) -> Vec<CatalogEntry> {
        (0..n)
            .map(|i| CatalogEntry {
                record_id: format!("r{i:04}"),
                images: Default::default(),
                label: if i < positives {
                    RiskLabel::AtRisk
                } else {
                    RiskLabel::NoRisk
                },
                hr_bpm: 60.0,
                qt_ms: 400.0,
                subject_id: Some(format!("S{}", i % subjects.max(1))),
                fold_id: None,
            })
            .collect()
    }

    #[test]
    fn exact_stratification() {
        let e = entries(100, 20, 10);
        let plan = make_folds(&e, 5, true, Grouping::ByRecord, 3).unwrap();
        for f in 0..5 {
            let (pos, all) = e
                .iter()
                .filter(|x| plan.fold_of(&x.record_id) == Some(f))
                .fold((0, 0), |(p, a), x| {
                    (p + x.label.is_positive() as usize, a + 1)
                });
            assert_eq!(pos, 4);
            assert_eq!(all, 20);
        }
    }

    #[test]
    fn single_fold() {
        let e = entries(10, 2, 3);
        let plan = make_folds(&e, 1, true, Grouping::ByRecord, 0).unwrap();
        assert!(plan.assignment.values().all(|&f| f == 0));
        assert_eq!(plan.assignment.len(), 10);
    }

    #[test]
    fn pigeonhole() {
        let e = entries(50, 3, 5);
        assert!(matches!(
            make_folds(&e, 5, true, Grouping::ByRecord, 0),
            Err(DatasetError::InfeasibleStratification {
                class: RiskLabel::AtRisk,
                count: 3,
                k: 5
            })
        ));
    }

    #[test]
    fn seeded_determinism() {
        let e = entries(60, 12, 7);
        assert_eq!(
            make_folds(&e, 5, true, Grouping::ByRecord, 9).unwrap(),
            make_folds(&e, 5, true, Grouping::ByRecord, 9).unwrap()
        );
    }

    #[test]
    fn representation_names() {
        for rep in Representation::ALL {
            assert_eq!(rep.as_str().parse::<Representation>().unwrap(), rep);
        }
        assert_eq!(Representation::ALL[1].file_name("x"), "x_rhythm_color.png");
    }

    proptest! {
        #[test]
        fn folds_partition(n in 10usize..120, pos_frac in 0.1f64..0.5, subjects in 1usize..25,
                           k in 1usize..6, seed in 0u64..1000, by_subject in any::<bool>(), stratified in any::<bool>()) {
            let positives = ((n as f64 * pos_frac) as usize).max(k);
            prop_assume!(n - positives >= k);
            let e = entries(n, positives, subjects);
            let grouping = if by_subject { Grouping::BySubject } else { Grouping::ByRecord };
            let plan = make_folds(&e, k, stratified, grouping, seed).unwrap();
            prop_assert_eq!(plan.assignment.len(), n);
            prop_assert!(plan.assignment.values().all(|&f| f < k));
            if by_subject {
                let mut seen: BTreeMap<String, usize> = BTreeMap::new();
                for x in &e {
                    let fold = plan.fold_of(&x.record_id).unwrap();
                    let s = x.subject_id.clone().unwrap();
                    prop_assert_eq!(*seen.entry(s).or_insert(fold), fold);
                }
            }
        }
    }
}
