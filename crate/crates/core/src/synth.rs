//! Synthetic lead-II-like records built from Gaussian wave bumps, with QT,
//! heart rate, R peaks and risk labels known exactly.
//!
//! QT is measured from Q onset (Q center − 2σ) to T end (T center + 2σ). The T
//! center is solved per beat so that this distance equals the requested QT
//! regardless of T-width jitter.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nomogram::{NomogramBoundary, RiskLabel};
use crate::signal::EcgRecord;
use crate::util::mix_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("infeasible beat shape: {0}")]
    InfeasibleShape(String),
    #[error("infeasible synthetic spec: {0}")]
    SpecInfeasible(String),
    #[error("record {record_id}: planted label {planted} disagrees with boundary label {actual}")]
    LabelMismatch {
        record_id: String,
        planted: RiskLabel,
        actual: RiskLabel,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One Gaussian bump: amplitude, center offset from R, and sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude_mv: f64,
    pub offset_ms: f64,
    pub width_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeatShapeParams {
    pub p: Wave,
    pub q: Wave,
    pub r: Wave,
    pub s: Wave,
    /// T position is solved from the QT; only amplitude and width apply.
    pub t_amplitude_mv: f64,
    pub t_width_ms: f64,
    /// Relative standard deviation applied per beat to T amplitude and width.
    pub t_morphology_jitter: f64,
    pub notched_t_probability: f64,
}

impl Default for BeatShapeParams {
    fn default() -> Self {
        Self {
            p: Wave {
                amplitude_mv: 0.15,
                offset_ms: -160.0,
                width_ms: 20.0,
            },
            q: Wave {
                amplitude_mv: -0.10,
                offset_ms: -24.0,
                width_ms: 8.0,
            },
            r: Wave {
                amplitude_mv: 1.2,
                offset_ms: 0.0,
                width_ms: 9.0,
            },
            s: Wave {
                amplitude_mv: -0.25,
                offset_ms: 24.0,
                width_ms: 9.0,
            },
            t_amplitude_mv: 0.35,
            t_width_ms: 40.0,
            t_morphology_jitter: 0.0,
            notched_t_probability: 0.0,
        }
    }
}

impl BeatShapeParams {
    /// Q onset relative to the R peak (negative).
    pub fn q_onset_ms(&self) -> f64 {
        self.q.offset_ms - 2.0 * self.q.width_ms
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InfeasibleShape(m));
        for (name, w) in [("P", self.p), ("Q", self.q), ("R", self.r), ("S", self.s)] {
            if !(w.width_ms > 0.0) {
                return bad(format!("{name} width must be positive"));
            }
        }
        if !(self.t_width_ms > 0.0) {
            return bad("T width must be positive".into());
        }
        if !(self.r.amplitude_mv > self.q.amplitude_mv.abs()
            && self.r.amplitude_mv > self.s.amplitude_mv.abs())
        {
            return bad("R amplitude must exceed |Q| and |S|".into());
        }
        if !(self.p.offset_ms < self.q.offset_ms
            && self.q.offset_ms < self.r.offset_ms
            && self.r.offset_ms < self.s.offset_ms)
        {
            return bad("wave offsets must be ordered P < Q < R < S".into());
        }
        if !(0.0..=1.0).contains(&self.notched_t_probability) || !(self.t_morphology_jitter >= 0.0)
        {
            return bad("jitter must be non-negative and notch probability in [0, 1]".into());
        }
        Ok(())
    }

    /// T center offset from R that puts T end exactly `qt_ms` after Q onset.
    fn t_center_ms(&self, qt_ms: f64, t_width_ms: f64) -> f64 {
        self.q_onset_ms() + qt_ms - 2.0 * t_width_ms
    }

    /// Shortest QT that keeps the T center after S.
    pub fn min_qt_ms(&self) -> f64 {
        self.s.offset_ms - self.q_onset_ms()
            + 2.0 * self.t_width_ms * (1.0 + 3.0 * self.t_morphology_jitter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSettings {
    pub noise_sd_mv: f64,
    pub wander_amplitude_mv: f64,
    pub wander_freq_hz: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            noise_sd_mv: 0.0,
            wander_amplitude_mv: 0.0,
            wander_freq_hz: 0.25,
        }
    }
}

impl NoiseSettings {
    pub fn noiseless() -> Self {
        Self {
            noise_sd_mv: 0.0,
            wander_amplitude_mv: 0.0,
            wander_freq_hz: 0.0,
        }
    }
}

/// A placed Gaussian in absolute time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedWave {
    pub center_ms: f64,
    pub amplitude_mv: f64,
    pub sigma_ms: f64,
}

impl PlacedWave {
    pub fn value_at(&self, t_ms: f64) -> f64 {
        let z = (t_ms - self.center_ms) / self.sigma_ms;
        self.amplitude_mv * (-0.5 * z * z).exp()
    }
}

/// Wave placement of one generated beat.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatGeometry {
    pub r_ms: f64,
    pub q_onset_ms: f64,
    pub t_end_ms: f64,
    /// P, Q, R, S, T, then an optional notch.
    pub waves: Vec<PlacedWave>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub record: EcgRecord,
    pub beats: Vec<BeatGeometry>,
}

/// Sampling layout of generated records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timebase {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
}

impl Default for Timebase {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            sample_rate_hz: crate::signal::PIPELINE_RATE_HZ,
        }
    }
}

/// Generates one record with beats every `60000 / hr_bpm` ms.
#[allow(clippy::too_many_arguments)]
pub fn generate_record<R: Rng + ?Sized>(
    record_id: &str,
    shape: &BeatShapeParams,
    hr_bpm: f64,
    qt_ms: f64,
    noise: &NoiseSettings,
    timebase: &Timebase,
    rng: &mut R,
) -> Result<SyntheticRecord, SynthError> {
    shape.validate()?;
    if !(hr_bpm > 0.0) {
        return Err(SynthError::InfeasibleShape(format!(
            "heart rate {hr_bpm} must be positive"
        )));
    }
    let rr = 60_000.0 / hr_bpm;
    if !(qt_ms < rr) {
        return Err(SynthError::InfeasibleShape(format!(
            "QT {qt_ms} ms not below RR {rr:.1} ms"
        )));
    }
    if qt_ms < shape.min_qt_ms() {
        return Err(SynthError::InfeasibleShape(format!(
            "QT {qt_ms} ms too short for the wave ordering (minimum {:.1} ms)",
            shape.min_qt_ms()
        )));
    }
    let fs = timebase.sample_rate_hz;
    let n = (timebase.duration_s * fs).round() as usize;
    let duration_ms = n as f64 * 1000.0 / fs;

    let first_r = rr * rng.random_range(0.25..0.45);
    let mut beats = Vec::new();
    let mut r_ms = first_r;
    while r_ms < duration_ms {
        beats.push(place_beat(shape, r_ms, qt_ms, rng));
        r_ms += rr;
    }

    let mut samples = vec![0.0; n];
    for beat in &beats {
        for wave in &beat.waves {
            let lo = (((wave.center_ms - 8.0 * wave.sigma_ms) * fs / 1000.0)
                .floor()
                .max(0.0)) as usize;
            let hi = (((wave.center_ms + 8.0 * wave.sigma_ms) * fs / 1000.0)
                .ceil()
                .max(0.0) as usize)
                .min(n);
            for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                *s += wave.value_at(i as f64 * 1000.0 / fs);
            }
        }
    }
    if noise.wander_amplitude_mv != 0.0 {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *s += noise.wander_amplitude_mv
                * (std::f64::consts::TAU * noise.wander_freq_hz * t + phase).sin();
        }
    }
    if noise.noise_sd_mv > 0.0 {
        let dist = Normal::new(0.0, noise.noise_sd_mv)
            .map_err(|e| SynthError::InfeasibleShape(format!("noise: {e}")))?;
        for s in samples.iter_mut() {
            *s += dist.sample(rng);
        }
    }

    let known_r_peaks = beats
        .iter()
        .map(|b| ((b.r_ms * fs / 1000.0).round() as usize).min(n - 1))
        .collect();
    Ok(SyntheticRecord {
        record: EcgRecord {
            record_id: record_id.to_string(),
            samples,
            sample_rate_hz: fs,
            hr_bpm,
            qt_ms,
            known_r_peaks: Some(known_r_peaks),
            subject_id: None,
        },
        beats,
    })
}

fn place_beat<R: Rng + ?Sized>(
    shape: &BeatShapeParams,
    r_ms: f64,
    qt_ms: f64,
    rng: &mut R,
) -> BeatGeometry {
    let jitter = |rng: &mut R| {
        let z: f64 = StandardNormal.sample(rng);
        (1.0 + shape.t_morphology_jitter * z).clamp(0.4, 1.6)
    };
    let (t_amp, t_width) = if shape.t_morphology_jitter > 0.0 {
        (
            shape.t_amplitude_mv * jitter(rng),
            shape.t_width_ms * jitter(rng),
        )
    } else {
        (shape.t_amplitude_mv, shape.t_width_ms)
    };
    let at = |w: Wave| PlacedWave {
        center_ms: r_ms + w.offset_ms,
        amplitude_mv: w.amplitude_mv,
        sigma_ms: w.width_ms,
    };
    let t_center = r_ms + shape.t_center_ms(qt_ms, t_width);
    let mut waves = vec![
        at(shape.p),
        at(shape.q),
        at(shape.r),
        at(shape.s),
        PlacedWave {
            center_ms: t_center,
            amplitude_mv: t_amp,
            sigma_ms: t_width,
        },
    ];
    if shape.notched_t_probability > 0.0 && rng.random_bool(shape.notched_t_probability) {
        waves.push(PlacedWave {
            center_ms: t_center,
            amplitude_mv: -0.3 * t_amp,
            sigma_ms: 0.25 * t_width,
        });
    }
    BeatGeometry {
        r_ms,
        q_onset_ms: r_ms + shape.q_onset_ms(),
        t_end_ms: t_center + 2.0 * t_width,
        waves,
    }
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_records: usize,
    pub positive_fraction: f64,
    pub hr_range_bpm: (f64, f64),
    /// Minimum distance of the planted QT from the boundary.
    pub qt_margin_ms: f64,
    /// Width of the sampling band beyond the margin on each side.
    pub qt_spread_ms: f64,
    /// Physiologic QT guard.
    pub qt_guard_ms: (f64, f64),
    pub noise: NoiseSettings,
    pub shape: BeatShapeParams,
    pub n_subjects: usize,
    /// Per-subject relative amplitude variation of R and T.
    pub subject_amplitude_sd: f64,
    pub timebase: Timebase,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_records: 500,
            positive_fraction: 0.2,
            hr_range_bpm: (40.0, 96.0),
            qt_margin_ms: 5.0,
            qt_spread_ms: 60.0,
            qt_guard_ms: (300.0, 579.0),
            noise: NoiseSettings {
                noise_sd_mv: 0.04,
                wander_amplitude_mv: 0.05,
                wander_freq_hz: 0.25,
            },
            shape: BeatShapeParams {
                t_morphology_jitter: 0.4,
                notched_t_probability: 0.1,
                ..BeatShapeParams::default()
            },
            n_subjects: 22,
            subject_amplitude_sd: 0.1,
            timebase: Timebase::default(),
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn positive_count(&self) -> usize {
        (self.n_records as f64 * self.positive_fraction).round() as usize
    }

    /// QT sampling interval for a label at a heart rate.
    fn qt_interval(&self, label: RiskLabel, threshold: f64) -> (f64, f64) {
        let (lo_guard, hi_guard) = self.qt_guard_ms;
        match label {
            RiskLabel::AtRisk => {
                let lo = threshold + self.qt_margin_ms;
                (lo, (lo + self.qt_spread_ms).min(hi_guard))
            }
            RiskLabel::NoRisk => {
                let hi = threshold - self.qt_margin_ms;
                ((hi - self.qt_spread_ms).max(lo_guard), hi)
            }
        }
    }

    pub fn validate(&self, boundary: &NomogramBoundary) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::SpecInfeasible(m));
        self.shape.validate()?;
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return bad(format!(
                "positive fraction {} outside [0, 1]",
                self.positive_fraction
            ));
        }
        if !(self.qt_margin_ms > 0.0) {
            return bad(
                "qt_margin_ms must be positive; a zero margin leaves labels boundary-ambiguous"
                    .into(),
            );
        }
        if !(self.qt_spread_ms >= 0.0) {
            return bad("qt_spread_ms must be non-negative".into());
        }
        let (hr_lo, hr_hi) = self.hr_range_bpm;
        let (b_lo, b_hi) = boundary.hr_range();
        if !(hr_lo > 0.0 && hr_lo <= hr_hi) {
            return bad(format!("invalid heart-rate range ({hr_lo}, {hr_hi})"));
        }
        if hr_lo < b_lo || hr_hi > b_hi {
            return bad(format!(
                "heart-rate range ({hr_lo}, {hr_hi}) outside boundary coverage ({b_lo}, {b_hi})"
            ));
        }
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        // the boundary is piecewise linear, so its extremes over the range sit at
        // the range ends or at interior breakpoints
        let mut probe: Vec<f64> = boundary
            .breakpoints()
            .iter()
            .map(|&(h, _)| h)
            .filter(|&h| h > hr_lo && h < hr_hi)
            .collect();
        probe.extend([hr_lo, hr_hi]);
        let labels: &[RiskLabel] = match self.positive_count() {
            0 => &[RiskLabel::NoRisk],
            k if k == self.n_records => &[RiskLabel::AtRisk],
            _ => &[RiskLabel::NoRisk, RiskLabel::AtRisk],
        };
        for &hr in &probe {
            let threshold = boundary.lookup(hr).qt_ms;
            for &label in labels {
                let (lo, hi) = self.qt_interval(label, threshold);
                if lo > hi || lo < self.qt_guard_ms.0 || hi > self.qt_guard_ms.1 {
                    return bad(format!(
                        "{label} QT band [{lo:.1}, {hi:.1}] at {hr} bpm leaves guard {:?}",
                        self.qt_guard_ms
                    ));
                }
                if hi >= 60_000.0 / hr {
                    return bad(format!(
                        "{label} QT up to {hi:.1} ms reaches the RR interval at {hr} bpm"
                    ));
                }
                if lo < self.shape.min_qt_ms() {
                    return bad(format!("QT {lo:.1} ms too short for the beat shape"));
                }
            }
        }
        Ok(())
    }
}

/// One generated record with its planted label.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRecord {
    pub record: EcgRecord,
    pub label: RiskLabel,
    pub beats: Vec<BeatGeometry>,
}

/// Generates the corpus in memory. Labels are planted by construction and
/// re-verified against the boundary.
pub fn generate_records(
    spec: &SynthSpec,
    boundary: &NomogramBoundary,
) -> Result<Vec<PlantedRecord>, SynthError> {
    spec.validate(boundary)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_records;
    let mut labels = vec![RiskLabel::NoRisk; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in order.iter().take(spec.positive_count()) {
        labels[i] = RiskLabel::AtRisk;
    }
    let plan: Vec<(f64, f64, usize)> = labels
        .iter()
        .map(|&label| {
            let hr = if spec.hr_range_bpm.0 == spec.hr_range_bpm.1 {
                spec.hr_range_bpm.0
            } else {
                rng.random_range(spec.hr_range_bpm.0..=spec.hr_range_bpm.1)
            };
            let (lo, hi) = spec.qt_interval(label, boundary.lookup(hr).qt_ms);
            let qt = if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            };
            let subject = rng.random_range(0..spec.n_subjects);
            (hr, qt, subject)
        })
        .collect();

    let generate = |i: usize| -> Result<PlantedRecord, SynthError> {
        let (hr, qt, subject) = plan[i];
        let label = labels[i];
        let record_id = format!("syn{i:05}");
        let mut shape = spec.shape;
        if spec.subject_amplitude_sd > 0.0 {
            let mut srng =
                ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 1_000_000 + subject as u64));
            let scale = |rng: &mut ChaCha8Rng| {
                let z: f64 = StandardNormal.sample(rng);
                (1.0 + spec.subject_amplitude_sd * z).clamp(0.5, 1.5)
            };
            shape.r.amplitude_mv *= scale(&mut srng);
            shape.t_amplitude_mv *= scale(&mut srng);
        }
        let mut rrng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, i as u64));
        let mut generated = generate_record(
            &record_id,
            &shape,
            hr,
            qt,
            &spec.noise,
            &spec.timebase,
            &mut rrng,
        )?;
        generated.record.subject_id = Some(format!("S{subject:02}"));
        let actual = boundary
            .classify(qt, hr)
            .map_err(|e| SynthError::SpecInfeasible(e.to_string()))?;
        if actual != label {
            return Err(SynthError::LabelMismatch {
                record_id,
                planted: label,
                actual,
            });
        }
        Ok(PlantedRecord {
            record: generated.record,
            label,
            beats: generated.beats,
        })
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(generate).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(generate).collect()
    }
}

/// Header of `manifest.csv`.
pub const MANIFEST_HEADER: [&str; 7] = [
    "record_id",
    "path",
    "sample_rate_hz",
    "hr_bpm",
    "qt_ms",
    "label",
    "subject_id",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub manifest_path: PathBuf,
    pub positive_count: usize,
    pub negative_count: usize,
}

/// Writes one `mv` CSV per record under `out_dir/records/` plus `manifest.csv`.
pub fn generate_dataset(
    spec: &SynthSpec,
    boundary: &NomogramBoundary,
    out_dir: &Path,
) -> Result<SynthSummary, SynthError> {
    let records = generate_records(spec, boundary)?;
    let io = |path: &Path, e: &dyn std::fmt::Display| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let rec_dir = out_dir.join("records");
    std::fs::create_dir_all(&rec_dir).map_err(|e| io(&rec_dir, &e))?;
    for planted in &records {
        let path = rec_dir.join(format!("{}.csv", planted.record.record_id));
        write_signal_csv(&planted.record.samples, &path).map_err(|e| io(&path, &e))?;
    }
    let manifest_path = out_dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest_path).map_err(|e| io(&manifest_path, &e))?;
    w.write_record(MANIFEST_HEADER)
        .map_err(|e| io(&manifest_path, &e))?;
    for planted in &records {
        let r = &planted.record;
        w.write_record([
            r.record_id.clone(),
            format!("records/{}.csv", r.record_id),
            format!("{:?}", r.sample_rate_hz),
            format!("{:?}", r.hr_bpm),
            format!("{:?}", r.qt_ms),
            planted.label.to_string(),
            r.subject_id.clone().unwrap_or_default(),
        ])
        .map_err(|e| io(&manifest_path, &e))?;
    }
    w.flush().map_err(|e| io(&manifest_path, &e))?;
    let positive_count = records.iter().filter(|p| p.label.is_positive()).count();
    Ok(SynthSummary {
        manifest_path,
        positive_count,
        negative_count: records.len() - positive_count,
    })
}

/// Single-column voltage CSV with header `mv`.
pub fn write_signal_csv(samples: &[f64], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "mv")?;
    for v in samples {
        writeln!(out, "{v:?}")?;
    }
    out.flush()
}
