use serde::{Deserialize, Serialize};

use super::{RenderConfig, RenderError};
use crate::nomogram::NomogramBoundary;
use crate::signal::{slice_beat_window, BeatAnnotation, BeatWindow, EcgRecord};
use crate::util::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    SingleBeat,
    Rhythm,
}

impl ImageKind {
    pub const ALL: [ImageKind; 2] = [ImageKind::SingleBeat, ImageKind::Rhythm];

    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::SingleBeat => "single",
            ImageKind::Rhythm => "rhythm",
        }
    }
}

impl std::str::FromStr for ImageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "single_beat" => Ok(ImageKind::SingleBeat),
            "rhythm" => Ok(ImageKind::Rhythm),
            other => Err(format!("unknown image kind {other:?}")),
        }
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcgImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub kind: ImageKind,
    pub colored: bool,
    pub source_record_id: String,
    pub render_config_hash: String,
}

impl EcgImage {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn pixels_rgb(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// True if `x` column holds any non-gray pixel.
    pub fn column_has_color(&self, x: u32) -> bool {
        (0..self.height).any(|y| {
            let [r, g, b] = self.pixel(x, y);
            !(r == g && g == b)
        })
    }
}

/// Inclusive column range of one filled QT span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QtSpan {
    pub x_start: u32,
    pub x_end: u32,
}

impl QtSpan {
    pub fn contains(&self, x: u32) -> bool {
        x >= self.x_start && x <= self.x_end
    }
}

struct Canvas {
    width: i64,
    height: i64,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: u32, height: u32, background: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&background);
        }
        Self {
            width: width as i64,
            height: height as i64,
            pixels,
        }
    }

    fn set(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return;
        }
        let i = 3 * (y * self.width + x) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn vrun(&mut self, x: i64, y0: i64, y1: i64, rgb: [u8; 3]) {
        for y in y0.min(y1)..=y0.max(y1) {
            self.set(x, y, rgb);
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), thickness: i64, rgb: [u8; 3]) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            for t in 0..thickness {
                self.set(x, y + t, rgb);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

/// Voltage-to-row mapping with fixed headroom. Flat input sits at mid-height.
struct VerticalScale {
    vmin: f64,
    vmax: f64,
    top: i64,
    inner: i64,
    mid: i64,
    flat: bool,
}

impl VerticalScale {
    fn new(
        samples: &[f64],
        height: u32,
        margin_frac: f64,
        record_id: &str,
    ) -> Result<Self, RenderError> {
        let overflow = |detail: String| RenderError::RasterOverflow {
            record_id: record_id.to_string(),
            detail,
        };
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(overflow(format!("non-finite sample at {i}")));
        }
        let vmin = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let vmax = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = vmax - vmin;
        if !span.is_finite() {
            return Err(overflow(format!("range [{vmin}, {vmax}]")));
        }
        let h = height as i64;
        let top = (margin_frac * height as f64).round() as i64;
        Ok(Self {
            vmin,
            vmax,
            top,
            inner: (h - 2 * top).max(1),
            mid: h / 2,
            flat: span <= 1e-12,
        })
    }

    fn row(&self, v: f64) -> i64 {
        if self.flat {
            return self.mid;
        }
        let frac = ((self.vmax - v) / (self.vmax - self.vmin)).clamp(0.0, 1.0);
        self.top + (frac * (self.inner - 1) as f64).round() as i64
    }
}

/// Median voltage over the beat window, used as the isoelectric reference.
fn beat_baseline(record: &EcgRecord, beat: &BeatAnnotation, window: &BeatWindow) -> f64 {
    let fs = record.sample_rate_hz;
    let lo = beat.qrs_onset_index.saturating_sub(window.pre_samples(fs));
    let hi = (beat.qrs_onset_index + (window.post_ms * fs / 1000.0).round() as usize)
        .min(record.samples.len());
    median(&record.samples[lo..hi.max(lo + 1).min(record.samples.len())]).unwrap_or(0.0)
}

struct SpanFill<'a> {
    span: QtSpan,
    px_per_ms: f64,
    threshold_ms: f64,
    qt_ms: f64,
    baseline_row: i64,
    config: &'a RenderConfig,
}

impl SpanFill<'_> {
    fn color(&self, x: u32) -> [u8; 3] {
        // the closing column carries the full QT so at-risk spans always end red
        let elapsed = if x == self.span.x_end {
            self.qt_ms
        } else {
            (x - self.span.x_start) as f64 / self.px_per_ms
        };
        self.config
            .color_scale
            .color_at(elapsed / self.threshold_ms)
    }

    fn fill(&self, canvas: &mut Canvas, trace_row: impl Fn(u32) -> i64) {
        for x in self.span.x_start..=self.span.x_end {
            canvas.vrun(x as i64, self.baseline_row, trace_row(x), self.color(x));
        }
    }

    fn mark_baseline(&self, canvas: &mut Canvas) {
        for x in self.span.x_start..=self.span.x_end {
            canvas.set(x as i64, self.baseline_row, self.color(x));
        }
    }
}

fn column_of(index: f64, width: u32, len: usize) -> u32 {
    ((index * width as f64 / len as f64).floor().max(0.0) as u32).min(width - 1)
}

/// Column span of a beat's QT in the single-beat raster.
pub fn beat_span(record: &EcgRecord, config: &RenderConfig) -> QtSpan {
    let fs = record.sample_rate_hz;
    let len = config.window.len_samples(fs);
    let pre = config.window.pre_samples(fs) as f64;
    QtSpan {
        x_start: column_of(pre, config.beat_size, len),
        x_end: column_of(pre + record.qt_ms * fs / 1000.0, config.beat_size, len),
    }
}

/// Column spans of each annotated beat's QT in the rhythm raster.
pub fn rhythm_spans(
    record: &EcgRecord,
    beats: &[BeatAnnotation],
    config: &RenderConfig,
) -> Vec<QtSpan> {
    let fs = record.sample_rate_hz;
    let n = record.samples.len();
    beats
        .iter()
        .map(|b| {
            let onset = b.qrs_onset_index as f64;
            QtSpan {
                x_start: column_of(onset, config.rhythm_width, n),
                x_end: column_of(onset + record.qt_ms * fs / 1000.0, config.rhythm_width, n),
            }
        })
        .collect()
}

fn draw_trace(canvas: &mut Canvas, xs: &[i64], ys: &[i64], config: &RenderConfig) {
    let thickness = config.trace_width_px as i64;
    if xs.len() == 1 {
        canvas.line((xs[0], ys[0]), (xs[0], ys[0]), thickness, config.ink);
    }
    for j in 1..xs.len() {
        canvas.line(
            (xs[j - 1], ys[j - 1]),
            (xs[j], ys[j]),
            thickness,
            config.ink,
        );
    }
}

/// Row of the trace at column `x`: the first sample mapped to that column.
fn trace_row_at(x: u32, ys: &[i64], width: u32) -> i64 {
    let len = ys.len() as u64;
    let j = ((x as u64 * len).div_ceil(width as u64)).min(len - 1);
    ys[j as usize]
}

/// Renders one beat's window into a square image.
pub fn rasterize_beat(
    record: &EcgRecord,
    beat: &BeatAnnotation,
    boundary: &NomogramBoundary,
    config: &RenderConfig,
    colored: bool,
) -> Result<EcgImage, RenderError> {
    config.validate()?;
    let size = config.beat_size;
    let segment = slice_beat_window(record, beat, &config.window);
    let scale = VerticalScale::new(&segment, size, config.margin_frac, &record.record_id)?;
    let len = segment.len() as u64;
    let xs: Vec<i64> = (0..len).map(|j| (j * size as u64 / len) as i64).collect();
    let ys: Vec<i64> = segment.iter().map(|&v| scale.row(v)).collect();

    let mut canvas = Canvas::new(size, size, config.background);
    let fill = colored.then(|| {
        let fs = record.sample_rate_hz;
        SpanFill {
            span: beat_span(record, config),
            px_per_ms: size as f64 * fs / (1000.0 * len as f64),
            threshold_ms: boundary.qt_at(record.hr_bpm),
            qt_ms: record.qt_ms,
            baseline_row: scale.row(beat_baseline(record, beat, &config.window)),
            config,
        }
    });
    if let Some(f) = &fill {
        f.fill(&mut canvas, |x| trace_row_at(x, &ys, size));
    }
    draw_trace(&mut canvas, &xs, &ys, config);
    if let Some(f) = &fill {
        f.mark_baseline(&mut canvas);
    }
    Ok(EcgImage {
        width: size,
        height: size,
        pixels: canvas.pixels,
        kind: ImageKind::SingleBeat,
        colored,
        source_record_id: record.record_id.clone(),
        render_config_hash: config.variant_hash(ImageKind::SingleBeat, colored, boundary),
    })
}

/// Renders the whole record; each annotated beat's QT span is filled when
/// `colored` is set.
pub fn rasterize_rhythm(
    record: &EcgRecord,
    beats: &[BeatAnnotation],
    boundary: &NomogramBoundary,
    config: &RenderConfig,
    colored: bool,
) -> Result<EcgImage, RenderError> {
    config.validate()?;
    let n = record.samples.len();
    let expected = (config.rhythm_duration_s * record.sample_rate_hz).round() as usize;
    if n == 0 || n.abs_diff(expected) > 1 {
        return Err(RenderError::DurationMismatch {
            record_id: record.record_id.clone(),
            actual_s: record.duration_s(),
            expected_s: config.rhythm_duration_s,
        });
    }
    let (width, height) = (config.rhythm_width, config.rhythm_height);
    let scale = VerticalScale::new(
        &record.samples,
        height,
        config.margin_frac,
        &record.record_id,
    )?;
    let xs: Vec<i64> = (0..n as u64)
        .map(|j| (j * width as u64 / n as u64) as i64)
        .collect();
    let ys: Vec<i64> = record.samples.iter().map(|&v| scale.row(v)).collect();

    let mut canvas = Canvas::new(width, height, config.background);
    let fills: Vec<SpanFill> = if colored {
        let threshold_ms = boundary.qt_at(record.hr_bpm);
        let px_per_ms = width as f64 * record.sample_rate_hz / (1000.0 * n as f64);
        rhythm_spans(record, beats, config)
            .into_iter()
            .zip(beats)
            .map(|(span, beat)| SpanFill {
                span,
                px_per_ms,
                threshold_ms,
                qt_ms: record.qt_ms,
                baseline_row: scale.row(beat_baseline(record, beat, &config.window)),
                config,
            })
            .collect()
    } else {
        Vec::new()
    };
    for f in &fills {
        f.fill(&mut canvas, |x| trace_row_at(x, &ys, width));
    }
    draw_trace(&mut canvas, &xs, &ys, config);
    for f in &fills {
        f.mark_baseline(&mut canvas);
    }
    Ok(EcgImage {
        width,
        height,
        pixels: canvas.pixels,
        kind: ImageKind::Rhythm,
        colored,
        source_record_id: record.record_id.clone(),
        render_config_hash: config.variant_hash(ImageKind::Rhythm, colored, boundary),
    })
}
