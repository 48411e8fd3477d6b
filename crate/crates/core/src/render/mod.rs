//! Rasterization of ECG records into single-beat and rhythm images.

mod color;
mod config;
mod png_io;
mod raster;

use thiserror::Error;

pub use color::{elapsed_ratio, ColorScale, ColorStop};
pub use config::{BeatChoice, RenderConfig};
pub use png_io::{decode_png, encode_png, encode_png_with_text, read_png_text, PngText};
pub use raster::{
    beat_span, rasterize_beat, rasterize_rhythm, rhythm_spans, EcgImage, ImageKind, QtSpan,
};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid color scale: {0}")]
    InvalidColorScale(String),
    #[error("record {record_id}: cannot normalize voltage range ({detail})")]
    RasterOverflow { record_id: String, detail: String },
    #[error("record {record_id}: duration {actual_s:.3} s does not match rhythm duration {expected_s} s")]
    DurationMismatch {
        record_id: String,
        actual_s: f64,
        expected_s: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: png {message}")]
    Png { path: String, message: String },
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
}
