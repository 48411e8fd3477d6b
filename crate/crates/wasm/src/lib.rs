//! Browser bindings: render a synthetic record in any of the four image
//! representations, label a QT/HR pair against the boundary, and sample
//! the color scale.

use chromaqt::dataset::{render_record, Representation};
use chromaqt::nomogram::NomogramBoundary;
use chromaqt::render::{elapsed_ratio, ColorScale, ImageKind};
use chromaqt::signal::DetectorParams;
use chromaqt::synth::{generate_record, SynthSpec};
use chromaqt::RenderConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// An RGBA image ready for `ImageData`.
#[wasm_bindgen]
pub struct RenderedImage {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
    label: String,
}

#[wasm_bindgen]
impl RenderedImage {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn label(&self) -> String {
        self.label.clone()
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Synthesizes a 10 s record with the given heart rate and QT, then renders
/// one representation: `rhythm` picks the 10 s strip over the single beat.
#[wasm_bindgen]
pub fn render_synthetic(
    hr_bpm: f64,
    qt_ms: f64,
    rhythm: bool,
    colored: bool,
    seed: u64,
) -> Result<RenderedImage, JsError> {
    let spec = SynthSpec::default();
    let boundary = NomogramBoundary::fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synthetic = generate_record(
        "demo",
        &spec.shape,
        hr_bpm,
        qt_ms,
        &spec.noise,
        &spec.timebase,
        &mut rng,
    )
    .map_err(js_err)?;
    let label = boundary.classify(qt_ms, hr_bpm).map_err(js_err)?;
    let images = render_record(
        &synthetic.record,
        &boundary,
        &RenderConfig::default(),
        &DetectorParams::default(),
    )
    .map_err(js_err)?;
    let want = Representation {
        kind: if rhythm {
            ImageKind::Rhythm
        } else {
            ImageKind::SingleBeat
        },
        colored,
    };
    let i = Representation::ALL
        .iter()
        .position(|r| *r == want)
        .expect("known representation");
    let img = &images[i];
    let mut rgba = Vec::with_capacity(img.pixels.len() / 3 * 4);
    for px in img.pixels.chunks_exact(3) {
        rgba.extend_from_slice(&[px[0], px[1], px[2], 255]);
    }
    Ok(RenderedImage {
        width: img.width,
        height: img.height,
        rgba,
        label: label.to_string(),
    })
}

/// Label of a QT/HR pair under the built-in (non-clinical) fixture boundary.
#[wasm_bindgen]
pub fn classify(qt_ms: f64, hr_bpm: f64) -> Result<String, JsError> {
    Ok(NomogramBoundary::fixture()
        .classify(qt_ms, hr_bpm)
        .map_err(js_err)?
        .to_string())
}

/// Boundary QT at a heart rate.
#[wasm_bindgen]
pub fn threshold_at(hr_bpm: f64) -> f64 {
    NomogramBoundary::fixture().qt_at(hr_bpm)
}

/// Fill color `[r, g, b]` for `t_ms` after QRS onset at a heart rate.
#[wasm_bindgen]
pub fn color_at(t_ms: f64, hr_bpm: f64) -> Vec<u8> {
    let u = elapsed_ratio(t_ms, hr_bpm, &NomogramBoundary::fixture());
    ColorScale::default().color_at(u).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_kinds() {
        let beat = render_synthetic(60.0, 480.0, false, true, 1).unwrap();
        assert_eq!((beat.width(), beat.height()), (256, 256));
        assert_eq!(beat.rgba().len(), 256 * 256 * 4);
        assert_eq!(beat.label(), "at_risk");
        let strip = render_synthetic(60.0, 400.0, true, false, 1).unwrap();
        assert_eq!((strip.width(), strip.height()), (2048, 256));
    }

    #[test]
    fn labels_and_colors() {
        assert_eq!(classify(460.0, 60.0).unwrap(), "at_risk");
        assert_eq!(classify(459.0, 60.0).unwrap(), "no_risk");
        assert_eq!(threshold_at(60.0), 460.0);
        assert_eq!(color_at(460.0, 60.0), vec![255, 0, 0]);
        assert_eq!(color_at(0.0, 60.0), vec![0, 128, 0]);
    }
}
