//! Local perturbation explanations: grid segments are switched off to the
//! background color, the model is queried on each variant, and a weighted
//! ridge surrogate attributes the target-class probability to segments.

mod model;
mod segment;
mod surrogate;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{ClassifierModel, ConstantModel, PlantedSegmentModel, ProbabilityModel};
pub use segment::{perturb, proximity_weight, segment_image, SegmentMap};
pub use surrogate::{fit_surrogate, SurrogateFit};

use crate::render::{EcgImage, ImageKind};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid explainer input: {0}")]
    InvalidInput(String),
    #[error("need at least {need} samples, have {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("surrogate normal equations are singular")]
    SingularSystem,
    #[error("model query failed: {0}")]
    Model(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub single_cell_px: u32,
    pub rhythm_cell_px: u32,
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub top_k: usize,
    /// Probability that a segment stays on in a sampled mask.
    pub keep_probability: f64,
    pub background: [u8; 3],
    /// Explanations below this fidelity are flagged low-confidence.
    pub min_fidelity: f64,
    pub highlight: [u8; 3],
    pub max_opacity: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            single_cell_px: 16,
            rhythm_cell_px: 32,
            n_samples: 1000,
            kernel_width: 0.25,
            ridge_lambda: 1.0,
            top_k: 10,
            keep_probability: 0.5,
            background: [255, 255, 255],
            min_fidelity: 0.2,
            highlight: [0, 90, 255],
            max_opacity: 0.6,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let bad = |m: &str| Err(ExplainError::InvalidInput(m.to_string()));
        if self.single_cell_px == 0 || self.rhythm_cell_px == 0 {
            return bad("cell size must be positive");
        }
        if !(self.kernel_width > 0.0) {
            return bad("kernel width must be positive");
        }
        if !(self.ridge_lambda >= 0.0) {
            return bad("ridge lambda must be non-negative");
        }
        if !(self.keep_probability > 0.0 && self.keep_probability < 1.0) {
            return bad("keep probability must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.max_opacity) {
            return bad("max opacity must lie in [0, 1]");
        }
        if self.n_samples < 2 {
            return bad("need at least 2 samples");
        }
        Ok(())
    }

    pub fn cell_px(&self, kind: ImageKind) -> u32 {
        match kind {
            ImageKind::SingleBeat => self.single_cell_px,
            ImageKind::Rhythm => self.rhythm_cell_px,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub record_id: String,
    pub kind: ImageKind,
    pub colored: bool,
    pub cell_px: u32,
    pub n_segments: usize,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub selected: Vec<usize>,
    pub kernel_width: f64,
    pub n_samples: usize,
    pub target_class: usize,
    /// Model probability of the target class on the unperturbed image.
    pub target_probability: f64,
    pub fidelity: f64,
    pub low_confidence: bool,
    pub seed: u64,
    pub config: ExplainConfig,
}

impl Explanation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explanation serializes")
    }

    pub fn save_json(&self, path: &Path) -> Result<(), crate::Error> {
        std::fs::write(path, self.to_json()).map_err(|e| crate::Error::io(path, e))
    }

    /// Index of the segment with the largest `|weight|`.
    pub fn top_segment(&self) -> Option<usize> {
        self.selected.first().copied()
    }

    /// Sums of positive weight inside and outside the flagged segments.
    pub fn positive_mass(&self, inside: &[bool]) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        for (&w, &i) in self.weights.iter().zip(inside) {
            if w > 0.0 {
                if i {
                    a += w;
                } else {
                    b += w;
                }
            }
        }
        (a, b)
    }
}

/// Overlay file name for an explained image.
pub fn overlay_file_name(record_id: &str, kind: ImageKind, colored: bool) -> String {
    format!(
        "{record_id}_{}_{}_explain.png",
        kind.as_str(),
        if colored { "color" } else { "gray" }
    )
}

/// Draws the mask sample set: the all-on mask first, then random masks.
pub fn sample_masks(
    n_segments: usize,
    n_samples: usize,
    keep_probability: f64,
    seed: u64,
) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::with_capacity(n_samples);
    masks.push(vec![true; n_segments]);
    while masks.len() < n_samples {
        masks.push(
            (0..n_segments)
                .map(|_| rng.random_bool(keep_probability))
                .collect(),
        );
    }
    masks
}

/// Explains `model`'s probability for `target` (default: predicted class).
pub fn explain<M: ProbabilityModel + ?Sized>(
    model: &M,
    image: &EcgImage,
    config: &ExplainConfig,
    target: Option<usize>,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    config.validate()?;
    let cell_px = config.cell_px(image.kind);
    let segments = segment_image(image, cell_px);
    let p = segments.n_segments;
    let masks = sample_masks(p, config.n_samples, config.keep_probability, seed);
    let probs = model.predict_masked(image, &segments, &masks, config.background)?;
    if probs.len() != masks.len() {
        return Err(ExplainError::Model(format!(
            "{} outputs for {} inputs",
            probs.len(),
            masks.len()
        )));
    }
    let base = &probs[0];
    let target_class = match target {
        Some(t) => t,
        None => crate::fewshot::predict(base),
    };
    if target_class >= base.len() {
        return Err(ExplainError::InvalidInput(format!(
            "target class {target_class} out of range"
        )));
    }
    let y: Vec<f64> = probs.iter().map(|pr| pr[target_class]).collect();
    let w: Vec<f64> = masks
        .iter()
        .map(|m| proximity_weight(m, config.kernel_width))
        .collect();
    let z: Vec<f64> = masks
        .iter()
        .flat_map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect();
    let fit = fit_surrogate(&z, p, &y, &w, config.ridge_lambda, config.top_k)?;
    Ok(Explanation {
        record_id: image.source_record_id.clone(),
        kind: image.kind,
        colored: image.colored,
        cell_px,
        n_segments: p,
        low_confidence: fit.fidelity < config.min_fidelity,
        weights: fit.weights,
        intercept: fit.intercept,
        selected: fit.selected,
        kernel_width: config.kernel_width,
        n_samples: masks.len(),
        target_class,
        target_probability: y[0],
        fidelity: fit.fidelity,
        seed,
        config: config.clone(),
    })
}

/// Tints positive-weight segments with the highlight color, opacity
/// proportional to weight relative to the largest positive weight.
pub fn render_overlay(image: &EcgImage, explanation: &Explanation) -> EcgImage {
    let segments = segment_image(image, explanation.cell_px);
    let max = explanation.weights.iter().copied().fold(0.0, f64::max);
    let mut out = image.clone();
    if max <= 0.0 {
        return out;
    }
    let hl = explanation.config.highlight;
    for (px, &id) in out.pixels.chunks_exact_mut(3).zip(segments.ids()) {
        let wgt = explanation.weights[id as usize];
        if wgt > 0.0 {
            let a = explanation.config.max_opacity * wgt / max;
            for c in 0..3 {
                px[c] = (px[c] as f64 * (1.0 - a) + hl[c] as f64 * a).round() as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> EcgImage {
        let (w, h) = (64u32, 64u32);
        let mut pixels = vec![255u8; (w * h * 3) as usize];
        for (i, v) in pixels.iter_mut().enumerate() {
            if (i / 3) % 7 == 0 {
                *v = 20;
            }
        }
        EcgImage {
            width: w,
            height: h,
            pixels,
            kind: ImageKind::SingleBeat,
            colored: false,
            source_record_id: "t".into(),
            render_config_hash: String::new(),
        }
    }

    #[test]
    fn constant_model_has_no_signal() {
        let cfg = ExplainConfig {
            n_samples: 200,
            ..Default::default()
        };
        let e = explain(&ConstantModel::new(0.7), &image(), &cfg, None, 3).unwrap();
        assert!(e.weights.iter().all(|w| w.abs() < 0.01));
        assert_eq!(e.fidelity, 0.0);
        assert!(e.low_confidence);
    }

    #[test]
    fn planted_segment_recovered_and_deterministic() {
        let img = image();
        let seg = segment_image(&img, 16);
        let model = PlantedSegmentModel::new(&seg, 5);
        let cfg = ExplainConfig {
            n_samples: 300,
            ..Default::default()
        };
        let a = explain(&model, &img, &cfg, Some(1), 11).unwrap();
        assert_eq!(a.top_segment(), Some(5));
        assert!(a.fidelity > 0.5);
        assert_eq!(a, explain(&model, &img, &cfg, Some(1), 11).unwrap());
        let overlay = render_overlay(&img, &a);
        assert_ne!(overlay, img);
    }

    #[test]
    fn first_mask_is_all_on() {
        let m = sample_masks(10, 5, 0.5, 1);
        assert_eq!(m.len(), 5);
        assert!(m[0].iter().all(|&b| b));
    }
}
