//! Models the explainer can query.

use super::segment::{perturb, SegmentMap};
use super::ExplainError;
use crate::fewshot::{image_to_input, ProtoClassifier, CHANNELS};
use crate::render::EcgImage;

/// Anything that maps images to class probabilities.
pub trait ProbabilityModel: Sync {
    fn predict(&self, images: &[EcgImage]) -> Result<Vec<Vec<f64>>, ExplainError>;

    /// Probabilities for masked variants of `image`. The default perturbs
    /// each variant explicitly in small batches.
    fn predict_masked(
        &self,
        image: &EcgImage,
        segments: &SegmentMap,
        masks: &[Vec<bool>],
        background: [u8; 3],
    ) -> Result<Vec<Vec<f64>>, ExplainError> {
        let mut out = Vec::with_capacity(masks.len());
        for chunk in masks.chunks(16) {
            let batch: Vec<EcgImage> = chunk
                .iter()
                .map(|m| perturb(image, segments, m, background))
                .collect();
            out.extend(self.predict(&batch)?);
        }
        Ok(out)
    }
}

/// Ignores its input.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    probability: f64,
}

impl ConstantModel {
    pub fn new(probability: f64) -> Self {
        Self { probability }
    }
}

impl ProbabilityModel for ConstantModel {
    fn predict(&self, images: &[EcgImage]) -> Result<Vec<Vec<f64>>, ExplainError> {
        Ok(images
            .iter()
            .map(|_| vec![1.0 - self.probability, self.probability])
            .collect())
    }
}

/// Class-1 probability equals the mean darkness of one known segment.
#[derive(Debug, Clone)]
pub struct PlantedSegmentModel {
    pub segment: usize,
    pixels: Vec<usize>,
}

impl PlantedSegmentModel {
    pub fn new(segments: &SegmentMap, segment: usize) -> Self {
        let pixels = segments
            .ids()
            .iter()
            .enumerate()
            .filter(|&(_, &id)| id as usize == segment)
            .map(|(i, _)| i)
            .collect();
        Self { segment, pixels }
    }

    pub fn darkness(&self, image: &EcgImage) -> f64 {
        let sum: f64 = self
            .pixels
            .iter()
            .map(|&i| {
                let px = &image.pixels[i * 3..i * 3 + 3];
                1.0 - (px[0] as f64 + px[1] as f64 + px[2] as f64) / (3.0 * 255.0)
            })
            .sum();
        sum / self.pixels.len().max(1) as f64
    }
}

impl ProbabilityModel for PlantedSegmentModel {
    fn predict(&self, images: &[EcgImage]) -> Result<Vec<Vec<f64>>, ExplainError> {
        Ok(images
            .iter()
            .map(|img| {
                let d = self.darkness(img);
                vec![1.0 - d, d]
            })
            .collect())
    }
}

/// A trained prototypical classifier behind the image interface.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub classifier: ProtoClassifier,
    pub height: usize,
    pub width: usize,
}

impl ClassifierModel {
    pub fn new(classifier: ProtoClassifier) -> Self {
        let arch = classifier.net.arch();
        let (height, width) = (arch.input_height, arch.input_width);
        Self {
            classifier,
            height,
            width,
        }
    }

    /// Segment of each input pixel, if every source pixel of its box lies
    /// in one segment.
    fn input_segments(&self, segments: &SegmentMap) -> Option<Vec<u32>> {
        let (sh, sw) = (segments.height as usize, segments.width as usize);
        let mut out = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            let (y0, y1) = (y * sh / self.height, (y + 1) * sh / self.height);
            for x in 0..self.width {
                let (x0, x1) = (x * sw / self.width, (x + 1) * sw / self.width);
                let id = segments.segment_at(x0 as u32, y0 as u32);
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        if segments.segment_at(xx as u32, yy as u32) != id {
                            return None;
                        }
                    }
                }
                out.push(id as u32);
            }
        }
        Some(out)
    }

    fn to_error(e: crate::fewshot::FewShotError) -> ExplainError {
        ExplainError::Model(e.to_string())
    }
}

impl ProbabilityModel for ClassifierModel {
    fn predict(&self, images: &[EcgImage]) -> Result<Vec<Vec<f64>>, ExplainError> {
        let mut batch = Vec::with_capacity(images.len() * CHANNELS * self.height * self.width);
        for img in images {
            batch.extend(image_to_input(img, self.height, self.width).map_err(Self::to_error)?);
        }
        self.classifier
            .predict_proba(&batch)
            .map_err(Self::to_error)
    }

    /// When segment cells align with the downscale boxes, masking commutes
    /// with downscaling, so variants are built directly at input size.
    fn predict_masked(
        &self,
        image: &EcgImage,
        segments: &SegmentMap,
        masks: &[Vec<bool>],
        background: [u8; 3],
    ) -> Result<Vec<Vec<f64>>, ExplainError> {
        let Some(pixel_segments) = self.input_segments(segments) else {
            let mut out = Vec::with_capacity(masks.len());
            for chunk in masks.chunks(16) {
                let batch: Vec<EcgImage> = chunk
                    .iter()
                    .map(|m| perturb(image, segments, m, background))
                    .collect();
                out.extend(self.predict(&batch)?);
            }
            return Ok(out);
        };
        let base = image_to_input(image, self.height, self.width).map_err(Self::to_error)?;
        let plane = self.height * self.width;
        let bg: Vec<f32> = background.iter().map(|&v| 1.0 - v as f32 / 255.0).collect();
        let mut out = Vec::with_capacity(masks.len());
        for chunk in masks.chunks(64) {
            let mut batch = Vec::with_capacity(chunk.len() * base.len());
            for m in chunk {
                for c in 0..CHANNELS {
                    for (i, &seg) in pixel_segments.iter().enumerate() {
                        batch.push(if m[seg as usize] {
                            base[c * plane + i]
                        } else {
                            bg[c]
                        });
                    }
                }
            }
            out.extend(
                self.classifier
                    .predict_proba(&batch)
                    .map_err(Self::to_error)?,
            );
        }
        Ok(out)
    }
}
