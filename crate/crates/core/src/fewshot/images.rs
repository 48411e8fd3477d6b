//! Conversion of rendered images into network inputs.

use super::FewShotError;
use crate::dataset::{Catalog, CatalogEntry, Representation};
use crate::nomogram::RiskLabel;
use crate::render::{decode_png, EcgImage, ImageKind};

pub const CHANNELS: usize = 3;

/// Default training resolution `(height, width)` for an image kind.
pub fn input_size_for(kind: ImageKind) -> (usize, usize) {
    match kind {
        ImageKind::SingleBeat => (64, 64),
        ImageKind::Rhythm => (32, 256),
    }
}

/// Box-downscales to `height × width` and maps intensity to `1 - v/255` so
/// the white background is zero. Output layout `C × H × W`.
pub fn image_to_input(
    image: &EcgImage,
    height: usize,
    width: usize,
) -> Result<Vec<f32>, FewShotError> {
    let (sh, sw) = (image.height as usize, image.width as usize);
    if height == 0 || width == 0 || height > sh || width > sw {
        return Err(FewShotError::Image {
            id: image.source_record_id.clone(),
            message: format!("cannot downscale {sw}x{sh} to {width}x{height}"),
        });
    }
    let mut out = vec![0f32; CHANNELS * height * width];
    let plane = height * width;
    for y in 0..height {
        let (y0, y1) = (y * sh / height, (y + 1) * sh / height);
        for x in 0..width {
            let (x0, x1) = (x * sw / width, (x + 1) * sw / width);
            let mut acc = [0u32; CHANNELS];
            for yy in y0..y1 {
                let row = &image.pixels[(yy * sw + x0) * 3..(yy * sw + x1) * 3];
                for px in row.chunks_exact(3) {
                    for c in 0..CHANNELS {
                        acc[c] += px[c] as u32;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f32 * 255.0;
            for c in 0..CHANNELS {
                out[c * plane + y * width + x] = 1.0 - acc[c] as f32 / n;
            }
        }
    }
    Ok(out)
}

/// A labeled set of network inputs for one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub ids: Vec<String>,
    pub labels: Vec<RiskLabel>,
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl ImageSet {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            ids: Vec::new(),
            labels: Vec::new(),
            height,
            width,
            data: Vec::new(),
        }
    }

    pub fn item_len(&self) -> usize {
        CHANNELS * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(
        &mut self,
        id: String,
        label: RiskLabel,
        input: Vec<f32>,
    ) -> Result<(), FewShotError> {
        if input.len() != self.item_len() {
            return Err(FewShotError::ShapeMismatch {
                expected: self.item_len(),
                actual: input.len(),
            });
        }
        self.ids.push(id);
        self.labels.push(label);
        self.data.extend(input);
        Ok(())
    }

    pub fn push_image(&mut self, label: RiskLabel, image: &EcgImage) -> Result<(), FewShotError> {
        let input = image_to_input(image, self.height, self.width)?;
        self.push(image.source_record_id.clone(), label, input)
    }

    pub fn item(&self, i: usize) -> &[f32] {
        &self.data[i * self.item_len()..(i + 1) * self.item_len()]
    }

    pub fn class_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.class_index()).collect()
    }

    /// Concatenates the given items into one batch buffer.
    pub fn gather(&self, indices: impl IntoIterator<Item = usize>) -> Vec<f32> {
        let mut out = Vec::new();
        for i in indices {
            out.extend_from_slice(self.item(i));
        }
        out
    }

    /// Sub-set of the items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            height: self.height,
            width: self.width,
            data: self.gather(indices.iter().copied()),
        }
    }

    /// Decodes the catalog images of `rep` for `entries`.
    pub fn load(
        catalog: &Catalog,
        entries: &[CatalogEntry],
        rep: Representation,
        size: (usize, usize),
    ) -> Result<ImageSet, crate::Error> {
        let decode = |e: &CatalogEntry| -> Result<Vec<f32>, crate::Error> {
            let img = decode_png(&catalog.image_path(e, rep))?;
            Ok(image_to_input(&img, size.0, size.1)?)
        };
        #[cfg(feature = "parallel")]
        let inputs: Vec<_> = {
            use rayon::prelude::*;
            entries.par_iter().map(decode).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let inputs: Vec<_> = entries.iter().map(decode).collect();
        let mut set = ImageSet::new(size.0, size.1);
        for (e, input) in entries.iter().zip(inputs) {
            set.push(e.record_id.clone(), e.label, input?)?;
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: u32, h: u32, fill: [u8; 3]) -> EcgImage {
        EcgImage {
            width: w,
            height: h,
            pixels: fill.repeat((w * h) as usize),
            kind: ImageKind::SingleBeat,
            colored: true,
            source_record_id: "r".into(),
            render_config_hash: String::new(),
        }
    }

    #[test]
    fn white_maps_to_zero_and_black_to_one() {
        assert!(image_to_input(&image(8, 8, [255; 3]), 4, 4)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(image_to_input(&image(8, 8, [0; 3]), 2, 2)
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn box_average() {
        let mut img = image(4, 2, [255; 3]);
        // one red pixel in the left 2x2 block
        img.pixels[0..3].copy_from_slice(&[255, 0, 0]);
        let x = image_to_input(&img, 1, 2).unwrap();
        // channel-major: R plane, G plane, B plane
        assert_eq!(x, vec![0.0, 0.0, 0.25, 0.0, 0.25, 0.0]);
    }

    #[test]
    fn upscale_rejected() {
        assert!(image_to_input(&image(4, 4, [0; 3]), 8, 8).is_err());
    }
}
