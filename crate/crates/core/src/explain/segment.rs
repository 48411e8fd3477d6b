//! Grid segmentation and mask perturbation.

use serde::{Deserialize, Serialize};

use crate::render::{EcgImage, QtSpan};

/// Pixel → segment assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMap {
    pub width: u32,
    pub height: u32,
    pub cell_px: u32,
    pub n_segments: usize,
    ids: Vec<u32>,
}

impl SegmentMap {
    /// Square grid tiling; the last row/column of cells absorbs any remainder
    /// as narrower cells.
    pub fn grid(width: u32, height: u32, cell_px: u32) -> Self {
        assert!(
            cell_px > 0 && width > 0 && height > 0,
            "grid dimensions must be positive"
        );
        let cols = width.div_ceil(cell_px);
        let rows = height.div_ceil(cell_px);
        let mut ids = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                ids.push((y / cell_px) * cols + x / cell_px);
            }
        }
        Self {
            width,
            height,
            cell_px,
            n_segments: (cols * rows) as usize,
            ids,
        }
    }

    /// Applies a relabeling `new_id = perm[old_id]`.
    pub fn relabeled(&self, perm: &[u32]) -> Self {
        assert_eq!(perm.len(), self.n_segments, "permutation length");
        Self {
            ids: self.ids.iter().map(|&i| perm[i as usize]).collect(),
            ..self.clone()
        }
    }

    pub fn segment_at(&self, x: u32, y: u32) -> usize {
        self.ids[(y * self.width + x) as usize] as usize
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_segments];
        for &i in &self.ids {
            counts[i as usize] += 1;
        }
        counts
    }

    /// Segments with at least half of their pixels inside one of `spans`.
    pub fn span_segments(&self, spans: &[QtSpan]) -> Vec<bool> {
        let mut inside = vec![0usize; self.n_segments];
        for y in 0..self.height {
            for x in 0..self.width {
                if spans.iter().any(|s| s.contains(x)) {
                    inside[self.segment_at(x, y)] += 1;
                }
            }
        }
        inside
            .iter()
            .zip(self.pixel_counts())
            .map(|(&i, n)| 2 * i >= n)
            .collect()
    }
}

pub fn segment_image(image: &EcgImage, cell_px: u32) -> SegmentMap {
    SegmentMap::grid(image.width, image.height, cell_px)
}

/// Replaces the pixels of every segment whose mask entry is `false` with
/// `background`.
pub fn perturb(
    image: &EcgImage,
    segments: &SegmentMap,
    mask: &[bool],
    background: [u8; 3],
) -> EcgImage {
    assert_eq!(mask.len(), segments.n_segments, "mask length");
    assert_eq!(
        (image.width, image.height),
        (segments.width, segments.height),
        "segment map size"
    );
    let mut out = image.clone();
    for (px, &id) in out.pixels.chunks_exact_mut(3).zip(segments.ids()) {
        if !mask[id as usize] {
            px.copy_from_slice(&background);
        }
    }
    out
}

/// `exp(-d^2 / sigma^2)` with `d` the fraction of segments switched off.
pub fn proximity_weight(mask: &[bool], kernel_width: f64) -> f64 {
    assert!(kernel_width > 0.0, "kernel width must be positive");
    if mask.is_empty() {
        return 1.0;
    }
    let d = mask.iter().filter(|&&m| !m).count() as f64 / mask.len() as f64;
    (-(d * d) / (kernel_width * kernel_width)).exp()
}
