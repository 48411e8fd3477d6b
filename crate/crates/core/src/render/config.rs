use serde::{Deserialize, Serialize};

use super::{ColorScale, ImageKind, RenderError};
use crate::nomogram::NomogramBoundary;
use crate::signal::BeatWindow;
use crate::util::{canon_f64, sha256_hex};

/// Which beat of a record becomes the single-beat image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatChoice {
    /// R peak nearest the record midpoint.
    #[default]
    Central,
    First,
}

/// Every setting that affects rendered pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub beat_size: u32,
    pub rhythm_width: u32,
    pub rhythm_height: u32,
    pub rhythm_duration_s: f64,
    pub window: BeatWindow,
    pub qrs_offset_ms: f64,
    /// Top and bottom headroom as a fraction of image height.
    pub margin_frac: f64,
    pub trace_width_px: u32,
    pub ink: [u8; 3],
    pub background: [u8; 3],
    pub beat_choice: BeatChoice,
    pub color_scale: ColorScale,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            beat_size: 256,
            rhythm_width: 2048,
            rhythm_height: 256,
            rhythm_duration_s: 10.0,
            window: BeatWindow::default(),
            qrs_offset_ms: 40.0,
            margin_frac: 0.10,
            trace_width_px: 2,
            ink: [20, 20, 20],
            background: [255, 255, 255],
            beat_choice: BeatChoice::Central,
            color_scale: ColorScale::default(),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidConfig(m.to_string()));
        if self.beat_size < 8 || self.rhythm_width < 8 || self.rhythm_height < 8 {
            return bad("image dimensions must be at least 8 px");
        }
        if !(self.margin_frac >= 0.0 && self.margin_frac < 0.5) {
            return bad("margin_frac must lie in [0, 0.5)");
        }
        if self.trace_width_px == 0 {
            return bad("trace_width_px must be positive");
        }
        if !(self.window.pre_ms >= 0.0 && self.window.post_ms > 0.0) {
            return bad("beat window must have non-negative pre and positive post extent");
        }
        if !(self.rhythm_duration_s > 0.0) {
            return bad("rhythm_duration_s must be positive");
        }
        if self.ink.iter().any(|&c| c != self.ink[0])
            || self.background.iter().any(|&c| c != self.background[0])
        {
            return bad("ink and background must be gray");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, RenderError> {
        let cfg: RenderConfig =
            toml::from_str(text).map_err(|e| RenderError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn geometry_canonical(&self, kind: ImageKind) -> String {
        let mut lines = vec![
            format!("background={:?}", self.background),
            format!("beat_choice={:?}", self.beat_choice),
            format!("ink={:?}", self.ink),
            format!("kind={}", kind.as_str()),
            format!("margin_frac={}", canon_f64(self.margin_frac)),
            format!("qrs_offset_ms={}", canon_f64(self.qrs_offset_ms)),
            format!("trace_width_px={}", self.trace_width_px),
        ];
        match kind {
            ImageKind::SingleBeat => {
                lines.push(format!("beat_size={}", self.beat_size));
                lines.push(format!("window_post_ms={}", canon_f64(self.window.post_ms)));
                lines.push(format!("window_pre_ms={}", canon_f64(self.window.pre_ms)));
            }
            ImageKind::Rhythm => {
                lines.push(format!(
                    "rhythm_duration_s={}",
                    canon_f64(self.rhythm_duration_s)
                ));
                lines.push(format!("rhythm_height={}", self.rhythm_height));
                lines.push(format!("rhythm_width={}", self.rhythm_width));
                // rhythm baselines are taken over the beat window
                lines.push(format!("window_post_ms={}", canon_f64(self.window.post_ms)));
                lines.push(format!("window_pre_ms={}", canon_f64(self.window.pre_ms)));
            }
        }
        lines.sort();
        lines.join("\n")
    }

    /// Canonical text of the settings that affect one image variant. Grayscale
    /// variants exclude the color scale and boundary, so recoloring leaves
    /// their hash unchanged.
    pub fn canonical(&self, kind: ImageKind, colored: bool, boundary: &NomogramBoundary) -> String {
        let mut text = self.geometry_canonical(kind);
        text.push_str(&format!("\ncolored={colored}"));
        if colored {
            text.push('\n');
            text.push_str(&self.color_scale.canonical());
            text.push('\n');
            text.push_str(&boundary.canonical());
        }
        text
    }

    /// Hex digest of [`Self::canonical`].
    pub fn variant_hash(
        &self,
        kind: ImageKind,
        colored: bool,
        boundary: &NomogramBoundary,
    ) -> String {
        sha256_hex(&self.canonical(kind, colored, boundary))
    }

    pub fn size_of(&self, kind: ImageKind) -> (u32, u32) {
        match kind {
            ImageKind::SingleBeat => (self.beat_size, self.beat_size),
            ImageKind::Rhythm => (self.rhythm_width, self.rhythm_height),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::ColorStop;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RenderConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RenderConfig::from_toml(&text).unwrap(), cfg);
        let partial = RenderConfig::from_toml("beat_size = 128\n").unwrap();
        assert_eq!(partial.beat_size, 128);
        assert_eq!(partial.rhythm_width, 2048);
        assert!(RenderConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn color_changes_only_colored_hashes() {
        let b = NomogramBoundary::fixture();
        let a = RenderConfig::default();
        let mut c = a.clone();
        c.color_scale = ColorScale::new(
            vec![
                ColorStop {
                    u: 0.0,
                    rgb: [0, 0, 255],
                },
                ColorStop {
                    u: 1.0,
                    rgb: [255, 0, 0],
                },
            ],
            0.0,
            1.0,
        )
        .unwrap();
        for kind in [ImageKind::SingleBeat, ImageKind::Rhythm] {
            assert_eq!(
                a.variant_hash(kind, false, &b),
                c.variant_hash(kind, false, &b)
            );
            assert_ne!(
                a.variant_hash(kind, true, &b),
                c.variant_hash(kind, true, &b)
            );
        }
        let mut wide = a.clone();
        wide.trace_width_px = 1;
        assert_ne!(
            a.variant_hash(ImageKind::Rhythm, false, &b),
            wide.variant_hash(ImageKind::Rhythm, false, &b)
        );
    }
}
