use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::nomogram::NomogramBoundary;
use crate::util::canon_f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorStop {
    pub u: f64,
    pub rgb: [u8; 3],
}

/// Piecewise-linear color gradient over the elapsed-QT ratio `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScale", into = "RawScale")]
pub struct ColorScale {
    stops: Vec<ColorStop>,
    clamp_low: f64,
    clamp_high: f64,
}

#[derive(Serialize, Deserialize)]
struct RawScale {
    stops: Vec<ColorStop>,
    #[serde(default)]
    clamp_low: f64,
    #[serde(default = "one")]
    clamp_high: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawScale> for ColorScale {
    type Error = RenderError;

    fn try_from(raw: RawScale) -> Result<Self, Self::Error> {
        ColorScale::new(raw.stops, raw.clamp_low, raw.clamp_high)
    }
}

impl From<ColorScale> for RawScale {
    fn from(s: ColorScale) -> Self {
        RawScale {
            stops: s.stops,
            clamp_low: s.clamp_low,
            clamp_high: s.clamp_high,
        }
    }
}

impl Default for ColorScale {
    /// green (0) → yellow (0.70) → orange (0.90) → red (1.00)
    fn default() -> Self {
        ColorScale::new(
            vec![
                ColorStop {
                    u: 0.0,
                    rgb: [0, 128, 0],
                },
                ColorStop {
                    u: 0.70,
                    rgb: [255, 255, 0],
                },
                ColorStop {
                    u: 0.90,
                    rgb: [255, 165, 0],
                },
                ColorStop {
                    u: 1.00,
                    rgb: [255, 0, 0],
                },
            ],
            0.0,
            1.0,
        )
        .expect("default scale is valid")
    }
}

impl ColorScale {
    pub fn new(
        stops: Vec<ColorStop>,
        clamp_low: f64,
        clamp_high: f64,
    ) -> Result<Self, RenderError> {
        let invalid = |m: &str| Err(RenderError::InvalidColorScale(m.to_string()));
        if stops.first().map(|s| s.u) != Some(0.0) {
            return invalid("first stop must be at u=0");
        }
        if stops.windows(2).any(|w| !(w[1].u > w[0].u)) {
            return invalid("stop positions must be strictly increasing");
        }
        if !stops.iter().any(|s| s.u == 1.0) {
            return invalid("a stop must sit at u=1.0");
        }
        if !(clamp_low.is_finite() && clamp_high.is_finite() && clamp_low <= clamp_high) {
            return invalid("clamp range must be finite and ordered");
        }
        Ok(Self {
            stops,
            clamp_low,
            clamp_high,
        })
    }

    pub fn stops(&self) -> &[ColorStop] {
        &self.stops
    }

    /// Color for ratio `u`, clamped to the scale range.
    pub fn color_at(&self, u: f64) -> [u8; 3] {
        let u = if u.is_nan() {
            self.clamp_low
        } else {
            u.clamp(self.clamp_low, self.clamp_high)
        };
        let first = self.stops[0];
        let last = self.stops[self.stops.len() - 1];
        if u <= first.u {
            return first.rgb;
        }
        if u >= last.u {
            return last.rgb;
        }
        let i = self
            .stops
            .iter()
            .position(|s| s.u > u)
            .expect("u below last stop");
        let (a, b) = (self.stops[i - 1], self.stops[i]);
        let t = (u - a.u) / (b.u - a.u);
        let mut out = [0u8; 3];
        for c in 0..3 {
            let (ca, cb) = (a.rgb[c] as f64, b.rgb[c] as f64);
            out[c] = (ca + (cb - ca) * t).round().clamp(0.0, 255.0) as u8;
        }
        out
    }

    pub(crate) fn canonical(&self) -> String {
        let stops: Vec<String> = self
            .stops
            .iter()
            .map(|s| format!("{}:{},{},{}", canon_f64(s.u), s.rgb[0], s.rgb[1], s.rgb[2]))
            .collect();
        format!(
            "color_clamp={},{}\ncolor_stops={}",
            canon_f64(self.clamp_low),
            canon_f64(self.clamp_high),
            stops.join(";")
        )
    }
}

/// Elapsed time since QRS onset as a fraction of the at-risk QT threshold for
/// this heart rate. Reaches 1.0 exactly at the threshold.
pub fn elapsed_ratio(t_ms: f64, hr_bpm: f64, boundary: &NomogramBoundary) -> f64 {
    t_ms.max(0.0) / boundary.qt_at(hr_bpm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scale_examples() {
        let s = ColorScale::default();
        assert_eq!(s.color_at(0.0), [0, 128, 0]);
        assert_eq!(s.color_at(1.5), [255, 0, 0]);
        assert_eq!(s.color_at(0.8), [255, 210, 0]);
        assert_eq!(s.color_at(-3.0), [0, 128, 0]);
        assert_eq!(s.color_at(1.0), [255, 0, 0]);
        assert_eq!(s.color_at(0.7), [255, 255, 0]);
    }

    #[test]
    fn ratio_examples() {
        let b = NomogramBoundary::fixture();
        assert_eq!(elapsed_ratio(0.0, 60.0, &b), 0.0);
        assert_eq!(elapsed_ratio(460.0, 60.0, &b), 1.0);
        assert_eq!(elapsed_ratio(230.0, 60.0, &b), 0.5);
    }

    #[test]
    fn invalid_scales() {
        let stop = |u: f64| ColorStop { u, rgb: [0, 0, 0] };
        assert!(ColorScale::new(vec![stop(0.1), stop(1.0)], 0.0, 1.0).is_err());
        assert!(ColorScale::new(vec![stop(0.0), stop(0.5)], 0.0, 1.0).is_err());
        assert!(
            ColorScale::new(vec![stop(0.0), stop(0.5), stop(0.5), stop(1.0)], 0.0, 1.0).is_err()
        );
        assert!(ColorScale::new(vec![stop(0.0), stop(1.0)], 1.0, 0.0).is_err());
    }

    fn hue(rgb: [u8; 3]) -> f64 {
        let [r, g, b] = rgb.map(|c| c as f64);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        if max == min {
            return 0.0;
        }
        let h = if max == r {
            60.0 * ((g - b) / (max - min))
        } else if max == g {
            60.0 * (2.0 + (b - r) / (max - min))
        } else {
            60.0 * (4.0 + (r - g) / (max - min))
        };
        h.rem_euclid(360.0)
    }

    #[test]
    fn hue_never_reverses() {
        let s = ColorScale::default();
        let mut prev = f64::INFINITY;
        for i in 0..=1200 {
            let h = hue(s.color_at(i as f64 / 1000.0));
            // 8-bit rounding jitters hue by well under a degree
            assert!(h <= prev + 1.0, "hue rose at u={}", i as f64 / 1000.0);
            prev = h;
        }
    }
}
