//! Traffic colour recognition on decoded tiles.

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::status::TrafficStatus;

use super::FeedError;

/// Colour thresholds for one provider's traffic palette.
///
/// The default reproduces the four-colour rule set: green and orange
/// strokes have distinct G and B channels and are split by red at 240;
/// red and purple strokes have G ≈ B and are split by red at 200.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierRules {
    /// `|G - B| <= tau` counts as G = B.
    pub tau: u8,
    /// Highest red value still read as smooth when G != B.
    pub smooth_max_red: u8,
    /// Lowest red value read as congested when G = B.
    pub congested_min_red: u8,
    /// Pixels whose channel spread is at most this are background.
    pub background_chroma: u8,
    /// Pixels less opaque than this are background.
    pub min_alpha: u8,
}

impl Default for ClassifierRules {
    fn default() -> Self {
        ClassifierRules {
            tau: 8,
            smooth_max_red: 240,
            congested_min_red: 200,
            background_chroma: 16,
            min_alpha: 128,
        }
    }
}

pub fn classify_rgb(r: u8, g: u8, b: u8, rules: &ClassifierRules) -> TrafficStatus {
    let spread = r.max(g).max(b) - r.min(g).min(b);
    if spread <= rules.background_chroma {
        return TrafficStatus::Unknown;
    }
    if g.abs_diff(b) > rules.tau {
        if r <= rules.smooth_max_red {
            TrafficStatus::Smooth
        } else {
            TrafficStatus::Slow
        }
    } else if r >= rules.congested_min_red {
        TrafficStatus::Congested
    } else {
        TrafficStatus::Severe
    }
}

pub fn classify_pixel(px: [u8; 4], rules: &ClassifierRules) -> TrafficStatus {
    if px[3] < rules.min_alpha {
        return TrafficStatus::Unknown;
    }
    classify_rgb(px[0], px[1], px[2], rules)
}

pub fn decode_tile(bytes: &[u8]) -> Result<RgbaImage, FeedError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgba8())
        .map_err(|e| FeedError::Decode(e.to_string()))
}

/// Offsets inside a disc of `radius`, nearest first; ties broken by row
/// then column so the search order is fixed.
pub fn spiral(radius: u32) -> Vec<(i64, i64)> {
    let r = i64::from(radius);
    let mut out: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    out.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));
    out
}

/// Status at `(x, y)`, or at the nearest classifiable pixel within `radius`.
pub fn sample_point(
    img: &RgbaImage,
    x: u32,
    y: u32,
    radius: u32,
    rules: &ClassifierRules,
) -> Result<(TrafficStatus, Option<[u8; 3]>), FeedError> {
    let (w, h) = img.dimensions();
    if x >= w || y >= h {
        return Err(FeedError::OffsetOutsideImage { x, y, w, h });
    }
    for (dx, dy) in spiral(radius) {
        let (px, py) = (i64::from(x) + dx, i64::from(y) + dy);
        if px < 0 || py < 0 || px >= i64::from(w) || py >= i64::from(h) {
            continue;
        }
        let p = img.get_pixel(px as u32, py as u32).0;
        let status = classify_pixel(p, rules);
        if status.is_known() {
            return Ok((status, Some([p[0], p[1], p[2]])));
        }
    }
    Ok((TrafficStatus::Unknown, None))
}
