use crate::geo::TileAddress;

use super::FeedError;

const REQUIRED: [&str; 3] = ["{x}", "{y}", "{z}"];

/// A tile URL with `{z}`, `{x}`, `{y}` and optional `{time}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlTemplate(String);

impl UrlTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, FeedError> {
        let template = template.into();
        for p in REQUIRED {
            if !template.contains(p) {
                return Err(FeedError::Template(format!("missing placeholder {p}")));
            }
        }
        Ok(UrlTemplate(template))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Substitutes the tile coordinates; `{time}` becomes `now_ms`.
    pub fn render(&self, t: &TileAddress, now_ms: i64) -> String {
        self.0
            .replace("{z}", &t.zoom.to_string())
            .replace("{x}", &t.x.to_string())
            .replace("{y}", &t.y.to_string())
            .replace("{time}", &now_ms.to_string())
    }

    /// Substitutes the tile coordinates and leaves `{time}` in place, the
    /// form replay manifests are keyed by.
    pub fn render_untimed(&self, t: &TileAddress) -> String {
        self.0
            .replace("{z}", &t.zoom.to_string())
            .replace("{x}", &t.x.to_string())
            .replace("{y}", &t.y.to_string())
    }
}

pub fn build_request(t: &TileAddress, template: &str, now_ms: i64) -> Result<String, FeedError> {
    Ok(UrlTemplate::new(template)?.render(t, now_ms))
}
