//! Geographic, world-pixel, tile and in-tile coordinate conversions.
//!
//! A monitored location travels geographic -> plane -> world pixel -> tile
//! plus in-tile offset. The plane step is owned by a [`ProviderProfile`], so
//! map sources that move the origin or flip the y axis plug in without
//! touching the conversion code.

mod mesh;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use mesh::{
    discretize, haversine_m, read_point_net_csv, read_roads_csv, write_point_net_csv, MeshPoint,
    Polyline, Road,
};

/// Mean earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Latitude limit of the square spherical mercator world.
pub const MERCATOR_MAX_LAT: f64 = 85.051_128_779_806_59;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    InvalidLongitude(f64),
    #[error("latitude {lat} not projectable by profile `{profile}` (limit {limit})")]
    NotProjectable {
        lat: f64,
        limit: f64,
        profile: String,
    },
    #[error("zoom {zoom} outside supported range {min}..={max}")]
    UnsupportedZoom { zoom: u8, min: u8, max: u8 },
    #[error("tile ({x}, {y}) outside the {n}x{n} grid at this zoom")]
    TileOutOfRange { x: u32, y: u32, n: u64 },
    #[error("in-tile offset ({0}, {1}) outside tile bounds")]
    OffsetOutOfRange(u32, u32),
    #[error("point datum {point} cannot be converted to profile datum {profile}")]
    UnsupportedDatum { point: Datum, profile: Datum },
    #[error("unknown provider profile `{0}`")]
    UnknownProfile(String),
    #[error("polyline has fewer than two distinct vertices")]
    DegeneratePolyline,
    #[error("spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("road file: {0}")]
    RoadFile(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Registered geodetic datum identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Datum {
    #[default]
    Wgs84,
    /// Surveyed-offset datum used by several mainland China providers.
    Gcj02,
    Bd09,
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Datum::Wgs84 => "wgs84",
            Datum::Gcj02 => "gcj02",
            Datum::Bd09 => "bd09",
        })
    }
}

impl std::str::FromStr for Datum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wgs84" => Ok(Datum::Wgs84),
            "gcj02" => Ok(Datum::Gcj02),
            "bd09" => Ok(Datum::Bd09),
            other => Err(format!("unregistered datum `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lng: f64,
    pub datum: Datum,
}

impl GeoPoint {
    /// A WGS84 point, validated against the coordinate ranges.
    pub fn new(lat: f64, lng: f64) -> Result<Self, GeoError> {
        Self::with_datum(lat, lng, Datum::Wgs84)
    }

    pub fn with_datum(lat: f64, lng: f64, datum: Datum) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidLatitude(lat));
        }
        if !(-180.0..=180.0).contains(&lng) {
            return Err(GeoError::InvalidLongitude(lng));
        }
        Ok(GeoPoint { lat, lng, datum })
    }
}

/// Tile column/row plus the pixel inside that tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileAddress {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

impl TileAddress {
    pub fn validate(&self, profile: &ProviderProfile) -> Result<(), GeoError> {
        profile.check_zoom(self.zoom)?;
        let n = 1u64 << self.zoom;
        if u64::from(self.x) >= n || u64::from(self.y) >= n {
            return Err(GeoError::TileOutOfRange {
                x: self.x,
                y: self.y,
                n,
            });
        }
        if self.offset_x >= profile.tile_size || self.offset_y >= profile.tile_size {
            return Err(GeoError::OffsetOutOfRange(self.offset_x, self.offset_y));
        }
        Ok(())
    }
}

/// Pre-transform between WGS84 and a provider's own datum.
///
/// The shipped default is [`IdentityDatum`]; deployments against
/// offset-datum providers register their own conversion here.
pub trait DatumTransform: Send + Sync {
    fn wgs84_to_provider(&self, lat: f64, lng: f64) -> (f64, f64);
    fn provider_to_wgs84(&self, lat: f64, lng: f64) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDatum;

impl DatumTransform for IdentityDatum {
    fn wgs84_to_provider(&self, lat: f64, lng: f64) -> (f64, f64) {
        (lat, lng)
    }

    fn provider_to_wgs84(&self, lat: f64, lng: f64) -> (f64, f64) {
        (lat, lng)
    }
}

/// Direction of the world-pixel y axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YAxis {
    /// Row 0 at the north edge (slippy / XYZ).
    Down,
    /// Row 0 at the south edge (TMS-style providers).
    Up,
}

/// Projection, tiling and datum conventions of one map source.
#[derive(Clone)]
pub struct ProviderProfile {
    pub name: String,
    pub tile_size: u32,
    pub min_zoom: u8,
    pub max_zoom: u8,
    pub max_lat: f64,
    pub y_axis: YAxis,
    pub datum: Datum,
    pub datum_hook: Arc<dyn DatumTransform>,
}

impl fmt::Debug for ProviderProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderProfile")
            .field("name", &self.name)
            .field("tile_size", &self.tile_size)
            .field("zoom", &(self.min_zoom..=self.max_zoom))
            .field("y_axis", &self.y_axis)
            .field("datum", &self.datum)
            .finish()
    }
}

impl Default for ProviderProfile {
    fn default() -> Self {
        Self::slippy()
    }
}

impl ProviderProfile {
    /// Spherical mercator XYZ tiling, 256 px tiles, north-up rows.
    pub fn slippy() -> Self {
        ProviderProfile {
            name: "slippy".to_string(),
            tile_size: 256,
            min_zoom: 0,
            max_zoom: 23,
            max_lat: MERCATOR_MAX_LAT,
            y_axis: YAxis::Down,
            datum: Datum::Wgs84,
            datum_hook: Arc::new(IdentityDatum),
        }
    }

    /// Same projection as [`slippy`](Self::slippy) with rows counted from the south.
    pub fn tms() -> Self {
        ProviderProfile {
            name: "tms".to_string(),
            y_axis: YAxis::Up,
            ..Self::slippy()
        }
    }

    pub fn by_name(name: &str) -> Result<Self, GeoError> {
        match name {
            "slippy" | "xyz" | "default" => Ok(Self::slippy()),
            "tms" => Ok(Self::tms()),
            other => Err(GeoError::UnknownProfile(other.to_string())),
        }
    }

    pub fn with_datum_hook(mut self, datum: Datum, hook: Arc<dyn DatumTransform>) -> Self {
        self.datum = datum;
        self.datum_hook = hook;
        self
    }

    fn check_zoom(&self, zoom: u8) -> Result<(), GeoError> {
        if zoom < self.min_zoom || zoom > self.max_zoom {
            return Err(GeoError::UnsupportedZoom {
                zoom,
                min: self.min_zoom,
                max: self.max_zoom,
            });
        }
        Ok(())
    }

    /// World extent in pixels along each axis at `zoom`.
    pub fn world_size(&self, zoom: u8) -> f64 {
        f64::from(self.tile_size) * (1u64 << zoom) as f64
    }

    /// Meters spanned by one pixel at `lat` and `zoom`.
    pub fn ground_resolution(&self, lat: f64, zoom: u8) -> f64 {
        2.0 * PI * EARTH_RADIUS_M * lat.to_radians().cos() / self.world_size(zoom)
    }

    fn to_provider_datum(&self, p: GeoPoint) -> Result<(f64, f64), GeoError> {
        if p.datum == self.datum {
            Ok((p.lat, p.lng))
        } else if p.datum == Datum::Wgs84 {
            Ok(self.datum_hook.wgs84_to_provider(p.lat, p.lng))
        } else {
            Err(GeoError::UnsupportedDatum {
                point: p.datum,
                profile: self.datum,
            })
        }
    }
}

/// Continuous world-pixel position of `p` (before rounding to a pixel).
pub fn geo_to_world_pixel(
    p: GeoPoint,
    zoom: u8,
    profile: &ProviderProfile,
) -> Result<(f64, f64), GeoError> {
    profile.check_zoom(zoom)?;
    let (lat, lng) = profile.to_provider_datum(p)?;
    if lat.abs() > profile.max_lat {
        return Err(GeoError::NotProjectable {
            lat,
            limit: profile.max_lat,
            profile: profile.name.clone(),
        });
    }
    let world = profile.world_size(zoom);
    let wx = (lng + 180.0) / 360.0 * world;
    let phi = lat.to_radians();
    let merc = (phi.tan() + 1.0 / phi.cos()).ln();
    let mut wy = (1.0 - merc / PI) / 2.0 * world;
    if profile.y_axis == YAxis::Up {
        wy = world - wy;
    }
    Ok((wx, wy))
}

/// Inverse of [`geo_to_world_pixel`]; the result is in the WGS84 frame
/// when the profile carries a datum hook, otherwise in the profile datum.
pub fn world_pixel_to_geo(wx: f64, wy: f64, zoom: u8, profile: &ProviderProfile) -> GeoPoint {
    let world = profile.world_size(zoom);
    let wy = match profile.y_axis {
        YAxis::Down => wy,
        YAxis::Up => world - wy,
    };
    let lng = wx / world * 360.0 - 180.0;
    let lat = (PI * (1.0 - 2.0 * wy / world))
        .sinh()
        .atan()
        .to_degrees()
        .clamp(-profile.max_lat, profile.max_lat);
    let (lat, lng) = if profile.datum == Datum::Wgs84 {
        (lat, lng)
    } else {
        profile.datum_hook.provider_to_wgs84(lat, lng)
    };
    GeoPoint {
        lat,
        lng,
        datum: Datum::Wgs84,
    }
}

/// Tile and in-tile pixel holding `p`, rounded to the nearest pixel.
pub fn geo_to_tile(
    p: GeoPoint,
    zoom: u8,
    profile: &ProviderProfile,
) -> Result<TileAddress, GeoError> {
    let (wx, wy) = geo_to_world_pixel(p, zoom, profile)?;
    let last = (profile.world_size(zoom) as u64) - 1;
    let px = (wx.round().max(0.0) as u64).min(last);
    let py = (wy.round().max(0.0) as u64).min(last);
    let ts = u64::from(profile.tile_size);
    Ok(TileAddress {
        zoom,
        x: (px / ts) as u32,
        y: (py / ts) as u32,
        offset_x: (px % ts) as u32,
        offset_y: (py % ts) as u32,
    })
}

/// Geographic position of the pixel named by `t`.
pub fn tile_to_geo(t: TileAddress, profile: &ProviderProfile) -> Result<GeoPoint, GeoError> {
    t.validate(profile)?;
    let ts = u64::from(profile.tile_size);
    let px = u64::from(t.x) * ts + u64::from(t.offset_x);
    let py = u64::from(t.y) * ts + u64::from(t.offset_y);
    Ok(world_pixel_to_geo(px as f64, py as f64, t.zoom, profile))
}
