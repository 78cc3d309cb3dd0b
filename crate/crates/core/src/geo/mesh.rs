//! Road polylines discretized into monitoring points.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{GeoError, GeoPoint, EARTH_RADIUS_M};

/// Great-circle distance in meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    EARTH_RADIUS_M * central_angle(a, b)
}

fn central_angle(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = p2 - p1;
    let dlmb = (b.lng - a.lng).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlmb / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Point at fraction `f` of the great-circle arc from `a` to `b`.
fn interpolate(a: GeoPoint, b: GeoPoint, f: f64) -> GeoPoint {
    let delta = central_angle(a, b);
    if delta == 0.0 {
        return a;
    }
    let (p1, l1) = (a.lat.to_radians(), a.lng.to_radians());
    let (p2, l2) = (b.lat.to_radians(), b.lng.to_radians());
    let wa = ((1.0 - f) * delta).sin() / delta.sin();
    let wb = (f * delta).sin() / delta.sin();
    let x = wa * p1.cos() * l1.cos() + wb * p2.cos() * l2.cos();
    let y = wa * p1.cos() * l1.sin() + wb * p2.cos() * l2.sin();
    let z = wa * p1.sin() + wb * p2.sin();
    GeoPoint {
        lat: z.atan2(x.hypot(y)).to_degrees(),
        lng: y.atan2(x).to_degrees(),
        datum: a.datum,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<GeoPoint>,
}

impl Polyline {
    /// Builds a polyline, collapsing runs of repeated vertices.
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self, GeoError> {
        let mut out: Vec<GeoPoint> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if out.last().is_some_and(|last| haversine_m(*last, v) == 0.0) {
                continue;
            }
            out.push(v);
        }
        if out.len() < 2 {
            return Err(GeoError::DegeneratePolyline);
        }
        Ok(Polyline { vertices: out })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn length_m(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| haversine_m(w[0], w[1]))
            .sum()
    }
}

/// A discretized point and its arc-length position along the source line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshPoint {
    pub point: GeoPoint,
    pub chainage_m: f64,
}

/// Places points every `spacing_m` meters of arc length, always emitting
/// both endpoints. A trailing remainder shorter than the spacing still gets
/// the final endpoint; an end that falls on the grid is not duplicated.
pub fn discretize(line: &Polyline, spacing_m: f64) -> Result<Vec<MeshPoint>, GeoError> {
    if !(spacing_m > 0.0) || !spacing_m.is_finite() {
        return Err(GeoError::InvalidSpacing(spacing_m));
    }
    let verts = line.vertices();
    let seg_len: Vec<f64> = verts.windows(2).map(|w| haversine_m(w[0], w[1])).collect();
    let total: f64 = seg_len.iter().sum();
    if total == 0.0 {
        return Err(GeoError::DegeneratePolyline);
    }

    let eps = 1e-6 * spacing_m;
    let n = ((total + eps) / spacing_m).floor() as usize;
    let mut out = Vec::with_capacity(n + 2);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..=n {
        let s = k as f64 * spacing_m;
        if total - s <= eps && k > 0 {
            break;
        }
        while seg + 1 < seg_len.len() && s > seg_start + seg_len[seg] {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let f = ((s - seg_start) / seg_len[seg]).clamp(0.0, 1.0);
        out.push(MeshPoint {
            point: interpolate(verts[seg], verts[seg + 1], f),
            chainage_m: s,
        });
    }
    out.push(MeshPoint {
        point: *verts.last().expect("polyline has vertices"),
        chainage_m: total,
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub id: String,
    pub line: Polyline,
}

#[derive(Debug, Deserialize)]
struct RoadRow {
    road_id: String,
    lat: f64,
    lng: f64,
}

/// Reads roads from CSV `road_id,lat,lng`, one row per vertex in order.
/// Roads keep the order in which their ids first appear.
pub fn read_roads_csv<R: Read>(reader: R) -> Result<Vec<Road>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut vertices: BTreeMap<String, Vec<GeoPoint>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: RoadRow = row?;
        let p = GeoPoint::new(row.lat, row.lng)?;
        if !vertices.contains_key(&row.road_id) {
            order.push(row.road_id.clone());
        }
        vertices.entry(row.road_id).or_default().push(p);
    }
    if order.is_empty() {
        return Err(GeoError::RoadFile("no roads".to_string()));
    }
    order
        .into_iter()
        .map(|id| {
            let verts = vertices.remove(&id).unwrap_or_default();
            let line = Polyline::new(verts)
                .map_err(|e| GeoError::RoadFile(format!("road `{id}`: {e}")))?;
            Ok(Road { id, line })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct PointRow<'a> {
    point_id: String,
    lat: f64,
    lng: f64,
    road_id: &'a str,
    chainage_m: f64,
}

/// Writes the point-net CSV `point_id,lat,lng,road_id,chainage_m`.
pub fn write_point_net_csv<W: Write>(
    writer: W,
    roads: &[(String, Vec<MeshPoint>)],
) -> Result<usize, GeoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut rows = 0;
    for (road_id, points) in roads {
        for (i, mp) in points.iter().enumerate() {
            wtr.serialize(PointRow {
                point_id: format!("{road_id}#{i}"),
                lat: mp.point.lat,
                lng: mp.point.lng,
                road_id,
                chainage_m: mp.chainage_m,
            })?;
            rows += 1;
        }
    }
    wtr.flush()?;
    Ok(rows)
}

#[derive(Debug, Deserialize)]
struct PointIn {
    point_id: String,
    lat: f64,
    lng: f64,
}

/// Reads monitoring points back from a point-net CSV. Only the
/// `point_id`, `lat` and `lng` columns are required.
pub fn read_point_net_csv<R: Read>(reader: R) -> Result<Vec<(String, GeoPoint)>, GeoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: PointIn = row?;
        out.push((row.point_id, GeoPoint::new(row.lat, row.lng)?));
    }
    if out.is_empty() {
        return Err(GeoError::RoadFile("no points".to_string()));
    }
    Ok(out)
}
