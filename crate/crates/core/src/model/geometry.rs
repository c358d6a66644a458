//! Planar geometry on WGS84 lon/lat coordinates: polygons, containment
//! tests, and a spherical-excess area approximation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Mean Earth radius in kilometers.
const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A lon/lat point in WGS84 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub lon: f64,
    pub lat: f64,
}

impl Point {
    pub fn new(lon: f64, lat: f64) -> Self {
        Point { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// A polygon as one or more closed rings (outer ring first, optional holes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub rings: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<Point>>) -> Self {
        Polygon { rings }
    }

    /// Convenience constructor for a single-ring polygon; closes the ring if
    /// the caller did not.
    pub fn from_ring(mut ring: Vec<Point>) -> Self {
        if let (Some(&first), Some(&last)) = (ring.first(), ring.last()) {
            if first != last {
                ring.push(first);
            }
        }
        Polygon { rings: vec![ring] }
    }

    /// Axis-aligned square of side `side_deg` degrees with lower-left corner
    /// at (`lon0`, `lat0`).
    pub fn square(lon0: f64, lat0: f64, side_lon_deg: f64, side_lat_deg: f64) -> Self {
        Polygon::from_ring(vec![
            Point::new(lon0, lat0),
            Point::new(lon0 + side_lon_deg, lat0),
            Point::new(lon0 + side_lon_deg, lat0 + side_lat_deg),
            Point::new(lon0, lat0 + side_lat_deg),
        ])
    }

    /// Check ring closure and self-intersection. `zone_id` names the owner in
    /// error messages.
    pub fn validate(&self, zone_id: &str) -> Result<()> {
        if self.rings.is_empty() {
            return Err(Error::Geometry {
                zone_id: zone_id.to_string(),
                message: "polygon has no rings".into(),
            });
        }
        for (k, ring) in self.rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(Error::Geometry {
                    zone_id: zone_id.to_string(),
                    message: format!("ring {k} has fewer than 4 vertices"),
                });
            }
            if ring.first() != ring.last() {
                return Err(Error::Geometry {
                    zone_id: zone_id.to_string(),
                    message: format!("ring {k} is not closed"),
                });
            }
            if ring.iter().any(|p| !p.is_valid()) {
                return Err(Error::Geometry {
                    zone_id: zone_id.to_string(),
                    message: format!("ring {k} contains invalid coordinates"),
                });
            }
            if ring_self_intersects(ring) {
                return Err(Error::Geometry {
                    zone_id: zone_id.to_string(),
                    message: format!("ring {k} self-intersects"),
                });
            }
        }
        Ok(())
    }

    /// Boundary-inclusive containment. Interior membership uses the even-odd
    /// rule over all rings, so holes behave as exclusions.
    pub fn contains(&self, p: Point) -> bool {
        for ring in &self.rings {
            if point_on_ring(p, ring) {
                return true;
            }
        }
        let mut inside = false;
        for ring in &self.rings {
            if crossing_parity(p, ring) {
                inside = !inside;
            }
        }
        inside
    }

    /// True when `p` is interior (even-odd) and not on any ring boundary.
    pub fn contains_interior(&self, p: Point) -> bool {
        if self.rings.iter().any(|r| point_on_ring(p, r)) {
            return false;
        }
        let mut inside = false;
        for ring in &self.rings {
            if crossing_parity(p, ring) {
                inside = !inside;
            }
        }
        inside
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.rings.iter().flatten() {
            min.lon = min.lon.min(p.lon);
            min.lat = min.lat.min(p.lat);
            max.lon = max.lon.max(p.lon);
            max.lat = max.lat.max(p.lat);
        }
        (min, max)
    }

    /// Spherical-excess area approximation in km². Holes subtract from the
    /// outer ring.
    pub fn area_km2(&self) -> f64 {
        let mut total = 0.0;
        for (k, ring) in self.rings.iter().enumerate() {
            let a = spherical_ring_area_km2(ring);
            if k == 0 {
                total += a;
            } else {
                total -= a;
            }
        }
        total.max(0.0)
    }

    /// Arithmetic centroid of the outer ring vertices (the closing vertex is
    /// skipped). Good enough for sampling and labels, not a true centroid.
    pub fn vertex_centroid(&self) -> Point {
        let ring = &self.rings[0];
        let n = ring.len() - 1;
        let (mut lon, mut lat) = (0.0, 0.0);
        for p in &ring[..n] {
            lon += p.lon;
            lat += p.lat;
        }
        Point::new(lon / n as f64, lat / n as f64)
    }
}

fn spherical_ring_area_km2(ring: &[Point]) -> f64 {
    // Chamberlain & Duquette style approximation: adequate for the small
    // zones handled here; stored survey areas stay authoritative.
    let mut sum = 0.0;
    for w in ring.windows(2) {
        let (p1, p2) = (w[0], w[1]);
        sum += (p2.lon - p1.lon).to_radians()
            * (2.0 + p1.lat.to_radians().sin() + p2.lat.to_radians().sin());
    }
    (sum * EARTH_RADIUS_KM * EARTH_RADIUS_KM / 2.0).abs()
}

fn crossing_parity(p: Point, ring: &[Point]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_on_ring(p: Point, ring: &[Point]) -> bool {
    ring.windows(2).any(|w| point_on_segment(p, w[0], w[1]))
}

fn point_on_segment(p: Point, a: Point, b: Point) -> bool {
    const EPS: f64 = 1e-12;
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if cross.abs() > EPS {
        return false;
    }
    let dot = (p.lon - a.lon) * (b.lon - a.lon) + (p.lat - a.lat) * (b.lat - a.lat);
    let len2 = (b.lon - a.lon).powi(2) + (b.lat - a.lat).powi(2);
    (-EPS..=len2 + EPS).contains(&dot)
}

fn ring_self_intersects(ring: &[Point]) -> bool {
    let n = ring.len() - 1; // number of edges
    for i in 0..n {
        for j in (i + 1)..n {
            // Skip adjacent edges (they share a vertex by construction).
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_properly_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return true;
            }
        }
    }
    false
}

fn segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| -> f64 {
        (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon)
    };
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
