//! Spherical distance and dissolved-buffer geometry.
//!
//! Everything here works on a sphere of mean Earth radius. Distances use the
//! haversine formula; buffer areas are estimated on a global grid of
//! (nearly) square cells whose membership is decided with the same haversine
//! metric, so "inside the buffer" means exactly "within `radius` of some
//! member" as [`min_distance_to_set`] reports it.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Side length of the area estimator's grid cells, in meters.
pub const AREA_CELL_M: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate (lat {lat}, lon {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("invalid distance {0} m")]
    InvalidDistance(f64),
    #[error("point set is empty")]
    EmptySet,
}

/// A validated latitude/longitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon)
        {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Total order on `(lat, lon)`, used wherever a canonical point order is needed.
    pub fn canonical_cmp(&self, other: &GeoPoint) -> std::cmp::Ordering {
        self.lat
            .total_cmp(&other.lat)
            .then(self.lon.total_cmp(&other.lon))
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// A nonnegative, finite length in meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Meters(f64);

impl Meters {
    pub fn new(value: f64) -> Result<Self, GeoError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Meters(value))
        } else {
            Err(GeoError::InvalidDistance(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Meters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} m", self.0)
    }
}

#[inline]
fn hav(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    s * s
}

/// Great-circle distance between two points.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> Meters {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = hav(dphi) + phi1.cos() * phi2.cos() * hav(dlambda);
    let central = 2.0 * h.sqrt().min(1.0).asin();
    Meters(EARTH_RADIUS_M * central)
}

/// Distance from `p` to the closest point of `members`.
pub fn min_distance_to_set(p: GeoPoint, members: &[GeoPoint]) -> Result<Meters, GeoError> {
    members
        .iter()
        .map(|&m| haversine_distance(p, m))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .ok_or(GeoError::EmptySet)
}

/// Estimated area, in square meters, of the union of disks of `radius`
/// around each member (the dissolved buffer of a cluster).
///
/// The sphere is cut into latitude rows of [`AREA_CELL_M`] height; each row
/// is cut into longitude columns whose width is `AREA_CELL_M` at the row's
/// central latitude. A cell counts when its center lies within `radius` of
/// some member. The grid is anchored at (0, 0) rather than at the members,
/// so adding a member can only add cells. The estimate is capped at
/// `n * pi * radius^2` for `n` distinct members, which bounds the true
/// union area from above.
///
/// Buffers crossing the antimeridian are not supported.
pub fn union_buffer_area(members: &[GeoPoint], radius: Meters) -> Result<f64, GeoError> {
    if members.is_empty() {
        return Err(GeoError::EmptySet);
    }
    if radius.0 <= 0.0 {
        return Err(GeoError::InvalidDistance(radius.0));
    }

    let row_h = AREA_CELL_M / EARTH_RADIUS_M;
    let ang_r = radius.0 / EARTH_RADIUS_M;
    let hav_r = hav(ang_r);

    // row index -> column intervals (inclusive)
    let mut rows: BTreeMap<i64, Vec<(i64, i64)>> = BTreeMap::new();

    for m in members {
        let phi_m = m.lat.to_radians();
        let lambda_m = m.lon.to_radians();
        let lo = ((phi_m - ang_r).max(-PI / 2.0) / row_h).floor() as i64;
        let hi = ((phi_m + ang_r).min(PI / 2.0) / row_h).floor() as i64;
        for k in lo..=hi {
            let phi_k = (k as f64 + 0.5) * row_h;
            if phi_k.abs() >= PI / 2.0 {
                continue;
            }
            let slack = hav_r - hav(phi_k - phi_m);
            if slack < 0.0 {
                continue;
            }
            let col_w = row_h / phi_k.cos();
            let denom = phi_m.cos() * phi_k.cos();
            let span = if denom <= 0.0 || slack >= denom {
                PI
            } else {
                2.0 * (slack / denom).sqrt().asin()
            };
            let (c_lo, c_hi) = if span >= PI {
                let first = (-PI / col_w).floor() as i64;
                (first, first + (2.0 * PI / col_w).floor() as i64 - 1)
            } else {
                (
                    ((lambda_m - span) / col_w - 0.5).ceil() as i64,
                    ((lambda_m + span) / col_w - 0.5).floor() as i64,
                )
            };
            if c_lo <= c_hi {
                rows.entry(k).or_default().push((c_lo, c_hi));
            }
        }
    }

    let r2 = EARTH_RADIUS_M * EARTH_RADIUS_M;
    let mut area = 0.0;
    for (k, mut spans) in rows {
        spans.sort_unstable();
        let mut cells: i64 = 0;
        let mut current: Option<(i64, i64)> = None;
        for (a, b) in spans {
            current = match current {
                Some((ca, cb)) if a <= cb + 1 => Some((ca, cb.max(b))),
                Some((ca, cb)) => {
                    cells += cb - ca + 1;
                    Some((a, b))
                }
                None => Some((a, b)),
            };
        }
        if let Some((ca, cb)) = current {
            cells += cb - ca + 1;
        }
        let phi_k = (k as f64 + 0.5) * row_h;
        let col_w = row_h / phi_k.cos();
        let band = ((k + 1) as f64 * row_h).sin() - (k as f64 * row_h).sin();
        area += cells as f64 * r2 * col_w * band;
    }

    let mut distinct: Vec<GeoPoint> = members.to_vec();
    distinct.sort_by(GeoPoint::canonical_cmp);
    distinct.dedup();
    let cap = distinct.len() as f64 * PI * radius.0 * radius.0;
    Ok(area.min(cap))
}
