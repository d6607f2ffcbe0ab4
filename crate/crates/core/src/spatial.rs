//! Great-circle geometry, distance covariates, and inverse-distance access
//! densities of institutions.
//!
//! Distances are haversine distances on a sphere of radius
//! [`EARTH_RADIUS_KM`]. Access densities sum inverse distances over sites
//! active at a query year, with a configurable minimum-distance floor so
//! same-location sites contribute a bounded term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres (IUGG mean radius R1).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Default floor (km) applied to each inverse-distance term.
pub const DEFAULT_FLOOR_KM: f64 = 1.0;

/// A point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Latitude in decimal degrees, in [-90, 90].
    pub lat: f64,
    /// Longitude in decimal degrees, in [-180, 180].
    pub lon: f64,
}

impl GeoPoint {
    /// Build a point without range checking; see [`GeoPoint::in_range`].
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    /// Whether the coordinates lie in the valid lat/lon box.
    pub fn in_range(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Kind of institution whose density is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    CommunityHouse,
    FolkHighSchool,
}

impl SiteKind {
    /// Stable lowercase label used in CSV columns and config files.
    pub fn label(&self) -> &'static str {
        match self {
            SiteKind::CommunityHouse => "community_house",
            SiteKind::FolkHighSchool => "folk_high_school",
        }
    }

    /// Parse the CSV label.
    pub fn parse(s: &str) -> Option<SiteKind> {
        match s {
            "community_house" => Some(SiteKind::CommunityHouse),
            "folk_high_school" => Some(SiteKind::FolkHighSchool),
            _ => None,
        }
    }
}

/// One institution with its location and opening year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstitutionSite {
    pub location: GeoPoint,
    pub opening_year: i32,
    pub kind: SiteKind,
}

/// Haversine great-circle distance in kilometres.
///
/// Symmetric, non-negative, and zero when `a == b`.
pub fn great_circle_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s = (dphi / 2.0).sin().powi(2)
        + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // Guard against s marginally exceeding 1 through rounding.
    let s = s.clamp(0.0, 1.0);
    let c = 2.0 * s.sqrt().atan2((1.0 - s).sqrt());
    EARTH_RADIUS_KM * c
}

/// Inverse-distance access density of `i` to the sites active at `year`.
///
/// Sums `1 / max(dist(i, site), floor_km)` over sites with
/// `opening_year <= year`; an empty active set yields 0.
///
/// # Errors
/// [`Error::NonpositiveFloor`] if `floor_km <= 0`.
pub fn market_access(
    i: GeoPoint,
    sites: &[InstitutionSite],
    year: i32,
    floor_km: f64,
) -> Result<f64> {
    if !(floor_km > 0.0) {
        return Err(Error::NonpositiveFloor(floor_km));
    }
    // fold, not sum: f64::sum starts from -0.0, and an empty active set
    // must come out as plain 0 in written tables.
    Ok(sites
        .iter()
        .filter(|s| s.opening_year <= year)
        .map(|s| 1.0 / great_circle_km(i, s.location).max(floor_km))
        .fold(0.0, |acc, term| acc + term))
}

/// Minimum distance from `p` to the vertices of a polyline.
///
/// The path is evaluated at its vertices only (no segment projection); these
/// distances feed decile-binned controls where vertex resolution suffices.
///
/// # Errors
/// [`Error::EmptyPath`] if `path` is empty.
pub fn min_distance_to_path(p: GeoPoint, path: &[GeoPoint]) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    Ok(path
        .iter()
        .map(|v| great_circle_km(p, *v))
        .fold(f64::INFINITY, f64::min))
}

/// Latitude offset (degrees) that moves a point `km` due north.
///
/// Along a meridian the haversine distance is exactly `R * dphi`, so this
/// inverse is exact; tests use it to place sites at known distances.
pub fn north_offset_deg(km: f64) -> f64 {
    (km / EARTH_RADIUS_KM).to_degrees()
}
