//! Geodetic to site-plane conversion on a local tangent plane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Largest lat/lon offset from the origin the flat approximation accepts.
pub const MAX_OFFSET_DEG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    pub lat: T,
    pub lon: T,
    pub alt: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("offset ({dlat}, {dlon}) deg from origin is outside the plane approximation")]
    OutOfValidity { dlat: f64, dlon: f64 },
    #[error("invalid geodetic coordinates")]
    InvalidCoordinates,
}

fn check<T: Scalar>(dlat: T, dlon: T) -> Result<(), GeoError> {
    let max = T::lit(MAX_OFFSET_DEG);
    if !(dlat.abs() < max && dlon.abs() < max) {
        return Err(GeoError::OutOfValidity { dlat: dlat.to_f64_lossy(), dlon: dlon.to_f64_lossy() });
    }
    Ok(())
}

/// East-north-up offset of `p` from `origin`, in metres.
pub fn geo_to_plane<T: Scalar>(p: &GeoPoint<T>, origin: &GeoPoint<T>) -> Result<[T; 3], GeoError> {
    if p.lat.abs() > T::lit(90.0) || p.lon.abs() > T::lit(180.0) {
        return Err(GeoError::InvalidCoordinates);
    }
    let (dlat, dlon) = (p.lat - origin.lat, p.lon - origin.lon);
    check(dlat, dlon)?;
    let r = T::lit(EARTH_RADIUS);
    let x = dlon.to_radians() * r * origin.lat.to_radians().cos();
    let y = dlat.to_radians() * r;
    Ok([x, y, p.alt - origin.alt])
}

pub fn plane_to_geo<T: Scalar>(xyz: [T; 3], origin: &GeoPoint<T>) -> Result<GeoPoint<T>, GeoError> {
    let r = T::lit(EARTH_RADIUS);
    let dlat = (xyz[1] / r).to_degrees();
    let dlon = (xyz[0] / (r * origin.lat.to_radians().cos())).to_degrees();
    check(dlat, dlon)?;
    Ok(GeoPoint { lat: origin.lat + dlat, lon: origin.lon + dlon, alt: origin.alt + xyz[2] })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORIGIN: GeoPoint<f64> = GeoPoint { lat: 36.0, lon: 140.0, alt: 20.0 };

    #[test]
    fn origin_maps_to_zero() {
        assert_eq!(geo_to_plane(&ORIGIN, &ORIGIN).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn small_northing() {
        let p = GeoPoint { lat: 36.0 + 1e-5, ..ORIGIN };
        let [x, y, _] = geo_to_plane(&p, &ORIGIN).unwrap();
        assert_eq!(x, 0.0);
        assert!((y - 1.113_194_9).abs() < 1e-6, "{y}");
    }

    #[test]
    fn far_offset_rejected() {
        let p = GeoPoint { lat: 36.2, ..ORIGIN };
        assert!(matches!(geo_to_plane(&p, &ORIGIN), Err(GeoError::OutOfValidity { .. })));
        assert!(plane_to_geo([0.0, 20_000.0, 0.0], &ORIGIN).is_err());
    }
}
