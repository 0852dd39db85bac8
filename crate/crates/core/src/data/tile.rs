//! XYZ ("slippy map") tile addressing on spherical Web-Mercator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest latitude representable on a square Web-Mercator map.
pub const MAX_LATITUDE: f64 = 85.05113;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileCoord {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl BoundingBox {
    /// Roughly the state of Delaware.
    pub const DELAWARE: BoundingBox = BoundingBox {
        west: -75.79,
        south: 38.45,
        east: -75.05,
        north: 39.84,
    };
}

impl TileCoord {
    pub fn new(z: u8, x: u32, y: u32) -> Result<Self> {
        let n = tiles_per_axis(z)?;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(Error::invalid("tile", format!("({x}, {y}) outside zoom {z}")));
        }
        Ok(Self { z, x, y })
    }

    /// `(west, south, east, north)` in degrees.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let n = (1u64 << self.z) as f64;
        let lon = |x: f64| x / n * 360.0 - 180.0;
        let lat = |y: f64| (PI * (1.0 - 2.0 * y / n)).sinh().atan().to_degrees();
        let (x, y) = (self.x as f64, self.y as f64);
        (lon(x), lat(y + 1.0), lon(x + 1.0), lat(y))
    }

    /// Centre in Mercator space, returned as `(lon, lat)`.
    pub fn center(&self) -> (f64, f64) {
        let n = (1u64 << self.z) as f64;
        let lon = (self.x as f64 + 0.5) / n * 360.0 - 180.0;
        let lat = (PI * (1.0 - 2.0 * (self.y as f64 + 0.5) / n)).sinh().atan().to_degrees();
        (lon, lat)
    }
}

fn tiles_per_axis(z: u8) -> Result<u64> {
    if z > 30 {
        return Err(Error::invalid("tile", format!("zoom {z} exceeds 30")));
    }
    Ok(1u64 << z)
}

pub fn lonlat_to_tile(lon: f64, lat: f64, z: u8) -> Result<TileCoord> {
    if lat.is_nan() || lat.abs() >= MAX_LATITUDE {
        return Err(Error::LatitudeOutOfRange(lat));
    }
    if !(-180.0..180.0).contains(&lon) {
        return Err(Error::invalid("lonlat_to_tile", format!("longitude {lon} outside [-180, 180)")));
    }
    let n = tiles_per_axis(z)? as f64;
    let phi = lat.to_radians();
    let x = ((lon + 180.0) / 360.0 * n).floor();
    let y = ((1.0 - (phi.tan() + 1.0 / phi.cos()).ln() / PI) / 2.0 * n).floor();
    let clamp = |v: f64| v.clamp(0.0, n - 1.0) as u32;
    Ok(TileCoord {
        z,
        x: clamp(x),
        y: clamp(y),
    })
}

/// Non-overlapping tiles covering a bounding box, row-major from the north-west.
pub fn tiles_in_bbox(bbox: &BoundingBox, z: u8) -> Result<Vec<TileCoord>> {
    let nw = lonlat_to_tile(bbox.west, bbox.north, z)?;
    let se = lonlat_to_tile(bbox.east, bbox.south, z)?;
    if nw.x > se.x || nw.y > se.y {
        return Err(Error::invalid("tiles_in_bbox", format!("degenerate box {bbox:?}")));
    }
    Ok((nw.y..=se.y)
        .flat_map(|y| (nw.x..=se.x).map(move |x| TileCoord { z, x, y }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_world_tile() {
        assert_eq!(lonlat_to_tile(0.0, 0.0, 0).unwrap(), TileCoord { z: 0, x: 0, y: 0 });
    }

    #[test]
    fn delaware_reference_tile() {
        let t = lonlat_to_tile(-75.5, 39.0, 13).unwrap();
        assert_eq!((t.x, t.y), (2377, 3130));
    }

    #[test]
    fn boundary_columns() {
        assert_eq!(lonlat_to_tile(-180.0, 0.0, 1).unwrap().x, 0);
        assert_eq!(lonlat_to_tile(179.999, 0.0, 1).unwrap().x, 1);
    }

    #[test]
    fn rejects_polar_latitude() {
        assert!(matches!(
            lonlat_to_tile(0.0, 85.06, 3),
            Err(Error::LatitudeOutOfRange(_))
        ));
        assert!(lonlat_to_tile(0.0, -90.0, 3).is_err());
        assert!(lonlat_to_tile(180.0, 0.0, 3).is_err());
    }

    #[test]
    fn bbox_tiles_are_distinct_and_contain_their_centres() {
        let tiles = tiles_in_bbox(&BoundingBox::DELAWARE, 13).unwrap();
        assert!(tiles.len() > 100);
        let mut sorted = tiles.clone();
        sorted.sort_by_key(|t| (t.y, t.x));
        sorted.dedup();
        assert_eq!(sorted.len(), tiles.len());
        for t in &tiles {
            let (lon, lat) = t.center();
            assert_eq!(lonlat_to_tile(lon, lat, 13).unwrap(), *t);
            let (w, s, e, n) = t.bounds();
            assert!(w < lon && lon < e && s < lat && lat < n);
        }
    }
}
