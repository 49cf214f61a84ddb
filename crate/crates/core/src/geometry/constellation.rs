//! Walker constellation propagation, visibility and user placement.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::EcefPosition;
use crate::{Error, Result};

/// Earth gravitational parameter, m^3/s^2.
pub const EARTH_MU: f64 = 3.986_004_418e14;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_146_7e-5;
pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Walker delta constellation `i: t/p/f` plus the elevation mask applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstellationConfig {
    pub total_satellites: usize,
    pub planes: usize,
    pub phasing: usize,
    pub semi_major_axis_m: f64,
    pub inclination_deg: f64,
    pub elevation_mask_deg: f64,
}

impl Default for ConstellationConfig {
    /// Galileo-like 27/3/1 at 29,600.318 km and 56 degrees, 5 degree mask.
    fn default() -> Self {
        Self {
            total_satellites: 27,
            planes: 3,
            phasing: 1,
            semi_major_axis_m: 29_600_318.0,
            inclination_deg: 56.0,
            elevation_mask_deg: 5.0,
        }
    }
}

impl ConstellationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.planes == 0 || self.total_satellites == 0 {
            return Err(Error::invalid("constellation needs satellites and planes"));
        }
        if !self.total_satellites.is_multiple_of(self.planes) {
            return Err(Error::invalid(format!(
                "{} satellites do not divide into {} planes",
                self.total_satellites, self.planes
            )));
        }
        if !(0.0..90.0).contains(&self.elevation_mask_deg) {
            return Err(Error::invalid("elevation mask must lie in [0, 90)"));
        }
        if !(self.semi_major_axis_m > WGS84_A) {
            return Err(Error::invalid("orbit radius must exceed the Earth radius"));
        }
        Ok(())
    }

    pub fn sats_per_plane(&self) -> usize {
        self.total_satellites / self.planes
    }

    pub fn period_s(&self) -> f64 {
        2.0 * PI * (self.semi_major_axis_m.powi(3) / EARTH_MU).sqrt()
    }

    pub fn mean_motion(&self) -> f64 {
        (EARTH_MU / self.semi_major_axis_m.powi(3)).sqrt()
    }
}

/// Satellite positions in ECEF at `epoch` seconds.
///
/// Circular orbits: plane `j` has ascending node `2 pi j / p`, and slot `s` in
/// that plane starts at argument of latitude `2 pi s / (t/p) + 2 pi f j / t`.
/// Satellites are ordered plane by plane.
pub fn propagate_walker(config: &ConstellationConfig, epoch: f64) -> Result<Vec<EcefPosition>> {
    config.validate()?;
    let per_plane = config.sats_per_plane();
    let a = config.semi_major_axis_m;
    let inc = config.inclination_deg.to_radians();
    let (sin_i, cos_i) = inc.sin_cos();
    let advance = config.mean_motion() * epoch;
    let theta = EARTH_ROTATION_RATE * epoch;
    let (sin_t, cos_t) = theta.sin_cos();

    let mut out = Vec::with_capacity(config.total_satellites);
    for plane in 0..config.planes {
        let raan = 2.0 * PI * plane as f64 / config.planes as f64;
        let (sin_o, cos_o) = raan.sin_cos();
        let phase = 2.0 * PI * (config.phasing * plane) as f64 / config.total_satellites as f64;
        for slot in 0..per_plane {
            let u = 2.0 * PI * slot as f64 / per_plane as f64 + phase + advance;
            let (sin_u, cos_u) = u.sin_cos();
            let xi = a * (cos_o * cos_u - sin_o * cos_i * sin_u);
            let yi = a * (sin_o * cos_u + cos_o * cos_i * sin_u);
            let zi = a * sin_i * sin_u;
            out.push(EcefPosition::new(
                cos_t * xi + sin_t * yi,
                -sin_t * xi + cos_t * yi,
                zi,
            ));
        }
    }
    Ok(out)
}

/// Satellite index paired with its elevation above the user's horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visible {
    pub index: usize,
    pub elevation_deg: f64,
}

/// Elevation of `sat` seen from `user`, with the local vertical taken along the
/// geocentric radius (spherical Earth).
pub fn elevation_deg(user: EcefPosition, sat: EcefPosition) -> f64 {
    let up = user.to_vector().normalize();
    let los: Vector3<f64> = sat.to_vector() - user.to_vector();
    (los.dot(&up) / los.norm())
        .clamp(-1.0, 1.0)
        .asin()
        .to_degrees()
}

pub fn visible_satellites(
    user: EcefPosition,
    sats: &[EcefPosition],
    mask_deg: f64,
) -> Vec<Visible> {
    sats.iter()
        .enumerate()
        .filter_map(|(index, sat)| {
            let elevation_deg = elevation_deg(user, *sat);
            (elevation_deg >= mask_deg).then_some(Visible {
                index,
                elevation_deg,
            })
        })
        .collect()
}

/// Geodetic latitude/longitude (degrees) on the WGS-84 ellipsoid surface.
pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64) -> EcefPosition {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (sin_lat, cos_lat) = lat_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = lon_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
    EcefPosition::new(
        n * cos_lat * cos_lon,
        n * cos_lat * sin_lon,
        n * (1.0 - e2) * sin_lat,
    )
}

/// A user location on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub position: EcefPosition,
}

/// Users every `spacing` degrees in latitude and longitude, offset by half a
/// step so the poles are excluded: `(360/s) * (180/s)` points.
pub fn user_grid(spacing_deg: f64) -> Result<Vec<GridPoint>> {
    let lon_count = 360.0 / spacing_deg;
    let lat_count = 180.0 / spacing_deg;
    if !(spacing_deg > 0.0)
        || (lon_count - lon_count.round()).abs() > 1e-9
        || (lat_count - lat_count.round()).abs() > 1e-9
    {
        return Err(Error::invalid(format!(
            "grid spacing {spacing_deg} must divide 180 degrees"
        )));
    }
    let (lon_count, lat_count) = (lon_count.round() as usize, lat_count.round() as usize);
    let mut out = Vec::with_capacity(lon_count * lat_count);
    for i in 0..lat_count {
        let lat_deg = -90.0 + spacing_deg * (i as f64 + 0.5);
        for j in 0..lon_count {
            let lon_deg = -180.0 + spacing_deg * (j as f64 + 0.5);
            out.push(GridPoint {
                lat_deg,
                lon_deg,
                position: geodetic_to_ecef(lat_deg, lon_deg),
            });
        }
    }
    Ok(out)
}
