//! Value types shared by every stage: raw pixel hits, reconstructed photons,
//! coincidence pairs and the optical configuration of a measurement.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Sensor edge length in pixels (the sensor is square).
pub const SENSOR_PIXELS: u16 = 256;

/// Centroid x coordinate separating the left and right halves of the sensor.
pub const HALF_BOUNDARY_PX: f64 = 128.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InvalidHit {
    #[error("pixel ({x}, {y}) is outside the 256x256 sensor")]
    OutOfSensor { x: u16, y: u16 },
    #[error("time-over-threshold must be at least 1")]
    ZeroTot,
}

/// One pixel firing.
///
/// Times are integer picoseconds from the start of the acquisition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelHit {
    pub x: u16,
    pub y: u16,
    pub toa_ps: u64,
    pub tot: u16,
}

impl PixelHit {
    pub fn new(x: u16, y: u16, toa_ps: u64, tot: u16) -> Result<Self, InvalidHit> {
        let hit = Self { x, y, toa_ps, tot };
        hit.validate()?;
        Ok(hit)
    }

    pub fn validate(&self) -> Result<(), InvalidHit> {
        if self.x >= SENSOR_PIXELS || self.y >= SENSOR_PIXELS {
            return Err(InvalidHit::OutOfSensor { x: self.x, y: self.y });
        }
        if self.tot == 0 {
            return Err(InvalidHit::ZeroTot);
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_index(&self) -> usize {
        self.y as usize * SENSOR_PIXELS as usize + self.x as usize
    }
}

/// Sensor half a photon was detected on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Half {
    Left,
    Right,
}

impl Half {
    /// Side of a centroid: strictly below 128 is left.
    #[inline]
    pub fn of(cx: f64) -> Self {
        if cx < HALF_BOUNDARY_PX {
            Half::Left
        } else {
            Half::Right
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Half::Left => Half::Right,
            Half::Right => Half::Left,
        }
    }
}

/// A single photon reconstructed from a cluster of hits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonEvent {
    /// Amplitude-weighted centroid, fractional pixels.
    pub cx: f64,
    pub cy: f64,
    /// Cluster time in picoseconds; may go negative after timewalk correction.
    pub t_ps: i64,
    pub n_pixels: u32,
    pub sum_tot: u32,
    /// ToT of the pixel that supplied `t_ps`.
    pub max_tot: u16,
    pub half: Half,
}

/// Two photons detected within the coincidence window.
///
/// With cross-half pairing `a` is the left photon and `b` the right one;
/// otherwise they are in time order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoincidencePair {
    pub a: PhotonEvent,
    pub b: PhotonEvent,
    pub dt_ps: u64,
}

impl CoincidencePair {
    pub fn is_cross_half(&self) -> bool {
        self.a.half != self.b.half
    }

    /// Time of the earlier photon.
    pub fn first_time_ps(&self) -> i64 {
        self.a.t_ps.min(self.b.t_ps)
    }
}

/// Imaging configuration: position (near field) or momentum (far field).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    NearField,
    FarField,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::NearField => "nf",
            Basis::FarField => "ff",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("unknown basis `{0}` (expected `nf` or `ff`)")]
pub struct UnknownBasis(pub String);

impl FromStr for Basis {
    type Err = UnknownBasis;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nf" | "near" | "near-field" | "nearfield" => Ok(Basis::NearField),
            "ff" | "far" | "far-field" | "farfield" => Ok(Basis::FarField),
            _ => Err(UnknownBasis(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid optics: {0}")]
pub struct InvalidOptics(pub &'static str);

/// Camera and imaging constants used to convert pixels to physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpticsConfig {
    pub pixel_pitch_m: f64,
    /// Crystal-to-camera magnification in the near-field configuration.
    pub magnification_nf: f64,
    /// Effective focal length of the Fourier lens in the far-field configuration.
    pub f_eff_m: f64,
    pub wavelength_m: f64,
    pub basis: Basis,
}

impl OpticsConfig {
    pub fn new(basis: Basis) -> Self {
        Self {
            pixel_pitch_m: 55e-6,
            magnification_nf: 10.0,
            f_eff_m: 0.075,
            wavelength_m: 810e-9,
            basis,
        }
    }

    pub fn with_basis(self, basis: Basis) -> Self {
        Self { basis, ..self }
    }

    pub fn validate(&self) -> Result<(), InvalidOptics> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.pixel_pitch_m) {
            return Err(InvalidOptics("pixel pitch must be positive"));
        }
        if !positive(self.magnification_nf) {
            return Err(InvalidOptics("magnification must be positive"));
        }
        if !positive(self.f_eff_m) {
            return Err(InvalidOptics("effective focal length must be positive"));
        }
        if !positive(self.wavelength_m) {
            return Err(InvalidOptics("wavelength must be positive"));
        }
        Ok(())
    }

    /// Physical size of one pixel in the object plane: meters in the near
    /// field, inverse meters (transverse wavevector) in the far field.
    pub fn pixel_scale(&self) -> f64 {
        match self.basis {
            Basis::NearField => self.pixel_pitch_m / self.magnification_nf,
            Basis::FarField => 2.0 * std::f64::consts::PI * self.pixel_pitch_m / (self.wavelength_m * self.f_eff_m),
        }
    }

    /// Compare everything except the basis; used when merging histograms.
    pub fn same_geometry(&self, other: &Self) -> bool {
        self.pixel_pitch_m == other.pixel_pitch_m
            && self.magnification_nf == other.magnification_nf
            && self.f_eff_m == other.f_eff_m
            && self.wavelength_m == other.wavelength_m
    }
}
