//! Synthetic photon-pair source and camera model.
//!
//! [`source`] draws biphoton positions or momenta from the double-Gaussian
//! model, [`detector`] turns them into a time-sorted pixel-hit stream with a
//! hidden truth channel, and [`theory`] gives the closed-form widths the
//! measurement chain should recover.

pub mod detector;
pub mod source;
pub mod theory;

use thiserror::Error;

use crate::event::{Basis, InvalidOptics};

pub use detector::{
    detector_response, write_pairs_csv, DetectorSim, EmittedPair, HitLink, LinkCsvWriter, Origin, PairCsvWriter,
    SimConfig, SimHit, SimStats, TimedPair, TruthRecord, DEFAULT_CHUNK_S,
};
pub use source::{pure_state_widths, sample_pairs, PairSample};
pub use theory::{theory_report, TheoryWidths};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid source parameters: {0}")]
    Source(&'static str),
    #[error("invalid detector parameters: {0}")]
    Detector(&'static str),
    #[error(transparent)]
    Optics(#[from] InvalidOptics),
}

/// Double-Gaussian biphoton source.
///
/// Widths are standard deviations of the intensity distribution, per
/// transverse axis: sums and differences of the two photons' positions (m)
/// in the near field and of their wavevectors (1/m) in the far field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceParams {
    pub sigma_sum_m: f64,
    pub sigma_diff_m: f64,
    pub kappa_sum_inv_m: f64,
    pub kappa_diff_inv_m: f64,
    pub pair_rate_hz: f64,
    /// Draw the two photons independently with the same single-photon
    /// marginals instead of correlated.
    pub separable: bool,
}

impl SourceParams {
    /// Source whose momentum widths follow from a pure double-Gaussian state.
    pub fn pure(sigma_sum_m: f64, sigma_diff_m: f64, pair_rate_hz: f64) -> Self {
        let (kappa_sum_inv_m, kappa_diff_inv_m) = pure_state_widths(sigma_sum_m, sigma_diff_m);
        Self {
            sigma_sum_m,
            sigma_diff_m,
            kappa_sum_inv_m,
            kappa_diff_inv_m,
            pair_rate_hz,
            separable: false,
        }
    }

    /// Pure source tuned so the difference-position width and the
    /// sum-momentum width take the given values.
    pub fn from_minus_plus(delta_minus_m: f64, delta_plus_inv_m: f64, pair_rate_hz: f64) -> Self {
        Self::pure(1.0 / delta_plus_inv_m, delta_minus_m, pair_rate_hz)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if ![
            self.sigma_sum_m,
            self.sigma_diff_m,
            self.kappa_sum_inv_m,
            self.kappa_diff_inv_m,
        ]
        .into_iter()
        .all(positive)
        {
            return Err(SimError::Source("all widths must be positive"));
        }
        if !positive(self.pair_rate_hz) {
            return Err(SimError::Source("pair rate must be positive"));
        }
        Ok(())
    }
}

/// Parametric model of the intensified time-stamping camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorParams {
    pub quantum_efficiency: f64,
    /// Per-pixel dead time; a hit closer than this to the previous accepted
    /// hit on the same pixel is lost.
    pub dead_time_ps: u64,
    /// Width of the intensifier spot on the sensor, pixels.
    pub cluster_psf_sigma_px: f64,
    /// Mean summed ToT of one photon's cluster.
    pub mean_cluster_tot: f64,
    /// Gamma shape of the per-photon gain; smaller is broader.
    pub gain_shape: f64,
    /// Standard deviation of additive per-pixel ToT noise.
    pub tot_noise: f64,
    /// Expected ToT a pixel needs to fire.
    pub pixel_threshold_tot: f64,
    /// Timewalk model: a pixel with amplitude `tot` fires `timewalk_coeff_ps / tot` late.
    pub timewalk_coeff_ps: f64,
    pub dark_rate_hz_per_px: f64,
    pub dark_tot_mean: f64,
    pub tick_ps: f64,
    /// Per-photon Gaussian timing jitter, full width at half maximum.
    pub time_jitter_fwhm_ps: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            quantum_efficiency: 0.20,
            dead_time_ps: 1_000_000,
            cluster_psf_sigma_px: 0.7,
            mean_cluster_tot: 120.0,
            gain_shape: 4.0,
            tot_noise: 1.0,
            pixel_threshold_tot: 1.0,
            timewalk_coeff_ps: 100_000.0,
            dark_rate_hz_per_px: 1.0,
            dark_tot_mean: 8.0,
            tick_ps: 1562.5,
            time_jitter_fwhm_ps: 6000.0,
        }
    }
}

/// Widths of `x1 - x2` (m) and `k1 + k2` (1/m) in the reference data set.
pub const TABLE1_DELTA_MINUS_M: f64 = 1.17e-5;
pub const TABLE1_DELTA_PLUS_INV_M: f64 = 3.82e3;
pub const REFERENCE_DURATION_S: f64 = 200.0;
pub const REFERENCE_WINDOW_PS: f64 = 6000.0;

/// Coincidences recorded in the reference acquisition.
pub fn reference_coincidences(basis: Basis) -> f64 {
    match basis {
        Basis::FarField => 1.4e6,
        Basis::NearField => 2.1e6,
    }
}

/// FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

impl DetectorParams {
    /// Ideal camera: every photon detected, no dark hits.
    pub fn noiseless() -> Self {
        Self {
            quantum_efficiency: 1.0,
            dark_rate_hz_per_px: 0.0,
            ..Self::default()
        }
    }

    pub fn jitter_sigma_ps(&self) -> f64 {
        self.time_jitter_fwhm_ps / FWHM_PER_SIGMA
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(SimError::Detector("quantum efficiency must lie in [0, 1]"));
        }
        if !(self.cluster_psf_sigma_px.is_finite() && self.cluster_psf_sigma_px > 0.0) {
            return Err(SimError::Detector("cluster PSF width must be positive"));
        }
        if !(self.mean_cluster_tot > 0.0 && self.gain_shape > 0.0) {
            return Err(SimError::Detector("cluster amplitude and gain shape must be positive"));
        }
        if self.tot_noise < 0.0 || self.timewalk_coeff_ps < 0.0 || self.dark_rate_hz_per_px < 0.0 {
            return Err(SimError::Detector("noise, timewalk and dark rate must be non-negative"));
        }
        if !(self.tick_ps >= 1.0 && self.tick_ps.is_finite()) {
            return Err(SimError::Detector("tick must be at least 1 ps"));
        }
        if !(self.time_jitter_fwhm_ps >= 0.0) {
            return Err(SimError::Detector("jitter must be non-negative"));
        }
        if !(self.dark_tot_mean >= 1.0) {
            return Err(SimError::Detector("dark ToT mean must be at least 1"));
        }
        Ok(())
    }

    /// Uniform per-pixel dark rate giving `accidentals` chance coincidences
    /// per left/right pixel pair per second for a symmetric window of
    /// `window_ps` around each event.
    pub fn dark_rate_for_accidentals(accidentals: f64, window_ps: f64) -> f64 {
        (accidentals / (2.0 * window_ps * 1e-12)).sqrt()
    }

    /// Probability that the time difference of a true pair falls inside a
    /// `window_ps` coincidence window, given the per-photon jitter.
    pub fn window_efficiency(&self, window_ps: f64) -> f64 {
        let sigma_dt = self.jitter_sigma_ps() * std::f64::consts::SQRT_2;
        if sigma_dt == 0.0 {
            return 1.0;
        }
        libm::erf(window_ps / (sigma_dt * std::f64::consts::SQRT_2))
    }

    /// Pair emission rate expected to yield `coincidence_rate_hz` detected
    /// coincidences, ignoring sensor clipping and pairing losses.
    pub fn pair_rate_for_coincidences(&self, coincidence_rate_hz: f64, window_ps: f64) -> f64 {
        coincidence_rate_hz / (self.quantum_efficiency * self.quantum_efficiency * self.window_efficiency(window_ps))
    }
}

/// Where each half of the image lands on the sensor, in pixel coordinates
/// (pixel `n` spans `[n - 0.5, n + 0.5)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorLayout {
    pub left_center: (f64, f64),
    pub right_center: (f64, f64),
}

impl Default for SensorLayout {
    fn default() -> Self {
        Self {
            left_center: (63.5, 127.5),
            right_center: (191.5, 127.5),
        }
    }
}

impl SensorLayout {
    pub fn center(&self, photon: usize) -> (f64, f64) {
        if photon == 0 {
            self.left_center
        } else {
            self.right_center
        }
    }

    /// Whether a continuous pixel position lies on the half assigned to `photon`.
    pub fn on_own_half(&self, photon: usize, px: f64, py: f64) -> bool {
        let (lo, hi) = if photon == 0 { (-0.5, 127.5) } else { (127.5, 255.5) };
        px >= lo && px < hi && (-0.5..255.5).contains(&py)
    }
}
