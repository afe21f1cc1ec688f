//! Hit stream to photon events to coincidence pairs.
//!
//! Each stage is a push-based state machine that holds only what the time
//! windows require, so a 200 s acquisition can be streamed from disk.

mod cluster;
mod pairing;
mod run;
mod timewalk;

use thiserror::Error;

pub use cluster::{centroid, cluster_hits, Cluster, Clusterer};
pub use pairing::{find_coincidences, CoincidenceFinder, PairingStats};
pub use run::{process_chunked, process_hits, Pipeline, PipelineStats};
pub use timewalk::{calibrate_timewalk, calibrate_timewalk_clusters, timewalk_correct, TimewalkFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("input not time-sorted at item {index}: {current_ps} ps after {previous_ps} ps")]
    Unsorted {
        index: u64,
        previous_ps: i64,
        current_ps: i64,
    },
    #[error("timewalk calibration failed: {0}")]
    Calibration(&'static str),
    #[error("invalid pipeline parameters: {0}")]
    Config(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterParams {
    /// Chebyshev distance within which two hits are adjacent.
    pub spatial_adjacency: u16,
    pub cluster_time_window_ps: u64,
    /// Clusters with a smaller summed ToT are discarded.
    pub min_cluster_tot: u32,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            spatial_adjacency: 1,
            cluster_time_window_ps: 300_000,
            min_cluster_tot: 1,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.cluster_time_window_ps == 0 {
            return Err(PipelineError::Config("cluster time window must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairingParams {
    pub coincidence_window_ps: u64,
    /// Only pair photons detected on opposite halves.
    pub cross_halves_only: bool,
}

impl Default for PairingParams {
    fn default() -> Self {
        Self {
            coincidence_window_ps: 6_000,
            cross_halves_only: true,
        }
    }
}

impl PairingParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.coincidence_window_ps == 0 {
            return Err(PipelineError::Config("coincidence window must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimewalkMode {
    /// Subtract `c / tot` with a known constant.
    Fixed(f64),
    /// Estimate `c` from the first `calibration_clusters` clusters.
    Auto {
        calibration_clusters: usize,
    },
    Off,
}

impl Default for TimewalkMode {
    fn default() -> Self {
        TimewalkMode::Auto {
            calibration_clusters: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    pub cluster: ClusterParams,
    pub pairing: PairingParams,
    pub timewalk: TimewalkMode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.cluster.validate()?;
        self.pairing.validate()?;
        match self.timewalk {
            TimewalkMode::Fixed(c) if !(c >= 0.0 && c.is_finite()) => {
                Err(PipelineError::Config("timewalk constant must be non-negative"))
            }
            TimewalkMode::Auto { calibration_clusters } if calibration_clusters < 10 => {
                Err(PipelineError::Config("timewalk calibration needs at least 10 clusters"))
            }
            _ => Ok(()),
        }
    }
}
