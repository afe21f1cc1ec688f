use super::{Cluster, PipelineError};
use crate::event::PhotonEvent;

/// Remove the amplitude-dependent delay `c / tot` of the timing pixel.
pub fn timewalk_correct(event: &PhotonEvent, c_ps: f64) -> PhotonEvent {
    let shift = (c_ps / event.max_tot.max(1) as f64).round() as i64;
    PhotonEvent {
        t_ps: event.t_ps - shift,
        ..*event
    }
}

/// Result of a timewalk calibration: `dt = c / tot + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimewalkFit {
    pub c_ps: f64,
    pub offset_ps: f64,
    pub samples: usize,
}

/// Least-squares fit of `dt = c / tot + offset` to `(tot, dt)` samples.
///
/// The offset absorbs the unknown time of whatever reference `dt` was
/// measured against.
pub fn calibrate_timewalk(samples: &[(u16, f64)]) -> Result<TimewalkFit, PipelineError> {
    if samples.len() < 10 {
        return Err(PipelineError::Calibration("need at least 10 samples"));
    }
    if samples.iter().any(|(tot, _)| *tot == 0) {
        return Err(PipelineError::Calibration("ToT must be at least 1"));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|(t, _)| 1.0 / *t as f64).sum::<f64>() / n;
    let my = samples.iter().map(|(_, d)| d).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (t, d) in samples {
        let x = 1.0 / *t as f64 - mx;
        sxx += x * x;
        sxy += x * (d - my);
    }
    let first = samples[0].0;
    if samples.iter().all(|(t, _)| *t == first) || sxx <= 0.0 {
        return Err(PipelineError::Calibration("need at least two distinct ToT values"));
    }
    let c = sxy / sxx;
    Ok(TimewalkFit {
        c_ps: c,
        offset_ps: my - c * mx,
        samples: samples.len(),
    })
}

/// Estimate `c` from the spread of hit times inside clusters.
///
/// All pixels of one cluster share the photon's arrival time, so regressing
/// each hit's ToA, relative to its cluster mean, on `1/tot` (also relative to
/// the cluster mean) isolates the timewalk from the per-photon jitter.
pub fn calibrate_timewalk_clusters(clusters: &[Cluster]) -> Result<TimewalkFit, PipelineError> {
    let (mut sxx, mut sxy) = (0.0, 0.0);
    let mut samples = 0usize;
    let mut distinct = false;
    for c in clusters.iter().filter(|c| c.hits.len() >= 2) {
        let n = c.hits.len() as f64;
        let mx = c.hits.iter().map(|h| 1.0 / h.tot as f64).sum::<f64>() / n;
        let mt = c.hits.iter().map(|h| h.toa_ps as f64).sum::<f64>() / n;
        for h in &c.hits {
            let x = 1.0 / h.tot as f64 - mx;
            sxx += x * x;
            sxy += x * (h.toa_ps as f64 - mt);
            distinct |= h.tot != c.hits[0].tot;
        }
        samples += c.hits.len();
    }
    if samples < 10 {
        return Err(PipelineError::Calibration(
            "need at least 10 hits in multi-pixel clusters",
        ));
    }
    if !distinct || sxx <= 0.0 {
        return Err(PipelineError::Calibration(
            "need at least two distinct ToT values within clusters",
        ));
    }
    Ok(TimewalkFit {
        c_ps: (sxy / sxx).max(0.0),
        offset_ps: 0.0,
        samples,
    })
}
