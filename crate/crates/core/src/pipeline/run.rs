use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{
    calibrate_timewalk_clusters, centroid, timewalk_correct, Cluster, Clusterer, CoincidenceFinder, PipelineConfig,
    PipelineError, TimewalkMode,
};
use crate::event::{CoincidencePair, Half, PhotonEvent, PixelHit};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineStats {
    pub hits: u64,
    pub clusters: u64,
    pub clusters_dropped: u64,
    pub events_left: u64,
    pub events_right: u64,
    pub pairs: u64,
    pub same_half_coincidences: u64,
    pub same_half_pairs: u64,
    /// Timewalk constant actually applied.
    pub timewalk_c_ps: f64,
    pub timewalk_samples: usize,
    /// Why automatic calibration fell back to no correction, if it did.
    pub timewalk_warning: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Queued {
    t_ps: i64,
    seq: u64,
    event: PhotonEvent,
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t_ps, self.seq).cmp(&(other.t_ps, other.seq))
    }
}

/// Streaming cluster, centroid, timewalk and pairing chain.
///
/// Push hits in time order, then call [`Pipeline::finish`]; pairs can be
/// drained at any point.
pub struct Pipeline {
    cfg: PipelineConfig,
    clusterer: Clusterer,
    finder: CoincidenceFinder,
    /// `None` while an automatic calibration is still collecting clusters.
    c_ps: Option<f64>,
    calibration: Vec<Cluster>,
    reorder: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    pairs: Vec<CoincidencePair>,
    events: Option<Vec<PhotonEvent>>,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let c_ps = match cfg.timewalk {
            TimewalkMode::Fixed(c) => Some(c),
            TimewalkMode::Off => Some(0.0),
            TimewalkMode::Auto { .. } => None,
        };
        Ok(Self {
            clusterer: Clusterer::new(cfg.cluster)?,
            finder: CoincidenceFinder::new(cfg.pairing)?,
            cfg,
            c_ps,
            calibration: Vec::new(),
            reorder: BinaryHeap::new(),
            seq: 0,
            pairs: Vec::new(),
            events: None,
            stats: PipelineStats::default(),
        })
    }

    /// Keep every corrected photon event for [`Pipeline::take_events`].
    pub fn record_events(mut self, on: bool) -> Self {
        self.events = on.then(Vec::new);
        self
    }

    pub fn push_hit(&mut self, hit: PixelHit) -> Result<(), PipelineError> {
        self.stats.hits += 1;
        self.clusterer.push(hit)?;
        while let Some(c) = self.clusterer.pop() {
            self.on_cluster(c)?;
        }
        Ok(())
    }

    fn on_cluster(&mut self, c: Cluster) -> Result<(), PipelineError> {
        self.stats.clusters += 1;
        match self.c_ps {
            Some(_) => self.on_calibrated_cluster(&c),
            None => {
                self.calibration.push(c);
                let TimewalkMode::Auto { calibration_clusters } = self.cfg.timewalk else {
                    unreachable!()
                };
                if self.calibration.len() >= calibration_clusters {
                    self.calibrate()?;
                }
                Ok(())
            }
        }
    }

    fn calibrate(&mut self) -> Result<(), PipelineError> {
        let c = match calibrate_timewalk_clusters(&self.calibration) {
            Ok(fit) => {
                self.stats.timewalk_samples = fit.samples;
                fit.c_ps
            }
            Err(e) => {
                self.stats.timewalk_warning = Some(format!("{e}; timewalk left uncorrected"));
                0.0
            }
        };
        self.c_ps = Some(c);
        for cl in std::mem::take(&mut self.calibration) {
            self.on_calibrated_cluster(&cl)?;
        }
        Ok(())
    }

    fn on_calibrated_cluster(&mut self, c: &Cluster) -> Result<(), PipelineError> {
        let c_ps = self.c_ps.unwrap_or(0.0);
        let e = timewalk_correct(&centroid(c), c_ps);
        self.reorder.push(Reverse(Queued {
            t_ps: e.t_ps,
            seq: self.seq,
            event: e,
        }));
        self.seq += 1;
        // No later cluster starts before this one, so no later event can be
        // corrected to before `first - c`.
        let horizon = c.first_toa_ps() as i64 - c_ps.round() as i64;
        self.drain_reorder(Some(horizon))
    }

    fn drain_reorder(&mut self, horizon: Option<i64>) -> Result<(), PipelineError> {
        while let Some(Reverse(q)) = self.reorder.peek() {
            if horizon.is_some_and(|h| q.t_ps >= h) {
                break;
            }
            let Reverse(q) = self.reorder.pop().unwrap();
            match q.event.half {
                Half::Left => self.stats.events_left += 1,
                Half::Right => self.stats.events_right += 1,
            }
            if let Some(ev) = self.events.as_mut() {
                ev.push(q.event);
            }
            if let Some(p) = self.finder.push(q.event)? {
                self.pairs.push(p);
            }
        }
        Ok(())
    }

    pub fn finish(&mut self) -> Result<(), PipelineError> {
        self.clusterer.finish();
        while let Some(c) = self.clusterer.pop() {
            self.on_cluster(c)?;
        }
        if self.c_ps.is_none() {
            self.calibrate()?;
        }
        self.drain_reorder(None)?;
        let f = self.finder.stats();
        self.stats.pairs = f.pairs;
        self.stats.same_half_coincidences = f.same_half_coincidences;
        self.stats.same_half_pairs = f.same_half_pairs;
        self.stats.clusters_dropped = self.clusterer.dropped();
        self.stats.timewalk_c_ps = self.c_ps.unwrap_or(0.0);
        Ok(())
    }

    pub fn drain_pairs(&mut self) -> std::vec::Drain<'_, CoincidencePair> {
        self.pairs.drain(..)
    }

    pub fn take_events(&mut self) -> Vec<PhotonEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }
}

/// Run the full chain over a hit sequence.
pub fn process_hits<I>(hits: I, cfg: PipelineConfig) -> Result<(Vec<CoincidencePair>, PipelineStats), PipelineError>
where
    I: IntoIterator<Item = PixelHit>,
{
    let mut p = Pipeline::new(cfg)?;
    for h in hits {
        p.push_hit(h)?;
    }
    p.finish()?;
    let pairs = p.drain_pairs().collect();
    Ok((pairs, p.stats.clone()))
}

/// Process time chunks independently, in parallel, and stitch the results.
///
/// Each chunk sees `overlap_ps` of extra hits on both sides; a pair is kept
/// by the chunk that contains its earlier photon. The timewalk constant must
/// be fixed so that all chunks apply the same correction.
pub fn process_chunked(
    hits: &[PixelHit],
    cfg: PipelineConfig,
    chunk_ps: u64,
    overlap_ps: u64,
) -> Result<Vec<CoincidencePair>, PipelineError> {
    if matches!(cfg.timewalk, TimewalkMode::Auto { .. }) {
        return Err(PipelineError::Config(
            "chunked processing needs a fixed timewalk constant",
        ));
    }
    if chunk_ps == 0 {
        return Err(PipelineError::Config("chunk length must be positive"));
    }
    if overlap_ps
        < cfg
            .cluster
            .cluster_time_window_ps
            .max(cfg.pairing.coincidence_window_ps)
    {
        return Err(PipelineError::Config(
            "overlap must cover the cluster and coincidence windows",
        ));
    }
    let Some(last) = hits.last() else {
        return Ok(Vec::new());
    };
    let n_chunks = last.toa_ps / chunk_ps + 1;
    let results: Vec<Result<Vec<CoincidencePair>, PipelineError>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * chunk_ps;
            let end = start + chunk_ps;
            let lo = hits.partition_point(|h| h.toa_ps < start.saturating_sub(overlap_ps));
            let hi = hits.partition_point(|h| h.toa_ps < end.saturating_add(overlap_ps));
            let (pairs, _) = process_hits(hits[lo..hi].iter().copied(), cfg)?;
            let keep_lo = if k == 0 { i64::MIN } else { start as i64 };
            let keep_hi = if k + 1 == n_chunks { i64::MAX } else { end as i64 };
            Ok(pairs
                .into_iter()
                .filter(|p| (keep_lo..keep_hi).contains(&p.first_time_ps()))
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    out.sort_by_key(|p| p.a.t_ps.max(p.b.t_ps));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{ClusterParams, PairingParams};

    fn blob(x: u16, y: u16, t: u64, c: f64, out: &mut Vec<PixelHit>) {
        for (dx, tot) in [(0u16, 40u16), (1, 10), (2, 3)] {
            out.push(PixelHit {
                x: x + dx,
                y,
                toa_ps: t + (c / tot as f64).round() as u64,
                tot,
            });
        }
    }

    fn stream(c: f64) -> Vec<PixelHit> {
        let mut hits = Vec::new();
        for k in 0..200u64 {
            let t = 1_000_000 + k * 2_000_000;
            blob(20, 30 + (k % 50) as u16, t, c, &mut hits);
            blob(200, 30 + (k % 50) as u16, t + 500, c, &mut hits);
        }
        hits.sort_by_key(|h| (h.toa_ps, h.y, h.x));
        hits
    }

    #[test]
    fn fixed_timewalk_pairs_everything() {
        let cfg = PipelineConfig {
            timewalk: TimewalkMode::Fixed(20_000.0),
            ..PipelineConfig::default()
        };
        let (pairs, stats) = process_hits(stream(20_000.0), cfg).unwrap();
        assert_eq!(pairs.len(), 200);
        assert_eq!(stats.clusters, 400);
        assert!(pairs.iter().all(|p| p.dt_ps == 500));
    }

    #[test]
    fn auto_calibration_recovers_constant() {
        let cfg = PipelineConfig {
            timewalk: TimewalkMode::Auto {
                calibration_clusters: 100,
            },
            ..PipelineConfig::default()
        };
        let (pairs, stats) = process_hits(stream(20_000.0), cfg).unwrap();
        assert!(
            (stats.timewalk_c_ps / 20_000.0 - 1.0).abs() < 0.01,
            "{}",
            stats.timewalk_c_ps
        );
        assert_eq!(pairs.len(), 200);
    }

    #[test]
    fn empty_stream() {
        let (pairs, stats) = process_hits(Vec::new(), PipelineConfig::default()).unwrap();
        assert!(pairs.is_empty());
        assert!(stats.timewalk_warning.is_some());
    }

    #[test]
    fn chunked_matches_single_pass() {
        let cfg = PipelineConfig {
            cluster: ClusterParams::default(),
            pairing: PairingParams::default(),
            timewalk: TimewalkMode::Fixed(20_000.0),
        };
        let hits = stream(20_000.0);
        let (single, _) = process_hits(hits.clone(), cfg).unwrap();
        let chunked = process_chunked(&hits, cfg, 37_000_000, 1_000_000).unwrap();
        assert_eq!(single, chunked);
        assert!(process_chunked(&hits, PipelineConfig::default(), 1_000_000, 1_000_000).is_err());
    }
}
