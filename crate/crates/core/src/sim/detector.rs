//! Camera response: quantum-efficiency thinning, intensifier clusters,
//! timewalk, jitter, tick quantization, dark hits and per-pixel dead time.
//!
//! Generation runs in fixed time chunks. Pair emission times and dark hits
//! come from a per-chunk random stream, and each photon's response from its
//! own stream keyed by `(pair_id, photon)`, so output depends only on the
//! seed, the parameters and the chunk length.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};

use super::source::{draw_pair, PairSample};
use super::{DetectorParams, SensorLayout, SimError, SourceParams};
use crate::event::{Basis, OpticsConfig, PixelHit, SENSOR_PIXELS};
use crate::seed;

/// Jitter is truncated at this many standard deviations so chunk boundaries
/// can be released without waiting for the next chunk.
const JITTER_CLIP_SIGMAS: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    Photon { pair_id: u64, photon: u8 },
    Dark,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimHit {
    pub hit: PixelHit,
    pub origin: Origin,
}

impl SimHit {
    fn sort_key(&self) -> (u64, u16, u16, Origin) {
        (self.hit.toa_ps, self.hit.y, self.hit.x, self.origin)
    }
}

/// A pair with an emission time, in physical units of the simulated basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPair {
    pub t_ps: f64,
    pub pair: PairSample,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmittedPair {
    pub pair_id: u64,
    pub t_ps: f64,
    pub pair: PairSample,
}

pub type HitLink = SimHit;

/// Hidden ground truth: every emitted pair and the origin of every hit that
/// made it into the stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruthRecord {
    pub pairs: Vec<EmittedPair>,
    pub links: Vec<HitLink>,
}

impl TruthRecord {
    /// Number of distinct photons with at least one hit in the stream.
    pub fn linked_photon_count(&self) -> usize {
        let mut ids: Vec<(u64, u8)> = self
            .links
            .iter()
            .filter_map(|l| match l.origin {
                Origin::Photon { pair_id, photon } => Some((pair_id, photon)),
                Origin::Dark => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Truth CSV: `pair_id,photon_idx,u_m,v_m,t_ps`, two rows per pair.
    /// In the far field `u_m`/`v_m` hold wavevectors in 1/m.
    pub fn write_pairs_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        write_pairs_csv(out, &self.pairs)
    }

    /// Link CSV: `x,y,toa_ps,pair_id,photon_idx`; dark hits use `-1,-1`.
    pub fn write_links_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = LinkCsvWriter::new(out)?;
        for l in &self.links {
            w.push(l)?;
        }
        w.finish()
    }
}

pub fn write_pairs_csv<W: std::io::Write>(out: W, pairs: &[EmittedPair]) -> std::io::Result<()> {
    let mut w = PairCsvWriter::new(out)?;
    for p in pairs {
        w.push(p)?;
    }
    w.finish()
}

/// Streaming writer for the truth pair table.
pub struct PairCsvWriter<W: std::io::Write> {
    inner: std::io::BufWriter<W>,
}

impl<W: std::io::Write> PairCsvWriter<W> {
    pub fn new(out: W) -> std::io::Result<Self> {
        let mut inner = std::io::BufWriter::new(out);
        writeln!(inner, "pair_id,photon_idx,u_m,v_m,t_ps")?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, p: &EmittedPair) -> std::io::Result<()> {
        for (i, ph) in p.pair.0.iter().enumerate() {
            writeln!(self.inner, "{},{},{:e},{:e},{}", p.pair_id, i, ph[0], ph[1], p.t_ps)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Streaming writer for the hit link table.
pub struct LinkCsvWriter<W: std::io::Write> {
    inner: std::io::BufWriter<W>,
}

impl<W: std::io::Write> LinkCsvWriter<W> {
    pub fn new(out: W) -> std::io::Result<Self> {
        let mut inner = std::io::BufWriter::new(out);
        writeln!(inner, "x,y,toa_ps,pair_id,photon_idx")?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, l: &HitLink) -> std::io::Result<()> {
        match l.origin {
            Origin::Photon { pair_id, photon } => writeln!(
                self.inner,
                "{},{},{},{},{}",
                l.hit.x, l.hit.y, l.hit.toa_ps, pair_id, photon
            ),
            Origin::Dark => writeln!(self.inner, "{},{},{},-1,-1", l.hit.x, l.hit.y, l.hit.toa_ps),
        }
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    pub pairs_emitted: u64,
    pub photons_detected: u64,
    pub photons_lost_qe: u64,
    pub photons_off_sensor: u64,
    pub dark_hits: u64,
    pub hits_dead_time: u64,
    pub hits_outside_acquisition: u64,
    pub hits_emitted: u64,
}

/// Shared per-photon and dark-hit generation.
#[derive(Clone, Debug)]
struct ResponseModel {
    det: DetectorParams,
    optics: OpticsConfig,
    layout: SensorLayout,
    duration_ps: f64,
    seed: u64,
    gain: Gamma<f64>,
    jitter_sigma: f64,
}

enum PhotonFate {
    Detected,
    LostQe,
    OffSensor,
}

impl ResponseModel {
    fn new(
        det: DetectorParams,
        optics: OpticsConfig,
        layout: SensorLayout,
        duration_ps: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        det.validate()?;
        optics.validate()?;
        let gain = Gamma::new(det.gain_shape, det.mean_cluster_tot / det.gain_shape)
            .map_err(|_| SimError::Detector("invalid gain distribution"))?;
        Ok(Self {
            jitter_sigma: det.jitter_sigma_ps(),
            det,
            optics,
            layout,
            duration_ps,
            seed,
            gain,
        })
    }

    fn photon_rng(&self, pair_id: u64, photon: u8) -> ChaCha8Rng {
        seed::rng(self.seed, &[seed::label("photon"), pair_id, photon as u64])
    }

    /// Quantize a continuous time to the camera clock. Returns `None` outside
    /// the acquisition window.
    fn quantize(&self, t_ps: f64) -> Option<u64> {
        if !(t_ps >= 0.0 && t_ps < self.duration_ps) {
            return None;
        }
        let tick = (t_ps / self.det.tick_ps).floor();
        Some((tick * self.det.tick_ps).floor() as u64)
    }

    fn timewalk(&self, tot: u16) -> f64 {
        self.det.timewalk_coeff_ps / tot as f64
    }

    fn photon_hits(
        &self,
        pair_id: u64,
        photon: u8,
        coords: [f64; 2],
        t_emit_ps: f64,
        out: &mut Vec<SimHit>,
        stats: &mut SimStats,
    ) -> PhotonFate {
        let mut rng = self.photon_rng(pair_id, photon);
        // Always drawn first so that detection is a thinning of one stream.
        let u_det: f64 = rng.random();
        if u_det >= self.det.quantum_efficiency {
            stats.photons_lost_qe += 1;
            return PhotonFate::LostQe;
        }
        let scale = self.optics.pixel_scale();
        let (c0x, c0y) = self.layout.center(photon as usize);
        let px = c0x + coords[0] / scale;
        let py = c0y + coords[1] / scale;
        if !self.layout.on_own_half(photon as usize, px, py) {
            stats.photons_off_sensor += 1;
            return PhotonFate::OffSensor;
        }
        stats.photons_detected += 1;

        let z: f64 = StandardNormal.sample(&mut rng);
        let t = t_emit_ps + self.jitter_sigma * z.clamp(-JITTER_CLIP_SIGMAS, JITTER_CLIP_SIGMAS);
        let amplitude = self.gain.sample(&mut rng);

        let sigma = self.det.cluster_psf_sigma_px;
        let reach = (3.0 * sigma + 0.5).ceil() as i32;
        let (ix, iy) = (px.round() as i32, py.round() as i32);
        let cdf = |a: f64| 0.5 * (1.0 + libm::erf(a / (sigma * std::f64::consts::SQRT_2)));
        let weights = |c: i32, p: f64| -> Vec<f64> {
            ((c - reach)..=(c + reach))
                .map(|n| cdf(n as f64 + 0.5 - p) - cdf(n as f64 - 0.5 - p))
                .collect()
        };
        let (wxs, wys) = (weights(ix, px), weights(iy, py));
        let origin = Origin::Photon { pair_id, photon };
        for (y, wy) in ((iy - reach)..=(iy + reach)).zip(wys) {
            for (x, &wx) in ((ix - reach)..=(ix + reach)).zip(&wxs) {
                let expected = amplitude * wx * wy;
                if expected < self.det.pixel_threshold_tot {
                    continue;
                }
                let noise: f64 = StandardNormal.sample(&mut rng);
                if x < 0 || y < 0 || x >= SENSOR_PIXELS as i32 || y >= SENSOR_PIXELS as i32 {
                    continue;
                }
                let tot = (expected + self.det.tot_noise * noise)
                    .round()
                    .clamp(1.0, u16::MAX as f64) as u16;
                match self.quantize(t + self.timewalk(tot)) {
                    Some(toa_ps) => out.push(SimHit {
                        hit: PixelHit {
                            x: x as u16,
                            y: y as u16,
                            toa_ps,
                            tot,
                        },
                        origin,
                    }),
                    None => stats.hits_outside_acquisition += 1,
                }
            }
        }
        PhotonFate::Detected
    }

    /// Dark hits with emission times in `[t0, t1)`.
    fn dark_hits(&self, rng: &mut ChaCha8Rng, t0: f64, t1: f64, out: &mut Vec<SimHit>, stats: &mut SimStats) {
        let rate = self.det.dark_rate_hz_per_px * (SENSOR_PIXELS as f64).powi(2);
        let mean = rate * (t1 - t0) * 1e-12;
        if mean <= 0.0 {
            return;
        }
        let n = Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0);
        let tot_dist = Normal::new(self.det.dark_tot_mean, self.det.tot_noise.max(1e-9)).unwrap();
        for _ in 0..n {
            let t = t0 + rng.random::<f64>() * (t1 - t0);
            let x = rng.random_range(0..SENSOR_PIXELS);
            let y = rng.random_range(0..SENSOR_PIXELS);
            let tot = tot_dist.sample(rng).round().clamp(1.0, u16::MAX as f64) as u16;
            stats.dark_hits += 1;
            match self.quantize(t + self.timewalk(tot)) {
                Some(toa_ps) => out.push(SimHit {
                    hit: PixelHit { x, y, toa_ps, tot },
                    origin: Origin::Dark,
                }),
                None => stats.hits_outside_acquisition += 1,
            }
        }
    }
}

/// Per-pixel non-paralyzable dead time, applied to hits in time order.
struct DeadTimeFilter {
    dead_time_ps: u64,
    last: Vec<Option<u64>>,
}

impl DeadTimeFilter {
    fn new(dead_time_ps: u64) -> Self {
        Self {
            dead_time_ps,
            last: vec![None; SENSOR_PIXELS as usize * SENSOR_PIXELS as usize],
        }
    }

    fn accept(&mut self, hit: &PixelHit) -> bool {
        let slot = &mut self.last[hit.pixel_index()];
        match *slot {
            Some(prev) if hit.toa_ps - prev < self.dead_time_ps => false,
            _ => {
                *slot = Some(hit.toa_ps);
                true
            }
        }
    }
}

/// Run the camera model on an explicit list of pairs.
///
/// Pair ids are the indices into `pairs`. Dark hits cover `[0, duration_s)`.
pub fn detector_response(
    pairs: &[TimedPair],
    optics: &OpticsConfig,
    det: &DetectorParams,
    layout: &SensorLayout,
    duration_s: f64,
    seed: u64,
) -> Result<(Vec<PixelHit>, TruthRecord, SimStats), SimError> {
    let duration_ps = duration_s * 1e12;
    let model = ResponseModel::new(*det, *optics, *layout, duration_ps, seed)?;
    let mut stats = SimStats::default();
    let mut raw = Vec::new();
    for (id, tp) in pairs.iter().enumerate() {
        stats.pairs_emitted += 1;
        for photon in 0..2u8 {
            model.photon_hits(
                id as u64,
                photon,
                tp.pair.photon(photon as usize),
                tp.t_ps,
                &mut raw,
                &mut stats,
            );
        }
    }
    let mut rng = seed::rng(seed, &[seed::label("dark"), 0]);
    model.dark_hits(&mut rng, 0.0, duration_ps, &mut raw, &mut stats);
    raw.sort_unstable_by_key(SimHit::sort_key);

    let mut dead = DeadTimeFilter::new(det.dead_time_ps);
    let mut links = Vec::with_capacity(raw.len());
    for h in raw {
        if dead.accept(&h.hit) {
            links.push(h);
        } else {
            stats.hits_dead_time += 1;
        }
    }
    stats.hits_emitted = links.len() as u64;
    let hits = links.iter().map(|l| l.hit).collect();
    let truth = TruthRecord {
        pairs: pairs
            .iter()
            .enumerate()
            .map(|(i, p)| EmittedPair {
                pair_id: i as u64,
                t_ps: p.t_ps,
                pair: p.pair,
            })
            .collect(),
        links,
    };
    Ok((hits, truth, stats))
}

/// Everything needed to reproduce a simulated acquisition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub source: SourceParams,
    pub detector: DetectorParams,
    pub optics: OpticsConfig,
    pub layout: SensorLayout,
    pub duration_s: f64,
    /// Generation chunk length; part of the reproducibility contract.
    pub chunk_s: f64,
    pub seed: u64,
}

/// Default generation chunk, s.
pub const DEFAULT_CHUNK_S: f64 = 0.01;

impl SimConfig {
    /// Reference acquisition for `basis`: Table-1 widths, default camera,
    /// 200 s, and a pair rate chosen to yield the reference coincidence
    /// totals (1.4e6 far field, 2.1e6 near field) with the default 6 ns window.
    pub fn reference(basis: Basis, seed: u64) -> Self {
        let detector = DetectorParams::default();
        let rate = detector.pair_rate_for_coincidences(
            super::reference_coincidences(basis) / super::REFERENCE_DURATION_S,
            super::REFERENCE_WINDOW_PS,
        );
        Self {
            source: SourceParams::from_minus_plus(super::TABLE1_DELTA_MINUS_M, super::TABLE1_DELTA_PLUS_INV_M, rate),
            detector,
            optics: OpticsConfig::new(basis),
            layout: SensorLayout::default(),
            duration_s: super::REFERENCE_DURATION_S,
            chunk_s: DEFAULT_CHUNK_S,
            seed,
        }
    }
}

/// Streaming simulator producing time-sorted hits with their origin.
pub struct DetectorSim {
    cfg: SimConfig,
    model: ResponseModel,
    chunk_ps: f64,
    n_chunks: u64,
    next_chunk: u64,
    guard_ps: f64,
    pending: Vec<SimHit>,
    ready: VecDeque<SimHit>,
    dead: DeadTimeFilter,
    record_pairs: bool,
    emitted: Vec<EmittedPair>,
    stats: SimStats,
}

impl DetectorSim {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.source.validate()?;
        if !(cfg.duration_s > 0.0 && cfg.chunk_s > 0.0) {
            return Err(SimError::Source("duration and chunk length must be positive"));
        }
        let duration_ps = cfg.duration_s * 1e12;
        let model = ResponseModel::new(cfg.detector, cfg.optics, cfg.layout, duration_ps, cfg.seed)?;
        let chunk_ps = cfg.chunk_s * 1e12;
        let n_chunks = (duration_ps / chunk_ps).ceil() as u64;
        // Latest a hit can land after its emission time.
        let guard_ps =
            JITTER_CLIP_SIGMAS * model.jitter_sigma + cfg.detector.timewalk_coeff_ps + 2.0 * cfg.detector.tick_ps;
        Ok(Self {
            dead: DeadTimeFilter::new(cfg.detector.dead_time_ps),
            cfg,
            model,
            chunk_ps,
            n_chunks,
            next_chunk: 0,
            guard_ps,
            pending: Vec::new(),
            ready: VecDeque::new(),
            record_pairs: false,
            emitted: Vec::new(),
            stats: SimStats::default(),
        })
    }

    /// Keep emitted pairs for [`DetectorSim::take_emitted`].
    pub fn record_pairs(mut self, on: bool) -> Self {
        self.record_pairs = on;
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn duration_ps(&self) -> u64 {
        (self.cfg.duration_s * 1e12).round() as u64
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    /// Drain pairs emitted so far (only when recording is on).
    pub fn take_emitted(&mut self) -> Vec<EmittedPair> {
        std::mem::take(&mut self.emitted)
    }

    fn generate_chunk(&mut self, k: u64) {
        let t0 = k as f64 * self.chunk_ps;
        let t1 = ((k + 1) as f64 * self.chunk_ps).min(self.model.duration_ps);
        let mut rng = seed::rng(self.cfg.seed, &[seed::label("pairs"), k]);
        let mean = self.cfg.source.pair_rate_hz * (t1 - t0) * 1e-12;
        let n = if mean > 0.0 {
            Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0)
        } else {
            0
        };
        let mut times: Vec<f64> = (0..n).map(|_| t0 + rng.random::<f64>() * (t1 - t0)).collect();
        times.sort_by(f64::total_cmp);
        let basis = self.cfg.optics.basis;
        let mut fresh = Vec::new();
        for (i, t) in times.into_iter().enumerate() {
            let pair = draw_pair(&self.cfg.source, basis, &mut rng);
            let pair_id = (k << 32) | i as u64;
            self.stats.pairs_emitted += 1;
            for photon in 0..2u8 {
                self.model.photon_hits(
                    pair_id,
                    photon,
                    pair.photon(photon as usize),
                    t,
                    &mut fresh,
                    &mut self.stats,
                );
            }
            if self.record_pairs {
                self.emitted.push(EmittedPair { pair_id, t_ps: t, pair });
            }
        }
        let mut dark_rng = seed::rng(self.cfg.seed, &[seed::label("dark"), k]);
        self.model.dark_hits(&mut dark_rng, t0, t1, &mut fresh, &mut self.stats);
        self.pending.extend(fresh);
        self.pending.sort_unstable_by_key(SimHit::sort_key);
    }

    fn release_before(&mut self, limit: Option<f64>) {
        let cut = match limit {
            Some(l) => self.pending.partition_point(|h| (h.hit.toa_ps as f64) < l),
            None => self.pending.len(),
        };
        for h in self.pending.drain(..cut) {
            if self.dead.accept(&h.hit) {
                self.stats.hits_emitted += 1;
                self.ready.push_back(h);
            } else {
                self.stats.hits_dead_time += 1;
            }
        }
    }
}

impl Iterator for DetectorSim {
    type Item = SimHit;

    fn next(&mut self) -> Option<SimHit> {
        while self.ready.is_empty() {
            if self.next_chunk < self.n_chunks {
                let k = self.next_chunk;
                self.generate_chunk(k);
                self.next_chunk += 1;
                let limit = if self.next_chunk < self.n_chunks {
                    Some(self.next_chunk as f64 * self.chunk_ps - self.guard_ps)
                } else {
                    None
                };
                self.release_before(limit);
            } else if !self.pending.is_empty() {
                self.release_before(None);
            } else {
                return None;
            }
        }
        self.ready.pop_front()
    }
}
