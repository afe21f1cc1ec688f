use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::{ClusterParams, PipelineError};
use crate::event::{Half, PhotonEvent, PixelHit, SENSOR_PIXELS};

/// Hits of one photon, sorted by `(toa, y, x, tot)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub hits: Vec<PixelHit>,
}

impl Cluster {
    pub fn first_toa_ps(&self) -> u64 {
        self.hits[0].toa_ps
    }

    pub fn sum_tot(&self) -> u32 {
        self.hits.iter().map(|h| h.tot as u32).sum()
    }

    fn order_key(&self) -> (u64, u16, u16, u16) {
        let h = self.hits[0];
        (h.toa_ps, h.y, h.x, h.tot)
    }
}

impl PartialOrd for Cluster {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cluster {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order_key()
            .cmp(&other.order_key())
            .then_with(|| self.hits.cmp(&other.hits))
    }
}

/// Amplitude-weighted centroid; the time comes from the brightest pixel.
pub fn centroid(cluster: &Cluster) -> PhotonEvent {
    let mut sum = 0u64;
    let (mut sx, mut sy) = (0u64, 0u64);
    let mut best = cluster.hits[0];
    for h in &cluster.hits {
        let w = h.tot as u64;
        sum += w;
        sx += w * h.x as u64;
        sy += w * h.y as u64;
        if (Reverse(h.tot), h.toa_ps, h.x, h.y) < (Reverse(best.tot), best.toa_ps, best.x, best.y) {
            best = *h;
        }
    }
    let cx = sx as f64 / sum as f64;
    let cy = sy as f64 / sum as f64;
    PhotonEvent {
        cx,
        cy,
        t_ps: best.toa_ps as i64,
        n_pixels: cluster.hits.len() as u32,
        sum_tot: sum.min(u32::MAX as u64) as u32,
        max_tot: best.tot,
        half: Half::of(cx),
    }
}

struct Active {
    id: u64,
    first_toa: u64,
    last_toa: u64,
    hits: Vec<PixelHit>,
}

const EMPTY: (u64, u64) = (0, u64::MAX);

/// Streaming connected-component clustering of time-sorted hits.
///
/// A cluster is closed once the stream has moved more than the time window
/// past its latest hit; closed clusters are released in order of their
/// earliest hit once no open cluster can precede them.
pub struct Clusterer {
    params: ClusterParams,
    /// Latest hit per pixel: `(toa, cluster id)`.
    grid: Vec<(u64, u64)>,
    active: Vec<Active>,
    closed: BinaryHeap<Reverse<Cluster>>,
    ready: VecDeque<Cluster>,
    next_id: u64,
    last_toa: Option<u64>,
    index: u64,
    dropped: u64,
}

impl Clusterer {
    pub fn new(params: ClusterParams) -> Result<Self, PipelineError> {
        params.validate()?;
        Ok(Self {
            params,
            grid: vec![EMPTY; SENSOR_PIXELS as usize * SENSOR_PIXELS as usize],
            active: Vec::new(),
            closed: BinaryHeap::new(),
            ready: VecDeque::new(),
            next_id: 0,
            last_toa: None,
            index: 0,
            dropped: 0,
        })
    }

    /// Clusters discarded by the `min_cluster_tot` cut.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn push(&mut self, hit: PixelHit) -> Result<(), PipelineError> {
        if let Some(prev) = self.last_toa {
            if hit.toa_ps < prev {
                return Err(PipelineError::Unsorted {
                    index: self.index,
                    previous_ps: prev as i64,
                    current_ps: hit.toa_ps as i64,
                });
            }
        }
        self.index += 1;
        self.last_toa = Some(hit.toa_ps);
        let window = self.params.cluster_time_window_ps;
        let t = hit.toa_ps;

        let mut i = 0;
        while i < self.active.len() {
            if t - self.active[i].last_toa > window {
                let a = self.active.swap_remove(i);
                self.close(a.hits);
            } else {
                i += 1;
            }
        }

        let r = self.params.spatial_adjacency as i32;
        let n = SENSOR_PIXELS as i32;
        let mut linked: Vec<u64> = Vec::new();
        for y in (hit.y as i32 - r).max(0)..=(hit.y as i32 + r).min(n - 1) {
            for x in (hit.x as i32 - r).max(0)..=(hit.x as i32 + r).min(n - 1) {
                let (toa, id) = self.grid[(y * n + x) as usize];
                if id != u64::MAX && t - toa <= window && !linked.contains(&id) {
                    linked.push(id);
                }
            }
        }
        linked.retain(|id| self.active.iter().any(|a| a.id == *id));

        let target = match linked.len() {
            0 => {
                let id = self.next_id;
                self.next_id += 1;
                self.active.push(Active {
                    id,
                    first_toa: t,
                    last_toa: t,
                    hits: Vec::new(),
                });
                id
            }
            1 => linked[0],
            _ => self.merge(&linked),
        };
        let a = self.active.iter_mut().find(|a| a.id == target).expect("active cluster");
        a.hits.push(hit);
        a.last_toa = t;
        self.grid[hit.pixel_index()] = (t, target);
        self.release(Some(t));
        Ok(())
    }

    fn merge(&mut self, ids: &[u64]) -> u64 {
        let target = *ids
            .iter()
            .max_by_key(|id| {
                let a = self.active.iter().find(|a| a.id == **id).unwrap();
                (a.hits.len(), Reverse(a.id))
            })
            .unwrap();
        for id in ids.iter().filter(|id| **id != target) {
            let pos = self.active.iter().position(|a| a.id == *id).unwrap();
            let other = self.active.swap_remove(pos);
            for h in &other.hits {
                let cell = &mut self.grid[h.pixel_index()];
                if cell.1 == other.id {
                    cell.1 = target;
                }
            }
            let t = self.active.iter_mut().find(|a| a.id == target).unwrap();
            t.first_toa = t.first_toa.min(other.first_toa);
            t.last_toa = t.last_toa.max(other.last_toa);
            t.hits.extend(other.hits);
        }
        target
    }

    fn close(&mut self, mut hits: Vec<PixelHit>) {
        hits.sort_unstable_by_key(|h| (h.toa_ps, h.y, h.x, h.tot));
        let c = Cluster { hits };
        if c.sum_tot() < self.params.min_cluster_tot {
            self.dropped += 1;
            return;
        }
        self.closed.push(Reverse(c));
    }

    /// Move closed clusters that no open or future cluster can precede.
    fn release(&mut self, now: Option<u64>) {
        let bound = self.active.iter().map(|a| a.first_toa).chain(now).min();
        while let Some(Reverse(top)) = self.closed.peek() {
            if bound.is_some_and(|b| top.first_toa_ps() >= b) {
                break;
            }
            let Reverse(c) = self.closed.pop().unwrap();
            self.ready.push_back(c);
        }
    }

    /// Close everything; call once at the end of the stream.
    pub fn finish(&mut self) {
        for a in std::mem::take(&mut self.active) {
            self.close(a.hits);
        }
        self.release(None);
    }

    pub fn pop(&mut self) -> Option<Cluster> {
        self.ready.pop_front()
    }
}

/// Cluster a whole time-sorted hit list.
pub fn cluster_hits(hits: &[PixelHit], params: ClusterParams) -> Result<Vec<Cluster>, PipelineError> {
    let mut c = Clusterer::new(params)?;
    let mut out = Vec::new();
    for h in hits {
        c.push(*h)?;
        while let Some(cl) = c.pop() {
            out.push(cl);
        }
    }
    c.finish();
    while let Some(cl) = c.pop() {
        out.push(cl);
    }
    Ok(out)
}
