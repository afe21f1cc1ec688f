use std::collections::VecDeque;

use super::{PairingParams, PipelineError};
use crate::event::{CoincidencePair, Half, PhotonEvent};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairingStats {
    pub events: u64,
    pub pairs: u64,
    /// Events that found an unpaired same-half event within the window.
    /// With `cross_halves_only` these are counted but never paired.
    pub same_half_coincidences: u64,
    /// Same-half pairs emitted when `cross_halves_only` is off.
    pub same_half_pairs: u64,
}

/// Greedy forward-scan pairing over a time-sorted event stream.
///
/// Every event, in time order, takes the first later unpaired partner within
/// the window; an event is in at most one pair. In streaming form an arriving
/// event is matched to the earliest still-unpaired pending event that accepts
/// it, which yields the same matching.
pub struct CoincidenceFinder {
    params: PairingParams,
    pending: VecDeque<PhotonEvent>,
    last_t: Option<i64>,
    stats: PairingStats,
}

impl CoincidenceFinder {
    pub fn new(params: PairingParams) -> Result<Self, PipelineError> {
        params.validate()?;
        Ok(Self {
            params,
            pending: VecDeque::new(),
            last_t: None,
            stats: PairingStats::default(),
        })
    }

    pub fn stats(&self) -> PairingStats {
        self.stats
    }

    pub fn push(&mut self, e: PhotonEvent) -> Result<Option<CoincidencePair>, PipelineError> {
        if let Some(prev) = self.last_t {
            if e.t_ps < prev {
                return Err(PipelineError::Unsorted {
                    index: self.stats.events,
                    previous_ps: prev,
                    current_ps: e.t_ps,
                });
            }
        }
        self.last_t = Some(e.t_ps);
        self.stats.events += 1;
        let w = self.params.coincidence_window_ps as i64;
        while self.pending.front().is_some_and(|p| e.t_ps - p.t_ps > w) {
            self.pending.pop_front();
        }

        let cross = self.pending.iter().position(|p| p.half != e.half);
        let same = self.pending.iter().position(|p| p.half == e.half);
        if same.is_some() {
            self.stats.same_half_coincidences += 1;
        }
        let chosen = if self.params.cross_halves_only {
            cross
        } else {
            match (cross, same) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            }
        };
        match chosen {
            Some(i) => {
                let p = self.pending.remove(i).unwrap();
                self.stats.pairs += 1;
                let dt_ps = (e.t_ps - p.t_ps) as u64;
                let (a, b) = if p.half == e.half {
                    self.stats.same_half_pairs += 1;
                    (p, e)
                } else if p.half == Half::Left {
                    (p, e)
                } else {
                    (e, p)
                };
                Ok(Some(CoincidencePair { a, b, dt_ps }))
            }
            None => {
                self.pending.push_back(e);
                Ok(None)
            }
        }
    }
}

/// Pair a whole time-sorted event list.
pub fn find_coincidences(
    events: &[PhotonEvent],
    params: PairingParams,
) -> Result<(Vec<CoincidencePair>, PairingStats), PipelineError> {
    let mut f = CoincidenceFinder::new(params)?;
    let mut out = Vec::new();
    for e in events {
        if let Some(p) = f.push(*e)? {
            out.push(p);
        }
    }
    Ok((out, f.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(half: Half, t_ps: i64) -> PhotonEvent {
        let cx = if half == Half::Left { 10.0 } else { 200.0 };
        PhotonEvent {
            cx,
            cy: 5.0,
            t_ps,
            n_pixels: 1,
            sum_tot: 1,
            max_tot: 1,
            half,
        }
    }

    #[test]
    fn within_window() {
        let (p, _) = find_coincidences(&[ev(Half::Left, 0), ev(Half::Right, 3000)], PairingParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].dt_ps, 3000);
        assert_eq!(p[0].a.half, Half::Left);
    }

    #[test]
    fn outside_window() {
        let (p, _) = find_coincidences(&[ev(Half::Left, 0), ev(Half::Right, 7000)], PairingParams::default()).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn window_edge_inclusive() {
        let (p, _) = find_coincidences(&[ev(Half::Right, 0), ev(Half::Left, 6000)], PairingParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].a.t_ps, 6000);
    }

    #[test]
    fn each_event_used_once() {
        let evs = [ev(Half::Left, 0), ev(Half::Right, 1000), ev(Half::Right, 2000)];
        let (p, s) = find_coincidences(&evs, PairingParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].b.t_ps, 1000);
        assert_eq!(s.same_half_coincidences, 0);
    }

    #[test]
    fn earliest_pending_partner_wins() {
        let evs = [ev(Half::Left, 0), ev(Half::Left, 500), ev(Half::Right, 1000)];
        let (p, s) = find_coincidences(&evs, PairingParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].a.t_ps, 0);
        assert_eq!(s.same_half_coincidences, 1);
    }

    #[test]
    fn same_half_pairs_when_allowed() {
        let params = PairingParams {
            cross_halves_only: false,
            ..PairingParams::default()
        };
        let (p, s) = find_coincidences(&[ev(Half::Left, 0), ev(Half::Left, 10)], params).unwrap();
        assert_eq!(p.len(), 1);
        assert!(!p[0].is_cross_half());
        assert_eq!(s.same_half_pairs, 1);
    }

    #[test]
    fn unsorted_rejected() {
        assert!(find_coincidences(&[ev(Half::Left, 10), ev(Half::Right, 0)], PairingParams::default()).is_err());
    }
}
