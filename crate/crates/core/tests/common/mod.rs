#![allow(dead_code)]

use std::io::Write;

use eprcam_core::jpd::{pixel_bin, BinKey};
use eprcam_core::pipeline::{Pipeline, PipelineStats};
use eprcam_core::sim::{DetectorSim, EmittedPair, SimConfig, SimStats};
use eprcam_core::{Jpd, PipelineConfig};

pub struct Acquisition {
    pub jpd: Jpd,
    pub sim: SimStats,
    pub pipe: PipelineStats,
    pub emitted: Vec<EmittedPair>,
}

/// Streams the simulator straight into the pipeline and the histogram.
pub fn acquire(cfg: SimConfig, pipe_cfg: PipelineConfig, record_pairs: bool) -> Acquisition {
    let mut sim = DetectorSim::new(cfg).unwrap().record_pairs(record_pairs);
    let mut pipe = Pipeline::new(pipe_cfg).unwrap();
    let mut jpd = Jpd::new(cfg.optics, cfg.duration_s);
    for h in sim.by_ref() {
        pipe.push_hit(h.hit).unwrap();
        for p in pipe.drain_pairs() {
            jpd.add_pair(&p);
        }
    }
    pipe.finish().unwrap();
    for p in pipe.drain_pairs() {
        jpd.add_pair(&p);
    }
    Acquisition {
        jpd,
        sim: sim.stats(),
        pipe: pipe.stats().clone(),
        emitted: sim.take_emitted(),
    }
}

/// Histogram of the true photon positions, mapped onto the sensor the way
/// the simulator places them. Pairs with a photon off its half are skipped.
pub fn truth_jpd(cfg: &SimConfig, pairs: &[EmittedPair]) -> Jpd {
    let scale = cfg.optics.pixel_scale();
    let mut j = Jpd::new(cfg.optics, cfg.duration_s);
    for p in pairs {
        let mut px = [(0.0, 0.0); 2];
        let mut ok = true;
        for (i, slot) in px.iter_mut().enumerate() {
            let (cx, cy) = cfg.layout.center(i);
            let c = p.pair.photon(i);
            *slot = (cx + c[0] / scale, cy + c[1] / scale);
            ok &= cfg.layout.on_own_half(i, slot.0, slot.1);
        }
        if ok {
            let key = BinKey {
                x1: pixel_bin(px[0].0),
                y1: pixel_bin(px[0].1),
                x2: pixel_bin(px[1].0),
                y2: pixel_bin(px[1].1),
            };
            j.add_count(key, 1);
        }
    }
    j
}

/// Writes straight to the process stderr so the line shows up even when
/// the test harness captures output.
pub fn report_line(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "\n{line}");
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}
