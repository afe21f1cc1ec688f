use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use eprcam_core::analysis::{delta_min, fit_gaussian2d};
use eprcam_core::pipeline::{find_coincidences, process_hits, Pipeline};
use eprcam_core::sim::{DetectorSim, SimConfig};
use eprcam_core::{
    decode_hits, encode_hits, AnalysisParams, Axis, Basis, CoincidencePair, Jpd, PairingParams, PipelineConfig,
    PixelHit, Projection, ProjectionKind, TimewalkMode,
};

fn reference(basis: Basis, duration_s: f64) -> SimConfig {
    SimConfig {
        duration_s,
        ..SimConfig::reference(basis, 7)
    }
}

fn hits(cfg: SimConfig) -> Vec<PixelHit> {
    DetectorSim::new(cfg).unwrap().map(|h| h.hit).collect()
}

fn fixed(cfg: &SimConfig) -> PipelineConfig {
    PipelineConfig {
        timewalk: TimewalkMode::Fixed(cfg.detector.timewalk_coeff_ps),
        ..PipelineConfig::default()
    }
}

fn simulate(c: &mut Criterion) {
    let cfg = reference(Basis::FarField, 0.05);
    let n = hits(cfg).len() as u64;
    let mut g = c.benchmark_group("simulate");
    g.throughput(Throughput::Elements(n));
    g.sample_size(10);
    g.bench_function("ff_50ms", |b| b.iter(|| DetectorSim::new(cfg).unwrap().count()));
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let cfg = reference(Basis::NearField, 0.05);
    let h = hits(cfg);
    let pcfg = fixed(&cfg);
    let mut p = Pipeline::new(pcfg).unwrap().record_events(true);
    for x in &h {
        p.push_hit(*x).unwrap();
    }
    p.finish().unwrap();
    let events = p.take_events();

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.throughput(Throughput::Elements(h.len() as u64));
    g.bench_function("cluster_pair_nf_50ms", |b| {
        b.iter(|| process_hits(h.iter().copied(), pcfg).unwrap().0.len())
    });
    g.throughput(Throughput::Elements(events.len() as u64));
    g.bench_function("pair_events", |b| {
        b.iter(|| {
            find_coincidences(black_box(&events), PairingParams::default())
                .unwrap()
                .0
                .len()
        })
    });
    g.finish();
}

fn codec(c: &mut Criterion) {
    let h = hits(reference(Basis::FarField, 0.02));
    let bytes = encode_hits(&h, 20_000_000_000).unwrap();
    let mut g = c.benchmark_group("phl1");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("encode", |b| {
        b.iter(|| encode_hits(black_box(&h), 20_000_000_000).unwrap())
    });
    g.bench_function("decode", |b| b.iter(|| decode_hits(black_box(&bytes)).unwrap()));
    g.finish();
}

fn pairs(basis: Basis, duration_s: f64) -> (SimConfig, Vec<CoincidencePair>) {
    let cfg = reference(basis, duration_s);
    let (p, _) = process_hits(hits(cfg), fixed(&cfg)).unwrap();
    (cfg, p)
}

fn histogram(c: &mut Criterion) {
    let (cfg, p) = pairs(Basis::FarField, 1.0);
    let j = Jpd::accumulate(cfg.optics, cfg.duration_s, &p);
    let mut g = c.benchmark_group("jpd");
    g.throughput(Throughput::Elements(p.len() as u64));
    g.bench_function("accumulate", |b| {
        b.iter(|| Jpd::accumulate(cfg.optics, cfg.duration_s, black_box(&p)))
    });
    g.throughput(Throughput::Elements(j.occupied_bins() as u64));
    g.bench_function("merge", |b| b.iter(|| j.merge(black_box(&j)).unwrap()));
    g.bench_function("minus_projection", |b| b.iter(|| j.minus_projection()));
    g.bench_function("axis_matrix", |b| b.iter(|| j.axis_matrix(Axis::X)));
    g.finish();
}

fn fits(c: &mut Criterion) {
    let n = 41;
    let mut grid = Projection::zeros(ProjectionKind::Minus, n, n, -20, -20);
    for iy in 0..n {
        for ix in 0..n {
            let (u, v) = (ix as f64 - 20.3, iy as f64 - 19.6);
            grid.data[iy * n + ix] = 500.0 * (-(u * u) / 8.0 - v * v / 12.0).exp() + 3.0;
        }
    }
    let (cfg, p) = pairs(Basis::NearField, 1.0);
    let j = Jpd::accumulate(cfg.optics, cfg.duration_s, &p);
    let params = AnalysisParams::default();
    let mut g = c.benchmark_group("analysis");
    g.bench_function("fit_gaussian2d", |b| {
        b.iter(|| fit_gaussian2d(black_box(&grid)).unwrap())
    });
    g.sample_size(20);
    g.bench_function("delta_min_nf", |b| {
        b.iter(|| delta_min(black_box(&j), Axis::X, &params).unwrap())
    });
    g.finish();
}

criterion_group!(benches, simulate, pipeline, codec, histogram, fits);
criterion_main!(benches);
