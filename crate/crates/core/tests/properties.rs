use proptest::prelude::*;

use eprcam_core::analysis::{fit_gaussian1d, fit_gaussian2d};
use eprcam_core::jpd::{BinKey, Projection, ProjectionKind};
use eprcam_core::pipeline::{find_coincidences, process_chunked, process_hits, timewalk_correct};
use eprcam_core::sim::{DetectorSim, SimConfig};
use eprcam_core::{
    Axis, Basis, CoincidencePair, Half, Jpd, OpticsConfig, PairingParams, PhotonEvent, PipelineConfig, TimewalkMode,
};

fn bins() -> impl Strategy<Value = Vec<(BinKey, u64)>> {
    prop::collection::vec(
        ((0u16..128, 0u16..256, 128u16..256, 0u16..256), 1u64..50)
            .prop_map(|((x1, y1, x2, y2), c)| (BinKey { x1, y1, x2, y2 }, c)),
        0..300,
    )
}

fn jpd(b: &[(BinKey, u64)]) -> Jpd {
    let mut j = Jpd::new(OpticsConfig::new(Basis::FarField), 2.0);
    for (k, c) in b {
        j.add_count(*k, *c);
    }
    j
}

fn events() -> impl Strategy<Value = Vec<PhotonEvent>> {
    prop::collection::vec((0i64..9000, any::<bool>()), 0..400).prop_map(|gaps| {
        let mut t = 0;
        gaps.into_iter()
            .enumerate()
            .map(|(i, (g, left))| {
                t += g;
                let half = if left { Half::Left } else { Half::Right };
                PhotonEvent {
                    cx: if left { 20.0 } else { 230.0 },
                    cy: 7.0,
                    t_ps: t,
                    n_pixels: 1,
                    sum_tot: i as u32,
                    max_tot: 1,
                    half,
                }
            })
            .collect()
    })
}

fn ids(pairs: &[CoincidencePair]) -> Vec<(u32, u32)> {
    let mut v: Vec<_> = pairs.iter().map(|p| (p.a.sum_tot, p.b.sum_tot)).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_is_commutative_and_associative(a in bins(), b in bins(), c in bins()) {
        let (a, b, c) = (jpd(&a), jpd(&b), jpd(&c));
        prop_assert_eq!(a.merge(&b).unwrap().sorted_bins(), b.merge(&a).unwrap().sorted_bins());
        let left = a.merge(&b).unwrap().merge(&c).unwrap();
        let right = a.merge(&b.merge(&c).unwrap()).unwrap();
        prop_assert_eq!(left.sorted_bins(), right.sorted_bins());
        prop_assert_eq!(left.total_pairs(), a.total_pairs() + b.total_pairs() + c.total_pairs());
    }

    #[test]
    fn projections_conserve_counts(b in bins()) {
        let j = jpd(&b);
        let total = j.total_pairs() as f64;
        prop_assert_eq!(j.marginal(Half::Left).total(), total);
        prop_assert_eq!(j.marginal(Half::Right).total(), total);
        prop_assert_eq!(j.minus_projection().total(), total);
        prop_assert_eq!(j.sum_projection().total(), total);
        prop_assert_eq!(j.axis_matrix(Axis::X).iter().sum::<f64>(), total);
        prop_assert_eq!(j.axis_matrix(Axis::Y).iter().sum::<f64>(), total);
    }

    #[test]
    fn conditional_is_normalized(b in bins()) {
        prop_assume!(!b.is_empty());
        let j = jpd(&b);
        let k = b[0].0;
        let p = j.conditional((k.x1, k.y1)).unwrap();
        prop_assert!((p.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn greedy_pairs_are_a_maximal_matching(ev in events()) {
        let w = 6000;
        let (pairs, stats) = find_coincidences(&ev, PairingParams::default()).unwrap();
        let got = ids(&pairs);
        let mut used = std::collections::HashSet::new();
        for (a, b) in &got {
            prop_assert!(used.insert(*a) && used.insert(*b));
            let (ta, tb) = (ev[*a as usize].t_ps, ev[*b as usize].t_ps);
            prop_assert!((ta - tb).abs() <= w);
            prop_assert_eq!(ev[*a as usize].half, Half::Left);
            prop_assert_eq!(ev[*b as usize].half, Half::Right);
        }
        for i in 0..ev.len() {
            for j in i + 1..ev.len() {
                if ev[j].t_ps - ev[i].t_ps > w {
                    break;
                }
                if ev[i].half != ev[j].half {
                    prop_assert!(used.contains(&(i as u32)) || used.contains(&(j as u32)));
                }
            }
        }
        prop_assert_eq!(stats.pairs as usize, got.len());
    }

    #[test]
    fn timewalk_zero_is_identity(t in -1_000_000i64..1_000_000, tot in 1u16..1000) {
        let e = PhotonEvent { cx: 1.0, cy: 2.0, t_ps: t, n_pixels: 1, sum_tot: tot as u32, max_tot: tot, half: Half::Left };
        prop_assert_eq!(timewalk_correct(&e, 0.0), e);
        let shifted = timewalk_correct(&e, 10_000.0);
        prop_assert_eq!(shifted.t_ps, t - (10_000.0 / tot as f64).round() as i64);
    }

    #[test]
    fn gaussian_fit_is_self_consistent(
        a in 10.0f64..1e4, u0 in -3.0f64..3.0, v0 in -3.0f64..3.0,
        wu in 0.8f64..6.0, wv in 0.8f64..6.0, b in 0.0f64..20.0,
    ) {
        let n = 81;
        let mut p = Projection::zeros(ProjectionKind::Minus, n, n, -40, -40);
        for iy in 0..n {
            for ix in 0..n {
                let (u, v) = ((ix as f64 - 40.0) - u0, (iy as f64 - 40.0) - v0);
                p.data[iy * n + ix] = a * (-(u * u) / (2.0 * wu * wu) - v * v / (2.0 * wv * wv)).exp() + b;
            }
        }
        let f = fit_gaussian2d(&p).unwrap();
        prop_assert!(f.converged);
        prop_assert!((f.width_u / wu - 1.0).abs() <= 1e-6, "{:?}", f);
        prop_assert!((f.width_v / wv - 1.0).abs() <= 1e-6, "{:?}", f);
        prop_assert!((f.amplitude / a - 1.0).abs() <= 1e-6, "{:?}", f);
    }

    #[test]
    fn gaussian_fit_1d_is_self_consistent(a in 10.0f64..1e4, c in 60.0f64..190.0, w in 0.5f64..8.0, b in 0.0f64..20.0) {
        let values: Vec<f64> = (0..256).map(|i| a * (-((i as f64 - c).powi(2)) / (2.0 * w * w)).exp() + b).collect();
        let f = fit_gaussian1d(&values, 0.0).unwrap();
        prop_assert!(f.converged);
        prop_assert!((f.width / w - 1.0).abs() <= 1e-6, "{:?}", f);
        prop_assert!((f.center - c).abs() <= 1e-6 * w, "{:?}", f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn chunked_processing_matches_single_pass(seed in any::<u64>(), chunk_ms in 5u64..80) {
        let cfg = SimConfig { duration_s: 0.25, ..SimConfig::reference(Basis::NearField, seed) };
        let hits: Vec<_> = DetectorSim::new(cfg).unwrap().map(|h| h.hit).collect();
        let pcfg = PipelineConfig { timewalk: TimewalkMode::Fixed(cfg.detector.timewalk_coeff_ps), ..PipelineConfig::default() };
        let (single, _) = process_hits(hits.iter().copied(), pcfg).unwrap();
        let chunked = process_chunked(&hits, pcfg, chunk_ms * 1_000_000_000, 1_000_000).unwrap();
        let key = |p: &CoincidencePair| (p.a.t_ps, p.b.t_ps, p.a.cx.to_bits(), p.a.cy.to_bits(), p.b.cx.to_bits());
        let mut a: Vec<_> = single.iter().map(key).collect();
        let mut b: Vec<_> = chunked.iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert!(!a.is_empty());
        prop_assert_eq!(a, b);
    }
}
