use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SimError, SourceParams};
use crate::event::Basis;
use crate::seed;

/// Transverse coordinates of both photons of a pair, `[photon][axis]`, in
/// meters (near field) or inverse meters (far field).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample(pub [[f64; 2]; 2]);

impl PairSample {
    pub fn photon(&self, i: usize) -> [f64; 2] {
        self.0[i]
    }
}

/// Momentum-space widths of a pure double-Gaussian biphoton.
///
/// For `psi ~ exp(-s^2/(4 sigma_s^2) - d^2/(4 sigma_d^2))` with `s = x1 + x2`
/// and `d = x1 - x2`, the Fourier conjugates of `s` and `d` are
/// `(k1 + k2)/2` and `(k1 - k2)/2`, which gives `std(k1 + k2) = 1/sigma_s`
/// and `std(k1 - k2) = 1/sigma_d`.
pub fn pure_state_widths(sigma_sum_m: f64, sigma_diff_m: f64) -> (f64, f64) {
    (1.0 / sigma_sum_m, 1.0 / sigma_diff_m)
}

fn widths(params: &SourceParams, basis: Basis) -> (f64, f64) {
    match basis {
        Basis::NearField => (params.sigma_sum_m, params.sigma_diff_m),
        Basis::FarField => (params.kappa_sum_inv_m, params.kappa_diff_inv_m),
    }
}

pub(crate) fn draw_pair<R: Rng + ?Sized>(params: &SourceParams, basis: Basis, rng: &mut R) -> PairSample {
    let (w_sum, w_diff) = widths(params, basis);
    let mut out = [[0.0; 2]; 2];
    if params.separable {
        let single = 0.5 * w_sum.hypot(w_diff);
        for photon in out.iter_mut() {
            for v in photon.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = single * z;
            }
        }
    } else {
        for axis in 0..2 {
            let zs: f64 = StandardNormal.sample(rng);
            let zd: f64 = StandardNormal.sample(rng);
            let s = w_sum * zs;
            let d = w_diff * zd;
            out[0][axis] = 0.5 * (s + d);
            out[1][axis] = 0.5 * (s - d);
        }
    }
    PairSample(out)
}

/// Draw `n` pairs in the given basis.
pub fn sample_pairs(params: &SourceParams, basis: Basis, n: usize, seed: u64) -> Result<Vec<PairSample>, SimError> {
    params.validate()?;
    let mut rng = seed::rng(seed, &[seed::label("sample_pairs")]);
    Ok((0..n).map(|_| draw_pair(params, basis, &mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn empty_request() {
        let p = SourceParams::pure(1e-3, 1e-5, 1.0);
        assert!(sample_pairs(&p, Basis::NearField, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn deterministic_for_seed() {
        let p = SourceParams::pure(1e-3, 1e-5, 1.0);
        assert_eq!(
            sample_pairs(&p, Basis::FarField, 100, 9).unwrap(),
            sample_pairs(&p, Basis::FarField, 100, 9).unwrap()
        );
        assert_ne!(
            sample_pairs(&p, Basis::FarField, 100, 9).unwrap(),
            sample_pairs(&p, Basis::FarField, 100, 10).unwrap()
        );
    }

    #[test]
    fn sum_and_difference_moments() {
        let p = SourceParams::pure(1e-3, 1e-5, 1.0);
        let pairs = sample_pairs(&p, Basis::NearField, 100_000, 3).unwrap();
        for axis in 0..2 {
            let s: Vec<f64> = pairs.iter().map(|q| q.0[0][axis] + q.0[1][axis]).collect();
            let d: Vec<f64> = pairs.iter().map(|q| q.0[0][axis] - q.0[1][axis]).collect();
            assert!((std(&s) / 1e-3 - 1.0).abs() < 0.01);
            assert!((std(&d) / 1e-5 - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn conditional_width_matches_covariance_algebra() {
        // Var(u1 | u2) = Var(u1) - Cov(u1,u2)^2 / Var(u2) for a jointly
        // Gaussian pair; estimate it from narrow bins of u2.
        let (ss, sd) = (1e-3, 1e-4);
        let p = SourceParams::pure(ss, sd, 1.0);
        let pairs = sample_pairs(&p, Basis::NearField, 200_000, 4).unwrap();
        let expected = ss * sd / (ss * ss + sd * sd).sqrt();
        let bin = 2e-5;
        let mut residual_var = 0.0;
        let mut n = 0usize;
        for c in -10..=10 {
            let centre = c as f64 * 2e-4;
            let u1: Vec<f64> = pairs
                .iter()
                .filter(|q| (q.0[1][0] - centre).abs() < bin / 2.0)
                .map(|q| q.0[0][0])
                .collect();
            if u1.len() < 50 {
                continue;
            }
            residual_var += std(&u1).powi(2) * u1.len() as f64;
            n += u1.len();
        }
        let measured = (residual_var / n as f64).sqrt();
        assert!((measured / expected - 1.0).abs() < 0.05, "{measured} vs {expected}");
    }

    #[test]
    fn separable_source_is_uncorrelated() {
        let mut p = SourceParams::pure(1e-3, 1e-5, 1.0);
        p.separable = true;
        let pairs = sample_pairs(&p, Basis::NearField, 50_000, 5).unwrap();
        let s: Vec<f64> = pairs.iter().map(|q| q.0[0][0] + q.0[1][0]).collect();
        let d: Vec<f64> = pairs.iter().map(|q| q.0[0][0] - q.0[1][0]).collect();
        assert!((std(&s) / std(&d) - 1.0).abs() < 0.03);
    }

    #[test]
    fn pure_widths_symmetry() {
        let (a, b) = pure_state_widths(2e-4, 3e-5);
        let (c, d) = pure_state_widths(3e-5, 2e-4);
        assert_eq!((a, b), (d, c));
        let (e, f) = pure_state_widths(1e-4, 1e-4);
        assert_eq!(e, f);
    }
}
