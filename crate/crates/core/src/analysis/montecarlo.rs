//! Parametric bootstrap: redraw every histogram bin as Poisson(count) and
//! re-run the estimators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::AnalysisError;
use crate::jpd::Jpd;
use crate::seed;

/// Data that can be resampled bin by bin.
pub trait PoissonResample: Sized {
    fn resample<R: Rng>(&self, rng: &mut R) -> Self;
}

fn poisson<R: Rng>(mean: u64, rng: &mut R) -> u64 {
    Poisson::new(mean as f64).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

impl PoissonResample for Jpd {
    fn resample<R: Rng>(&self, rng: &mut R) -> Self {
        // Key order keeps the draw sequence independent of hash layout.
        let bins = self.sorted_bins();
        self.with_bins(bins.into_iter().map(|(k, c)| (k, poisson(c, rng))))
    }
}

impl<A: PoissonResample, B: PoissonResample> PoissonResample for (A, B) {
    fn resample<R: Rng>(&self, rng: &mut R) -> Self {
        let a = self.0.resample(rng);
        let b = self.1.resample(rng);
        (a, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub n_trials: usize,
    pub seed: u64,
    /// With resampling off every trial sees the original data (all σ = 0).
    pub resample: bool,
    /// Largest tolerated fraction of failed trials per quantity.
    pub max_failure_fraction: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_trials: 100,
            seed: 0,
            resample: true,
            max_failure_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McQuantity {
    pub name: String,
    pub sigma: f64,
    pub failures: usize,
}

impl McQuantity {
    pub fn error_5sigma(&self) -> f64 {
        5.0 * self.sigma
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McSummary {
    pub trials: usize,
    pub quantities: Vec<McQuantity>,
}

impl McSummary {
    pub fn get(&self, name: &str) -> Option<&McQuantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn error_5sigma(&self, name: &str) -> Option<f64> {
        self.get(name).map(McQuantity::error_5sigma)
    }
}

/// Sample standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Run `estimators` on `n_trials` resampled copies of `data`.
///
/// `estimators` returns named values; every call must return the same names
/// in the same order. A quantity failing in more than the tolerated fraction
/// of trials is an error naming it.
pub fn monte_carlo_errors<D, F>(data: &D, estimators: F, opts: &McOptions) -> Result<McSummary, AnalysisError>
where
    D: PoissonResample + Clone + Sync,
    F: Fn(&D) -> Vec<(String, Result<f64, AnalysisError>)> + Sync,
{
    if opts.n_trials < 2 {
        return Err(AnalysisError::InvalidInput(
            "Monte-Carlo needs at least 2 trials".into(),
        ));
    }
    let trials: Vec<Vec<(String, Result<f64, AnalysisError>)>> = (0..opts.n_trials)
        .into_par_iter()
        .map(|t| {
            if opts.resample {
                let mut rng: ChaCha8Rng = seed::rng(opts.seed, &[seed::label("montecarlo"), t as u64]);
                estimators(&data.resample(&mut rng))
            } else {
                estimators(data)
            }
        })
        .collect();
    let names: Vec<String> = trials[0].iter().map(|(n, _)| n.clone()).collect();
    let mut quantities = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let mut ok = Vec::with_capacity(trials.len());
        let mut failures = 0;
        for t in &trials {
            match t.get(i) {
                Some((n, Ok(v))) if n == name && v.is_finite() => ok.push(*v),
                _ => failures += 1,
            }
        }
        if failures as f64 > opts.max_failure_fraction * trials.len() as f64 || ok.len() < 2 {
            return Err(AnalysisError::Estimator {
                name: name.clone(),
                failures,
                trials: trials.len(),
            });
        }
        quantities.push(McQuantity {
            name: name.clone(),
            sigma: std_dev(&ok),
            failures,
        });
    }
    Ok(McSummary {
        trials: trials.len(),
        quantities,
    })
}
