//! Fits, uncertainty estimators, entanglement criteria and the
//! certification report.

mod certify;
pub mod criteria;
pub mod fit;
pub mod montecarlo;
pub mod report;
pub mod uncertainty;

use thiserror::Error;

use crate::event::OpticsConfig;

pub use certify::{certify, report_from_widths, table1_widths, AxisWidths, InjectedWidths};
pub use criteria::{conservative_dimension, dimension_bound, eof_lower_bound, epr_reid_product, EPR_BOUND};
pub use fit::{fit_gaussian1d, fit_gaussian2d, GaussianFit, GaussianFit1d};
pub use montecarlo::{monte_carlo_errors, McOptions, McQuantity, McSummary, PoissonResample};
pub use report::{format_quantity, AxisReport, CertificationReport, Provenance, Quantity, ReportSource};
pub use uncertainty::{
    conditional_width, delta_min, minus_widths, peak_reference, peak_significance, sum_widths, ColumnFit, DeltaMin,
    ProjectionWidths,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("nothing to fit: the grid is empty")]
    EmptyGrid,
    #[error("no reference column has at least {min_counts} coincidences")]
    NoColumns { min_counts: u64 },
    #[error("reference column {0} has no coincidences")]
    EmptyColumn(u16),
    #[error("estimator `{name}` failed in {failures} of {trials} Monte-Carlo trials")]
    Estimator {
        name: String,
        failures: usize,
        trials: usize,
    },
    #[error("{0}")]
    InvalidInput(String),
    #[error("report line {line}: {message}")]
    Report { line: u64, message: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        source: Box<AnalysisError>,
    },
}

/// Pixel distance to physical units: metres in the near field, inverse
/// metres (transverse wavevector) in the far field.
pub fn pixel_to_physical(optics: &OpticsConfig, pixels: f64) -> f64 {
    pixels * optics.pixel_scale()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisParams {
    /// Smallest number of coincidences for a reference column to enter the
    /// minimum inferred uncertainty.
    pub min_counts: u64,
    /// Smallest peak significance (largest cell above the median of the
    /// cells 3 to 12 pixels away, over its Poisson noise) for a reference
    /// column to enter the minimum inferred uncertainty. Columns holding only
    /// accidentals or a broad uncorrelated distribution fall below it.
    pub min_peak_significance: f64,
    /// Monte-Carlo trials; 0 skips error estimation.
    pub n_trials: usize,
    pub mc_seed: u64,
    pub resample: bool,
    /// Remove the variance added by rounding centroids to pixels.
    pub binning_correction: bool,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            min_counts: 100,
            min_peak_significance: 5.0,
            n_trials: 100,
            mc_seed: 0,
            resample: true,
            binning_correction: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Basis;

    #[test]
    fn unit_conversion() {
        let nf = OpticsConfig::new(Basis::NearField);
        assert_eq!(pixel_to_physical(&nf, 0.0), 0.0);
        assert!((pixel_to_physical(&nf, 1.0) - 5.5e-6).abs() < 1e-18);
        let ff = OpticsConfig::new(Basis::FarField);
        let k = pixel_to_physical(&ff, 1.0);
        assert!((k - 2.0 * std::f64::consts::PI * 55e-6 / (810e-9 * 0.075)).abs() < 1e-9);
        assert!((k / 5.69e3 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn far_field_scale_ratio_law() {
        let ff = OpticsConfig::new(Basis::FarField);
        let scaled = OpticsConfig {
            pixel_pitch_m: ff.pixel_pitch_m * 3.0,
            f_eff_m: ff.f_eff_m * 3.0,
            ..ff
        };
        assert!((pixel_to_physical(&ff, 2.0) / pixel_to_physical(&scaled, 2.0) - 1.0).abs() < 1e-12);
    }
}
