//! Widths of conditional, difference and sum distributions.
//!
//! Histogram coordinates are rounded centroids, so each one carries a
//! uniform quantization error of variance 1/12 px². When
//! `binning_correction` is on, the fitted variances are corrected for it:
//! a sum or difference of two coordinates has 2/12 added; a conditional
//! width has 1/12 from the fitted coordinate plus `slope²/12` from the
//! spread of the reference coordinate inside its pixel, where `slope` is
//! the regression of conditional centres on the reference coordinate.

use super::fit::{fit_gaussian1d, fit_gaussian2d, GaussianFit};
use super::{pixel_to_physical, AnalysisError, AnalysisParams};
use crate::event::SENSOR_PIXELS;
use crate::jpd::{Axis, Jpd};

/// Fit of one conditional slice: the Right coordinate given the Left
/// coordinate `ref_px` along one axis, the other axis summed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnFit {
    pub ref_px: u16,
    /// Coincidences in the slice (its marginal weight).
    pub counts: f64,
    pub center_px: f64,
    pub width_px: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaMin {
    pub axis: Axis,
    pub columns: Vec<ColumnFit>,
    /// Columns with enough counts but no significant conditional peak.
    pub columns_rejected: usize,
    /// No column had a significant peak, so every column with enough
    /// counts was fitted.
    pub no_peaks: bool,
    /// Marginal-weighted quadratic mean of the column widths.
    pub raw_px: f64,
    /// Slope of fitted centres against the reference coordinate.
    pub slope: f64,
    /// Variance subtracted for pixel quantization (0 when disabled).
    pub correction_px2: f64,
    pub value_px: f64,
    /// `value_px` in metres (near field) or inverse metres (far field).
    pub value: f64,
    /// The quantization correction would have made the variance non-positive
    /// and was skipped.
    pub correction_skipped: bool,
}

fn column(m: &[f64], u1: usize) -> &[f64] {
    let n = SENSOR_PIXELS as usize;
    &m[u1 * n..(u1 + 1) * n]
}

fn corrected(w2: f64, q: f64) -> (f64, bool) {
    if q > 0.0 && w2 - q > 0.0 {
        ((w2 - q).sqrt(), false)
    } else {
        (w2.sqrt(), q > 0.0)
    }
}

/// Weighted least-squares slope of `y` on `x`; zero when undefined.
fn weighted_slope(points: &[(f64, f64, f64)]) -> f64 {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    if points.len() < 2 || sw <= 0.0 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Poisson significance of a peak cell holding `top` counts over a
/// background level `background`.
pub fn peak_significance(top: f64, background: f64) -> f64 {
    if top <= background || top <= 0.0 {
        return 0.0;
    }
    (top - background) / top.sqrt()
}

/// Cells the Right photon can occupy along `axis`: the right half in x,
/// the full height in y.
fn right_support(axis: Axis) -> std::ops::Range<usize> {
    let n = SENSOR_PIXELS as usize;
    match axis {
        Axis::X => n / 2..n,
        Axis::Y => 0..n,
    }
}

/// Background ring around a column peak, in cells from the peak.
const RING: std::ops::RangeInclusive<usize> = 3..=12;

/// Peak significance of one conditional column: its largest cell against
/// the median of the cells 3 to 12 pixels away. A broad distribution has
/// as much there as at its top and so scores low.
fn column_significance(support: &[f64]) -> f64 {
    let peak = (0..support.len()).fold(0, |b, i| if support[i] > support[b] { i } else { b });
    let ring: Vec<f64> = (0..support.len())
        .filter(|i| RING.contains(&i.abs_diff(peak)))
        .map(|i| support[i])
        .collect();
    peak_significance(support[peak], median(&ring))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Minimum inferred uncertainty along `axis`: the marginal-weighted
/// quadratic mean of conditional widths over reference columns holding at
/// least `min_counts` coincidences and a peak of at least
/// `min_peak_significance`.
pub fn delta_min(j: &Jpd, axis: Axis, params: &AnalysisParams) -> Result<DeltaMin, AnalysisError> {
    delta_min_from(&j.axis_matrix(axis), j, axis, params)
}

fn delta_min_from(m: &[f64], j: &Jpd, axis: Axis, params: &AnalysisParams) -> Result<DeltaMin, AnalysisError> {
    let min_counts = params.min_counts;
    let mut eligible = Vec::new();
    for u1 in 0..SENSOR_PIXELS as usize {
        let col = column(m, u1);
        let counts: f64 = col.iter().sum();
        if counts < min_counts as f64 || counts == 0.0 {
            continue;
        }
        let support = &col[right_support(axis)];
        let significant = column_significance(support) >= params.min_peak_significance;
        eligible.push((u1, counts, significant));
    }
    if eligible.is_empty() {
        return Err(AnalysisError::NoColumns { min_counts });
    }
    // Without any peak the conditionals are all background; fit them all.
    let no_peaks = !eligible.iter().any(|c| c.2);
    let mut columns = Vec::new();
    let mut columns_rejected = 0;
    for (u1, counts, significant) in eligible {
        if !(significant || no_peaks) {
            columns_rejected += 1;
            continue;
        }
        let f = fit_gaussian1d(column(m, u1), 0.0)?;
        columns.push(ColumnFit {
            ref_px: u1 as u16,
            counts,
            center_px: f.center,
            width_px: f.width,
            converged: f.converged,
        });
    }
    let total: f64 = columns.iter().map(|c| c.counts).sum();
    let raw2 = columns.iter().map(|c| c.counts * c.width_px * c.width_px).sum::<f64>() / total;
    let pts: Vec<(f64, f64, f64)> = columns
        .iter()
        .map(|c| (c.ref_px as f64, c.center_px, c.counts))
        .collect();
    let slope = weighted_slope(&pts);
    let q = if params.binning_correction {
        (1.0 + slope * slope) / 12.0
    } else {
        0.0
    };
    let (value_px, skipped) = corrected(raw2, q);
    Ok(DeltaMin {
        axis,
        columns,
        columns_rejected,
        no_peaks,
        raw_px: raw2.sqrt(),
        slope,
        correction_px2: q,
        value_px,
        value: pixel_to_physical(&j.optics, value_px),
        correction_skipped: skipped,
    })
}

/// Conditional width for the single reference column `ref_px`, corrected by
/// `correction_px2`. Returned in physical units.
pub fn conditional_width(j: &Jpd, axis: Axis, ref_px: u16, correction_px2: f64) -> Result<f64, AnalysisError> {
    let m = j.axis_matrix(axis);
    conditional_width_from(&m, j, ref_px, correction_px2)
}

fn conditional_width_from(m: &[f64], j: &Jpd, ref_px: u16, q: f64) -> Result<f64, AnalysisError> {
    let col = column(m, ref_px as usize);
    if !col.iter().any(|v| *v > 0.0) {
        return Err(AnalysisError::EmptyColumn(ref_px));
    }
    let f = fit_gaussian1d(col, 0.0)?;
    Ok(pixel_to_physical(&j.optics, corrected(f.width * f.width, q).0))
}

/// Fitted widths of a difference or sum projection, in physical units,
/// with the two-coordinate quantization correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionWidths {
    pub fit: GaussianFit,
    pub x: f64,
    pub y: f64,
}

fn projection_widths(j: &Jpd, fit: GaussianFit, binning_correction: bool) -> ProjectionWidths {
    let q = if binning_correction { 2.0 / 12.0 } else { 0.0 };
    let cx = corrected(fit.width_u.powi(2), q).0;
    let cy = corrected(fit.width_v.powi(2), q).0;
    ProjectionWidths {
        fit,
        x: pixel_to_physical(&j.optics, cx),
        y: pixel_to_physical(&j.optics, cy),
    }
}

/// Widths of `u1 - u2` per axis.
pub fn minus_widths(j: &Jpd, binning_correction: bool) -> Result<ProjectionWidths, AnalysisError> {
    let fit = fit_gaussian2d(&j.minus_projection())?;
    Ok(projection_widths(j, fit, binning_correction))
}

/// Widths of `u1 + u2` per axis.
pub fn sum_widths(j: &Jpd, binning_correction: bool) -> Result<ProjectionWidths, AnalysisError> {
    let fit = fit_gaussian2d(&j.sum_projection())?;
    Ok(projection_widths(j, fit, binning_correction))
}

/// Left-photon coordinate with the most coincidences along `axis`.
pub fn peak_reference(j: &Jpd, axis: Axis) -> Option<u16> {
    let m = j.axis_matrix(axis);
    let n = SENSOR_PIXELS as usize;
    let mut best: Option<(usize, f64)> = None;
    for u1 in 0..n {
        let c: f64 = column(&m, u1).iter().sum();
        if c > 0.0 && best.is_none_or(|b| c > b.1) {
            best = Some((u1, c));
        }
    }
    best.map(|b| b.0 as u16)
}

/// Per-basis estimates shared by the report and the Monte-Carlo trials.
pub(crate) struct BasisEstimates {
    pub delta_min: [Result<DeltaMin, AnalysisError>; 2],
    pub conditional: [Result<f64, AnalysisError>; 2],
}

pub(crate) fn basis_estimates(j: &Jpd, refs: [Option<u16>; 2], params: &AnalysisParams) -> BasisEstimates {
    let axes = [Axis::X, Axis::Y];
    let matrices = axes.map(|a| j.axis_matrix(a));
    let delta_min = [0, 1].map(|i| delta_min_from(&matrices[i], j, axes[i], params));
    let conditional = [0, 1].map(|i| {
        let q = delta_min[i].as_ref().map(|d| d.correction_px2).unwrap_or(0.0);
        match refs[i] {
            Some(r) => conditional_width_from(&matrices[i], j, r, q),
            None => Err(AnalysisError::EmptyGrid),
        }
    });
    BasisEstimates { delta_min, conditional }
}
