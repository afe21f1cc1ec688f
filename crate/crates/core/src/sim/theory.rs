use super::SourceParams;
use crate::analysis::{report_from_widths, AxisWidths, CertificationReport, InjectedWidths, Quantity, ReportSource};

/// Closed-form widths of the double-Gaussian model (identical on both axes).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryWidths {
    /// Conditional position width, m; for a Gaussian this is also the
    /// minimum inferred uncertainty.
    pub conditional_nf_m: f64,
    pub conditional_ff_inv_m: f64,
    /// Width of `x1 - x2`, m.
    pub minus_nf_m: f64,
    /// Width of `k1 + k2`, 1/m.
    pub plus_ff_inv_m: f64,
}

/// `sqrt(Var(u1) - Cov(u1,u2)^2 / Var(u2))` for `u1,2 = (s +- d) / 2`.
fn conditional(sum: f64, diff: f64) -> f64 {
    sum * diff / sum.hypot(diff)
}

impl TheoryWidths {
    pub fn of(p: &SourceParams) -> Self {
        if p.separable {
            let single_x = 0.5 * p.sigma_sum_m.hypot(p.sigma_diff_m);
            let single_k = 0.5 * p.kappa_sum_inv_m.hypot(p.kappa_diff_inv_m);
            Self {
                conditional_nf_m: single_x,
                conditional_ff_inv_m: single_k,
                minus_nf_m: std::f64::consts::SQRT_2 * single_x,
                plus_ff_inv_m: std::f64::consts::SQRT_2 * single_k,
            }
        } else {
            Self {
                conditional_nf_m: conditional(p.sigma_sum_m, p.sigma_diff_m),
                conditional_ff_inv_m: conditional(p.kappa_sum_inv_m, p.kappa_diff_inv_m),
                minus_nf_m: p.sigma_diff_m,
                plus_ff_inv_m: p.kappa_sum_inv_m,
            }
        }
    }
}

/// Report the measurement chain should reproduce for this source.
pub fn theory_report(p: &SourceParams) -> CertificationReport {
    let t = TheoryWidths::of(p);
    let q = Quantity::exact;
    let axis = AxisWidths {
        cond_ff_inv_m: q(t.conditional_ff_inv_m),
        cond_nf_m: q(t.conditional_nf_m),
        delta_min_ff_inv_m: q(t.conditional_ff_inv_m),
        delta_min_nf_m: q(t.conditional_nf_m),
        delta_plus_ff_inv_m: q(t.plus_ff_inv_m),
        delta_minus_nf_m: q(t.minus_nf_m),
    };
    report_from_widths(&InjectedWidths { x: axis, y: axis }, ReportSource::Theory)
}
