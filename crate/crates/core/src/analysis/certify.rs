use super::criteria::{conservative_dimension, dimension_bound, eof_lower_bound, epr_reid_product};
use super::montecarlo::{monte_carlo_errors, McOptions, McSummary};
use super::report::{AxisReport, CertificationReport, Provenance, Quantity, ReportSource};
use super::uncertainty::{
    basis_estimates, minus_widths, peak_reference, sum_widths, BasisEstimates, DeltaMin, ProjectionWidths,
};
use super::{AnalysisError, AnalysisParams};
use crate::event::Basis;
use crate::jpd::{Axis, Jpd};

/// The six measured widths along one axis, in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisWidths {
    pub cond_ff_inv_m: Quantity,
    pub cond_nf_m: Quantity,
    pub delta_min_ff_inv_m: Quantity,
    pub delta_min_nf_m: Quantity,
    pub delta_plus_ff_inv_m: Quantity,
    pub delta_minus_nf_m: Quantity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectedWidths {
    pub x: AxisWidths,
    pub y: AxisWidths,
}

/// Widths of the published results table with their five-sigma errors.
pub fn table1_widths() -> InjectedWidths {
    let q = Quantity::with_error;
    InjectedWidths {
        x: AxisWidths {
            cond_ff_inv_m: q(3.5e3, 0.5e3),
            cond_nf_m: q(1.0e-5, 0.5e-5),
            delta_min_ff_inv_m: q(3.217e3, 0.005e3),
            delta_min_nf_m: q(1.03e-5, 0.01e-5),
            delta_plus_ff_inv_m: q(3.82e3, 0.04e3),
            delta_minus_nf_m: q(1.17e-5, 0.01e-5),
        },
        y: AxisWidths {
            cond_ff_inv_m: q(3.1e3, 0.5e3),
            cond_nf_m: q(9.7e-6, 0.9e-6),
            delta_min_ff_inv_m: q(3.351e3, 0.004e3),
            delta_min_nf_m: q(1.09e-5, 0.01e-5),
            delta_plus_ff_inv_m: q(4.07e3, 0.04e3),
            delta_minus_nf_m: q(1.28e-5, 0.02e-5),
        },
    }
}

/// Relative error of a product (or ratio) of independent quantities.
fn rel_error(qs: &[Quantity]) -> Option<f64> {
    let mut s = 0.0;
    for q in qs {
        let e = q.error_5sigma?;
        s += (e / q.value).powi(2);
    }
    Some(s.sqrt())
}

fn axis_from_widths(w: &AxisWidths) -> AxisReport {
    let (product, violated) = epr_reid_product(w.delta_min_nf_m.value, w.delta_min_ff_inv_m.value);
    let e = eof_lower_bound(w.delta_minus_nf_m.value, w.delta_plus_ff_inv_m.value);
    let d = dimension_bound(e);
    let ln2 = std::f64::consts::LN_2;
    let e_err = rel_error(&[w.delta_minus_nf_m, w.delta_plus_ff_inv_m]).map(|r| r / ln2);
    AxisReport {
        cond_ff_inv_m: w.cond_ff_inv_m,
        cond_nf_m: w.cond_nf_m,
        delta_min_ff_inv_m: w.delta_min_ff_inv_m,
        delta_min_nf_m: w.delta_min_nf_m,
        delta_plus_ff_inv_m: w.delta_plus_ff_inv_m,
        delta_minus_nf_m: w.delta_minus_nf_m,
        epr_product: Quantity {
            value: product,
            error_5sigma: rel_error(&[w.delta_min_nf_m, w.delta_min_ff_inv_m]).map(|r| r * product),
        },
        epr_violated: violated,
        eof_lower_bound: Quantity {
            value: e,
            error_5sigma: e_err,
        },
        dimension_bound: Quantity {
            value: d,
            error_5sigma: e_err.map(|s| s * d * ln2),
        },
        dimension_conservative: conservative_dimension(d),
        columns_nf: 0,
        columns_ff: 0,
    }
}

/// Report computed directly from widths, bypassing all fits. Errors on the
/// derived quantities follow from first-order propagation.
pub fn report_from_widths(w: &InjectedWidths, source: ReportSource) -> CertificationReport {
    let x = axis_from_widths(&w.x);
    let y = axis_from_widths(&w.y);
    let total = x.dimension_bound.value + y.dimension_bound.value;
    let total_err = match (x.dimension_bound.error_5sigma, y.dimension_bound.error_5sigma) {
        (Some(a), Some(b)) => Some(a.hypot(b)),
        _ => None,
    };
    CertificationReport {
        source,
        total_dimension_conservative: x.dimension_conservative + y.dimension_conservative,
        x,
        y,
        total_dimension: Quantity {
            value: total,
            error_5sigma: total_err,
        },
        pairs_nf: 0,
        pairs_ff: 0,
        mc_trials: 0,
        mc_seed: 0,
        provenance: Provenance::default(),
        warnings: Vec::new(),
    }
}

struct Estimates {
    nf: BasisEstimates,
    ff: BasisEstimates,
    minus: Result<ProjectionWidths, AnalysisError>,
    plus: Result<ProjectionWidths, AnalysisError>,
}

#[derive(Clone, Copy)]
struct Refs {
    nf: [Option<u16>; 2],
    ff: [Option<u16>; 2],
}

fn estimate(nf: &Jpd, ff: &Jpd, refs: Refs, p: &AnalysisParams) -> Estimates {
    Estimates {
        nf: basis_estimates(nf, refs.nf, p),
        ff: basis_estimates(ff, refs.ff, p),
        minus: minus_widths(nf, p.binning_correction),
        plus: sum_widths(ff, p.binning_correction),
    }
}

fn dm(r: &Result<DeltaMin, AnalysisError>) -> Result<f64, AnalysisError> {
    r.as_ref().map(|d| d.value).map_err(|e| e.clone())
}

/// Every reported quantity by report key, in a fixed order.
fn named(e: &Estimates) -> Vec<(String, Result<f64, AnalysisError>)> {
    let mut out = Vec::new();
    let mut dims = Vec::new();
    for (i, a) in ["x", "y"].into_iter().enumerate() {
        let minus = e
            .minus
            .as_ref()
            .map(|w| if i == 0 { w.x } else { w.y })
            .map_err(|e| e.clone());
        let plus = e
            .plus
            .as_ref()
            .map(|w| if i == 0 { w.x } else { w.y })
            .map_err(|e| e.clone());
        let dmin_nf = dm(&e.nf.delta_min[i]);
        let dmin_ff = dm(&e.ff.delta_min[i]);
        let dep = |what: &str| AnalysisError::InvalidInput(format!("{a}.{what} unavailable"));
        let product = match (&dmin_nf, &dmin_ff) {
            (Ok(u), Ok(k)) => Ok(epr_reid_product(*u, *k).0),
            _ => Err(dep("delta_min")),
        };
        let eof = match (&minus, &plus) {
            (Ok(u), Ok(k)) => Ok(eof_lower_bound(*u, *k)),
            _ => Err(dep("projection widths")),
        };
        let d = eof
            .as_ref()
            .map(|e| dimension_bound(*e))
            .map_err(|_| dep("eof_lower_bound"));
        dims.push(d.clone());
        out.push((format!("{a}.cond_ff_inv_m"), e.ff.conditional[i].clone()));
        out.push((format!("{a}.cond_nf_m"), e.nf.conditional[i].clone()));
        out.push((format!("{a}.delta_min_ff_inv_m"), dmin_ff));
        out.push((format!("{a}.delta_min_nf_m"), dmin_nf));
        out.push((format!("{a}.delta_plus_ff_inv_m"), plus));
        out.push((format!("{a}.delta_minus_nf_m"), minus));
        out.push((format!("{a}.epr_product"), product));
        out.push((format!("{a}.eof_lower_bound"), eof));
        out.push((format!("{a}.dimension_bound"), d));
    }
    let total = match (&dims[0], &dims[1]) {
        (Ok(a), Ok(b)) => Ok(a + b),
        _ => Err(AnalysisError::InvalidInput("dimension bounds unavailable".into())),
    };
    out.push(("total_dimension".into(), total));
    out
}

fn with_context(what: &str, e: AnalysisError) -> AnalysisError {
    AnalysisError::Context {
        context: what.to_string(),
        source: Box::new(e),
    }
}

/// Full certification from one near-field and one far-field histogram.
pub fn certify(
    nf: &Jpd,
    ff: &Jpd,
    params: &AnalysisParams,
    provenance: Provenance,
) -> Result<CertificationReport, AnalysisError> {
    if nf.basis != Basis::NearField {
        return Err(AnalysisError::InvalidInput("first histogram must be near-field".into()));
    }
    if ff.basis != Basis::FarField {
        return Err(AnalysisError::InvalidInput("second histogram must be far-field".into()));
    }
    let refs = Refs {
        nf: [peak_reference(nf, Axis::X), peak_reference(nf, Axis::Y)],
        ff: [peak_reference(ff, Axis::X), peak_reference(ff, Axis::Y)],
    };
    let est = estimate(nf, ff, refs, params);
    let values = named(&est);
    let mut get = std::collections::HashMap::new();
    for (name, v) in &values {
        match v {
            Ok(v) => {
                get.insert(name.clone(), *v);
            }
            Err(e) => return Err(with_context(name, e.clone())),
        }
    }

    let mc: Option<McSummary> = if params.n_trials > 0 {
        let opts = McOptions {
            n_trials: params.n_trials,
            seed: params.mc_seed,
            resample: params.resample,
            max_failure_fraction: 0.2,
        };
        let data = (nf.clone(), ff.clone());
        Some(
            monte_carlo_errors(&data, |d| named(&estimate(&d.0, &d.1, refs, params)), &opts)
                .map_err(|e| with_context("Monte-Carlo errors", e))?,
        )
    } else {
        None
    };
    let q = |name: &str| Quantity {
        value: get[name],
        error_5sigma: mc.as_ref().and_then(|m| m.error_5sigma(name)),
    };

    let mut warnings = Vec::new();
    let axis = |i: usize, a: &str, warnings: &mut Vec<String>| -> AxisReport {
        let dnf = est.nf.delta_min[i].as_ref().unwrap();
        let dff = est.ff.delta_min[i].as_ref().unwrap();
        for (basis, d) in [("nf", dnf), ("ff", dff)] {
            if d.value_px < 1.0 {
                warnings.push(format!(
                    "{a}: {basis} minimum inferred uncertainty is sub-pixel ({:.3} px)",
                    d.value_px
                ));
            }
            if d.correction_skipped {
                warnings.push(format!("{a}: {basis} pixel-quantization correction skipped"));
            }
            let unconverged = d.columns.iter().filter(|c| !c.converged).count();
            if unconverged > 0 {
                warnings.push(format!(
                    "{a}: {basis} {unconverged} of {} conditional fits fell back to moments",
                    d.columns.len()
                ));
            }
            if d.no_peaks {
                warnings.push(format!(
                    "{a}: {basis} no reference column shows a significant peak; all {} columns were fitted",
                    d.columns.len()
                ));
            }
            if d.columns_rejected > 0 {
                warnings.push(format!(
                    "{a}: {basis} {} reference columns without a significant peak were left out",
                    d.columns_rejected
                ));
            }
        }
        let d = q(&format!("{a}.dimension_bound"));
        let product = q(&format!("{a}.epr_product"));
        AxisReport {
            cond_ff_inv_m: q(&format!("{a}.cond_ff_inv_m")),
            cond_nf_m: q(&format!("{a}.cond_nf_m")),
            delta_min_ff_inv_m: q(&format!("{a}.delta_min_ff_inv_m")),
            delta_min_nf_m: q(&format!("{a}.delta_min_nf_m")),
            delta_plus_ff_inv_m: q(&format!("{a}.delta_plus_ff_inv_m")),
            delta_minus_nf_m: q(&format!("{a}.delta_minus_nf_m")),
            epr_violated: epr_reid_product(dnf.value, dff.value).1,
            epr_product: product,
            eof_lower_bound: q(&format!("{a}.eof_lower_bound")),
            dimension_conservative: conservative_dimension(d.value),
            dimension_bound: d,
            columns_nf: dnf.columns.len() as u64,
            columns_ff: dff.columns.len() as u64,
        }
    };
    let x = axis(0, "x", &mut warnings);
    let y = axis(1, "y", &mut warnings);
    for (name, fit) in [
        ("nf minus projection", est.minus.as_ref().unwrap().fit),
        ("ff sum projection", est.plus.as_ref().unwrap().fit),
    ] {
        if !fit.converged {
            warnings.push(format!("{name}: Gaussian fit fell back to moments"));
        }
        if fit.subpixel() {
            warnings.push(format!(
                "{name}: sub-pixel width ({:.3} x {:.3} px)",
                fit.width_u, fit.width_v
            ));
        }
    }
    Ok(CertificationReport {
        source: ReportSource::Measured,
        total_dimension_conservative: x.dimension_conservative + y.dimension_conservative,
        x,
        y,
        total_dimension: q("total_dimension"),
        pairs_nf: nf.total_pairs(),
        pairs_ff: ff.total_pairs(),
        mc_trials: mc.as_ref().map(|m| m.trials as u64).unwrap_or(0),
        mc_seed: if mc.is_some() { params.mc_seed } else { 0 },
        provenance,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_arithmetic() {
        let r = report_from_widths(&table1_widths(), ReportSource::Injected);
        assert!((r.x.epr_product.value - 0.0331).abs() < 1e-4);
        assert!((r.y.epr_product.value - 0.0365).abs() < 1e-4);
        assert!((r.x.eof_lower_bound.value - 3.04).abs() < 5e-3);
        assert!((r.y.eof_lower_bound.value - 2.82).abs() < 5e-3);
        assert!(r.x.epr_violated && r.y.epr_violated);
        assert_eq!(r.total_dimension_conservative, 8 + 7);
        assert!(r.x.eof_lower_bound.error_5sigma.unwrap() > 0.0);
    }

    #[test]
    fn kv_round_trip() {
        let mut r = report_from_widths(&table1_widths(), ReportSource::Injected);
        r.provenance.inputs = vec!["a.csv".into(), "b.csv".into()];
        r.provenance.config_hash = "abc".into();
        r.warnings = vec!["something odd".into()];
        let (back, unknown) = CertificationReport::from_kv(&r.to_kv()).unwrap();
        assert!(unknown.is_empty());
        assert_eq!(back, r);
    }

    #[test]
    fn unknown_key_is_a_warning() {
        let r = report_from_widths(&table1_widths(), ReportSource::Injected);
        let text = format!("{}future.key = 1\n", r.to_kv());
        let (back, unknown) = CertificationReport::from_kv(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(unknown.len(), 1);
    }
}
