//! Certification report: flat key-value file and a Table-style text view.

use std::fmt::Write as _;

use super::AnalysisError;

/// A value with its Monte-Carlo error (five standard deviations), if any.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub error_5sigma: Option<f64>,
}

impl Quantity {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            error_5sigma: None,
        }
    }

    pub fn with_error(value: f64, error_5sigma: f64) -> Self {
        Self {
            value,
            error_5sigma: Some(error_5sigma),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportSource {
    Measured,
    Theory,
    Injected,
}

impl ReportSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportSource::Measured => "measured",
            ReportSource::Theory => "theory",
            ReportSource::Injected => "injected",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "measured" => Some(ReportSource::Measured),
            "theory" => Some(ReportSource::Theory),
            "injected" => Some(ReportSource::Injected),
            _ => None,
        }
    }
}

/// Widths and bounds along one transverse axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisReport {
    /// Conditional momentum width at the reference pixel, 1/m.
    pub cond_ff_inv_m: Quantity,
    /// Conditional position width at the reference pixel, m.
    pub cond_nf_m: Quantity,
    pub delta_min_ff_inv_m: Quantity,
    pub delta_min_nf_m: Quantity,
    /// Width of the momentum sum, 1/m.
    pub delta_plus_ff_inv_m: Quantity,
    /// Width of the position difference, m.
    pub delta_minus_nf_m: Quantity,
    pub epr_product: Quantity,
    pub epr_violated: bool,
    pub eof_lower_bound: Quantity,
    pub dimension_bound: Quantity,
    pub dimension_conservative: u64,
    /// Reference columns entering the minimum inferred uncertainties.
    pub columns_nf: u64,
    pub columns_ff: u64,
}

impl AxisReport {
    /// A positive bound certifies entanglement along this axis.
    pub fn entanglement_certified(&self) -> bool {
        self.eof_lower_bound.value > 0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub inputs: Vec<String>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub source: ReportSource,
    pub x: AxisReport,
    pub y: AxisReport,
    /// `d_x + d_y`.
    pub total_dimension: Quantity,
    /// Sum of the floored per-axis bounds.
    pub total_dimension_conservative: u64,
    pub pairs_nf: u64,
    pub pairs_ff: u64,
    pub mc_trials: u64,
    pub mc_seed: u64,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

pub const REPORT_FORMAT: &str = "eprcam-report-1";

fn push_q(out: &mut String, key: &str, q: &Quantity) {
    let _ = writeln!(out, "{key} = {:e}", q.value);
    if let Some(e) = q.error_5sigma {
        let _ = writeln!(out, "{key}.err5 = {e:e}");
    }
}

const AXIS_QUANTITIES: [&str; 9] = [
    "cond_ff_inv_m",
    "cond_nf_m",
    "delta_min_ff_inv_m",
    "delta_min_nf_m",
    "delta_plus_ff_inv_m",
    "delta_minus_nf_m",
    "epr_product",
    "eof_lower_bound",
    "dimension_bound",
];

fn axis_field<'a>(a: &'a mut AxisReport, name: &str) -> Option<&'a mut Quantity> {
    Some(match name {
        "cond_ff_inv_m" => &mut a.cond_ff_inv_m,
        "cond_nf_m" => &mut a.cond_nf_m,
        "delta_min_ff_inv_m" => &mut a.delta_min_ff_inv_m,
        "delta_min_nf_m" => &mut a.delta_min_nf_m,
        "delta_plus_ff_inv_m" => &mut a.delta_plus_ff_inv_m,
        "delta_minus_nf_m" => &mut a.delta_minus_nf_m,
        "epr_product" => &mut a.epr_product,
        "eof_lower_bound" => &mut a.eof_lower_bound,
        "dimension_bound" => &mut a.dimension_bound,
        _ => return None,
    })
}

fn empty_axis() -> AxisReport {
    let z = Quantity::exact(f64::NAN);
    AxisReport {
        cond_ff_inv_m: z,
        cond_nf_m: z,
        delta_min_ff_inv_m: z,
        delta_min_nf_m: z,
        delta_plus_ff_inv_m: z,
        delta_minus_nf_m: z,
        epr_product: z,
        epr_violated: false,
        eof_lower_bound: z,
        dimension_bound: z,
        dimension_conservative: 0,
        columns_nf: 0,
        columns_ff: 0,
    }
}

impl CertificationReport {
    /// Flat `key = value` serialization; floats round-trip exactly.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {REPORT_FORMAT}");
        let _ = writeln!(s, "source = {}", self.source.as_str());
        for (p, a) in [("x", &self.x), ("y", &self.y)] {
            let mut a = a.clone();
            for name in AXIS_QUANTITIES {
                let q = *axis_field(&mut a, name).unwrap();
                push_q(&mut s, &format!("{p}.{name}"), &q);
            }
            let _ = writeln!(s, "{p}.epr_violated = {}", a.epr_violated);
            let _ = writeln!(s, "{p}.entanglement_certified = {}", a.entanglement_certified());
            let _ = writeln!(s, "{p}.dimension_conservative = {}", a.dimension_conservative);
            let _ = writeln!(s, "{p}.columns_nf = {}", a.columns_nf);
            let _ = writeln!(s, "{p}.columns_ff = {}", a.columns_ff);
        }
        push_q(&mut s, "total_dimension", &self.total_dimension);
        let _ = writeln!(
            s,
            "total_dimension_conservative = {}",
            self.total_dimension_conservative
        );
        let _ = writeln!(s, "pairs_nf = {}", self.pairs_nf);
        let _ = writeln!(s, "pairs_ff = {}", self.pairs_ff);
        let _ = writeln!(s, "mc.trials = {}", self.mc_trials);
        let _ = writeln!(s, "mc.seed = {}", self.mc_seed);
        for (i, f) in self.provenance.inputs.iter().enumerate() {
            let _ = writeln!(s, "provenance.input.{i} = {f}");
        }
        let _ = writeln!(s, "provenance.config_hash = {}", self.provenance.config_hash);
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(s, "warning.{i} = {w}");
        }
        s
    }

    /// Parse [`CertificationReport::to_kv`] output. Unknown keys are returned
    /// as warnings rather than rejected.
    pub fn from_kv(text: &str) -> Result<(Self, Vec<String>), AnalysisError> {
        let mut r = CertificationReport {
            source: ReportSource::Measured,
            x: empty_axis(),
            y: empty_axis(),
            total_dimension: Quantity::exact(f64::NAN),
            total_dimension_conservative: 0,
            pairs_nf: 0,
            pairs_ff: 0,
            mc_trials: 0,
            mc_seed: 0,
            provenance: Provenance::default(),
            warnings: Vec::new(),
        };
        let mut unknown = Vec::new();
        let mut inputs: Vec<(usize, String)> = Vec::new();
        let mut warnings: Vec<(usize, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AnalysisError::Report { line: line_no, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let f = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{k}: {e}")));
            let u = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{k}: {e}")));
            let b = |v: &str| v.parse::<bool>().map_err(|e| err(format!("{k}: {e}")));
            let idx = |rest: &str| rest.parse::<usize>().map_err(|e| err(format!("{k}: {e}")));
            match k {
                "format" => {
                    if v != REPORT_FORMAT {
                        return Err(err(format!("unsupported report format `{v}`")));
                    }
                }
                "source" => r.source = ReportSource::parse(v).ok_or_else(|| err(format!("unknown source `{v}`")))?,
                "total_dimension" => r.total_dimension.value = f(v)?,
                "total_dimension.err5" => r.total_dimension.error_5sigma = Some(f(v)?),
                "total_dimension_conservative" => r.total_dimension_conservative = u(v)?,
                "pairs_nf" => r.pairs_nf = u(v)?,
                "pairs_ff" => r.pairs_ff = u(v)?,
                "mc.trials" => r.mc_trials = u(v)?,
                "mc.seed" => r.mc_seed = u(v)?,
                "provenance.config_hash" => r.provenance.config_hash = v.to_string(),
                _ => {
                    if let Some(rest) = k.strip_prefix("provenance.input.") {
                        inputs.push((idx(rest)?, v.to_string()));
                        continue;
                    }
                    if let Some(rest) = k.strip_prefix("warning.") {
                        warnings.push((idx(rest)?, v.to_string()));
                        continue;
                    }
                    let axis = match k.split_once('.') {
                        Some(("x", rest)) => Some((&mut r.x, rest)),
                        Some(("y", rest)) => Some((&mut r.y, rest)),
                        _ => None,
                    };
                    let Some((a, rest)) = axis else {
                        unknown.push(format!("line {line_no}: unknown key `{k}`"));
                        continue;
                    };
                    match rest {
                        "epr_violated" => a.epr_violated = b(v)?,
                        "entanglement_certified" => {
                            b(v)?;
                        }
                        "dimension_conservative" => a.dimension_conservative = u(v)?,
                        "columns_nf" => a.columns_nf = u(v)?,
                        "columns_ff" => a.columns_ff = u(v)?,
                        _ => {
                            let (name, is_err) = match rest.strip_suffix(".err5") {
                                Some(n) => (n, true),
                                None => (rest, false),
                            };
                            match axis_field(a, name) {
                                Some(q) if is_err => q.error_5sigma = Some(f(v)?),
                                Some(q) => q.value = f(v)?,
                                None => unknown.push(format!("line {line_no}: unknown key `{k}`")),
                            }
                        }
                    }
                }
            }
        }
        inputs.sort_by_key(|p| p.0);
        warnings.sort_by_key(|p| p.0);
        r.provenance.inputs = inputs.into_iter().map(|p| p.1).collect();
        r.warnings = warnings.into_iter().map(|p| p.1).collect();
        Ok((r, unknown))
    }

    /// Human-readable summary laid out like the paper-style results table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Entanglement certification report ({})", self.source.as_str());
        if self.pairs_nf + self.pairs_ff > 0 {
            let _ = writeln!(s, "Coincidences: NF {}  FF {}", self.pairs_nf, self.pairs_ff);
        }
        if self.mc_trials > 0 {
            let _ = writeln!(
                s,
                "Errors: 5 sigma over {} Monte-Carlo trials (seed {})",
                self.mc_trials, self.mc_seed
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28}{:>22}{:>22}", "Quantity", "X", "Y");
        let rows: [(&str, fn(&AxisReport) -> Quantity); 9] = [
            ("D[k2|k1] (1/m)", |a| a.cond_ff_inv_m),
            ("D[u2|u1] (m)", |a| a.cond_nf_m),
            ("Dmin[k] (1/m)", |a| a.delta_min_ff_inv_m),
            ("Dmin[u] (m)", |a| a.delta_min_nf_m),
            ("EPR product", |a| a.epr_product),
            ("D[k2+k1] (1/m)", |a| a.delta_plus_ff_inv_m),
            ("D[u2-u1] (m)", |a| a.delta_minus_nf_m),
            ("Lower bound E", |a| a.eof_lower_bound),
            ("Lower bound d", |a| a.dimension_bound),
        ];
        for (label, get) in rows {
            let _ = writeln!(
                s,
                "{:<28}{:>22}{:>22}",
                label,
                format_quantity(&get(&self.x)),
                format_quantity(&get(&self.y))
            );
        }
        let yes_no = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(
            s,
            "{:<28}{:>22}{:>22}",
            "EPR-Reid violated (< 0.5)",
            yes_no(self.x.epr_violated),
            yes_no(self.y.epr_violated)
        );
        let _ = writeln!(
            s,
            "{:<28}{:>22}{:>22}",
            "Entanglement (E > 0)",
            yes_no(self.x.entanglement_certified()),
            yes_no(self.y.entanglement_certified())
        );
        let _ = writeln!(
            s,
            "{:<28}{:>22}{:>22}",
            "Conservative d (floor)", self.x.dimension_conservative, self.y.dimension_conservative
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "Total dimension d_x + d_y = {} (floored: {} + {} = {})",
            format_quantity(&self.total_dimension),
            self.x.dimension_conservative,
            self.y.dimension_conservative,
            self.total_dimension_conservative
        );
        if !self.provenance.inputs.is_empty() {
            let _ = writeln!(s, "Inputs: {}", self.provenance.inputs.join(", "));
        }
        if !self.provenance.config_hash.is_empty() {
            let _ = writeln!(s, "Config hash: {}", self.provenance.config_hash);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// `value(error)` with the error as one significant digit on the value's
/// last digit, e.g. `0.0333(6)` or `3.217(5)e3`.
pub fn format_quantity(q: &Quantity) -> String {
    let v = q.value;
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = if v == 0.0 { 0 } else { v.abs().log10().floor() as i32 };
    let scientific = !(-3..4).contains(&exp);
    let scale = if scientific { 10f64.powi(exp) } else { 1.0 };
    let suffix = if scientific { format!("e{exp}") } else { String::new() };
    let m = v / scale;
    match q.error_5sigma {
        Some(e) if e > 0.0 && e.is_finite() => {
            let es = e / scale;
            let mut decimals = (-es.log10().floor()) as i32;
            let mut digit = (es * 10f64.powi(decimals)).round();
            if digit >= 10.0 {
                decimals -= 1;
                digit = (es * 10f64.powi(decimals)).round();
            }
            if decimals <= 0 {
                let unit = 10f64.powi(-decimals);
                format!("{:.0}({:.0}){}", (m / unit).round() * unit, digit * unit, suffix)
            } else {
                format!("{:.*}({}){}", decimals as usize, m, digit as u64, suffix)
            }
        }
        _ => {
            let decimals = if scientific { 3 } else { (3 - exp).max(0) as usize };
            format!("{m:.decimals$}{suffix}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantity_formatting() {
        assert_eq!(format_quantity(&Quantity::with_error(0.03331, 0.0006)), "0.0333(6)");
        assert_eq!(format_quantity(&Quantity::with_error(3217.2, 5.0)), "3217(5)");
        assert_eq!(format_quantity(&Quantity::with_error(1.03e-5, 0.01e-5)), "1.03(1)e-5");
        assert_eq!(format_quantity(&Quantity::with_error(8.23, 0.1)), "8.2(1)");
        assert_eq!(format_quantity(&Quantity::with_error(8.23, 0.096)), "8.2(1)");
        assert_eq!(format_quantity(&Quantity::with_error(3040.0, 40.0)), "3040(40)");
        assert_eq!(format_quantity(&Quantity::exact(3.0411)), "3.041");
        assert_eq!(format_quantity(&Quantity::exact(1.17e-5)), "1.170e-5");
    }
}
