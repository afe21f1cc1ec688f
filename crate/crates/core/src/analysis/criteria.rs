//! Entanglement witnesses from measured widths.

/// Threshold of the EPR-Reid product; separable states satisfy `product >= 1/2`.
pub const EPR_BOUND: f64 = 0.5;

/// Product of the minimum inferred position and momentum uncertainties.
/// Returns the product and whether it violates the separability bound.
pub fn epr_reid_product(delta_min_u_m: f64, delta_min_k_inv_m: f64) -> (f64, bool) {
    let p = delta_min_u_m * delta_min_k_inv_m;
    (p, p < EPR_BOUND)
}

/// Lower bound on the entanglement of formation, in ebits, from the width of
/// the position difference and of the momentum sum. Non-positive values
/// certify nothing.
pub fn eof_lower_bound(delta_minus_m: f64, delta_plus_inv_m: f64) -> f64 {
    -(std::f64::consts::E * delta_minus_m * delta_plus_inv_m).log2()
}

/// Schmidt-number lower bound `2^E`.
pub fn dimension_bound(e: f64) -> f64 {
    e.exp2()
}

/// Largest integer dimension the bound guarantees.
pub fn conservative_dimension(d: f64) -> u64 {
    if d.is_finite() && d >= 1.0 {
        d.floor() as u64
    } else {
        1
    }
}
