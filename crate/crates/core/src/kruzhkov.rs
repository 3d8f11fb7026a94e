//! Kruzhkov change of variables linking damped and undamped eikonal-type
//! equations, plus its error-amplification factor.
//!
//! `forward` maps u to v = (1 - exp(-λu))/λ; `inverse` maps back through
//! u = -ln(1 - λv)/λ. Both orientations are used: the damped 1D experiment
//! solves |u'| + λu = 1 directly and recovers the eikonal solution by
//! applying `inverse` to the computed field.

use crate::error::{HjError, Result};

/// v = (1 - exp(-λu)) / λ, strictly increasing and bounded above by 1/λ.
/// Written through expm1 so small λu does not cancel.
pub fn forward(u: f64, lambda: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    -(-lambda * u).exp_m1() / lambda
}

/// Exact inverse of [`forward`]; requires λv < 1 (values crowd toward the
/// asymptote 1/λ).
pub fn inverse(v: f64, lambda: f64) -> Result<f64> {
    let arg = 1.0 - lambda * v;
    if arg <= 0.0 {
        return Err(HjError::KruzhkovDomain(arg));
    }
    Ok(-arg.ln() / lambda)
}

/// Floor applied to 1 - λv by the diagnostic-mode inverse.
pub const DEFAULT_CLAMP_FLOOR: f64 = 1e-30;

/// Diagnostic-mode inverse: clamps 1 - λv to `floor` instead of failing.
pub fn inverse_clamped(v: f64, lambda: f64, floor: f64) -> f64 {
    let arg = (1.0 - lambda * v).max(floor);
    -arg.ln() / lambda
}

/// First-order error amplification of the inverse map: |u_h - u| is about
/// e^{λu} |v_h - v|, so errors are magnified where the solution is large.
pub fn amplification(u: f64, lambda: f64) -> f64 {
    (lambda * u).exp()
}

/// Pointwise field versions.
pub fn forward_field(u: &[f64], lambda: f64) -> Vec<f64> {
    u.iter().map(|&x| forward(x, lambda)).collect()
}

pub fn inverse_field(v: &[f64], lambda: f64) -> Result<Vec<f64>> {
    v.iter().map(|&x| inverse(x, lambda)).collect()
}
