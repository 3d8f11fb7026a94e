//! Upwind (Rouy-Tourin) scheme for the eikonal equation, with optional
//! zeroth-order damping.

use super::Hamiltonian;
use crate::error::{HjError, Result};

/// Direct evaluation: `max_k (u_i - u_k)_+ / Δ_{ik} - f`.
pub fn eval_upwind_eikonal(
    u_i: f64,
    neighbors: &[f64],
    edge_lengths: &[f64],
    f: f64,
) -> Result<f64> {
    if neighbors.is_empty() {
        return Err(HjError::IncompleteStencil(
            "upwind eikonal needs at least one neighbor".into(),
        ));
    }
    debug_assert_eq!(neighbors.len(), edge_lengths.len());
    let m = neighbors
        .iter()
        .zip(edge_lengths)
        .map(|(&u_k, &len)| ((u_i - u_k) / len).max(0.0))
        .fold(0.0f64, f64::max);
    Ok(m - f)
}

/// Slot form of the upwind eikonal operator with λ-damping:
/// `max_k (p_k)_+ - f + λ u`. The positive part keeps only neighbors below
/// the node value, which mimics the causality of the continuous solution.
#[derive(Debug, Clone)]
pub struct UpwindEikonal {
    pub source: f64,
    pub lambda: f64,
}

impl Hamiltonian for UpwindEikonal {
    fn name(&self) -> &str {
        "upwind-eikonal"
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn eval(&self, _x: &[f64], u: f64, p: &[f64]) -> f64 {
        let m = p.iter().fold(0.0f64, |acc, &v| acc.max(v));
        m.max(0.0) + self.lambda * u - self.source
    }

    fn grad(&self, _x: &[f64], _u: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        dp.iter_mut().for_each(|d| *d = 0.0);
        // Subgradient convention: the first maximizing slot carries the
        // derivative, and (z)_+ contributes nothing at z <= 0.
        let mut best = 0.0f64;
        let mut arg = None;
        for (s, &v) in p.iter().enumerate() {
            if v > best {
                best = v;
                arg = Some(s);
            }
        }
        if let Some(s) = arg {
            dp[s] = 1.0;
        }
        self.lambda
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lambda.abs() + 1.0)
    }
}
