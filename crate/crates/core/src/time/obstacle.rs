//! The level-set obstacle problem: implicit transport residual entrywise-min
//! the obstacle constraint,
//!
//!   R = min( (u(t,x) - u(t-Δt,x))/Δt + H(∇_Δx u(t,x)),  u(t,x) - Ψ(x) ),
//!
//! with either the Lax-Friedrichs transport Hamiltonian
//! `(Σ_i w_i centered_i)_+ - Σ_i second differences/(2Δx)` or the one-sided
//! second-order form `(Σ_i w_i (3u - 4u(x-Δx e_i) + u(x-2Δx e_i))/(2Δx))_+`.
//! Ties in the min take the first (transport) branch.

use crate::error::{HjError, Result};
use crate::exec::map_indices;
use crate::grid::GridGraph;
use crate::residual::LossParams;
use crate::time::SpaceTimeField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleScheme {
    LaxFriedrichs,
    OneSided2nd,
}

/// Obstacle ball of radius 1/2 at the origin: Ψ(x) = ||x|| - 1/2.
pub fn default_obstacle(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt() - 0.5
}

/// Initial data g(x) = max(||x + a0|| - 1, Ψ(x)).
pub fn initial_data(x: &[f64], a0: &[f64]) -> f64 {
    let shifted: f64 = x
        .iter()
        .zip(a0)
        .map(|(v, a)| (v + a) * (v + a))
        .sum::<f64>()
        .sqrt();
    (shifted - 1.0).max(default_obstacle(x))
}

/// Lax-Friedrichs transport value from point samples: `plus[i]`/`minus[i]`
/// are u(x ± h e_i). Also returns the partials (d/du_c, d/dplus, d/dminus).
pub fn lxf_transport_grad(
    u_c: f64,
    plus: &[f64],
    minus: &[f64],
    h: f64,
    weights: &[f64],
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let d = plus.len();
    let mut adv = 0.0;
    for i in 0..d {
        adv += weights[i] * (plus[i] - minus[i]) / (2.0 * h);
    }
    let advp = adv.max(0.0);
    let step = if adv > 0.0 { 1.0 } else { 0.0 };
    let mut visc = 0.0;
    for i in 0..d {
        visc += (plus[i] + minus[i] - 2.0 * u_c) / (2.0 * h);
    }
    let value = advp - visc;
    let du_c = 2.0 * d as f64 / (2.0 * h);
    let mut dplus = Vec::with_capacity(d);
    let mut dminus = Vec::with_capacity(d);
    for i in 0..d {
        dplus.push(step * weights[i] / (2.0 * h) - 1.0 / (2.0 * h));
        dminus.push(-step * weights[i] / (2.0 * h) - 1.0 / (2.0 * h));
    }
    (value, du_c, dplus, dminus)
}

/// One-sided second-order transport: `back1[i]` = u(x - h e_i),
/// `back2[i]` = u(x - 2h e_i). Not monotone; used only for refinement.
pub fn onesided_transport_grad(
    u_c: f64,
    back1: &[f64],
    back2: &[f64],
    h: f64,
    weights: &[f64],
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let d = back1.len();
    let mut sum = 0.0;
    for i in 0..d {
        sum += weights[i] * (3.0 * u_c - 4.0 * back1[i] + back2[i]) / (2.0 * h);
    }
    let value = sum.max(0.0);
    let step = if sum > 0.0 { 1.0 } else { 0.0 };
    let du_c = step * weights.iter().sum::<f64>() * 3.0 / (2.0 * h);
    let mut db1 = Vec::with_capacity(d);
    let mut db2 = Vec::with_capacity(d);
    for i in 0..d {
        db1.push(step * weights[i] * (-4.0) / (2.0 * h));
        db2.push(step * weights[i] / (2.0 * h));
    }
    (value, du_c, db1, db2)
}

/// First-order upwind fallback for nodes whose two-cell backward stencil
/// leaves the lattice: `(Σ_i w_i (u - u(x - h e_i))/h)_+`.
pub fn upwind_transport(u_c: f64, back1: &[f64], h: f64, weights: &[f64]) -> f64 {
    let sum: f64 = back1
        .iter()
        .zip(weights)
        .map(|(&b, &w)| w * (u_c - b) / h)
        .sum();
    sum.max(0.0)
}

/// Scaled obstacle residual over a space-time grid field. Interior rows are
/// `min(transport, u - Ψ)`, initial rows `(μ_i/M)^{1/q}(u^0 - g0)`; there are
/// no boundary rows (the formulation pins nothing on the box faces).
#[derive(Debug, Clone)]
pub struct ObstacleResidual {
    pub values: Vec<f64>,
    pub n_nodes: usize,
    pub n_time: usize,
    pub scale_interior: f64,
    pub scale_initial: f64,
}

impl ObstacleResidual {
    pub fn inf_norm(&self) -> f64 {
        crate::exec::inf_norm(&self.values)
    }
}

pub fn obstacle_residual(
    field: &SpaceTimeField,
    g: &GridGraph,
    drift: &[f64],
    psi: &[f64],
    g0: &[f64],
    scheme: ObstacleScheme,
    lp: &LossParams,
) -> Result<ObstacleResidual> {
    if field.n_nodes != g.n_nodes() {
        return Err(HjError::SizeMismatch("field/grid size".into()));
    }
    if psi.len() != g.n_nodes() || g0.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch("obstacle/initial data size".into()));
    }
    if drift.len() != g.dim() {
        return Err(HjError::SizeMismatch("drift dimension".into()));
    }
    let lat = g
        .lattice()
        .ok_or_else(|| HjError::InvalidGrid("obstacle residual needs a lattice grid".into()))?
        .clone();
    let m = g.interior().len();
    let nt = field.n_time;
    let inv_q = 1.0 / lp.q;
    let si = (1.0 / (m * nt) as f64).powf(inv_q);
    let s0 = (lp.mu_i / m as f64).powf(inv_q);
    let nn = field.n_nodes;
    let h = g.h();
    let d = g.dim();
    let dt = field.dt;
    let values = map_indices(nn * (nt + 1), |idx| {
        let n = idx / nn;
        let j = idx % nn;
        if !g.is_interior(j) {
            return 0.0;
        }
        if n == 0 {
            return s0 * (field.at(0, j) - g0[j]);
        }
        let slab = field.slab(n);
        let u_c = slab[j];
        let transport_h = match scheme {
            ObstacleScheme::LaxFriedrichs => {
                let mut plus = Vec::with_capacity(d);
                let mut minus = Vec::with_capacity(d);
                for a in 0..d {
                    // Interior nodes always carry their one-cell neighbors.
                    plus.push(slab[lat.shifted(j, a, 1).unwrap()]);
                    minus.push(slab[lat.shifted(j, a, -1).unwrap()]);
                }
                lxf_transport_grad(u_c, &plus, &minus, h, drift).0
            }
            ObstacleScheme::OneSided2nd => {
                let mut back1 = Vec::with_capacity(d);
                let mut back2 = Vec::with_capacity(d);
                let mut complete = true;
                for a in 0..d {
                    back1.push(slab[lat.shifted(j, a, -1).unwrap()]);
                    match lat.shifted(j, a, -2) {
                        Some(k) => back2.push(slab[k]),
                        None => {
                            complete = false;
                            back2.push(0.0);
                        }
                    }
                }
                if complete {
                    onesided_transport_grad(u_c, &back1, &back2, h, drift).0
                } else {
                    upwind_transport(u_c, &back1, h, drift)
                }
            }
        };
        let transport = (u_c - field.at(n - 1, j)) / dt + transport_h;
        si * transport.min(u_c - psi[j])
    });
    Ok(ObstacleResidual {
        values,
        n_nodes: nn,
        n_time: nt,
        scale_interior: si,
        scale_initial: s0,
    })
}

/// Largest violation of the constraint u >= Ψ over the whole field.
pub fn max_obstacle_violation(field: &SpaceTimeField, psi: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for n in 0..=field.n_time {
        for (u, p) in field.slab(n).iter().zip(psi) {
            worst = worst.max(p - u);
        }
    }
    worst
}
