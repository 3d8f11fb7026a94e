//! The scaled residual vector R(u), the loss L(u) = (1/q)·||R(u)||_q^q, and
//! its exact gradient for steady problems.
//!
//! Interior entries carry the scaling `1/M^(1/q)` and boundary entries
//! `(μ_b/N)^(1/q)`, baked into the vector itself so that Jacobian analysis
//! sees exactly the diagonally dominant matrix the theory refers to.

use crate::error::{HjError, Result};
use crate::exec::{inf_norm, map_indices, map_indices_seq, pairwise_sum};
use crate::grid::{graph_gradient_into, GridGraph};
use crate::hamiltonian::Hamiltonian;

/// Loss exponent and weights.
///
/// The loss is defined with |.|: L = (1/q) Σ |R_j|^q with the weight vector
/// w_j = |R_j|^{q-1} sign(R_j). For even integer q this coincides with the
/// plain power form and it extends to every q > 1.
#[derive(Debug, Clone, Copy)]
pub struct LossParams {
    pub q: f64,
    pub mu_b: f64,
    /// Initial-condition weight; only the space-time residuals read it.
    pub mu_i: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            q: 2.0,
            mu_b: 10.0,
            mu_i: 1.0,
        }
    }
}

impl LossParams {
    pub fn new(q: f64, mu_b: f64, mu_i: f64) -> Result<Self> {
        if !(q > 1.0) {
            return Err(HjError::InvalidParam(format!("q = {q} must be > 1")));
        }
        if !(mu_b > 0.0) {
            return Err(HjError::InvalidParam(format!("mu_b = {mu_b} must be > 0")));
        }
        if !(mu_i > 0.0) {
            return Err(HjError::InvalidParam(format!("mu_i = {mu_i} must be > 0")));
        }
        Ok(Self { q, mu_b, mu_i })
    }

    /// Signed weight |r|^{q-1} sign(r).
    #[inline]
    pub fn weight(&self, r: f64) -> f64 {
        if self.q == 2.0 {
            r
        } else {
            r.abs().powf(self.q - 1.0) * r.signum()
        }
    }
}

/// The scaled residual over all nodes, aligned with the grid's node indices.
#[derive(Debug, Clone)]
pub struct ResidualVector {
    pub values: Vec<f64>,
    /// Interior count M.
    pub m: usize,
    /// Boundary count N.
    pub n_b: usize,
    /// Interior scale 1/M^(1/q).
    pub scale_interior: f64,
    /// Boundary scale (μ_b/N)^(1/q).
    pub scale_boundary: f64,
}

impl ResidualVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup norm of the scaled residual over all nodes.
    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.values)
    }

    /// Sup over interior nodes of the unscaled scheme values |H(x_j, ...)|;
    /// this is the quantity the stability theorem bounds errors by.
    pub fn interior_sup_unscaled(&self, g: &GridGraph) -> f64 {
        g.interior()
            .iter()
            .fold(0.0f64, |m, &j| m.max(self.values[j].abs()))
            / self.scale_interior
    }
}

pub(crate) fn scales(m: usize, n_b: usize, lp: &LossParams) -> (f64, f64) {
    let inv_q = 1.0 / lp.q;
    (
        (1.0 / m as f64).powf(inv_q),
        (lp.mu_b / n_b as f64).powf(inv_q),
    )
}

fn check_sizes(u: &[f64], g: &GridGraph, bvals: &[f64]) -> Result<()> {
    if u.len() != g.n_nodes() || bvals.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch(format!(
            "field {} / data {} entries for a grid of {} nodes",
            u.len(),
            bvals.len(),
            g.n_nodes()
        )));
    }
    if g.interior().is_empty() {
        return Err(HjError::InvalidGrid("grid has no interior nodes".into()));
    }
    Ok(())
}

fn residual_impl(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
    sequential: bool,
) -> Result<ResidualVector> {
    check_sizes(u, g, bvals)?;
    let m = g.interior().len();
    let n_b = g.boundary().len();
    let (si, sb) = scales(m, n_b, lp);
    let n = g.n_nodes();
    let eval = |j: usize| -> f64 {
        if g.is_interior(j) {
            let mut p = Vec::with_capacity(g.degree());
            graph_gradient_into(u, j, g, &mut p);
            si * ham.eval_at(j, g.coord(j), u[j], &p)
        } else {
            sb * (u[j] - bvals[j])
        }
    };
    let values = if sequential {
        map_indices_seq(n, eval)
    } else {
        map_indices(n, eval)
    };
    Ok(ResidualVector {
        values,
        m,
        n_b,
        scale_interior: si,
        scale_boundary: sb,
    })
}

/// Scaled residual of the steady scheme: interior entries
/// `(1/M^{1/q}) H(x_j, u_j, ∇_G u_j)`, boundary entries
/// `(μ_b/N)^{1/q} (u_j - g_j)`.
pub fn residual_steady(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
) -> Result<ResidualVector> {
    residual_impl(u, g, ham, bvals, lp, false)
}

/// Sequential variant used by the benchmarks and the no-rayon build.
pub fn residual_steady_seq(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
) -> Result<ResidualVector> {
    residual_impl(u, g, ham, bvals, lp, true)
}

/// L(u) = (1/q) Σ_j |R(u)_j|^q.
pub fn loss(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
) -> Result<f64> {
    let r = residual_steady(u, g, ham, bvals, lp)?;
    Ok(loss_of_residual(&r, lp))
}

pub fn loss_of_residual(r: &ResidualVector, lp: &LossParams) -> f64 {
    let terms: Vec<f64> = if lp.q == 2.0 {
        r.values.iter().map(|v| v * v).collect()
    } else {
        r.values.iter().map(|v| v.abs().powf(lp.q)).collect()
    };
    pairwise_sum(&terms) / lp.q
}

/// Per-node Hamiltonian partials needed for gradient/Jacobian assembly.
pub(crate) struct RowPartials {
    /// ∂H/∂u per node (interior only; 0 elsewhere).
    pub dhdu: Vec<f64>,
    /// ∂H/∂p_k flattened in neighbor-slot order per node.
    pub dhdp: Vec<Vec<f64>>,
}

pub(crate) fn row_partials(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    sequential: bool,
) -> RowPartials {
    let n = g.n_nodes();
    let per_node = |j: usize| -> (f64, Vec<f64>) {
        if !g.is_interior(j) {
            return (0.0, Vec::new());
        }
        let mut p = Vec::with_capacity(g.degree());
        graph_gradient_into(u, j, g, &mut p);
        let mut dp = vec![0.0; p.len()];
        let du = ham.grad_at(j, g.coord(j), u[j], &p, &mut dp);
        (du, dp)
    };
    let rows = if sequential {
        map_indices_seq(n, per_node)
    } else {
        map_indices(n, per_node)
    };
    let mut dhdu = Vec::with_capacity(n);
    let mut dhdp = Vec::with_capacity(n);
    for (du, dp) in rows {
        dhdu.push(du);
        dhdp.push(dp);
    }
    RowPartials { dhdu, dhdp }
}

fn loss_gradient_impl(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
    sequential: bool,
) -> Result<(ResidualVector, f64, Vec<f64>)> {
    let r = residual_impl(u, g, ham, bvals, lp, sequential)?;
    let l = loss_of_residual(&r, lp);
    let parts = row_partials(u, g, ham, sequential);
    let w: Vec<f64> = r.values.iter().map(|&v| lp.weight(v)).collect();
    let si = r.scale_interior;
    let sb = r.scale_boundary;
    // Gradient entry i gathers the i-th column of the Jacobian against w:
    // the diagonal of row i plus, for every neighbor j of i that is interior,
    // the off-diagonal entry of row j pointing at i. Gathering (instead of
    // scattering row contributions) keeps the reduction order fixed.
    let gather = |i: usize| -> f64 {
        let mut acc = if g.is_interior(i) {
            let diag = parts.dhdu[i]
                + parts.dhdp[i]
                    .iter()
                    .zip(g.edge_lengths(i))
                    .map(|(dp, len)| dp / len)
                    .sum::<f64>();
            si * diag * w[i]
        } else {
            sb * w[i]
        };
        for (s, &j) in g.neighbors(i).iter().enumerate() {
            if g.is_interior(j) {
                let slot = g.reverse_slots(i)[s];
                let len = g.edge_lengths(i)[s];
                acc -= si * parts.dhdp[j][slot] / len * w[j];
            }
        }
        acc
    };
    let grad = if sequential {
        map_indices_seq(g.n_nodes(), gather)
    } else {
        map_indices(g.n_nodes(), gather)
    };
    Ok((r, l, grad))
}

/// Exact gradient of the loss, assembled row-by-row from the Jacobian entry
/// formulas without materializing the matrix. Returns ∇L indexed by node.
pub fn loss_gradient(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
) -> Result<Vec<f64>> {
    Ok(loss_gradient_impl(u, g, ham, bvals, lp, false)?.2)
}

/// Sequential variant used by the benchmarks and the no-rayon build.
pub fn loss_gradient_seq(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
) -> Result<Vec<f64>> {
    Ok(loss_gradient_impl(u, g, ham, bvals, lp, true)?.2)
}

/// Residual, loss and gradient in one pass; the solver loop needs all three.
pub fn loss_and_gradient(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
) -> Result<(ResidualVector, f64, Vec<f64>)> {
    loss_gradient_impl(u, g, ham, bvals, lp, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_interval_grid;
    use crate::hamiltonian::LaxFriedrichs1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (GridGraph, LaxFriedrichs1d, Vec<f64>, LossParams) {
        let g = build_interval_grid(n).unwrap();
        let ham = LaxFriedrichs1d {
            alpha: 1.0,
            lambda: 1.0,
            source: 1.0,
        };
        let bvals = vec![0.0; g.n_nodes()];
        (g, ham, bvals, LossParams::default())
    }

    #[test]
    fn zero_field_entries_and_loss() {
        let (g, ham, bvals, lp) = setup(20);
        let u = vec![0.0; 21];
        let r = residual_steady(&u, &g, &ham, &bvals, &lp).unwrap();
        let expect = -1.0 / (19f64).sqrt();
        for &j in g.interior() {
            assert!((r.values[j] - expect).abs() < 1e-14);
        }
        for &j in g.boundary() {
            assert_eq!(r.values[j], 0.0);
        }
        // Loss: (1/2) * 19 * (1/19) = 0.5.
        let l = loss(&u, &g, &ham, &bvals, &lp).unwrap();
        assert!((l - 0.5).abs() < 1e-14);
    }

    #[test]
    fn boundary_entry_scaling() {
        let (g, ham, bvals, lp) = setup(20);
        let mut u = vec![0.0; 21];
        u[0] = 0.3;
        let r = residual_steady(&u, &g, &ham, &bvals, &lp).unwrap();
        // (mu_b / N)^(1/q) * 0.3 = sqrt(5) * 0.3.
        assert!((r.values[0] - 5f64.sqrt() * 0.3).abs() < 1e-14);
    }

    #[test]
    fn scaling_consistency_when_m_doubles() {
        // Doubling M with fixed per-node values scales interior entries by
        // 2^(-1/q).
        let lp = LossParams::default();
        let (s1, _) = scales(19, 2, &lp);
        let (s2, _) = scales(38, 2, &lp);
        assert!((s2 / s1 - 2f64.powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn loss_is_order_independent() {
        let (g, ham, bvals, lp) = setup(40);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..41).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = residual_steady(&u, &g, &ham, &bvals, &lp).unwrap();
        let mut terms: Vec<f64> = r.values.iter().map(|v| v * v).collect();
        let direct = pairwise_sum(&terms) / 2.0;
        terms.reverse();
        let permuted = pairwise_sum(&terms) / 2.0;
        assert!((direct - permuted).abs() < 1e-13 * direct.abs().max(1.0));
    }

    #[test]
    fn zero_residual_iff_zero_loss() {
        let (g, ham, bvals, lp) = setup(10);
        let u = vec![0.0; 11];
        let r = residual_steady(&u, &g, &ham, &bvals, &lp).unwrap();
        let l = loss_of_residual(&r, &lp);
        assert!(l > 0.0);
        let zero = ResidualVector {
            values: vec![0.0; r.len()],
            ..r
        };
        assert_eq!(loss_of_residual(&zero, &lp), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for n in [10, 20, 40] {
            let (g, ham, bvals, lp) = setup(n);
            let mut rng = ChaCha8Rng::seed_from_u64(42 + n as u64);
            let mut checked = 0;
            'outer: while checked < 100 {
                let u: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // Skip samples within 1e-4 of the |.| kink of the Hamiltonian.
                for &j in g.interior() {
                    let central = (u[j + 1] - u[j - 1]) / (2.0 * g.h());
                    if central.abs() < 1e-4 {
                        continue 'outer;
                    }
                }
                let grad = loss_gradient(&u, &g, &ham, &bvals, &lp).unwrap();
                let fd_step = 1e-6;
                let mut fd = vec![0.0; u.len()];
                let mut up = u.clone();
                for i in 0..u.len() {
                    up[i] = u[i] + fd_step;
                    let hi = loss(&up, &g, &ham, &bvals, &lp).unwrap();
                    up[i] = u[i] - fd_step;
                    let lo = loss(&up, &g, &ham, &bvals, &lp).unwrap();
                    up[i] = u[i];
                    fd[i] = (hi - lo) / (2.0 * fd_step);
                }
                let num: f64 = grad
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
                assert!(num / den <= 1e-6, "rel err {} at n = {n}", num / den);
                checked += 1;
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let (g, ham, bvals, lp) = setup(50);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<f64> = (0..51).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = loss_gradient(&u, &g, &ham, &bvals, &lp).unwrap();
        let b = loss_gradient_seq(&u, &g, &ham, &bvals, &lp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let (g, ham, bvals, lp) = setup(10);
        let u = vec![0.0; 5];
        assert!(matches!(
            residual_steady(&u, &g, &ham, &bvals, &lp),
            Err(HjError::SizeMismatch(_))
        ));
    }
}
