//! Space-time formulations: implicit and explicit residuals, the space-time
//! loss and its gradient, the (F3) time-step check, per-step implicit
//! marching (the time-dependent oracle), the explicit residual recurrence,
//! and the time-dependent stability bound.
//!
//! A field stores `u_j^n` for every node j and slab n in {0..N}. Interior
//! residual rows exist for slabs 1..N, boundary rows for slabs 1..N, and
//! initial rows couple slab 0 to the initial data at interior nodes. Slab-0
//! boundary entries appear in no residual; marching fills them from the data
//! for completeness.

pub mod obstacle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HjError, Result};
use crate::exec::{inf_norm, map_indices, pairwise_sum};
use crate::grid::{graph_gradient_into, GridGraph};
use crate::hamiltonian::Hamiltonian;
use crate::residual::{row_partials, LossParams};
use crate::solve::{newton_solve, NewtonConfig};

/// Values on the space-time product grid, slab-major.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub values: Vec<f64>,
    pub n_nodes: usize,
    /// Number of time steps N; the field holds N+1 slabs.
    pub n_time: usize,
    pub dt: f64,
}

impl SpaceTimeField {
    pub fn zeros(n_nodes: usize, n_time: usize, dt: f64) -> Self {
        Self {
            values: vec![0.0; n_nodes * (n_time + 1)],
            n_nodes,
            n_time,
            dt,
        }
    }

    pub fn slab(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_nodes..(n + 1) * self.n_nodes]
    }

    pub fn slab_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.n_nodes..(n + 1) * self.n_nodes]
    }

    #[inline]
    pub fn at(&self, n: usize, j: usize) -> f64 {
        self.values[n * self.n_nodes + j]
    }
}

/// Scaled space-time residual with the same slab-major layout as the field.
/// Slab-0 boundary slots are structurally zero.
#[derive(Debug, Clone)]
pub struct SpaceTimeResidual {
    pub values: Vec<f64>,
    pub n_nodes: usize,
    pub n_time: usize,
    pub scale_interior: f64,
    pub scale_boundary: f64,
    pub scale_initial: f64,
}

impl SpaceTimeResidual {
    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.values)
    }

    /// Sup of the unscaled interior residual on a given slab n >= 1.
    pub fn slab_interior_sup_unscaled(&self, g: &GridGraph, n: usize) -> f64 {
        let base = n * self.n_nodes;
        g.interior()
            .iter()
            .fold(0.0f64, |m, &j| m.max(self.values[base + j].abs()))
            / self.scale_interior
    }
}

pub(crate) fn spacetime_scales(
    m: usize,
    m_b: usize,
    n_time: usize,
    lp: &LossParams,
) -> (f64, f64, f64) {
    let inv_q = 1.0 / lp.q;
    (
        (1.0 / (m * n_time) as f64).powf(inv_q),
        (lp.mu_b / (m_b * n_time) as f64).powf(inv_q),
        (lp.mu_i / m as f64).powf(inv_q),
    )
}

fn check_shapes(field: &SpaceTimeField, g: &GridGraph) -> Result<()> {
    if field.n_nodes != g.n_nodes() {
        return Err(HjError::SizeMismatch(format!(
            "field has {} nodes per slab, grid has {}",
            field.n_nodes,
            g.n_nodes()
        )));
    }
    if field.n_time == 0 {
        return Err(HjError::InvalidParam("need at least one time step".into()));
    }
    if !(field.dt > 0.0) {
        return Err(HjError::InvalidParam(format!("dt = {} must be positive", field.dt)));
    }
    Ok(())
}

/// Boundary data b_j^n as a function of (slab, node).
pub type BoundaryFn<'a> = &'a (dyn Fn(usize, usize) -> f64 + Sync);

/// Implicit residual: interior rows
/// `(1/(MN))^{1/q} ((u_j^n - u_j^{n-1})/Δt + F(x_j, u_j^n, ∇_G u_j^n))`,
/// boundary rows `(μ_b/(M_b N))^{1/q} (u_j^n - b_j^n)`, initial rows
/// `(μ_i/M)^{1/q} (u_j^0 - g0_j)`.
pub fn residual_spacetime_implicit(
    field: &SpaceTimeField,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    g0: &[f64],
    b: BoundaryFn,
    lp: &LossParams,
) -> Result<SpaceTimeResidual> {
    residual_spacetime(field, g, f_ham, g0, b, lp, true)
}

/// Explicit residual: same layout and scalings, but F is evaluated on the
/// previous slab: `(u_j^n - u_j^{n-1})/Δt + F(x_j, u_j^{n-1}, ∇_G u_j^{n-1})`.
pub fn residual_spacetime_explicit(
    field: &SpaceTimeField,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    g0: &[f64],
    b: BoundaryFn,
    lp: &LossParams,
) -> Result<SpaceTimeResidual> {
    residual_spacetime(field, g, f_ham, g0, b, lp, false)
}

fn residual_spacetime(
    field: &SpaceTimeField,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    g0: &[f64],
    b: BoundaryFn,
    lp: &LossParams,
    implicit: bool,
) -> Result<SpaceTimeResidual> {
    check_shapes(field, g)?;
    if g0.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch("initial data size".into()));
    }
    let m = g.interior().len();
    let m_b = g.boundary().len();
    let nt = field.n_time;
    let (si, sb, s0) = spacetime_scales(m, m_b, nt, lp);
    let nn = field.n_nodes;
    let dt = field.dt;
    let values = map_indices(nn * (nt + 1), |idx| {
        let n = idx / nn;
        let j = idx % nn;
        if n == 0 {
            if g.is_interior(j) {
                s0 * (field.at(0, j) - g0[j])
            } else {
                0.0
            }
        } else if g.is_interior(j) {
            let slab = if implicit { n } else { n - 1 };
            let u_slab = field.slab(slab);
            let mut p = Vec::with_capacity(g.degree());
            graph_gradient_into(u_slab, j, g, &mut p);
            let rate = (field.at(n, j) - field.at(n - 1, j)) / dt;
            si * (rate + f_ham.eval_at(j, g.coord(j), u_slab[j], &p))
        } else {
            sb * (field.at(n, j) - b(n, j))
        }
    });
    Ok(SpaceTimeResidual {
        values,
        n_nodes: nn,
        n_time: nt,
        scale_interior: si,
        scale_boundary: sb,
        scale_initial: s0,
    })
}

/// (1/q) Σ |R|^q over all space-time residual entries.
pub fn loss_spacetime(r: &SpaceTimeResidual, lp: &LossParams) -> f64 {
    let terms: Vec<f64> = if lp.q == 2.0 {
        r.values.iter().map(|v| v * v).collect()
    } else {
        r.values.iter().map(|v| v.abs().powf(lp.q)).collect()
    };
    pairwise_sum(&terms) / lp.q
}

/// Exact gradient of the implicit space-time loss with respect to every
/// `u_j^n`, gathered per unknown like the steady gradient.
pub fn loss_spacetime_gradient_implicit(
    field: &SpaceTimeField,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    g0: &[f64],
    b: BoundaryFn,
    lp: &LossParams,
) -> Result<Vec<f64>> {
    let r = residual_spacetime_implicit(field, g, f_ham, g0, b, lp)?;
    let w: Vec<f64> = r.values.iter().map(|&v| lp.weight(v)).collect();
    let nn = field.n_nodes;
    let nt = field.n_time;
    let dt = field.dt;
    let (si, sb, s0) = (r.scale_interior, r.scale_boundary, r.scale_initial);
    // Per-slab Hamiltonian partials at the slab's own values.
    let parts: Vec<crate::residual::RowPartials> = (0..=nt)
        .map(|n| row_partials(field.slab(n), g, f_ham, false))
        .collect();
    let grad = map_indices(nn * (nt + 1), |idx| {
        let n = idx / nn;
        let i = idx % nn;
        let mut acc = 0.0;
        if n == 0 {
            if g.is_interior(i) {
                acc += s0 * w[i];
            }
        } else if g.is_interior(i) {
            // Own row: time derivative plus the spatial diagonal.
            let diag = 1.0 / dt
                + parts[n].dhdu[i]
                + parts[n].dhdp[i]
                    .iter()
                    .zip(g.edge_lengths(i))
                    .map(|(dp, len)| dp / len)
                    .sum::<f64>();
            acc += si * diag * w[idx];
        } else {
            acc += sb * w[idx];
        }
        if n < nt {
            // Row (n+1, i) couples through the backward time difference.
            if g.is_interior(i) {
                acc -= si / dt * w[(n + 1) * nn + i];
            }
        }
        if n >= 1 && !g.neighbors(i).is_empty() {
            // Spatial coupling within slab n: rows of interior neighbors.
            for (s, &j) in g.neighbors(i).iter().enumerate() {
                if g.is_interior(j) {
                    let slot = g.reverse_slots(i)[s];
                    let len = g.edge_lengths(i)[s];
                    acc -= si * parts[n].dhdp[j][slot] / len * w[n * nn + j];
                }
            }
        }
        acc
    });
    Ok(grad)
}

/// Result of the (F3) time-step check.
#[derive(Debug, Clone)]
pub struct F3Report {
    pub ok: bool,
    /// -min(0, min sampled Δt ∂F/∂u); the empirical λ of (F3).
    pub worst_lambda: f64,
}

/// Samples Δt ∂F/∂u at random states; (F3) asks for a value > -1.
pub fn check_f3(
    f_ham: &dyn Hamiltonian,
    dt: f64,
    g: &GridGraph,
    n_samples: usize,
    seed: u64,
) -> Result<F3Report> {
    if n_samples == 0 {
        return Err(HjError::InvalidParam("n_samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = g.degree();
    let eps = 1e-6;
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let j = g.interior()[rng.gen_range(0..g.interior().len())];
        let x = g.coord(j);
        let u = rng.gen_range(-2.0..2.0);
        let p: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let hi = f_ham.eval_at(j, x, u + eps, &p);
        let lo = f_ham.eval_at(j, x, u - eps, &p);
        worst = worst.min(dt * (hi - lo) / (2.0 * eps));
    }
    Ok(F3Report {
        ok: worst >= -1.0 + 1e-6,
        worst_lambda: -worst.min(0.0),
    })
}

/// Per-step Hamiltonian `(u - prev_j)/Δt + F(x, u, p)`; node-indexed because
/// the previous slab enters through the node, not the coordinates.
struct ImplicitStep<'a> {
    prev: &'a [f64],
    dt: f64,
    inner: &'a dyn Hamiltonian,
}

impl Hamiltonian for ImplicitStep<'_> {
    fn name(&self) -> &str {
        "implicit-step"
    }

    fn lambda(&self) -> f64 {
        1.0 / self.dt + self.inner.lambda()
    }

    fn eval(&self, x: &[f64], u: f64, p: &[f64]) -> f64 {
        // Only meaningful node-indexed; keep the pure-x path for samplers.
        self.inner.eval(x, u, p) + u / self.dt
    }

    fn eval_at(&self, node: usize, x: &[f64], u: f64, p: &[f64]) -> f64 {
        (u - self.prev[node]) / self.dt + self.inner.eval_at(node, x, u, p)
    }

    fn grad(&self, x: &[f64], u: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        self.inner.grad(x, u, p, dp) + 1.0 / self.dt
    }

    fn grad_at(&self, node: usize, x: &[f64], u: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        self.inner.grad_at(node, x, u, p, dp) + 1.0 / self.dt
    }
}

/// Implicit (backward-Euler) marching: one Newton solve per step on the
/// stationary problem with Hamiltonian `(u - u^{n-1})/Δt + F`. Returns the
/// full space-time field; this is the oracle the space-time loss is checked
/// against.
pub fn march_implicit(
    g0: &[f64],
    b: BoundaryFn,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    dt: f64,
    n_time: usize,
    newton_tol: f64,
) -> Result<SpaceTimeField> {
    if g0.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch("initial data size".into()));
    }
    let nn = g.n_nodes();
    let mut field = SpaceTimeField::zeros(nn, n_time, dt);
    {
        let slab0 = field.slab_mut(0);
        slab0.copy_from_slice(g0);
        for &j in g.boundary() {
            slab0[j] = b(0, j);
        }
    }
    let lp = LossParams::default();
    let cfg = NewtonConfig {
        tol_inf: newton_tol,
        ..NewtonConfig::default()
    };
    for n in 1..=n_time {
        let prev = field.slab(n - 1).to_vec();
        let step = ImplicitStep {
            prev: &prev,
            dt,
            inner: f_ham,
        };
        let bvals: Vec<f64> = (0..nn).map(|j| b(n, j)).collect();
        let mut u0 = prev.clone();
        for &j in g.boundary() {
            u0[j] = bvals[j];
        }
        let u = newton_solve(&u0, g, &step, &bvals, &lp, &cfg).map_err(|e| HjError::Marching {
            step: n,
            source: Box::new(e),
        })?;
        field.slab_mut(n).copy_from_slice(&u);
    }
    Ok(field)
}

/// Forward substitution for the explicit scheme; by construction the
/// explicit interior residual of the returned field is exactly zero.
pub fn explicit_solve_forward(
    g0: &[f64],
    b: BoundaryFn,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    dt: f64,
    n_time: usize,
) -> Result<SpaceTimeField> {
    if g0.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch("initial data size".into()));
    }
    let nn = g.n_nodes();
    let mut field = SpaceTimeField::zeros(nn, n_time, dt);
    {
        let slab0 = field.slab_mut(0);
        slab0.copy_from_slice(g0);
        for &j in g.boundary() {
            slab0[j] = b(0, j);
        }
    }
    let mut p = Vec::new();
    for n in 1..=n_time {
        let prev = field.slab(n - 1).to_vec();
        let slab = field.slab_mut(n);
        for j in 0..nn {
            if g.is_interior(j) {
                graph_gradient_into(&prev, j, g, &mut p);
                slab[j] = prev[j] - dt * f_ham.eval_at(j, g.coord(j), prev[j], &p);
            } else {
                slab[j] = b(n, j);
            }
        }
    }
    Ok(field)
}

/// Backward recurrence for the explicit residual weights `w_j^n`, starting
/// from `w^N = 0`. At any critical point of the explicit loss the propagated
/// weights all vanish, which is how the recurrence is used. Returned
/// per slab (outer index n in 0..=N), interior slots only (others zero).
pub fn explicit_residual_recurrence(
    field: &SpaceTimeField,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
) -> Result<Vec<Vec<f64>>> {
    let terminal = vec![0.0; field.n_nodes];
    explicit_residual_recurrence_from(field, g, f_ham, terminal)
}

/// Same recurrence from arbitrary terminal weights; exposes the coefficient
/// structure for verification.
pub fn explicit_residual_recurrence_from(
    field: &SpaceTimeField,
    g: &GridGraph,
    f_ham: &dyn Hamiltonian,
    terminal: Vec<f64>,
) -> Result<Vec<Vec<f64>>> {
    check_shapes(field, g)?;
    if terminal.len() != field.n_nodes {
        return Err(HjError::SizeMismatch("terminal weight size".into()));
    }
    let nn = field.n_nodes;
    let nt = field.n_time;
    let dt = field.dt;
    let mut w = vec![vec![0.0; nn]; nt + 1];
    w[nt] = terminal;
    for n in (0..nt).rev() {
        // F partials on slab n (the slab the residual row n+1 evaluates F at).
        let parts = row_partials(field.slab(n), g, f_ham, false);
        let (next, here) = {
            let (a, b) = w.split_at_mut(n + 1);
            (&b[0], &mut a[n])
        };
        for &j in g.interior() {
            let own = 1.0
                - dt * parts.dhdu[j]
                - parts.dhdp[j]
                    .iter()
                    .zip(g.edge_lengths(j))
                    .map(|(dp, len)| dt * dp / len)
                    .sum::<f64>();
            let mut acc = own * next[j];
            for (s, &k) in g.neighbors(j).iter().enumerate() {
                if g.is_interior(k) {
                    let slot = g.reverse_slots(j)[s];
                    let len = g.edge_lengths(j)[s];
                    acc += dt / len * parts.dhdp[k][slot] * next[k];
                }
            }
            here[j] = acc;
        }
    }
    Ok(w)
}

/// One step of the time-dependent stability bound:
/// `||u^{n+1} - v^{n+1}||_inf <= prev_diff + max(Δt r_inf_next, b_diff)`.
pub fn stability_time_bound(prev_diff: f64, r_inf_next: f64, b_diff: f64, dt: f64) -> f64 {
    prev_diff + (dt * r_inf_next).max(b_diff)
}

/// Folds the per-step bound over a whole march.
pub fn stability_time_cumulative(initial_diff: f64, steps: &[(f64, f64)], dt: f64) -> f64 {
    steps
        .iter()
        .fold(initial_diff, |acc, &(r_inf, b_diff)| {
            stability_time_bound(acc, r_inf, b_diff, dt)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_interval_grid;
    use crate::hamiltonian::Hamiltonian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 1D transport-type right-hand side |centered| - viscosity, independent
    /// of u (so (F3) imposes no step restriction).
    #[derive(Clone)]
    struct Transport1d {
        alpha: f64,
    }

    impl Hamiltonian for Transport1d {
        fn name(&self) -> &str {
            "transport-1d"
        }
        fn lambda(&self) -> f64 {
            0.0
        }
        fn eval(&self, _x: &[f64], _u: f64, p: &[f64]) -> f64 {
            (0.5 * (p[0] - p[1])).abs() + 0.5 * self.alpha * (p[0] + p[1])
        }
        fn grad(&self, _x: &[f64], _u: f64, p: &[f64], dp: &mut [f64]) -> f64 {
            let c = 0.5 * (p[0] - p[1]);
            let s = if c > 0.0 {
                1.0
            } else if c < 0.0 {
                -1.0
            } else {
                0.0
            };
            dp[0] = 0.5 * (s + self.alpha);
            dp[1] = 0.5 * (self.alpha - s);
            0.0
        }
    }

    /// F = -2u: conditionally monotone; the (F3) examples use it.
    struct Decay;
    impl Hamiltonian for Decay {
        fn name(&self) -> &str {
            "decay"
        }
        fn lambda(&self) -> f64 {
            -2.0
        }
        fn eval(&self, _x: &[f64], u: f64, _p: &[f64]) -> f64 {
            -2.0 * u
        }
        fn grad(&self, _x: &[f64], _u: f64, _p: &[f64], dp: &mut [f64]) -> f64 {
            dp.iter_mut().for_each(|d| *d = 0.0);
            -2.0
        }
    }

    fn hat(g: &GridGraph) -> Vec<f64> {
        (0..g.n_nodes())
            .map(|j| {
                let x = g.coord(j)[0];
                x.min(1.0 - x)
            })
            .collect()
    }

    #[test]
    fn f3_examples() {
        let g = build_interval_grid(10).unwrap();
        let rep = check_f3(&Transport1d { alpha: 1.0 }, 10.0, &g, 200, 0).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.worst_lambda, 0.0);
        let rep = check_f3(&Decay, 1.0, &g, 200, 0).unwrap();
        assert!(!rep.ok);
        let rep = check_f3(&Decay, 0.4, &g, 200, 0).unwrap();
        assert!(rep.ok);
        assert!((rep.worst_lambda - 0.8).abs() < 1e-6);
    }

    #[test]
    fn marched_field_zeroes_the_implicit_residual() {
        let g = build_interval_grid(10).unwrap();
        let f = Transport1d { alpha: 1.0 };
        let g0 = hat(&g);
        let b = |_n: usize, _j: usize| 0.0;
        let field = march_implicit(&g0, &b, &g, &f, 0.05, 8, 1e-12).unwrap();
        let lp = LossParams::default();
        let r = residual_spacetime_implicit(&field, &g, &f, &g0, &b, &lp).unwrap();
        assert!(r.inf_norm() <= 1e-11, "residual {}", r.inf_norm());
        assert!(loss_spacetime(&r, &lp) <= 1e-22);
    }

    #[test]
    fn zero_rhs_constant_field_is_stationary() {
        struct Nothing;
        impl Hamiltonian for Nothing {
            fn name(&self) -> &str {
                "zero"
            }
            fn lambda(&self) -> f64 {
                0.0
            }
            fn eval(&self, _x: &[f64], _u: f64, _p: &[f64]) -> f64 {
                0.0
            }
        }
        let g = build_interval_grid(6).unwrap();
        let g0 = vec![0.4; 7];
        let b = |_n: usize, _j: usize| 0.4;
        let field = march_implicit(&g0, &b, &g, &Nothing, 0.3, 5, 1e-13).unwrap();
        for n in 0..=5 {
            assert!(field.slab(n).iter().all(|&v| (v - 0.4).abs() < 1e-12));
        }
    }

    #[test]
    fn one_node_one_step_toy() {
        // One interior node, F = 0, u0 = 0, u1 = 1, dt = 1: interior entry
        // is (1/(M N))^(1/2) * 1 with M = 1, N = 1.
        struct Nothing;
        impl Hamiltonian for Nothing {
            fn name(&self) -> &str {
                "zero"
            }
            fn lambda(&self) -> f64 {
                0.0
            }
            fn eval(&self, _x: &[f64], _u: f64, _p: &[f64]) -> f64 {
                0.0
            }
        }
        let g = build_interval_grid(2).unwrap();
        let mut field = SpaceTimeField::zeros(3, 1, 1.0);
        field.slab_mut(1)[1] = 1.0;
        let g0 = vec![0.0; 3];
        let lp = LossParams::default();
        let r = residual_spacetime_implicit(&field, &g, &Nothing, &g0, &|_, _| 0.0, &lp)
            .unwrap();
        // Interior node is index 1; slab 1 entry.
        assert!((r.values[3 + 1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_cfl_for_u_independent_rhs() {
        let g = build_interval_grid(20).unwrap();
        let f = Transport1d { alpha: 1.0 };
        let g0 = hat(&g);
        let b = |_n: usize, _j: usize| 0.0;
        for mult in [1.0, 2.0, 5.0, 10.0] {
            let dt = mult * g.h();
            let field = march_implicit(&g0, &b, &g, &f, dt, 4, 1e-11);
            assert!(field.is_ok(), "marching failed at dt = {mult}h");
        }
    }

    #[test]
    fn marching_pair_obeys_stability_bound() {
        let g = build_interval_grid(10).unwrap();
        let f = Transport1d { alpha: 1.0 };
        let g0 = hat(&g);
        let delta = 0.05;
        let b0 = |_n: usize, _j: usize| 0.0;
        let b1 = move |_n: usize, _j: usize| delta;
        let u = march_implicit(&g0, &b0, &g, &f, 0.1, 6, 1e-12).unwrap();
        let v = march_implicit(&g0, &b1, &g, &f, 0.1, 6, 1e-12).unwrap();
        let mut prev_diff = 0.0;
        for n in 1..=6 {
            let diff = u
                .slab(n)
                .iter()
                .zip(v.slab(n))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            // u is an exact scheme solution: r_inf ~ newton tol.
            let bound = stability_time_bound(prev_diff, 1e-11, delta, 0.1);
            assert!(diff <= bound + 1e-10, "step {n}: {diff} > {bound}");
            prev_diff = diff;
        }
    }

    #[test]
    fn explicit_forward_substitution_zeroes_residual() {
        let g = build_interval_grid(10).unwrap();
        let f = Transport1d { alpha: 1.0 };
        let g0 = hat(&g);
        let b = |_n: usize, _j: usize| 0.0;
        let field = explicit_solve_forward(&g0, &b, &g, &f, 0.05 * 0.5, 6).unwrap();
        let lp = LossParams::default();
        let r = residual_spacetime_explicit(&field, &g, &f, &g0, &b, &lp).unwrap();
        // Substitution zeroes the residual up to one rounding of the
        // back-substituted time difference.
        assert!(r.inf_norm() <= 1e-14);
    }

    #[test]
    fn explicit_one_step_toys() {
        struct One;
        impl Hamiltonian for One {
            fn name(&self) -> &str {
                "one"
            }
            fn lambda(&self) -> f64 {
                0.0
            }
            fn eval(&self, _x: &[f64], _u: f64, _p: &[f64]) -> f64 {
                1.0
            }
        }
        let g = build_interval_grid(2).unwrap();
        let lp = LossParams::default();
        let g0 = vec![0.0; 3];
        let b = |_n: usize, _j: usize| 0.0;
        // Forward substitution: u1 = -dt * 1 = -0.5 at the interior node.
        let field = explicit_solve_forward(&g0, &b, &g, &One, 0.5, 1).unwrap();
        assert!((field.at(1, 1) + 0.5).abs() < 1e-15);
        let r = residual_spacetime_explicit(&field, &g, &One, &g0, &b, &lp).unwrap();
        assert_eq!(r.values[3 + 1], 0.0);
        // Mismatched u1 = 0 leaves a unit unscaled residual.
        let mut bad = field.clone();
        bad.slab_mut(1)[1] = 0.0;
        let r = residual_spacetime_explicit(&bad, &g, &One, &g0, &b, &lp).unwrap();
        assert!((r.values[3 + 1] / r.scale_interior - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recurrence_zero_propagation_and_direct_match() {
        let g = build_interval_grid(10).unwrap();
        let f = Transport1d { alpha: 1.0 };
        let g0 = hat(&g);
        let b = |_n: usize, _j: usize| 0.0;
        let field = explicit_solve_forward(&g0, &b, &g, &f, 0.02, 5).unwrap();
        let w = explicit_residual_recurrence(&field, &g, &f).unwrap();
        for slab in &w {
            assert!(slab.iter().all(|&x| x.abs() <= 1e-12));
        }
        // Direct weights |R|^{q-1} vanish as well.
        let lp = LossParams::default();
        let r = residual_spacetime_explicit(&field, &g, &f, &g0, &b, &lp).unwrap();
        for (n, slab) in w.iter().enumerate().skip(1) {
            for &j in g.interior() {
                let direct = lp.weight(r.values[n * r.n_nodes + j] / r.scale_interior);
                assert!((slab[j].abs() - direct.abs()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn recurrence_single_node_reduces_to_copy() {
        struct Nothing;
        impl Hamiltonian for Nothing {
            fn name(&self) -> &str {
                "zero"
            }
            fn lambda(&self) -> f64 {
                0.0
            }
            fn eval(&self, _x: &[f64], _u: f64, _p: &[f64]) -> f64 {
                0.0
            }
            fn grad(&self, _x: &[f64], _u: f64, _p: &[f64], dp: &mut [f64]) -> f64 {
                dp.iter_mut().for_each(|d| *d = 0.0);
                0.0
            }
        }
        let g = build_interval_grid(2).unwrap();
        let mut field = SpaceTimeField::zeros(3, 3, 0.5);
        for n in 0..=3 {
            field.slab_mut(n)[1] = n as f64;
        }
        // With F = 0 the recurrence is a pure copy w^n = w^{n+1}.
        let mut terminal = vec![0.0; 3];
        terminal[1] = 1.0;
        let w =
            explicit_residual_recurrence_from(&field, &g, &Nothing, terminal).unwrap();
        for n in 0..=3 {
            assert_eq!(w[n][1], 1.0);
        }
    }

    #[test]
    fn spacetime_gradient_matches_finite_differences() {
        let g = build_interval_grid(6).unwrap();
        let f = Transport1d { alpha: 1.0 };
        let lp = LossParams::default();
        let g0 = hat(&g);
        let b = |_n: usize, _j: usize| 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let nn = g.n_nodes();
        let mut field = SpaceTimeField::zeros(nn, 3, 0.1);
        'retry: loop {
            for v in field.values.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            // Stay clear of the |.| kink for the FD comparison.
            for n in 1..=3 {
                for &j in g.interior() {
                    let slab = field.slab(n);
                    let c = 0.5 * ((slab[j] - slab[j - 1]) - (slab[j] - slab[j + 1])) / g.h();
                    if c.abs() < 1e-3 {
                        continue 'retry;
                    }
                }
            }
            break;
        }
        let grad =
            loss_spacetime_gradient_implicit(&field, &g, &f, &g0, &b, &lp).unwrap();
        let eps = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for idx in 0..field.values.len() {
            let orig = field.values[idx];
            field.values[idx] = orig + eps;
            let hi = loss_spacetime(
                &residual_spacetime_implicit(&field, &g, &f, &g0, &b, &lp).unwrap(),
                &lp,
            );
            field.values[idx] = orig - eps;
            let lo = loss_spacetime(
                &residual_spacetime_implicit(&field, &g, &f, &g0, &b, &lp).unwrap(),
                &lp,
            );
            field.values[idx] = orig;
            let fd = (hi - lo) / (2.0 * eps);
            num += (grad[idx] - fd) * (grad[idx] - fd);
            den += fd * fd;
        }
        let rel = num.sqrt() / den.sqrt();
        assert!(rel <= 1e-6, "rel err {rel}");
    }

    #[test]
    fn stability_fold_values() {
        // Exact solutions with equal data stay at 0.
        assert_eq!(stability_time_cumulative(0.0, &[(0.0, 0.0); 10], 0.1), 0.0);
        // 1e-3 residual per step over 100 steps of 0.1: bound 1e-2.
        let steps = vec![(1e-3, 0.0); 100];
        let b = stability_time_cumulative(0.0, &steps, 0.1);
        assert!((b - 1e-2).abs() < 1e-12);
        // Boundary mismatch dominates when larger than dt * r_inf.
        assert_eq!(stability_time_bound(0.0, 1e-3, 0.5, 0.1), 0.5);
    }
}
