//! Isaacs annulus reference solves by damped Newton on embedded grids,
//! their self-convergence report, and the comparison-principle check under
//! a uniform boundary perturbation. An optional network variant trains on
//! collocation points inside the annulus.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hjres::grid::{build_annulus_grid, dump_field, AnnulusGrid, GridGraph};
use hjres::hamiltonian::{IsaacsHamiltonian, IsaacsParams};
use hjres::mlp::train::{sgd_min_res, CollocationSampler, TrainConfig};
use hjres::mlp::lipschitz_init;
use hjres::residual::LossParams;
use hjres::solve::{newton_solve, NewtonConfig};

use crate::config::{Config, IsaacsConfig};
use crate::output::RunDir;
use crate::CliError;

pub fn params_from(c: &IsaacsConfig) -> IsaacsParams {
    IsaacsParams {
        sigma_x: c.sigma_x,
        sigma_y: c.sigma_y,
        v_s: c.v_s,
        kappa: c.kappa,
        a: c.a,
        r_inner: c.r_inner,
        r_outer: c.r_outer,
        lambda_extra: 0.0,
    }
}

/// Radial ramp between the two Dirichlet levels; a reasonable Newton start.
fn radial_ramp(g: &GridGraph, c: &IsaacsConfig) -> Vec<f64> {
    (0..g.n_nodes())
        .map(|j| {
            let x = g.coord(j);
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            ((rho - c.r_inner) / (c.r_outer - c.r_inner)).clamp(0.0, 1.0)
        })
        .collect()
}

/// Reference solve on the size-n embedding (spacing 4/n), boundary pinned.
pub fn reference_solve(
    c: &IsaacsConfig,
    n: usize,
    boundary_shift: f64,
) -> Result<(AnnulusGrid, Vec<f64>), CliError> {
    let h = 4.0 / n as f64;
    let mut ag = build_annulus_grid(c.r_inner, c.r_outer, h)?;
    if boundary_shift != 0.0 {
        for &j in ag.graph.boundary() {
            ag.bvals[j] += boundary_shift;
        }
    }
    let ham = IsaacsHamiltonian::new(params_from(c), h);
    let cfg = NewtonConfig {
        tol_inf: c.newton_tol,
        max_iters: c.newton_max_iters,
        pin_boundary: true,
    };
    let u0 = {
        let mut u = radial_ramp(&ag.graph, c);
        for &j in ag.graph.boundary() {
            u[j] = ag.bvals[j];
        }
        u
    };
    let u = newton_solve(&u0, &ag.graph, &ham, &ag.bvals, &LossParams::default(), &cfg)
        .map_err(|e| CliError::NonConvergence(format!("Isaacs Newton at n={n}: {e}")))?;
    Ok((ag, u))
}

/// Sup difference on nodes that exist in both grids and are interior in
/// both; `ratio` is the fine/coarse size ratio.
pub fn shared_node_difference(
    coarse: &AnnulusGrid,
    u_coarse: &[f64],
    fine: &AnnulusGrid,
    u_fine: &[f64],
    ratio: usize,
) -> f64 {
    let clat = coarse.graph.lattice().unwrap();
    let flat = fine.graph.lattice().unwrap();
    let mut worst = 0.0f64;
    for &j in coarse.graph.interior() {
        let multi = clat.multi_index(j);
        let fine_multi: Vec<usize> = multi.iter().map(|&i| i * ratio).collect();
        let k = flat.flat_index(&fine_multi);
        if fine.graph.is_interior(k) {
            worst = worst.max((u_coarse[j] - u_fine[k]).abs());
        }
    }
    worst
}

/// Collocation sampler for the annulus: interior points by rejection from
/// the bounding square, boundary points on the two circles with their
/// Dirichlet values.
struct AnnulusSampler {
    r_inner: f64,
    r_outer: f64,
}

impl CollocationSampler for AnnulusSampler {
    fn dim(&self) -> usize {
        2
    }

    fn sample_interior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let x = rng.gen_range(-self.r_outer..self.r_outer);
            let y = rng.gen_range(-self.r_outer..self.r_outer);
            let rho2 = x * x + y * y;
            if rho2 > self.r_inner * self.r_inner && rho2 < self.r_outer * self.r_outer {
                return vec![x, y];
            }
        }
    }

    fn sample_boundary(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        if rng.gen_bool(0.5) {
            (
                vec![self.r_inner * theta.cos(), self.r_inner * theta.sin()],
                0.0,
            )
        } else {
            (
                vec![self.r_outer * theta.cos(), self.r_outer * theta.sin()],
                1.0,
            )
        }
    }
}

pub fn run(cfg: &Config, dir: &RunDir) -> Result<(), CliError> {
    let c = &cfg.isaacs2d;
    let mut summary = String::new();
    let mut solves = Vec::new();
    for &n in &c.grid_sizes {
        let (ag, u) = reference_solve(c, n, 0.0)?;
        let mut f = dir.file(&format!("field_n{n}.txt"))?;
        dump_field(&ag.graph, &u, &mut f)?;
        // Boundary tags are pinned by construction; record the check anyway.
        let tag_err = ag
            .graph
            .boundary()
            .iter()
            .map(|&j| (u[j] - ag.bvals[j]).abs())
            .fold(0.0f64, f64::max);
        writeln!(summary, "n={n}: interior={} boundary_tag_error={tag_err:e}",
            ag.graph.interior().len())
        .unwrap();
        solves.push((n, ag, u));
    }
    for w in solves.windows(2) {
        let (n0, ag0, u0) = &w[0];
        let (n1, ag1, u1) = &w[1];
        if n1 % n0 == 0 {
            let d = shared_node_difference(ag0, u0, ag1, u1, n1 / n0);
            writeln!(summary, "self_convergence n={n0} vs n={n1}: sup_diff={d:.4e}").unwrap();
        }
    }
    // Comparison principle: +delta on all boundary data shifts the solution
    // by at most delta (here exactly, since the operator has no u term).
    if let Some(&n) = c.grid_sizes.last() {
        let (_, u) = reference_solve(c, n, 0.0)?;
        let (_, u_pert) = reference_solve(c, n, c.perturbation)?;
        let shift = u
            .iter()
            .zip(&u_pert)
            .map(|(a, b)| (b - a).abs())
            .fold(0.0f64, f64::max);
        writeln!(
            summary,
            "comparison_principle: boundary +{} shifts solution by {shift:.6}",
            c.perturbation
        )
        .unwrap();
    }
    if c.train_nn {
        let mut sizes = vec![2];
        sizes.extend_from_slice(&c.nn_hidden);
        sizes.push(1);
        let params = lipschitz_init(&sizes, 2.0, cfg.seed)?;
        let ham = IsaacsHamiltonian::new(params_from(c), c.nn_h);
        let train_cfg = TrainConfig {
            n0: c.nn_batch,
            nb: c.nn_batch / 4 + 1,
            max_iters: c.nn_iters,
            stop_window: 50,
            stop_threshold: 0.0, // run the full budget
            lr: c.nn_lr,
            use_adam: true,
            record_every: 200,
        };
        let sampler = AnnulusSampler {
            r_inner: c.r_inner,
            r_outer: c.r_outer,
        };
        let lp = LossParams::new(2.0, c.nn_mu_b, 1.0)?;
        let out = sgd_min_res(params, &ham, c.nn_h, &lp, &sampler, &train_cfg, cfg.seed, None)?;
        if let Some((n, ag, u_ref)) = solves.last() {
            let u_nn: Vec<f64> = (0..ag.graph.n_nodes())
                .map(|j| out.params.forward(ag.graph.coord(j)))
                .collect();
            let mut f = dir.file(&format!("field_nn_n{n}.txt"))?;
            dump_field(&ag.graph, &u_nn, &mut f)?;
            let gap = ag
                .graph
                .interior()
                .iter()
                .map(|&j| (u_nn[j] - u_ref[j]).abs())
                .fold(0.0f64, f64::max);
            writeln!(summary, "nn_vs_reference_sup_diff={gap:.4}").unwrap();
        }
    }
    dir.write_text("summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}
