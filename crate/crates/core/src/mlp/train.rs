//! Collocation-based stochastic residual training: the SGD/Adam loop over
//! randomly drawn stencil points, the multilevel schedule for networks (no
//! prolongation — the same network carries over), and the two-phase obstacle
//! trainer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HjError, Result};
use crate::exec::{map_runs, pairwise_sum};
use crate::grid::collocation_stencil;
use crate::hamiltonian::Hamiltonian;
use crate::mlp::{MlpGrads, MlpParams, Optimizer, Tape};
use crate::residual::LossParams;
use crate::time::obstacle::{
    initial_data, lxf_transport_grad, onesided_transport_grad, ObstacleScheme,
};

/// Draws interior collocation points and boundary samples with data.
pub trait CollocationSampler: Sync {
    fn dim(&self) -> usize;
    fn sample_interior(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn sample_boundary(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64);
}

/// The unit interval with zero boundary data; boundary draws pick one of the
/// two endpoints uniformly.
pub struct UnitIntervalSampler;

impl CollocationSampler for UnitIntervalSampler {
    fn dim(&self) -> usize {
        1
    }

    fn sample_interior(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.gen_range(0.0..1.0)]
    }

    fn sample_boundary(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let x = if rng.gen_bool(0.5) { 0.0 } else { 1.0 };
        (vec![x], 0.0)
    }
}

/// Stochastic training parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Interior collocation points per iteration.
    pub n0: usize,
    /// Boundary samples per iteration.
    pub nb: usize,
    pub max_iters: usize,
    /// Stop when the mean loss over this many trailing iterations drops
    /// below `stop_threshold`.
    pub stop_window: usize,
    pub stop_threshold: f64,
    pub lr: f64,
    pub use_adam: bool,
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n0: 20,
            nb: 2,
            max_iters: 10_000,
            stop_window: 50,
            stop_threshold: 1e-3,
            lr: 1e-3,
            use_adam: true,
            record_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainRow {
    pub iter: usize,
    pub loss: f64,
    /// Residual sup over the probe set; NaN when no probe is attached.
    pub res_inf_probe: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: MlpParams,
    pub iters: usize,
    pub converged: bool,
    pub history: Vec<TrainRow>,
    pub final_loss_mean: f64,
}

const CHUNK: usize = 8;

/// Stochastic loss of Algorithm-style residual minimization at fixed sample
/// points, with its parameter gradient:
/// `(1/(q N0)) Σ |H(x_j, u(x_j), ∇u(x_j))|^q + (μ_b/(q Nb)) Σ |u(x_b)-g_b|^q`.
pub fn stochastic_loss_and_grad(
    params: &MlpParams,
    ham: &dyn Hamiltonian,
    h: f64,
    lp: &LossParams,
    interior: &[Vec<f64>],
    boundary: &[(Vec<f64>, f64)],
    grads: &mut MlpGrads,
) -> f64 {
    let n0 = interior.len().max(1);
    let nb = boundary.len().max(1);
    let n_items = interior.len() + boundary.len();
    let n_chunks = n_items.div_ceil(CHUNK);
    let worker = |c: usize| -> (Vec<f64>, MlpGrads) {
        let mut chunk_grads = MlpGrads::zeros_like(params);
        let mut terms = Vec::with_capacity(CHUNK);
        let mut tapes: Vec<Tape> = Vec::new();
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(n_items);
        for item in lo..hi {
            if item < interior.len() {
                let x = &interior[item];
                let term = interior_point_term(
                    params,
                    ham,
                    h,
                    lp,
                    x,
                    1.0 / n0 as f64,
                    &mut tapes,
                    &mut chunk_grads,
                );
                terms.push(term / (lp.q * n0 as f64));
            } else {
                let (xb, gb) = &boundary[item - interior.len()];
                if tapes.is_empty() {
                    tapes.push(Tape::default());
                }
                let tape = &mut tapes[0];
                let u = params.forward_tape(xb, tape);
                let m = u - gb;
                let co = lp.mu_b / nb as f64 * lp.weight(m);
                params.backprop(tape, co, &mut chunk_grads);
                terms.push(lp.mu_b / (lp.q * nb as f64) * m.abs().powf(lp.q));
            }
        }
        (terms, chunk_grads)
    };
    let parts = map_runs(n_chunks, worker);
    grads.clear();
    let mut all_terms = Vec::with_capacity(n_items);
    for (terms, part) in &parts {
        all_terms.extend_from_slice(terms);
        grads.add(part);
    }
    pairwise_sum(&all_terms)
}

/// One interior collocation point: evaluates the network on the attached
/// axis stencil, chains the Hamiltonian partials into output cotangents and
/// backpropagates every stencil evaluation. Returns |H|^q (unweighted).
#[allow(clippy::too_many_arguments)]
fn interior_point_term(
    params: &MlpParams,
    ham: &dyn Hamiltonian,
    h: f64,
    lp: &LossParams,
    x: &[f64],
    weight_coeff: f64,
    tapes: &mut Vec<Tape>,
    grads: &mut MlpGrads,
) -> f64 {
    let d = x.len();
    let n_evals = 2 * d + 1;
    while tapes.len() < n_evals {
        tapes.push(Tape::default());
    }
    let stencil = collocation_stencil(x, h);
    let u_c = params.forward_tape(x, &mut tapes[0]);
    let mut p = Vec::with_capacity(2 * d);
    for (s, _) in stencil.offsets.iter().enumerate() {
        let pt = stencil.point(s);
        let u_s = params.forward_tape(&pt, &mut tapes[s + 1]);
        p.push((u_c - u_s) / h);
    }
    let hv = ham.eval(x, u_c, &p);
    let mut dp = vec![0.0; p.len()];
    let du = ham.grad(x, u_c, &p, &mut dp);
    let w = weight_coeff * lp.weight(hv);
    let co_center = w * (du + dp.iter().sum::<f64>() / h);
    params.backprop(&tapes[0], co_center, grads);
    for (s, &dps) in dp.iter().enumerate() {
        params.backprop(&tapes[s + 1], -w * dps / h, grads);
    }
    hv.abs().powf(lp.q)
}

/// Residual sup over a fixed probe set; a cheap convergence indicator for
/// the training log.
pub fn residual_sup_on_probe(
    params: &MlpParams,
    ham: &dyn Hamiltonian,
    h: f64,
    points: &[Vec<f64>],
) -> f64 {
    let mut sup = 0.0f64;
    for x in points {
        let u_c = params.forward(x);
        let stencil = collocation_stencil(x, h);
        let p: Vec<f64> = (0..stencil.offsets.len())
            .map(|s| (u_c - params.forward(&stencil.point(s))) / h)
            .collect();
        sup = sup.max(ham.eval(x, u_c, &p).abs());
    }
    sup
}

/// Stochastic gradient descent on the collocated residual loss, refreshing
/// the sample set every iteration.
pub fn sgd_min_res(
    params: MlpParams,
    ham: &dyn Hamiltonian,
    h: f64,
    lp: &LossParams,
    sampler: &dyn CollocationSampler,
    cfg: &TrainConfig,
    seed: u64,
    probe: Option<&(dyn Fn(&MlpParams) -> f64 + Sync)>,
) -> Result<TrainResult> {
    if cfg.n0 == 0 || cfg.nb == 0 {
        return Err(HjError::InvalidParam("n0 and nb must be >= 1".into()));
    }
    let mut params = params;
    let mut opt = if cfg.use_adam {
        Optimizer::adam(&params, cfg.lr)
    } else {
        Optimizer::Sgd { lr: cfg.lr }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grads = MlpGrads::zeros_like(&params);
    let mut history = Vec::new();
    let mut window: Vec<f64> = Vec::with_capacity(cfg.stop_window);
    let mut window_sum = 0.0;
    let mut converged = false;
    let mut iters = 0;
    let mut mean = f64::INFINITY;
    for k in 0..cfg.max_iters {
        iters = k + 1;
        let interior: Vec<Vec<f64>> = (0..cfg.n0).map(|_| sampler.sample_interior(&mut rng)).collect();
        let boundary: Vec<(Vec<f64>, f64)> =
            (0..cfg.nb).map(|_| sampler.sample_boundary(&mut rng)).collect();
        let loss = stochastic_loss_and_grad(&params, ham, h, lp, &interior, &boundary, &mut grads);
        if !loss.is_finite() {
            return Err(HjError::Divergence {
                iter: k,
                last_finite: Vec::new(),
            });
        }
        if window.len() == cfg.stop_window {
            window_sum -= window.remove(0);
        }
        window.push(loss);
        window_sum += loss;
        mean = window_sum / window.len() as f64;
        if k % cfg.record_every == 0 || k + 1 == cfg.max_iters {
            let probe_val = probe.map(|f| f(&params)).unwrap_or(f64::NAN);
            history.push(TrainRow {
                iter: k,
                loss,
                res_inf_probe: probe_val,
            });
        }
        if window.len() == cfg.stop_window && mean < cfg.stop_threshold {
            converged = true;
            break;
        }
        opt.step(&mut params, &grads);
    }
    Ok(TrainResult {
        params,
        iters,
        converged,
        history,
        final_loss_mean: mean,
    })
}

/// One stage of the network schedule.
#[derive(Debug, Clone)]
pub struct NnStage {
    pub h: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub max_iters: usize,
}

pub fn validate_nn_schedule(stages: &[NnStage]) -> Result<()> {
    if stages.is_empty() {
        return Err(HjError::InvalidParam("empty schedule".into()));
    }
    for w in stages.windows(2) {
        if w[1].h > w[0].h + 1e-15
            || w[1].lambda > w[0].lambda + 1e-15
            || w[1].alpha > w[0].alpha + 1e-15
        {
            return Err(HjError::ScheduleNotMonotone(format!(
                "stage (h={}, lambda={}) follows (h={}, lambda={})",
                w[1].h, w[1].lambda, w[0].h, w[0].lambda
            )));
        }
    }
    Ok(())
}

/// Chains [`sgd_min_res`] over the stages, carrying the parameters across
/// unchanged — the network itself is the interpolant between grids, so no
/// prolongation step is needed.
pub fn multilevel_train<F>(
    params: MlpParams,
    stages: &[NnStage],
    cfg: &TrainConfig,
    lp: &LossParams,
    sampler: &dyn CollocationSampler,
    factory: F,
    seed: u64,
    probe: Option<&(dyn Fn(&MlpParams) -> f64 + Sync)>,
) -> Result<(MlpParams, Vec<TrainResult>)>
where
    F: Fn(&NnStage) -> Box<dyn Hamiltonian>,
{
    validate_nn_schedule(stages)?;
    let mut params = params;
    let mut results = Vec::new();
    for (m, stage) in stages.iter().enumerate() {
        let ham = factory(stage);
        let stage_cfg = TrainConfig {
            max_iters: stage.max_iters,
            ..cfg.clone()
        };
        let out = sgd_min_res(
            params,
            ham.as_ref(),
            stage.h,
            lp,
            sampler,
            &stage_cfg,
            seed.wrapping_add(m as u64),
            probe,
        )?;
        params = out.params.clone();
        results.push(out);
    }
    Ok((params, results))
}

/// Sampling region and batch shape for the obstacle problem.
#[derive(Debug, Clone)]
pub struct ObstacleSampling {
    pub dim: usize,
    /// Drift a0 before normalization; also the per-axis weights of the sums.
    pub a0: Vec<f64>,
    pub t_max: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub batch_interior: usize,
    pub batch_initial: usize,
    pub initial_weight: f64,
}

impl ObstacleSampling {
    pub fn desk_scale(dim: usize) -> Self {
        Self {
            dim,
            a0: vec![1.0; dim],
            t_max: 2.0,
            x_lo: -2.5,
            x_hi: 2.5,
            batch_interior: 512,
            batch_initial: 256,
            initial_weight: 10.0,
        }
    }
}

/// One training phase: a scheme and its (Δx, Δt) rounds.
#[derive(Debug, Clone)]
pub struct ObstaclePhase {
    pub scheme: ObstacleScheme,
    pub rounds: Vec<(f64, f64)>,
    pub iters_per_round: usize,
}

/// Obstacle loss over one batch:
/// `(1/|X|) Σ R(t,x)^2 + (w0/|X0|) Σ (u(0,x) - g(x))^2`, where R is the
/// implicit min-form residual with network-evaluated stencils.
pub fn obstacle_loss_and_grad(
    params: &MlpParams,
    scheme: ObstacleScheme,
    dx: f64,
    dt: f64,
    smp: &ObstacleSampling,
    interior: &[Vec<f64>],
    initial: &[Vec<f64>],
    grads: &mut MlpGrads,
) -> f64 {
    let d = smp.dim;
    let n_items = interior.len() + initial.len();
    let n_chunks = n_items.div_ceil(CHUNK);
    let inv_x = 1.0 / interior.len().max(1) as f64;
    let inv_x0 = smp.initial_weight / initial.len().max(1) as f64;
    let worker = |c: usize| -> (Vec<f64>, MlpGrads) {
        let mut chunk_grads = MlpGrads::zeros_like(params);
        let mut terms = Vec::with_capacity(CHUNK);
        let mut tapes: Vec<Tape> = (0..2 * d + 2).map(|_| Tape::default()).collect();
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(n_items);
        for item in lo..hi {
            if item < interior.len() {
                let tx = &interior[item];
                let term = obstacle_point(
                    params,
                    scheme,
                    dx,
                    dt,
                    smp,
                    tx,
                    inv_x,
                    &mut tapes,
                    &mut chunk_grads,
                );
                terms.push(term);
            } else {
                let x0 = &initial[item - interior.len()];
                let mut z = vec![0.0; d + 1];
                z[1..].copy_from_slice(x0);
                let u = params.forward_tape(&z, &mut tapes[0]);
                let m = u - initial_data(x0, &smp.a0);
                params.backprop(&tapes[0], 2.0 * inv_x0 * m, &mut chunk_grads);
                terms.push(inv_x0 * m * m);
            }
        }
        (terms, chunk_grads)
    };
    let parts = map_runs(n_chunks, worker);
    grads.clear();
    let mut all_terms = Vec::with_capacity(n_items);
    for (terms, part) in &parts {
        all_terms.extend_from_slice(terms);
        grads.add(part);
    }
    pairwise_sum(&all_terms)
}

#[allow(clippy::too_many_arguments)]
fn obstacle_point(
    params: &MlpParams,
    scheme: ObstacleScheme,
    dx: f64,
    dt: f64,
    smp: &ObstacleSampling,
    tx: &[f64],
    inv_x: f64,
    tapes: &mut [Tape],
    grads: &mut MlpGrads,
) -> f64 {
    let d = smp.dim;
    let x = &tx[1..];
    let u_c = params.forward_tape(tx, &mut tapes[0]);
    let mut z_prev = tx.to_vec();
    z_prev[0] -= dt;
    let u_prev = params.forward_tape(&z_prev, &mut tapes[1]);
    // Stencil values per axis; slots 2+2a (backward/minus), 2+2a+1
    // (forward/plus for LxF, two-cells-back for the one-sided scheme).
    let mut s0 = vec![0.0; d];
    let mut s1 = vec![0.0; d];
    for a in 0..d {
        let mut z = tx.to_vec();
        match scheme {
            ObstacleScheme::LaxFriedrichs => {
                z[1 + a] -= dx;
                s0[a] = params.forward_tape(&z, &mut tapes[2 + 2 * a]);
                z[1 + a] += 2.0 * dx;
                s1[a] = params.forward_tape(&z, &mut tapes[2 + 2 * a + 1]);
            }
            ObstacleScheme::OneSided2nd => {
                z[1 + a] -= dx;
                s0[a] = params.forward_tape(&z, &mut tapes[2 + 2 * a]);
                z[1 + a] -= dx;
                s1[a] = params.forward_tape(&z, &mut tapes[2 + 2 * a + 1]);
            }
        }
    }
    let (hval, dh_c, dh_s0, dh_s1) = match scheme {
        // s0 = minus, s1 = plus.
        ObstacleScheme::LaxFriedrichs => {
            let (v, dc, dplus, dminus) = lxf_transport_grad(u_c, &s1, &s0, dx, &smp.a0);
            (v, dc, dminus, dplus)
        }
        ObstacleScheme::OneSided2nd => {
            let (v, dc, db1, db2) = onesided_transport_grad(u_c, &s0, &s1, dx, &smp.a0);
            (v, dc, db1, db2)
        }
    };
    let transport = (u_c - u_prev) / dt + hval;
    let obst = u_c - crate::time::obstacle::default_obstacle(x);
    // Ties take the transport branch.
    let r = transport.min(obst);
    let co = 2.0 * inv_x * r;
    if transport <= obst {
        params.backprop(&tapes[0], co * (1.0 / dt + dh_c), grads);
        params.backprop(&tapes[1], co * (-1.0 / dt), grads);
        for a in 0..d {
            params.backprop(&tapes[2 + 2 * a], co * dh_s0[a], grads);
            params.backprop(&tapes[2 + 2 * a + 1], co * dh_s1[a], grads);
        }
    } else {
        params.backprop(&tapes[0], co, grads);
    }
    inv_x * r * r
}

/// Two-phase obstacle training; a fresh Adam state per round, parameters
/// carried through.
pub fn train_obstacle(
    params: MlpParams,
    phases: &[ObstaclePhase],
    smp: &ObstacleSampling,
    lr: f64,
    seed: u64,
    record_every: usize,
) -> Result<(MlpParams, Vec<TrainRow>)> {
    let mut params = params;
    let mut history = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grads = MlpGrads::zeros_like(&params);
    let mut global_iter = 0usize;
    let d = smp.dim;
    for phase in phases {
        for &(dx, dt) in &phase.rounds {
            let mut opt = Optimizer::adam(&params, lr);
            for _ in 0..phase.iters_per_round {
                let interior: Vec<Vec<f64>> = (0..smp.batch_interior)
                    .map(|_| {
                        let mut z = vec![rng.gen_range(0.0..smp.t_max)];
                        z.extend((0..d).map(|_| rng.gen_range(smp.x_lo..smp.x_hi)));
                        z
                    })
                    .collect();
                let initial: Vec<Vec<f64>> = (0..smp.batch_initial)
                    .map(|_| (0..d).map(|_| rng.gen_range(smp.x_lo..smp.x_hi)).collect())
                    .collect();
                let loss = obstacle_loss_and_grad(
                    &params, phase.scheme, dx, dt, smp, &interior, &initial, &mut grads,
                );
                if !loss.is_finite() {
                    return Err(HjError::Divergence {
                        iter: global_iter,
                        last_finite: Vec::new(),
                    });
                }
                if global_iter % record_every == 0 {
                    history.push(TrainRow {
                        iter: global_iter,
                        loss,
                        res_inf_probe: f64::NAN,
                    });
                }
                opt.step(&mut params, &grads);
                global_iter += 1;
            }
        }
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::LaxFriedrichs1d;
    use crate::mlp::lipschitz_init;

    fn damped_eikonal(lambda: f64) -> LaxFriedrichs1d {
        LaxFriedrichs1d {
            alpha: 1.0,
            lambda,
            source: 1.0,
        }
    }

    #[test]
    fn stochastic_gradient_matches_fd() {
        let params = lipschitz_init(&[1, 8, 8, 1], 1.0, 4).unwrap();
        let ham = damped_eikonal(0.5);
        let lp = LossParams::default();
        let interior = vec![vec![0.31], vec![0.72], vec![0.11]];
        let boundary = vec![(vec![0.0], 0.0), (vec![1.0], 0.0)];
        let mut grads = MlpGrads::zeros_like(&params);
        let loss0 = stochastic_loss_and_grad(
            &params, &ham, 0.05, &lp, &interior, &boundary, &mut grads,
        );
        assert!(loss0.is_finite());
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let eps = 1e-6;
        let mut scratch = MlpGrads::zeros_like(&params);
        for _ in 0..20 {
            let l = rng.gen_range(0..params.weights.len());
            let i = rng.gen_range(0..params.weights[l].len());
            let mut pp = params.clone();
            pp.weights[l][i] += eps;
            let hi =
                stochastic_loss_and_grad(&pp, &ham, 0.05, &lp, &interior, &boundary, &mut scratch);
            pp.weights[l][i] -= 2.0 * eps;
            let lo =
                stochastic_loss_and_grad(&pp, &ham, 0.05, &lp, &interior, &boundary, &mut scratch);
            let fd = (hi - lo) / (2.0 * eps);
            let an = grads.weights[l][i];
            assert!(
                (an - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                "w[{l}][{i}]: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn zero_residual_configuration_has_zero_gradient() {
        // Zero network on a problem whose residual vanishes at zero:
        // H = 0 identically.
        struct Null;
        impl Hamiltonian for Null {
            fn name(&self) -> &str {
                "null"
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
        let mut params = lipschitz_init(&[1, 6, 1], 1.0, 1).unwrap();
        for w in params.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let lp = LossParams::default();
        let mut grads = MlpGrads::zeros_like(&params);
        let loss = stochastic_loss_and_grad(
            &params,
            &Null,
            0.1,
            &lp,
            &[vec![0.4]],
            &[(vec![0.0], 0.0)],
            &mut grads,
        );
        assert_eq!(loss, 0.0);
        assert_eq!(grads.norm(), 0.0);
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let params = lipschitz_init(&[1, 8, 1], 1.0, 3).unwrap();
        let ham = damped_eikonal(2.0);
        let lp = LossParams::default();
        let cfg = TrainConfig {
            max_iters: 25,
            stop_window: 10,
            stop_threshold: 0.0,
            ..TrainConfig::default()
        };
        let a = sgd_min_res(params.clone(), &ham, 0.05, &lp, &UnitIntervalSampler, &cfg, 99, None)
            .unwrap();
        let b = sgd_min_res(params, &ham, 0.05, &lp, &UnitIntervalSampler, &cfg, 99, None)
            .unwrap();
        assert_eq!(a.params.weights, b.params.weights);
        assert_eq!(a.params.biases, b.params.biases);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let params = lipschitz_init(&[1, 8, 1], 1.0, 3).unwrap();
        let before = params.clone();
        let ham = damped_eikonal(2.0);
        let lp = LossParams::default();
        let cfg = TrainConfig {
            max_iters: 5,
            lr: 0.0,
            use_adam: false,
            stop_window: 3,
            stop_threshold: 0.0,
            ..TrainConfig::default()
        };
        let out =
            sgd_min_res(params, &ham, 0.05, &lp, &UnitIntervalSampler, &cfg, 1, None).unwrap();
        assert_eq!(out.params.weights, before.weights);
    }

    #[test]
    fn schedule_must_be_monotone() {
        let stages = vec![
            NnStage {
                h: 0.01,
                lambda: 1.0,
                alpha: 1.0,
                max_iters: 1,
            },
            NnStage {
                h: 0.05,
                lambda: 1.0,
                alpha: 1.0,
                max_iters: 1,
            },
        ];
        assert!(matches!(
            validate_nn_schedule(&stages),
            Err(HjError::ScheduleNotMonotone(_))
        ));
    }

    #[test]
    fn single_stage_schedule_equals_plain_run() {
        let params = lipschitz_init(&[1, 6, 1], 1.0, 8).unwrap();
        let lp = LossParams::default();
        let cfg = TrainConfig {
            max_iters: 10,
            stop_window: 5,
            stop_threshold: 0.0,
            ..TrainConfig::default()
        };
        let stages = vec![NnStage {
            h: 0.05,
            lambda: 2.0,
            alpha: 1.0,
            max_iters: 10,
        }];
        let (theta, results) = multilevel_train(
            params.clone(),
            &stages,
            &cfg,
            &lp,
            &UnitIntervalSampler,
            |s| {
                Box::new(LaxFriedrichs1d {
                    alpha: s.alpha,
                    lambda: s.lambda,
                    source: 1.0,
                })
            },
            42,
            None,
        )
        .unwrap();
        let direct = sgd_min_res(
            params,
            &damped_eikonal(2.0),
            0.05,
            &lp,
            &UnitIntervalSampler,
            &cfg,
            42,
            None,
        )
        .unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(theta.weights, direct.params.weights);
    }

    #[test]
    fn stochastic_loss_is_unbiased_for_piecewise_constant_integrand() {
        // H depends only on x: c1 on [0, a), c2 on [a, 1]. With the zero
        // network the expected stochastic loss is the exact integral
        // (1/q)(a c1^q + (1-a) c2^q) plus the (zero) boundary part.
        struct PiecewiseConstant {
            a: f64,
            c1: f64,
            c2: f64,
        }
        impl Hamiltonian for PiecewiseConstant {
            fn name(&self) -> &str {
                "pc"
            }
            fn lambda(&self) -> f64 {
                0.0
            }
            fn eval(&self, x: &[f64], _u: f64, _p: &[f64]) -> f64 {
                if x[0] < self.a {
                    self.c1
                } else {
                    self.c2
                }
            }
            fn grad(&self, _x: &[f64], _u: f64, _p: &[f64], dp: &mut [f64]) -> f64 {
                dp.iter_mut().for_each(|d| *d = 0.0);
                0.0
            }
        }
        let ham = PiecewiseConstant {
            a: 0.3,
            c1: 2.0,
            c2: 0.5,
        };
        let mut params = lipschitz_init(&[1, 4, 1], 1.0, 0).unwrap();
        for w in params.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let lp = LossParams::default();
        let exact = 0.5 * (0.3 * 4.0 + 0.7 * 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut grads = MlpGrads::zeros_like(&params);
        let draws = 10_000;
        let mut losses = Vec::with_capacity(draws);
        for _ in 0..draws {
            let interior: Vec<Vec<f64>> =
                (0..20).map(|_| UnitIntervalSampler.sample_interior(&mut rng)).collect();
            let boundary: Vec<(Vec<f64>, f64)> =
                (0..2).map(|_| UnitIntervalSampler.sample_boundary(&mut rng)).collect();
            losses.push(stochastic_loss_and_grad(
                &params, &ham, 0.05, &lp, &interior, &boundary, &mut grads,
            ));
        }
        let mean: f64 = losses.iter().sum::<f64>() / draws as f64;
        let var: f64 =
            losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se + 1e-12,
            "mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn obstacle_gradient_matches_fd() {
        let params = lipschitz_init(&[3, 8, 1], 1.0, 13).unwrap();
        let smp = ObstacleSampling {
            batch_interior: 3,
            batch_initial: 2,
            ..ObstacleSampling::desk_scale(2)
        };
        let interior = vec![
            vec![0.7, 0.4, -0.3],
            vec![1.2, -1.0, 0.8],
            vec![0.3, 1.4, 1.1],
        ];
        let initial = vec![vec![0.2, -0.5], vec![-1.2, 0.4]];
        for scheme in [ObstacleScheme::LaxFriedrichs, ObstacleScheme::OneSided2nd] {
            let mut grads = MlpGrads::zeros_like(&params);
            let l0 = obstacle_loss_and_grad(
                &params, scheme, 0.2, 0.1, &smp, &interior, &initial, &mut grads,
            );
            assert!(l0.is_finite());
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut scratch = MlpGrads::zeros_like(&params);
            let eps = 1e-6;
            for _ in 0..12 {
                let l = rng.gen_range(0..params.weights.len());
                let i = rng.gen_range(0..params.weights[l].len());
                let mut pp = params.clone();
                pp.weights[l][i] += eps;
                let hi = obstacle_loss_and_grad(
                    &pp, scheme, 0.2, 0.1, &smp, &interior, &initial, &mut scratch,
                );
                pp.weights[l][i] -= 2.0 * eps;
                let lo = obstacle_loss_and_grad(
                    &pp, scheme, 0.2, 0.1, &smp, &interior, &initial, &mut scratch,
                );
                let fd = (hi - lo) / (2.0 * eps);
                let an = grads.weights[l][i];
                assert!(
                    (an - fd).abs() <= 2e-5 * (1.0 + fd.abs()),
                    "{scheme:?} w[{l}][{i}]: {an} vs {fd}"
                );
            }
        }
    }
}
