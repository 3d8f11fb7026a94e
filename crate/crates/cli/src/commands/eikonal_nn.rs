//! Seeded repetitions of the network training on the 1D damped eikonal
//! equation: fixed-spacing baselines against the 4-stage schedule, with
//! per-seed sup errors after the Kruzhkov inversion.

use std::fmt::Write as _;

use hjres::exec::map_runs;
use hjres::hamiltonian::LaxFriedrichs1d;
use hjres::kruzhkov;
use hjres::mlp::train::{
    multilevel_train, sgd_min_res, NnStage, TrainConfig, UnitIntervalSampler,
};
use hjres::mlp::{lipschitz_init, MlpParams};
use hjres::residual::LossParams;

use crate::commands::distance_to_boundary;
use crate::config::{Config, EikonalNnConfig};
use crate::output::RunDir;
use crate::CliError;

pub struct SeedOutcome {
    pub seed: u64,
    pub final_error: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Sup error of the Kruzhkov-inverted network against min(x, 1-x) on a
/// uniform evaluation grid. The clamped inverse keeps bad networks finite
/// (they simply report a large error).
pub fn final_error(params: &MlpParams, lambda: f64, eval_points: usize) -> f64 {
    let mut err = 0.0f64;
    for i in 0..eval_points {
        let x = i as f64 / (eval_points - 1) as f64;
        let u = params.forward(&[x]);
        let v = kruzhkov::inverse_clamped(u, lambda, kruzhkov::DEFAULT_CLAMP_FLOOR);
        err = err.max((v - distance_to_boundary(x)).abs());
    }
    err
}

fn train_cfg(c: &EikonalNnConfig) -> TrainConfig {
    TrainConfig {
        n0: c.n0,
        nb: 2,
        max_iters: c.max_iters,
        stop_window: c.stop_window,
        stop_threshold: c.stop_threshold,
        lr: c.lr,
        use_adam: true,
        record_every: c.record_every,
    }
}

fn net_sizes(c: &EikonalNnConfig) -> Vec<usize> {
    let mut sizes = vec![1];
    sizes.extend_from_slice(&c.hidden);
    sizes.push(1);
    sizes
}

/// One fixed-spacing training run.
pub fn run_fixed_seed(c: &EikonalNnConfig, dx: f64, seed: u64) -> Result<SeedOutcome, CliError> {
    let ham = LaxFriedrichs1d {
        alpha: c.alpha,
        lambda: c.lambda,
        source: 1.0,
    };
    let lp = LossParams::new(2.0, c.mu_b, 1.0)?;
    let params = lipschitz_init(&net_sizes(c), c.lipschitz_init, seed)?;
    let out = sgd_min_res(
        params,
        &ham,
        dx,
        &lp,
        &UnitIntervalSampler,
        &train_cfg(c),
        seed,
        None,
    )?;
    Ok(SeedOutcome {
        seed,
        final_error: final_error(&out.params, c.lambda, c.eval_points),
        iters: out.iters,
        converged: out.converged,
    })
}

/// One run of the multilevel schedule (λ and Δx decreasing together).
pub fn run_schedule_seed(c: &EikonalNnConfig, seed: u64) -> Result<SeedOutcome, CliError> {
    let stages: Vec<NnStage> = c
        .schedule_dx
        .iter()
        .zip(&c.schedule_lambda)
        .map(|(&h, &lambda)| NnStage {
            h,
            lambda,
            alpha: c.alpha,
            max_iters: c.max_iters,
        })
        .collect();
    let lp = LossParams::new(2.0, c.mu_b, 1.0)?;
    let params = lipschitz_init(&net_sizes(c), c.lipschitz_init, seed)?;
    let (theta, results) = multilevel_train(
        params,
        &stages,
        &train_cfg(c),
        &lp,
        &UnitIntervalSampler,
        |s| {
            Box::new(LaxFriedrichs1d {
                alpha: s.alpha,
                lambda: s.lambda,
                source: 1.0,
            })
        },
        seed,
        None,
    )?;
    let iters = results.iter().map(|r| r.iters).sum();
    let converged = results.last().map(|r| r.converged).unwrap_or(false);
    Ok(SeedOutcome {
        seed,
        final_error: final_error(&theta, c.lambda, c.eval_points),
        iters,
        converged,
    })
}

pub fn summarize(outcomes: &[SeedOutcome]) -> (f64, f64) {
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.final_error).sum::<f64>() / n;
    let var = outcomes
        .iter()
        .map(|o| (o.final_error - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn write_csv(dir: &RunDir, name: &str, outcomes: &[SeedOutcome]) -> Result<(), CliError> {
    use std::io::Write;
    let mut f = dir.file(name)?;
    writeln!(f, "seed,final_error,iters,converged")?;
    for o in outcomes {
        writeln!(f, "{},{},{},{}", o.seed, o.final_error, o.iters, o.converged)?;
    }
    Ok(())
}

pub fn run(cfg: &Config, dir: &RunDir) -> Result<(), CliError> {
    let c = &cfg.eikonal1d_nn;
    let mut summary = String::new();
    for (k, &dx) in c.fixed_dx.iter().enumerate() {
        let outcomes = map_runs(c.n_seeds, |s| {
            run_fixed_seed(c, dx, cfg.seed.wrapping_add(1000 * (k as u64 + 1) + s as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        write_csv(dir, &format!("fixed_dx{k}.csv"), &outcomes)?;
        let (mean, std) = summarize(&outcomes);
        writeln!(summary, "fixed dx={dx}: mean_err={mean:.4} std={std:.4}").unwrap();
    }
    let outcomes = map_runs(c.n_seeds, |s| {
        run_schedule_seed(c, cfg.seed.wrapping_add(s as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_csv(dir, "schedule.csv", &outcomes)?;
    let (mean, std) = summarize(&outcomes);
    writeln!(summary, "schedule: mean_err={mean:.4} std={std:.4}").unwrap();
    dir.write_text("summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}
