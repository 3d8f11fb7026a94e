//! Level-set obstacle problem with the network interpolant: two-phase
//! schedule (Lax-Friedrichs rounds, then one-sided refinement), level-set
//! slice dumps, and the complementarity report.

use std::fmt::Write as _;

use hjres::levelset::{hausdorff, zero_crossings, SampledField};
use hjres::mlp::train::{train_obstacle, ObstaclePhase, ObstacleSampling};
use hjres::mlp::{lipschitz_init, MlpParams};
use hjres::time::obstacle::{default_obstacle, initial_data, ObstacleScheme};

use crate::config::{Config, ObstacleConfig};
use crate::output::RunDir;
use crate::CliError;

pub fn net_sizes(c: &ObstacleConfig) -> Vec<usize> {
    let mut sizes = vec![1 + c.dim];
    sizes.extend_from_slice(&c.hidden);
    sizes.push(1);
    sizes
}

pub fn phases(c: &ObstacleConfig) -> Vec<ObstaclePhase> {
    vec![
        ObstaclePhase {
            scheme: ObstacleScheme::LaxFriedrichs,
            rounds: c.lxf_dx.iter().copied().zip(c.lxf_dt.iter().copied()).collect(),
            iters_per_round: c.iters_per_round,
        },
        ObstaclePhase {
            scheme: ObstacleScheme::OneSided2nd,
            rounds: c
                .onesided_dx
                .iter()
                .copied()
                .zip(c.onesided_dt.iter().copied())
                .collect(),
            iters_per_round: c.iters_per_round,
        },
    ]
}

/// Samples u(t, x1, x2, 0, …, 0) on the central 2D slice of the box.
pub fn slice_field(params: &MlpParams, dim: usize, t: f64, eval_h: f64) -> SampledField {
    let n = (4.0 / eval_h).round() as usize + 1;
    SampledField::from_fn(-2.0, -2.0, eval_h, n, n, |x, y| {
        let mut z = vec![0.0; 1 + dim];
        z[0] = t;
        z[1] = x;
        z[2] = y;
        params.forward(&z)
    })
}

/// Worst violation of u >= Ψ over the slice grids at the given times.
pub fn complementarity_violation(
    params: &MlpParams,
    dim: usize,
    times: &[f64],
    eval_h: f64,
) -> f64 {
    let n = (4.0 / eval_h).round() as usize + 1;
    let mut worst = 0.0f64;
    for &t in times {
        for i in 0..n {
            for j in 0..n {
                let x = -2.0 + eval_h * i as f64;
                let y = -2.0 + eval_h * j as f64;
                let mut z = vec![0.0; 1 + dim];
                z[0] = t;
                z[1] = x;
                z[2] = y;
                let mut xs = vec![0.0; dim];
                xs[0] = x;
                xs[1] = y;
                worst = worst.max(default_obstacle(&xs) - params.forward(&z));
            }
        }
    }
    worst
}

/// Hausdorff distance between the network's t=0 zero level set and the
/// analytic initial contour, both extracted on the same evaluation grid.
pub fn initial_contour_distance(params: &MlpParams, c: &ObstacleConfig) -> f64 {
    let nn_field = slice_field(params, c.dim, 0.0, c.eval_h);
    let n = (4.0 / c.eval_h).round() as usize + 1;
    let a0 = vec![1.0; c.dim];
    let exact = SampledField::from_fn(-2.0, -2.0, c.eval_h, n, n, |x, y| {
        let mut xs = vec![0.0; c.dim];
        xs[0] = x;
        xs[1] = y;
        initial_data(&xs, &a0)
    });
    hausdorff(&zero_crossings(&nn_field), &zero_crossings(&exact))
}

pub fn run(cfg: &Config, dir: &RunDir) -> Result<(), CliError> {
    let c = &cfg.obstacle;
    let smp = ObstacleSampling {
        batch_interior: c.batch_interior,
        batch_initial: c.batch_initial,
        initial_weight: c.initial_weight,
        ..ObstacleSampling::desk_scale(c.dim)
    };
    let params = lipschitz_init(&net_sizes(c), c.lipschitz_init, cfg.seed)?;
    let (theta, history) = train_obstacle(params, &phases(c), &smp, c.lr, cfg.seed, c.record_every)?;
    {
        use std::io::Write;
        let mut f = dir.file("training_log.csv")?;
        writeln!(f, "iter,loss,res_inf_probe")?;
        for r in &history {
            writeln!(f, "{},{},{}", r.iter, r.loss, r.res_inf_probe)?;
        }
    }
    let mut summary = String::new();
    for &t in &c.slice_times {
        let field = slice_field(&theta, c.dim, t, c.eval_h);
        use std::io::Write;
        let mut f = dir.file(&format!("levelset_t{t}.txt"))?;
        for i in 0..field.nx {
            for j in 0..field.ny {
                let x = field.x0 + c.eval_h * i as f64;
                let y = field.y0 + c.eval_h * j as f64;
                writeln!(f, "{x} {y} {}", field.values[i * field.ny + j])?;
            }
        }
        let pts = zero_crossings(&field);
        let mut f = dir.file(&format!("contour_t{t}.csv"))?;
        writeln!(f, "x,y")?;
        for (x, y) in &pts {
            writeln!(f, "{x},{y}")?;
        }
    }
    let violation = complementarity_violation(&theta, c.dim, &c.slice_times, c.eval_h);
    let contour_dist = initial_contour_distance(&theta, c);
    writeln!(summary, "complementarity_violation={violation:.4e}").unwrap();
    writeln!(summary, "initial_contour_hausdorff={contour_dist:.4e}").unwrap();
    writeln!(summary, "eval_h={} (tolerance reference 2*eval_h={})", c.eval_h, 2.0 * c.eval_h)
        .unwrap();
    dir.write_text("summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}
