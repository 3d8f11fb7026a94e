//! Cold gradient-descent runs per grid size, the multilevel schedule, and
//! the Jacobian conditioning report at the stalled iterate.

use std::fmt::Write as _;

use hjres::exec::map_runs;
use hjres::grid::{build_interval_grid, dump_field};
use hjres::hamiltonian::{Hamiltonian, LaxFriedrichs1d};
use hjres::jacobian::{condition_report, smallest_cluster, assemble_jacobian};
use hjres::residual::LossParams;
use hjres::solve::{gradient_descent, multilevel_solve, ScheduleStage, SolveConfig};

use crate::config::Config;
use crate::output::RunDir;
use crate::CliError;

pub fn run(cfg: &Config, dir: &RunDir) -> Result<(), CliError> {
    let c = &cfg.eikonal1d_grid;
    let lp = LossParams::new(c.q, c.mu_b, 1.0)?;
    let solve_cfg = SolveConfig {
        step: c.step,
        max_iters: c.max_iters,
        tol_inf: c.tol_inf,
        record_every: c.record_every,
    };
    let ham = LaxFriedrichs1d {
        alpha: c.alpha,
        lambda: c.lambda,
        source: c.source,
    };
    let mut summary = String::new();

    // Cold starts, one job per grid size.
    let runs = map_runs(c.grid_sizes.len(), |i| -> Result<_, hjres::HjError> {
        let n = c.grid_sizes[i];
        let g = build_interval_grid(n)?;
        let bvals = vec![0.0; g.n_nodes()];
        let out = gradient_descent(&vec![0.0; g.n_nodes()], &g, &ham, &bvals, &lp, &solve_cfg)?;
        Ok((n, g, out))
    });
    let mut stalled = None;
    for run in runs {
        let (n, g, out) = run?;
        dir.write_history_csv(&format!("gd_n{n}.csv"), &out.history)?;
        let mut f = dir.file(&format!("field_n{n}.txt"))?;
        dump_field(&g, &out.u, &mut f)?;
        writeln!(
            summary,
            "cold n={n}: converged={} iters={} res_inf={:.3e}",
            out.converged, out.iters, out.final_res_inf
        )
        .unwrap();
        if !out.converged {
            stalled = Some((n, g, out));
        }
    }

    // Conditioning at the (finest) stalled iterate.
    if let Some((n, g, out)) = &stalled {
        let rep = condition_report(&out.u, g, &ham, &lp)?;
        let jac = assemble_jacobian(&out.u, g, &ham, &lp)?;
        let cluster = smallest_cluster(&jac, 1e-6)?;
        let mut text = format!(
            "stalled run n={n}\nmu={}\nmargin={}\neig_min={}\neig_max={}\nkappa={}\n\
             smallest_cluster_size={}\n",
            rep.mu,
            rep.margin,
            rep.eig_min,
            rep.eig_max,
            rep.kappa_estimate,
            cluster.len()
        );
        for (k, pair) in cluster.iter().enumerate() {
            writeln!(text, "eig[{k}] = {} + {}i", pair.value.re, pair.value.im).unwrap();
            let mut f = dir.file(&format!("eigvec_{k}.txt"))?;
            dump_field(g, &pair.vector, &mut f)?;
        }
        dir.write_text("jacobian_report.txt", &text)?;
        writeln!(summary, "stalled n={n}: eig_min={:.4}", rep.eig_min).unwrap();
    } else {
        writeln!(summary, "no stalled run; jacobian report skipped").unwrap();
    }

    // Multilevel schedule over the configured grid sizes.
    let stages: Vec<ScheduleStage> = c
        .schedule
        .iter()
        .map(|&n| ScheduleStage::new(1.0 / n as f64, c.lambda, c.alpha))
        .collect();
    let ml = multilevel_solve(&stages, &solve_cfg, &lp, |stage| {
        let n = (1.0 / stage.h).round() as usize;
        let g = build_interval_grid(n)?;
        let bvals = vec![0.0; g.n_nodes()];
        Ok((
            g,
            Box::new(LaxFriedrichs1d {
                alpha: stage.alpha,
                lambda: stage.lambda,
                source: c.source,
            }) as Box<dyn Hamiltonian>,
            bvals,
        ))
    })?;
    for (i, stage) in ml.stages.iter().enumerate() {
        dir.write_history_csv(&format!("multilevel_stage{i}.csv"), &stage.result.history)?;
    }
    {
        let n_final = *c.schedule.last().unwrap();
        let g = build_interval_grid(n_final)?;
        let mut f = dir.file("field_multilevel.txt")?;
        dump_field(&g, &ml.u_final, &mut f)?;
    }
    let final_ok = ml.stages.last().map(|s| s.result.converged).unwrap_or(false);
    writeln!(
        summary,
        "multilevel: total_iters={} final_converged={final_ok}",
        ml.total_iters
    )
    .unwrap();
    dir.write_text("summary.txt", &summary)?;
    print!("{summary}");
    if !final_ok {
        return Err(CliError::NonConvergence(
            "multilevel schedule did not reach tol on the finest grid".into(),
        ));
    }
    Ok(())
}
