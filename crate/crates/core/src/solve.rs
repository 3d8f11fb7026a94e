//! Steady solvers: full gradient descent on the loss, damped Newton on the
//! residual (the uniqueness oracle), multilevel warm-start schedules, and the
//! a-posteriori stability bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HjError, Result};
use crate::exec::map_runs;
use crate::grid::GridGraph;
use crate::hamiltonian::Hamiltonian;
use crate::jacobian::assemble_jacobian;
use crate::linsolve::{bicgstab, solve_dense, Csr, DENSE_LIMIT};
use crate::residual::{loss_and_gradient, residual_steady, LossParams, ResidualVector};

/// Gradient-descent parameters. Defaults follow the 1D experiments:
/// step 1e-3, budget 1e5, stop at ||R||_inf < 1e-3.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub step: f64,
    pub max_iters: usize,
    pub tol_inf: f64,
    pub record_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_iters: 100_000,
            tol_inf: 1e-3,
            record_every: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: f64,
    pub res_inf: f64,
}

#[derive(Debug, Clone)]
pub struct GdResult {
    pub u: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub iters: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub final_res_inf: f64,
    /// Set when the loss increased at some step; the run is flagged rather
    /// than failed because monotonicity depends on the step size versus the
    /// local Lipschitz constant.
    pub loss_rose: bool,
}

/// Plain gradient descent `u <- u - η ∇L(u)` with the stopping rule
/// `||R(u)||_inf < tol`.
pub fn gradient_descent(
    u0: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
    cfg: &SolveConfig,
) -> Result<GdResult> {
    let mut u = u0.to_vec();
    let mut last_good = u.clone();
    let mut history = Vec::new();
    let mut prev_loss = f64::INFINITY;
    let mut loss_rose = false;
    let mut iter = 0;
    loop {
        let (r, l, grad) = loss_and_gradient(&u, g, ham, bvals, lp)?;
        if !l.is_finite() {
            return Err(HjError::Divergence {
                iter,
                last_finite: last_good,
            });
        }
        last_good.copy_from_slice(&u);
        let res_inf = r.inf_norm();
        if l > prev_loss * (1.0 + 1e-12) {
            loss_rose = true;
        }
        prev_loss = l;
        let converged = res_inf < cfg.tol_inf;
        if converged || iter == cfg.max_iters || iter % cfg.record_every == 0 {
            history.push(HistoryRow {
                iter,
                loss: l,
                res_inf,
            });
        }
        if converged || iter == cfg.max_iters {
            return Ok(GdResult {
                u,
                history,
                iters: iter,
                converged,
                final_loss: l,
                final_res_inf: res_inf,
                loss_rose,
            });
        }
        for (ui, gi) in u.iter_mut().zip(&grad) {
            *ui -= cfg.step * gi;
        }
        iter += 1;
    }
}

/// Newton parameters.
#[derive(Debug, Clone)]
pub struct NewtonConfig {
    pub tol_inf: f64,
    pub max_iters: usize,
    /// When set, boundary values are fixed to the data and the linear solves
    /// run on the interior block only.
    pub pin_boundary: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_inf: 1e-12,
            max_iters: 200,
            pin_boundary: false,
        }
    }
}

const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton on R(u) = 0 with backtracking on ||R||_2 (halving factor,
/// minimum step 2^-30). If the line search stalls at a kink, the iterate is
/// perturbed once by 1e-10 along -∇L before declaring failure.
pub fn newton_solve(
    u0: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
    cfg: &NewtonConfig,
) -> Result<Vec<f64>> {
    let n = g.n_nodes();
    if u0.len() != n {
        return Err(HjError::SizeMismatch(format!(
            "initial guess {} entries for {} nodes",
            u0.len(),
            n
        )));
    }
    let mut u = u0.to_vec();
    if cfg.pin_boundary {
        for &j in g.boundary() {
            u[j] = bvals[j];
        }
    }
    // Map between global node indices and unknown slots.
    let unknowns: Vec<usize> = if cfg.pin_boundary {
        g.interior().to_vec()
    } else {
        (0..n).collect()
    };
    let mut slot_of = vec![usize::MAX; n];
    for (s, &j) in unknowns.iter().enumerate() {
        slot_of[j] = s;
    }

    let residual_norms = |r: &ResidualVector| -> (f64, f64) {
        if cfg.pin_boundary {
            let vals: Vec<f64> = unknowns.iter().map(|&j| r.values[j]).collect();
            (crate::exec::inf_norm(&vals), l2_norm(&vals))
        } else {
            (r.inf_norm(), l2_norm(&r.values))
        }
    };

    let mut perturbed = false;
    let mut best_res = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let r = residual_steady(&u, g, ham, bvals, lp)?;
        let (r_inf, r_l2) = residual_norms(&r);
        best_res = best_res.min(r_inf);
        if r_inf <= cfg.tol_inf {
            return Ok(u);
        }
        let jac = assemble_jacobian(&u, g, ham, lp)?;
        let rows: Vec<Vec<(usize, f64)>> = unknowns
            .iter()
            .map(|&j| {
                jac.rows[j]
                    .iter()
                    .filter_map(|&(k, v)| {
                        let s = slot_of[k];
                        (s != usize::MAX).then_some((s, v))
                    })
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = unknowns.iter().map(|&j| -r.values[j]).collect();
        let delta = if unknowns.len() <= DENSE_LIMIT {
            solve_dense(Csr::from_rows(&rows).to_dense(), &rhs)?
        } else {
            bicgstab(&Csr::from_rows(&rows), &rhs, 1e-12, 40 * unknowns.len())?
        };

        let mut t = 1.0;
        let mut stepped = false;
        while t >= MIN_STEP {
            let mut u_try = u.clone();
            for (s, &j) in unknowns.iter().enumerate() {
                u_try[j] += t * delta[s];
            }
            let r_try = residual_steady(&u_try, g, ham, bvals, lp)?;
            let (_, l2_try) = residual_norms(&r_try);
            if l2_try <= (1.0 - 1e-4 * t) * r_l2 {
                u = u_try;
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if !stepped {
            if perturbed {
                return Err(HjError::NewtonStall {
                    iters: cfg.max_iters,
                    best_res,
                });
            }
            // One nudge along -∇L to leave the kink, then keep iterating.
            perturbed = true;
            let (_, _, grad) = loss_and_gradient(&u, g, ham, bvals, lp)?;
            let gn = crate::exec::inf_norm(&grad).max(f64::MIN_POSITIVE);
            for &j in &unknowns {
                u[j] -= 1e-10 * grad[j] / gn;
            }
        }
    }
    let r = residual_steady(&u, g, ham, bvals, lp)?;
    let (r_inf, _) = residual_norms(&r);
    if r_inf <= cfg.tol_inf {
        return Ok(u);
    }
    Err(HjError::NewtonStall {
        iters: cfg.max_iters,
        best_res: best_res.min(r_inf),
    })
}

/// Runs Newton from several initial points in parallel; used by the
/// uniqueness checks.
pub fn newton_multistart(
    starts: &[Vec<f64>],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    bvals: &[f64],
    lp: &LossParams,
    cfg: &NewtonConfig,
) -> Vec<Result<Vec<f64>>> {
    map_runs(starts.len(), |i| {
        newton_solve(&starts[i], g, ham, bvals, lp, cfg)
    })
}

/// One stage of the multilevel schedule. `h`, `lambda` and `alpha` must be
/// non-increasing across stages.
#[derive(Debug, Clone)]
pub struct ScheduleStage {
    pub h: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub step: Option<f64>,
    pub max_iters: Option<usize>,
}

impl ScheduleStage {
    pub fn new(h: f64, lambda: f64, alpha: f64) -> Self {
        Self {
            h,
            lambda,
            alpha,
            step: None,
            max_iters: None,
        }
    }
}

pub fn validate_schedule(stages: &[ScheduleStage]) -> Result<()> {
    if stages.is_empty() {
        return Err(HjError::InvalidParam("empty schedule".into()));
    }
    for w in stages.windows(2) {
        if w[1].h > w[0].h + 1e-15 || w[1].lambda > w[0].lambda + 1e-15 || w[1].alpha > w[0].alpha + 1e-15
        {
            return Err(HjError::ScheduleNotMonotone(format!(
                "stage (h={}, lambda={}, alpha={}) follows (h={}, lambda={}, alpha={})",
                w[1].h, w[1].lambda, w[1].alpha, w[0].h, w[0].lambda, w[0].alpha
            )));
        }
    }
    Ok(())
}

/// Piecewise-constant prolongation: each fine node takes the value of the
/// nearest coarse lattice node to its left along every axis.
pub fn prolong_left_nearest(
    u_coarse: &[f64],
    coarse: &GridGraph,
    fine: &GridGraph,
) -> Result<Vec<f64>> {
    let clat = coarse
        .lattice()
        .ok_or_else(|| HjError::InvalidGrid("coarse grid has no lattice metadata".into()))?;
    let dim = coarse.dim();
    if fine.dim() != dim {
        return Err(HjError::SizeMismatch("grid dimensions differ".into()));
    }
    let mut out = Vec::with_capacity(fine.n_nodes());
    let mut multi = vec![0usize; dim];
    for j in 0..fine.n_nodes() {
        let x = fine.coord(j);
        for a in 0..dim {
            let t = (x[a] - clat.lo[a]) / clat.spacing[a] + 1e-9;
            multi[a] = (t.floor().max(0.0) as usize).min(clat.steps[a]);
        }
        out.push(u_coarse[clat.flat_index(&multi)]);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: ScheduleStage,
    pub result: GdResult,
}

#[derive(Debug, Clone)]
pub struct MultilevelResult {
    pub stages: Vec<StageOutcome>,
    pub total_iters: usize,
    pub u_final: Vec<f64>,
}

/// Runs gradient descent per stage, prolonging each converged field onto the
/// next (finer) grid. The builder maps a stage onto its grid, Hamiltonian,
/// and boundary data.
pub fn multilevel_solve<B>(
    stages: &[ScheduleStage],
    base_cfg: &SolveConfig,
    lp: &LossParams,
    mut build: B,
) -> Result<MultilevelResult>
where
    B: FnMut(&ScheduleStage) -> Result<(GridGraph, Box<dyn Hamiltonian>, Vec<f64>)>,
{
    validate_schedule(stages)?;
    let mut outcomes: Vec<StageOutcome> = Vec::new();
    let mut total = 0;
    let mut prev: Option<(GridGraph, Vec<f64>)> = None;
    for stage in stages {
        let (g, ham, bvals) = build(stage)?;
        let u0 = match &prev {
            None => vec![0.0; g.n_nodes()],
            Some((cg, cu)) => prolong_left_nearest(cu, cg, &g)?,
        };
        let cfg = SolveConfig {
            step: stage.step.unwrap_or(base_cfg.step),
            max_iters: stage.max_iters.unwrap_or(base_cfg.max_iters),
            ..base_cfg.clone()
        };
        let result = gradient_descent(&u0, &g, ham.as_ref(), &bvals, lp, &cfg)?;
        total += result.iters;
        prev = Some((g, result.u.clone()));
        outcomes.push(StageOutcome {
            stage: stage.clone(),
            result,
        });
    }
    let u_final = prev.map(|(_, u)| u).unwrap_or_default();
    Ok(MultilevelResult {
        stages: outcomes,
        total_iters: total,
        u_final,
    })
}

/// Discrete stability bound: `||u - v||_inf <= max(bdiff, r_inf / lambda)`,
/// with `r_inf` the sup of the unscaled interior scheme values of u and
/// `bdiff` the boundary-data gap.
pub fn stability_bound(r_inf: f64, b_diff: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(HjError::InapplicableBound(lambda));
    }
    Ok(b_diff.max(r_inf / lambda))
}

/// Monte-Carlo a-posteriori estimate for a continuous candidate: the sup of
/// the collocated scheme residual over `n_mc` uniform interior points and
/// the boundary mismatch over face samples. Sample maxima under-estimate the
/// true sup, and the report says so.
#[derive(Debug, Clone)]
pub struct AposterioriReport {
    /// Max |H| over the sampled interior stencils (a lower estimate of the sup).
    pub sup_residual: f64,
    /// Max boundary mismatch over the sampled face points.
    pub sup_boundary: f64,
    /// max(sup_residual / lambda, sup_boundary).
    pub bound: f64,
}

pub fn aposteriori_report(
    candidate: &(dyn Fn(&[f64]) -> f64 + Sync),
    lo: &[f64],
    hi: &[f64],
    h: f64,
    ham: &dyn Hamiltonian,
    bdata: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_mc: usize,
    seed: u64,
) -> Result<AposterioriReport> {
    let lambda = ham.lambda();
    if !(lambda > 0.0) {
        return Err(HjError::InapplicableBound(lambda));
    }
    let d = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut p = vec![0.0; 2 * d];
    let mut sup_res = 0.0f64;
    for _ in 0..n_mc {
        for a in 0..d {
            x[a] = rng.gen_range(lo[a]..hi[a]);
        }
        let uc = candidate(&x);
        for a in 0..d {
            for (s, sign) in [-1.0, 1.0].into_iter().enumerate() {
                let mut y = x.clone();
                y[a] += sign * h;
                p[2 * a + s] = (uc - candidate(&y)) / h;
            }
        }
        sup_res = sup_res.max(ham.eval(&x, uc, &p).abs());
    }
    let mut sup_bdry = 0.0f64;
    for _ in 0..n_mc {
        let axis = rng.gen_range(0..d);
        let side = rng.gen_range(0..2);
        for a in 0..d {
            x[a] = if a == axis {
                if side == 0 {
                    lo[a]
                } else {
                    hi[a]
                }
            } else {
                rng.gen_range(lo[a]..hi[a])
            };
        }
        sup_bdry = sup_bdry.max((candidate(&x) - bdata(&x)).abs());
    }
    Ok(AposterioriReport {
        sup_residual: sup_res,
        sup_boundary: sup_bdry,
        bound: (sup_res / lambda).max(sup_bdry),
    })
}
