//! Sparse Jacobian of the residual map, diagonal-dominance margins, and
//! extreme eigenvalues for conditioning studies.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{HjError, Result};
use crate::exec::{map_indices, map_indices_seq};
use crate::grid::{graph_gradient_into, GridGraph};
use crate::hamiltonian::Hamiltonian;
use crate::linsolve::{bicgstab, Csr};
use crate::residual::{scales, LossParams};

/// Row-compressed Jacobian DR(u), ordered like the grid's node indices.
/// Interior rows hold the diagonal first and then one entry per neighbor
/// slot; boundary rows hold a single diagonal equal to `(μ_b/N)^{1/q}`.
#[derive(Debug, Clone)]
pub struct SparseJacobian {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub m: usize,
    pub n_b: usize,
}

impl SparseJacobian {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (j, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                a[(j, k)] += v;
            }
        }
        a
    }

    pub fn to_csr(&self) -> Csr {
        Csr::from_rows(&self.rows)
    }

    /// y = J x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, v)| v * x[k]).sum())
            .collect()
    }

    /// y = J^T x.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (j, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                y[k] += v * x[j];
            }
        }
        y
    }
}

fn assemble_impl(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    lp: &LossParams,
    sequential: bool,
) -> Result<SparseJacobian> {
    if u.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch(format!(
            "field {} entries for a grid of {} nodes",
            u.len(),
            g.n_nodes()
        )));
    }
    if g.interior().is_empty() {
        return Err(HjError::InvalidGrid("grid has no interior nodes".into()));
    }
    let m = g.interior().len();
    let n_b = g.boundary().len();
    let (si, sb) = scales(m, n_b, lp);
    let row = |j: usize| -> Vec<(usize, f64)> {
        if !g.is_interior(j) {
            return vec![(j, sb)];
        }
        let mut p = Vec::with_capacity(g.degree());
        graph_gradient_into(u, j, g, &mut p);
        let mut dp = vec![0.0; p.len()];
        let du = ham.grad_at(j, g.coord(j), u[j], &p, &mut dp);
        let lens = g.edge_lengths(j);
        let mut diag = du;
        let mut entries = Vec::with_capacity(1 + p.len());
        entries.push((j, 0.0));
        for ((&k, &len), &d) in g.neighbors(j).iter().zip(lens).zip(dp.iter()) {
            diag += d / len;
            entries.push((k, -si * d / len));
        }
        entries[0].1 = si * diag;
        entries
    };
    let rows = if sequential {
        map_indices_seq(g.n_nodes(), row)
    } else {
        map_indices(g.n_nodes(), row)
    };
    Ok(SparseJacobian { rows, m, n_b })
}

/// Assembles DR(u) from the per-row entry formulas: interior diagonal
/// `(1/M^{1/q}) (∂H/∂u + Σ_k (1/Δx_{kj}) ∂H/∂p_k)`, off-diagonals
/// `-(1/M^{1/q}) (1/Δx_{kj}) ∂H/∂p_k`, boundary rows a single scaled one.
pub fn assemble_jacobian(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    lp: &LossParams,
) -> Result<SparseJacobian> {
    assemble_impl(u, g, ham, lp, false)
}

/// Sequential variant used by the benchmarks and the no-rayon build.
pub fn assemble_jacobian_seq(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    lp: &LossParams,
) -> Result<SparseJacobian> {
    assemble_impl(u, g, ham, lp, true)
}

/// μ = min(λ / M^{1/q}, (μ_b / N)^{1/q}) — the lower bound on every
/// eigenvalue modulus of DR(u) under (H1)-(H3).
pub fn mu_bound(lambda: f64, m: usize, n_b: usize, mu_b: f64, q: f64) -> f64 {
    let inv_q = 1.0 / q;
    (lambda / (m as f64).powf(inv_q)).min((mu_b / n_b as f64).powf(inv_q))
}

/// min over rows of |a_jj| - Σ_{k≠j} |a_jk|.
pub fn gershgorin_margin(jac: &SparseJacobian) -> f64 {
    jac.rows
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for &(k, v) in row {
                if k == j {
                    diag += v;
                } else {
                    off += v.abs();
                }
            }
            diag.abs() - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// Which end of the spectrum to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichEigen {
    SmallestModulus,
    LargestModulus,
}

/// An eigenvalue and the real part of an associated eigenvector, normalized
/// to unit length with its first nonzero component positive.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex<f64>,
    pub vector: Vec<f64>,
}

/// Dense matrices up to this dimension get a full eigendecomposition;
/// beyond it the extreme pairs come from (inverse) power iterations.
pub const DENSE_EIGEN_LIMIT: usize = 5000;
const EIG_TOL: f64 = 1e-10;
const EIG_MAX_ITERS: usize = 10_000;

fn normalize_sign(mut v: Vec<f64>) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    v
}

/// Eigenvector for a known eigenvalue by shifted inverse iteration in
/// complex arithmetic.
fn eigenvector_for(a: &DMatrix<f64>, value: Complex<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let shift = value + Complex::new(1e-10 * (1.0 + value.norm()), 0.0);
    let mut ac = a.map(|x| Complex::new(x, 0.0));
    for i in 0..n {
        ac[(i, i)] -= shift;
    }
    let lu = ac.lu();
    let mut x = DVector::from_element(n, Complex::new(1.0, 0.0));
    x /= Complex::new((n as f64).sqrt(), 0.0);
    for _ in 0..200 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| HjError::LinearSolve("singular shifted matrix".into()))?;
        let norm = y.norm();
        if !(norm > 0.0) {
            break;
        }
        let y = y / Complex::new(norm, 0.0);
        // Residual against the target eigenvalue.
        let res = (a.map(|v| Complex::new(v, 0.0)) * &y - y.scale(1.0) * value).norm();
        x = y;
        if res <= EIG_TOL * (1.0 + value.norm()) {
            break;
        }
    }
    Ok(normalize_sign(x.iter().map(|c| c.re).collect()))
}

fn dense_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Extreme eigenpair of the Jacobian: dense eigendecomposition at desk scale,
/// (inverse) power iteration with tolerance 1e-10 otherwise.
pub fn extreme_eigenpair(jac: &SparseJacobian, which: WhichEigen) -> Result<EigenPair> {
    let n = jac.dim();
    if n <= DENSE_EIGEN_LIMIT {
        let a = jac.to_dense();
        let eigs = dense_eigenvalues(&a);
        let value = match which {
            WhichEigen::SmallestModulus => eigs
                .iter()
                .copied()
                .min_by(|a, b| a.norm().total_cmp(&b.norm())),
            WhichEigen::LargestModulus => eigs
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm())),
        }
        .ok_or_else(|| HjError::LinearSolve("empty spectrum".into()))?;
        let vector = eigenvector_for(&a, value)?;
        return Ok(EigenPair { value, vector });
    }
    match which {
        WhichEigen::LargestModulus => power_iteration(jac),
        WhichEigen::SmallestModulus => inverse_power_iteration(jac),
    }
}

/// All eigenvalues within `tol` of the smallest modulus, with vectors.
/// Reported together because near-degenerate smallest eigenvalues show up in
/// practice and a single pair would hide the multiplicity.
pub fn smallest_cluster(jac: &SparseJacobian, tol: f64) -> Result<Vec<EigenPair>> {
    let n = jac.dim();
    if n > DENSE_EIGEN_LIMIT {
        return Ok(vec![extreme_eigenpair(jac, WhichEigen::SmallestModulus)?]);
    }
    let a = jac.to_dense();
    let eigs = dense_eigenvalues(&a);
    let smallest = eigs
        .iter()
        .map(|e| e.norm())
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    let mut taken: Vec<Complex<f64>> = Vec::new();
    for &e in &eigs {
        if e.norm() <= smallest + tol && !taken.iter().any(|t| (t - e).norm() < 1e-12) {
            taken.push(e);
            out.push(EigenPair {
                value: e,
                vector: eigenvector_for(&a, e)?,
            });
        }
    }
    Ok(out)
}

fn power_iteration(jac: &SparseJacobian) -> Result<EigenPair> {
    let n = jac.dim();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for it in 0..EIG_MAX_ITERS {
        let y = jac.matvec(&x);
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(HjError::EigenIterationLimit { best: 0.0 });
        }
        let y: Vec<f64> = y.iter().map(|v| v / norm).collect();
        let ay = jac.matvec(&y);
        let new_lambda: f64 = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let delta = (new_lambda - lambda).abs();
        lambda = new_lambda;
        x = y;
        if it > 2 && delta <= EIG_TOL * (1.0 + lambda.abs()) {
            return Ok(EigenPair {
                value: Complex::new(lambda, 0.0),
                vector: normalize_sign(x),
            });
        }
    }
    Err(HjError::EigenIterationLimit { best: lambda })
}

fn inverse_power_iteration(jac: &SparseJacobian) -> Result<EigenPair> {
    let n = jac.dim();
    let csr = jac.to_csr();
    let mut x: Vec<f64> = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = f64::INFINITY;
    for it in 0..EIG_MAX_ITERS {
        let y = bicgstab(&csr, &x, 1e-12, 20 * n)?;
        let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(HjError::EigenIterationLimit { best: 0.0 });
        }
        let y: Vec<f64> = y.iter().map(|v| v / norm).collect();
        let ay = jac.matvec(&y);
        let new_lambda: f64 = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let delta = (new_lambda - lambda).abs();
        lambda = new_lambda;
        x = y;
        if it > 2 && delta <= EIG_TOL * (1.0 + lambda.abs()) {
            return Ok(EigenPair {
                value: Complex::new(lambda, 0.0),
                vector: normalize_sign(x),
            });
        }
    }
    Err(HjError::EigenIterationLimit { best: lambda })
}

/// Conditioning summary at a given iterate.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub mu: f64,
    pub margin: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub kappa_estimate: f64,
}

/// Bundles the μ bound, the Gershgorin margin, and the extreme eigenvalue
/// moduli with their ratio κ.
pub fn condition_report(
    u: &[f64],
    g: &GridGraph,
    ham: &dyn Hamiltonian,
    lp: &LossParams,
) -> Result<ConditionReport> {
    let jac = assemble_jacobian(u, g, ham, lp)?;
    let mu = mu_bound(ham.lambda(), jac.m, jac.n_b, lp.mu_b, lp.q);
    let margin = gershgorin_margin(&jac);
    let small = extreme_eigenpair(&jac, WhichEigen::SmallestModulus)?;
    let large = extreme_eigenpair(&jac, WhichEigen::LargestModulus)?;
    let eig_min = small.value.norm();
    let eig_max = large.value.norm();
    Ok(ConditionReport {
        mu,
        margin,
        eig_min,
        eig_max,
        kappa_estimate: eig_max / eig_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_interval_grid;
    use crate::hamiltonian::LaxFriedrichs1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (crate::grid::GridGraph, LaxFriedrichs1d, LossParams) {
        (
            build_interval_grid(20).unwrap(),
            LaxFriedrichs1d {
                alpha: 1.0,
                lambda: 1.0,
                source: 1.0,
            },
            LossParams::default(),
        )
    }

    #[test]
    fn assembly_on_linear_slope() {
        let (g, ham, lp) = setup();
        let u: Vec<f64> = (0..21).map(|i| i as f64 * 0.05).collect();
        let jac = assemble_jacobian(&u, &g, &ham, &lp).unwrap();
        let s = 19f64.sqrt();
        let j = 5;
        let row = &jac.rows[j];
        assert_eq!(row[0].0, j);
        assert!((row[0].1 - 21.0 / s).abs() < 1e-12);
        // Left neighbor (downwind for slope +1) carries -20/sqrt(19), right 0.
        assert_eq!(row[1].0, j - 1);
        assert!((row[1].1 + 20.0 / s).abs() < 1e-12);
        assert_eq!(row[2].0, j + 1);
        assert!(row[2].1.abs() < 1e-15);
        // Boundary rows: single entry sqrt(10/2).
        let b = &jac.rows[0];
        assert_eq!(b.len(), 1);
        assert!((b[0].1 - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_hamiltonian_rows_vanish() {
        struct Zero;
        impl Hamiltonian for Zero {
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
        let g = build_interval_grid(10).unwrap();
        let u = vec![0.3; 11];
        let jac = assemble_jacobian(&u, &g, &Zero, &LossParams::default()).unwrap();
        for &j in g.interior() {
            assert!(jac.rows[j].iter().all(|&(_, v)| v == 0.0));
        }
    }

    #[test]
    fn mu_bound_values() {
        assert!((mu_bound(1.0, 19, 2, 10.0, 2.0) - 1.0 / 19f64.sqrt()).abs() < 1e-15);
        assert!((mu_bound(1.0, 160, 2, 10.0, 2.0) - 1.0 / 160f64.sqrt()).abs() < 1e-15);
        assert_eq!(mu_bound(1.0, 1, 1, 1.0, 3.7), 1.0);
    }

    #[test]
    fn gershgorin_values() {
        let (g, ham, lp) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jac = assemble_jacobian(&u, &g, &ham, &lp).unwrap();
        // The alpha/h terms cancel against the off-diagonal sums.
        let expect = 1.0 / 19f64.sqrt();
        assert!((gershgorin_margin(&jac) - expect).abs() < 1e-12);

        let ident = SparseJacobian {
            rows: (0..3).map(|i| vec![(i, 1.0)]).collect(),
            m: 3,
            n_b: 0,
        };
        assert_eq!(gershgorin_margin(&ident), 1.0);
    }

    #[test]
    fn diagonal_matrix_eigenpair() {
        let jac = SparseJacobian {
            rows: vec![vec![(0, 2.0)], vec![(1, 3.0)], vec![(2, 5.0)]],
            m: 3,
            n_b: 0,
        };
        let pair = extreme_eigenpair(&jac, WhichEigen::SmallestModulus).unwrap();
        assert!((pair.value.re - 2.0).abs() < 1e-9);
        assert!((pair.vector[0] - 1.0).abs() < 1e-6);
        assert!(pair.vector[1].abs() < 1e-6 && pair.vector[2].abs() < 1e-6);
        let pair = extreme_eigenpair(&jac, WhichEigen::LargestModulus).unwrap();
        assert!((pair.value.re - 5.0).abs() < 1e-9);
    }

    #[test]
    fn eigenvalues_respect_gershgorin() {
        let (g, ham, lp) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let u: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jac = assemble_jacobian(&u, &g, &ham, &lp).unwrap();
            let margin = gershgorin_margin(&jac);
            let small = extreme_eigenpair(&jac, WhichEigen::SmallestModulus).unwrap();
            assert!(small.value.norm() >= margin - 1e-10);
        }
    }

    #[test]
    fn sign_structure() {
        let (g, ham, lp) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jac = assemble_jacobian(&u, &g, &ham, &lp).unwrap();
        for (j, row) in jac.rows.iter().enumerate() {
            for &(k, v) in row {
                if k == j {
                    assert!(v >= 0.0);
                } else {
                    assert!(v <= 0.0);
                }
            }
        }
    }

    #[test]
    fn transpose_product_matches_gradient() {
        let (g, ham, lp) = setup();
        let bvals = vec![0.0; 21];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = crate::residual::residual_steady(&u, &g, &ham, &bvals, &lp).unwrap();
        let jac = assemble_jacobian(&u, &g, &ham, &lp).unwrap();
        let grad = crate::residual::loss_gradient(&u, &g, &ham, &bvals, &lp).unwrap();
        // q = 2: w = R, so the gradient is exactly J^T R.
        let jt_r = jac.matvec_transpose(&r.values);
        let num: f64 = grad
            .iter()
            .zip(&jt_r)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = jt_r.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(num / den < 1e-12);
    }

    #[test]
    fn condition_report_scales_like_inverse_h() {
        let ham = LaxFriedrichs1d {
            alpha: 1.0,
            lambda: 1.0,
            source: 1.0,
        };
        let lp = LossParams::default();
        let mut kappas = Vec::new();
        for n in [20, 40] {
            let g = build_interval_grid(n).unwrap();
            let u = vec![0.0; n + 1];
            let rep = condition_report(&u, &g, &ham, &lp).unwrap();
            assert!(rep.margin >= rep.mu - 1e-12);
            assert!(rep.eig_min >= rep.margin - 1e-10);
            kappas.push(rep.kappa_estimate);
        }
        let ratio = kappas[1] / kappas[0];
        assert!((1.5..=2.5).contains(&ratio), "kappa ratio {ratio}");
    }
}
