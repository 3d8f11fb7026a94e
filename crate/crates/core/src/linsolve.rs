//! Linear solves behind Newton and the eigen iterations: dense LU for small
//! systems, Jacobi-preconditioned BiCGSTAB for large sparse ones.

use nalgebra::DMatrix;

use crate::error::{HjError, Result};

/// Above this dimension Newton switches from dense LU to BiCGSTAB.
pub const DENSE_LIMIT: usize = 2000;

/// Row-compressed square sparse matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_off: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Self {
        let n = rows.len();
        let mut row_off = Vec::with_capacity(n + 1);
        row_off.push(0);
        let mut col = Vec::new();
        let mut val = Vec::new();
        for row in rows {
            for &(c, v) in row {
                col.push(c);
                val.push(v);
            }
            row_off.push(col.len());
        }
        Self { n, row_off, col, val }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for s in self.row_off[i]..self.row_off[i + 1] {
                acc += self.val[s] * x[self.col[s]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for s in self.row_off[i]..self.row_off[i + 1] {
                if self.col[s] == i {
                    d[i] = self.val[s];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for s in self.row_off[i]..self.row_off[i + 1] {
                m[(i, self.col[s])] += self.val[s];
            }
        }
        m
    }
}

/// Dense LU solve of `A x = b`.
pub fn solve_dense(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = nalgebra::DVector::from_column_slice(b);
    let lu = a.lu();
    lu.solve(&rhs)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| HjError::LinearSolve("singular matrix in dense LU".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB. Solves `A x = b` to a relative residual
/// `tol`, starting from zero.
pub fn bicgstab(a: &Csr, b: &[f64], tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend(v.iter().zip(&dinv).map(|(x, di)| x * di));
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = norm2(b).max(f64::MIN_POSITIVE);
    if norm2(&r) / b_norm <= tol {
        return Ok(x);
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = Vec::with_capacity(n);
    let mut shat = Vec::with_capacity(n);
    let mut t = vec![0.0; n];
    let mut best = (f64::INFINITY, x.clone());

    for _ in 0..max_iters {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut phat);
        a.matvec(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom.abs() < 1e-300 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) / b_norm <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(x);
        }
        precond(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm2(&r) / b_norm;
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= tol {
            return Ok(x);
        }
        if omega.abs() < 1e-300 {
            break;
        }
    }
    if best.0 <= tol.max(1e-9) {
        // Close enough for a damped Newton step to make progress.
        return Ok(best.1);
    }
    Err(HjError::LinearSolve(format!(
        "BiCGSTAB stalled at relative residual {:.3e}",
        best.0
    )))
}
