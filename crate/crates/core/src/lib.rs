//! Solvers for Hamilton-Jacobi equations based on minimizing the q-norm of
//! residuals of monotone finite-difference schemes.
//!
//! The library is organized around a small set of pieces:
//!
//! * [`grid`] — geometrical graphs (interval, box and embedded-annulus grids)
//!   carrying interior/boundary index sets and fixed neighbor orderings;
//! * [`hamiltonian`] — monotone numerical Hamiltonians (Lax-Friedrichs, upwind
//!   Rouy-Tourin, Godunov ext-ext, a Hamilton-Jacobi-Isaacs operator) and a
//!   sampling-based hypothesis checker;
//! * [`residual`] — the scaled residual vector R(u), the loss
//!   L(u) = (1/q)·||R(u)||_q^q and its exact gradient;
//! * [`jacobian`] — sparse Jacobian assembly, Gershgorin margins, eigenvalue
//!   bounds and condition reports;
//! * [`solve`] — full gradient descent, damped Newton, multilevel warm-start
//!   schedules and a-posteriori stability bounds;
//! * [`time`] — implicit/explicit space-time residuals, per-step implicit
//!   marching and the obstacle-problem residual;
//! * [`kruzhkov`] — the Kruzhkov change of variables and its error
//!   amplification factor;
//! * [`mlp`] — a small dense network with manual backpropagation, Adam/SGD,
//!   collocation-based stochastic residual training and multilevel schedules.
//!
//! All node-parallel kernels run on rayon when the default `parallel` feature
//! is enabled and fall back to plain sequential loops otherwise. Reductions
//! use a fixed pairwise order, so results do not depend on the thread count.

pub mod error;
pub mod exec;
pub mod grid;
pub mod hamiltonian;
pub mod jacobian;
pub mod kruzhkov;
pub mod levelset;
mod linsolve;
pub mod mlp;
pub mod residual;
pub mod solve;
pub mod time;

pub use error::{HjError, Result};
pub use grid::GridGraph;
pub use hamiltonian::Hamiltonian;
pub use residual::{LossParams, ResidualVector};
