//! Lax-Friedrichs numerical Hamiltonians: a centered Hamiltonian plus a
//! graph-Laplacian viscosity term that makes the scheme monotone.

use super::Hamiltonian;

/// Convention at the kink of |.|: sign(0) = 0.
#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Direct evaluation of the 1D Lax-Friedrichs Hamiltonian for the damped
/// eikonal equation |u'| + λu = f:
///
/// |(u_{j+1} - u_{j-1})/(2h)| - α (u_{j+1} + u_{j-1} - 2 u_j)/(2h) + λ u_j - f
pub fn eval_lax_friedrichs_1d(
    u_j: f64,
    u_jm: f64,
    u_jp: f64,
    h: f64,
    alpha: f64,
    lambda: f64,
    f: f64,
) -> f64 {
    ((u_jp - u_jm) / (2.0 * h)).abs() - alpha * (u_jp + u_jm - 2.0 * u_j) / (2.0 * h)
        + lambda * u_j
        - f
}

/// 1D Lax-Friedrichs operator for |u'| + λu = f in slot form. The two slots
/// are `p = [(u_j - u_{j-1})/h, (u_j - u_{j+1})/h]`; the centered difference
/// is `(p_0 - p_1)/2` and the viscosity term `(α/2)(p_0 + p_1)`, so the
/// evaluation needs no explicit spacing. Monotone for α ≥ 1.
#[derive(Debug, Clone)]
pub struct LaxFriedrichs1d {
    pub alpha: f64,
    pub lambda: f64,
    pub source: f64,
}

impl Hamiltonian for LaxFriedrichs1d {
    fn name(&self) -> &str {
        "lax-friedrichs-1d"
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn eval(&self, _x: &[f64], u: f64, p: &[f64]) -> f64 {
        let central = 0.5 * (p[0] - p[1]);
        central.abs() + 0.5 * self.alpha * (p[0] + p[1]) + self.lambda * u - self.source
    }

    fn grad(&self, _x: &[f64], _u: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        let s = sgn(0.5 * (p[0] - p[1]));
        dp[0] = 0.5 * (s + self.alpha);
        dp[1] = 0.5 * (self.alpha - s);
        self.lambda
    }

    fn alpha(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lambda.abs() + self.alpha + 1.0)
    }
}

/// A continuous base Hamiltonian H(x, u, g) evaluated on centered per-axis
/// gradient approximations.
pub trait BaseHamiltonian: Sync + Send {
    fn eval(&self, x: &[f64], u: f64, grad: &[f64]) -> f64;
    /// Writes ∂H/∂g into `dg` and returns ∂H/∂u.
    fn grad(&self, x: &[f64], u: f64, grad: &[f64], dg: &mut [f64]) -> f64;
    fn lambda(&self) -> f64;
    /// Per-direction bound max |∂H/∂g_a|; the viscosity must dominate it.
    fn gradient_slope_bound(&self) -> f64;
}

/// Eikonal base ||g||_2 + λu - f.
#[derive(Debug, Clone)]
pub struct EikonalBase {
    pub lambda: f64,
    pub source: f64,
}

impl BaseHamiltonian for EikonalBase {
    fn eval(&self, _x: &[f64], u: f64, grad: &[f64]) -> f64 {
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        norm + self.lambda * u - self.source
    }

    fn grad(&self, _x: &[f64], _u: f64, grad: &[f64], dg: &mut [f64]) -> f64 {
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (o, &v) in dg.iter_mut().zip(grad) {
            *o = if norm > 0.0 { v / norm } else { 0.0 };
        }
        self.lambda
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn gradient_slope_bound(&self) -> f64 {
        1.0
    }
}

/// Graph Lax-Friedrichs Hamiltonian on axis-pair stencils:
/// base H on centered axis differences minus α times the graph Laplacian.
/// With slots ordered (-e_a, +e_a) per axis, the centered derivative along
/// axis a is `(p_{2a} - p_{2a+1})/2` and the Laplacian contribution
/// `(α/2)(p_{2a} + p_{2a+1})`.
#[derive(Debug, Clone)]
pub struct GraphLaxFriedrichs<B> {
    pub alpha: f64,
    pub base: B,
}

impl<B: BaseHamiltonian> GraphLaxFriedrichs<B> {
    pub fn new(alpha: f64, base: B) -> Self {
        Self { alpha, base }
    }

    fn centered(&self, p: &[f64]) -> Vec<f64> {
        p.chunks_exact(2).map(|c| 0.5 * (c[0] - c[1])).collect()
    }
}

impl<B: BaseHamiltonian> Hamiltonian for GraphLaxFriedrichs<B> {
    fn name(&self) -> &str {
        "lax-friedrichs"
    }

    fn lambda(&self) -> f64 {
        self.base.lambda()
    }

    fn eval(&self, x: &[f64], u: f64, p: &[f64]) -> f64 {
        debug_assert!(p.len() % 2 == 0, "axis-pair stencil required");
        let g = self.centered(p);
        let visc: f64 = p.iter().sum::<f64>() * 0.5 * self.alpha;
        self.base.eval(x, u, &g) + visc
    }

    fn grad(&self, x: &[f64], u: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        let g = self.centered(p);
        let mut dg = vec![0.0; g.len()];
        let du = self.base.grad(x, u, &g, &mut dg);
        for a in 0..g.len() {
            dp[2 * a] = 0.5 * dg[a] + 0.5 * self.alpha;
            dp[2 * a + 1] = -0.5 * dg[a] + 0.5 * self.alpha;
        }
        du
    }

    fn alpha(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.base.lambda().abs() + self.alpha + self.base.gradient_slope_bound())
    }
}
