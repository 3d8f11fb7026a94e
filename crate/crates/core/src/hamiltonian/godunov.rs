//! Godunov ext-ext construction for 1D-per-variable Hamiltonians:
//!
//!   H_G(p_-, p_+) = ext_{p in I[p_-, p_+]} H(p),
//!
//! with ext = min over [a, b] when a <= b, and ext = max over [b, a] when
//! a > b. The general form is computed by dense sampling with local
//! refinement; closed forms are provided for H(p) = |p| and H(p) = p^2.

/// Number of initial samples on the interval.
const COARSE_SAMPLES: usize = 513;
/// Refinement passes; each shrinks the bracket by 16x.
const REFINE_ROUNDS: usize = 8;
const REFINE_SAMPLES: usize = 33;

/// Godunov ext-ext value of a continuous `h` between `p_minus` and `p_plus`.
pub fn godunov_ext_1d(h: impl Fn(f64) -> f64, p_minus: f64, p_plus: f64) -> f64 {
    if p_minus == p_plus {
        return h(p_minus);
    }
    let minimize = p_minus <= p_plus;
    let (lo, hi) = if minimize {
        (p_minus, p_plus)
    } else {
        (p_plus, p_minus)
    };
    let better = |a: f64, b: f64| if minimize { a < b } else { a > b };
    let mut best_t = lo;
    let mut best_v = h(lo);
    let mut left = lo;
    let mut right = hi;
    let mut samples = COARSE_SAMPLES;
    for _ in 0..=REFINE_ROUNDS {
        let step = (right - left) / (samples - 1) as f64;
        let mut local_best = usize::MAX;
        for i in 0..samples {
            let t = left + step * i as f64;
            let v = h(t);
            if better(v, best_v) {
                best_v = v;
                best_t = t;
                local_best = i;
            }
        }
        let (l, r) = if local_best == usize::MAX {
            ((best_t - step).max(lo), (best_t + step).min(hi))
        } else {
            (
                (left + step * local_best.saturating_sub(1) as f64).max(lo),
                (left + step * (local_best + 1).min(samples - 1) as f64).min(hi),
            )
        };
        left = l;
        right = r;
        samples = REFINE_SAMPLES;
    }
    best_v
}

/// Closed form for H(p) = |p|.
pub fn godunov_ext_abs(p_minus: f64, p_plus: f64) -> f64 {
    if p_minus <= p_plus {
        if p_minus <= 0.0 && p_plus >= 0.0 {
            0.0
        } else {
            p_minus.abs().min(p_plus.abs())
        }
    } else {
        p_minus.abs().max(p_plus.abs())
    }
}

/// Closed form for H(p) = p^2.
pub fn godunov_ext_square(p_minus: f64, p_plus: f64) -> f64 {
    let a = godunov_ext_abs(p_minus, p_plus);
    a * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn square_on_stated_intervals() {
        // I[-1, 2] with a <= b: min of p^2 is 0.
        assert!(godunov_ext_1d(|p| p * p, -1.0, 2.0).abs() < 1e-12);
        // Degenerate interval evaluates H at the point.
        assert_eq!(godunov_ext_1d(|p| p * p, 0.7, 0.7), 0.7 * 0.7);
        // I[2, -1] with a > b: max over [-1, 2] is 4.
        assert!((godunov_ext_1d(|p| p * p, 2.0, -1.0) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn closed_forms_match_sampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = rng.gen_range(-3.0..3.0);
            let b = rng.gen_range(-3.0..3.0);
            let s = godunov_ext_1d(|p: f64| p.abs(), a, b);
            assert!((s - godunov_ext_abs(a, b)).abs() < 1e-6, "abs at ({a},{b})");
            let s = godunov_ext_1d(|p| p * p, a, b);
            assert!((s - godunov_ext_square(a, b)).abs() < 1e-6, "square at ({a},{b})");
        }
    }

    /// For monotone H the ext is attained at an endpoint; for increasing H it
    /// is h(p_minus) in both branches.
    #[test]
    fn monotone_h_hits_endpoint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let h = |p: f64| 2.0 * p + 0.3;
        for _ in 0..100 {
            let a = rng.gen_range(-3.0..3.0);
            let b = rng.gen_range(-3.0..3.0);
            let v = godunov_ext_1d(h, a, b);
            assert!((v - h(a)).abs() < 1e-9);
        }
    }
}
