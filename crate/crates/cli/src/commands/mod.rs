pub mod analyze_jacobian;
pub mod eikonal_grid;
pub mod eikonal_nn;
pub mod isaacs;
pub mod obstacle;

/// Exact eikonal solution on the unit interval with zero boundary data.
pub fn distance_to_boundary(x: f64) -> f64 {
    x.min(1.0 - x)
}
