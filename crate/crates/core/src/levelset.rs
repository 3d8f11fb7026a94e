//! Zero-level-set extraction on 2D sample grids and Hausdorff distances
//! between point sets; used by the obstacle-problem checks.

/// A scalar field sampled on a regular 2D grid.
pub struct SampledField {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    /// Row-major values, `v[i * ny + j]` at `(x0 + i h, y0 + j h)`.
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn from_fn(x0: f64, y0: f64, h: f64, nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                values.push(f(x0 + h * i as f64, y0 + h * j as f64));
            }
        }
        Self { nx, ny, x0, y0, h, values }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }
}

/// Points where the field changes sign along grid edges, located by linear
/// interpolation. Enough contour resolution for Hausdorff comparisons at the
/// sampling scale.
pub fn zero_crossings(f: &SampledField) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    let cross = |a: f64, b: f64| -> Option<f64> {
        if a == 0.0 {
            return Some(0.0);
        }
        if a * b < 0.0 {
            return Some(a / (a - b));
        }
        None
    };
    for i in 0..f.nx {
        for j in 0..f.ny {
            let x = f.x0 + f.h * i as f64;
            let y = f.y0 + f.h * j as f64;
            if i + 1 < f.nx {
                if let Some(t) = cross(f.at(i, j), f.at(i + 1, j)) {
                    pts.push((x + t * f.h, y));
                }
            }
            if j + 1 < f.ny {
                if let Some(t) = cross(f.at(i, j), f.at(i, j + 1)) {
                    pts.push((x, y + t * f.h));
                }
            }
        }
    }
    pts
}

fn directed_hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .map(|&(ax, ay)| {
            b.iter()
                .map(|&(bx, by)| ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max)
}

/// Symmetric Hausdorff distance between two point sets; infinite when either
/// is empty.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_is_recovered() {
        let f = SampledField::from_fn(-2.0, -2.0, 0.05, 81, 81, |x, y| {
            (x * x + y * y).sqrt() - 1.0
        });
        let pts = zero_crossings(&f);
        assert!(!pts.is_empty());
        for (x, y) in &pts {
            let r = (x * x + y * y).sqrt();
            assert!((r - 1.0).abs() < 0.05, "crossing at radius {r}");
        }
    }

    #[test]
    fn hausdorff_of_shifted_circles() {
        let circle = |cx: f64| {
            SampledField::from_fn(-2.0, -2.0, 0.02, 201, 201, move |x, y| {
                ((x - cx).powi(2) + y * y).sqrt() - 1.0
            })
        };
        let a = zero_crossings(&circle(0.0));
        let b = zero_crossings(&circle(0.3));
        let d = hausdorff(&a, &b);
        assert!((d - 0.3).abs() < 0.05, "distance {d}");
    }

    #[test]
    fn empty_sets_are_infinite() {
        assert!(hausdorff(&[], &[(0.0, 0.0)]).is_infinite());
    }
}
