//! Decision-boundary points, boundary normals and incidence angles.

mod angles;
mod normal;

pub use angles::{
    angle_between, angle_survey, angle_survey_modes, AngleMode, AngleRecord, AngleSurvey, SurveyPair,
};
pub use normal::{
    estimate_normal, smallest_eigenpair, NormalConfig, NormalEstimate, PROJECTION_METHOD,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{check_dim, Error, Result};

/// Bisection stops once the bracket on `t` is narrower than this.
pub const BRACKET_WIDTH: f64 = 1.0 / (1u64 << 50) as f64;
/// Coarse grid used to locate the first crossing along a segment.
pub const COARSE_GRID: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x_b: Array1<f64>,
    pub t_star: f64,
    pub class_lo: usize,
    pub class_hi: usize,
    /// Final bracket width in `t`.
    pub gap: f64,
    /// `x1 − x0` of the bisected segment.
    pub direction: Array1<f64>,
    /// Class changes seen on the coarse grid, as `t` values of the first
    /// grid point past each change (empty when no grid was used).
    pub crossings: Vec<f64>,
}

fn lerp(x0: ArrayView1<f64>, x1: ArrayView1<f64>, t: f64) -> Array1<f64> {
    let mut x = x0.to_owned();
    x.zip_mut_with(&x1, |a, &b| *a += t * (b - *a));
    x
}

/// Finds a point on the boundary between `x0` and `x1`.
///
/// A coarse grid of [`COARSE_GRID`] points first brackets the crossing
/// closest to `x0`; bisection on `t` then narrows the bracket to
/// [`BRACKET_WIDTH`] or `max_iters` halvings.
pub fn bisect_boundary<C: Classifier + ?Sized>(
    net: &C,
    x0: ArrayView1<f64>,
    x1: ArrayView1<f64>,
    max_iters: usize,
) -> Result<BoundaryPoint> {
    check_dim(net.input_dim(), x0.len())?;
    check_dim(net.input_dim(), x1.len())?;
    let c0 = net.predict(x0);
    let c1 = net.predict(x1);
    if c0 == c1 {
        return Err(Error::SameClassEndpoints { class: c0 });
    }
    let grid: Vec<f64> = (0..=COARSE_GRID)
        .map(|k| k as f64 / COARSE_GRID as f64)
        .collect();
    let pts = Array2::from_shape_fn((grid.len(), x0.len()), |(k, j)| {
        x0[j] + grid[k] * (x1[j] - x0[j])
    });
    let classes = net.predict_batch(pts.view());
    let crossings: Vec<f64> = (1..grid.len())
        .filter(|&k| classes[k] != classes[k - 1])
        .map(|k| grid[k])
        .collect();
    // Rounding in `x0 + t(x1 − x0)` can make the grid endpoints disagree
    // with `x1` itself.
    let Some(first) = (1..grid.len()).find(|&k| classes[k] != c0) else {
        return Err(Error::Numeric(
            "no class change found along the interpolated segment".into(),
        ));
    };
    let (lo, hi) = (grid[first - 1], grid[first]);
    let (t_star, gap, class_hi) = bisect_t(net, x0, x1, c0, lo, hi, max_iters);
    Ok(BoundaryPoint {
        x_b: lerp(x0, x1, t_star),
        t_star,
        class_lo: c0,
        class_hi,
        gap,
        direction: &x1 - &x0,
        crossings,
    })
}

fn bisect_t<C: Classifier + ?Sized>(
    net: &C,
    x0: ArrayView1<f64>,
    x1: ArrayView1<f64>,
    c0: usize,
    mut lo: f64,
    mut hi: f64,
    max_iters: usize,
) -> (f64, f64, usize) {
    let mut class_hi = net.predict(lerp(x0, x1, hi).view());
    let mut iters = 0;
    while hi - lo >= BRACKET_WIDTH && iters < max_iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = net.predict(lerp(x0, x1, mid).view());
        if c == c0 {
            lo = mid;
        } else {
            hi = mid;
            class_hi = c;
        }
        iters += 1;
    }
    (0.5 * (lo + hi), hi - lo, class_hi)
}

/// Row-wise bisection between `a` and `b` without a coarse grid. Row `i`
/// starts from class `class_a[i]`; returns the boundary points.
pub(crate) fn bisect_rows<C: Classifier + ?Sized>(
    net: &C,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    class_a: &[usize],
    max_iters: usize,
) -> Array2<f64> {
    let n = a.nrows();
    let mut lo = vec![0.0f64; n];
    let mut hi = vec![1.0f64; n];
    let mut active: Vec<usize> = (0..n).collect();
    let at = |i: usize, t: f64| lerp(a.row(i), b.row(i), t);
    for _ in 0..max_iters {
        active.retain(|&i| {
            let mid = 0.5 * (lo[i] + hi[i]);
            hi[i] - lo[i] >= BRACKET_WIDTH && mid > lo[i] && mid < hi[i]
        });
        if active.is_empty() {
            break;
        }
        let mut mids = Array2::zeros((active.len(), a.ncols()));
        for (r, &i) in active.iter().enumerate() {
            mids.row_mut(r).assign(&at(i, 0.5 * (lo[i] + hi[i])));
        }
        let preds = net.predict_batch(mids.view());
        for (&i, p) in active.iter().zip(preds) {
            let mid = 0.5 * (lo[i] + hi[i]);
            if p == class_a[i] {
                lo[i] = mid;
            } else {
                hi[i] = mid;
            }
        }
    }
    let mut out = Array2::zeros(a.raw_dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&at(i, 0.5 * (lo[i] + hi[i])));
    }
    out
}
