//! Lloyd's k-means with farthest-point seeding and restarts.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::rng::{substream, Stream};

pub const DEFAULT_RESTARTS: usize = 20;
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    /// Sum of squared distances to the assigned centers.
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// First center uniformly at random, then repeatedly the point farthest
/// from all centers chosen so far.
fn farthest_point_seeds(points: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let m = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..m);
    centers.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, centers.row(0)))
        .collect();
    for c in 1..k {
        let far = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        centers.row_mut(c).assign(&points.row(far));
        for (d, p) in nearest.iter_mut().zip(points.rows()) {
            *d = d.min(sq_dist(p, centers.row(c)));
        }
    }
    centers
}

fn assign(points: ArrayView2<f64>, centers: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (l, p) in labels.iter_mut().zip(points.rows()) {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.rows().into_iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        *l = best.0;
        inertia += best.1;
    }
    inertia
}

fn lloyd(points: ArrayView2<f64>, mut centers: Array2<f64>) -> KMeansResult {
    let (m, d) = points.dim();
    let k = centers.nrows();
    let mut labels = vec![usize::MAX; m];
    let mut prev = vec![0usize; m];
    let mut inertia = assign(points, &centers, &mut labels);
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points.rows()) {
            let mut row = sums.row_mut(l);
            row += &p;
            counts[l] += 1;
        }
        for (c, mut row) in sums.axis_iter_mut(Axis(0)).enumerate() {
            // an emptied cluster keeps its previous center
            if counts[c] > 0 {
                row /= counts[c] as f64;
            } else {
                row.assign(&centers.row(c));
            }
        }
        centers = sums;
        prev.copy_from_slice(&labels);
        inertia = assign(points, &centers, &mut labels);
        if prev == labels {
            break;
        }
    }
    KMeansResult {
        labels,
        centers,
        inertia,
    }
}

/// Best of `restarts` runs by inertia; ties go to the earliest restart.
pub fn kmeans(
    points: ArrayView2<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeansResult> {
    let m = points.nrows();
    if k == 0 || k > m {
        return Err(invalid(format!("k must lie in 1..={m}, got {k}")));
    }
    if restarts == 0 {
        return Err(invalid("need at least one restart"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(invalid("points must be finite"));
    }
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Stream::KMeans, i as u64);
            lloyd(points, farthest_point_seeds(points, k, &mut rng))
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, run| {
            if run.inertia < best.inertia {
                run
            } else {
                best
            }
        })
        .expect("restarts >= 1"))
}
