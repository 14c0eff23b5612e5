//! Lloyd's algorithm with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::squared_distance;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Clone, Debug)]
pub struct KMeansModel {
    /// k × d.
    pub centers: Tensor<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    /// Nearest center; ties go to the lowest index.
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(&self.centers, point).0
    }
}

pub fn kmeans(points: &Tensor<f64>, k: usize, seed: u64) -> Result<KMeansModel> {
    kmeans_with(points, k, seed, DEFAULT_MAX_ITER)
}

pub fn kmeans_with(points: &Tensor<f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansModel> {
    let (n, d) = (points.rows(), points.cols());
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds the {n} available points")));
    }
    if !points.all_finite() {
        return Err(Error::InvalidArgument("k-means input has non-finite entries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seed(points, k, &mut rng);

    let (mut labels, mut dists) = assign_all(points, &centers);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (j, s) in sums[c * d..(c + 1) * d].iter().enumerate() {
                    centers.set(c, j, s * inv);
                }
            } else {
                // re-seed on the point farthest from its current center
                let mut far = None;
                for i in 0..n {
                    if taken[i] {
                        continue;
                    }
                    if far.is_none_or(|f: usize| dists[i] > dists[f]) {
                        far = Some(i);
                    }
                }
                if let Some(i) = far {
                    taken[i] = true;
                    dists[i] = 0.0;
                    centers.row_mut(c).copy_from_slice(points.row(i));
                }
            }
        }
        let (new_labels, new_dists) = assign_all(points, &centers);
        history.push(new_dists.iter().sum());
        let unchanged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        if unchanged {
            converged = true;
            break;
        }
    }

    Ok(KMeansModel {
        centers,
        inertia: *history.last().expect("seeded inertia"),
        inertia_history: history,
        iterations,
        converged,
    })
}

fn plus_plus_seed(points: &Tensor<f64>, k: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let (n, d) = (points.rows(), points.cols());
    let mut centers = Tensor::zeros(&[k, d]);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            0
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for i in 0..n {
            let dd = squared_distance(points.row(i), points.row(pick));
            if dd < best[i] {
                best[i] = dd;
            }
        }
    }
    centers
}

/// Index of and squared distance to the nearest row of `centers`; ties go to
/// the lowest index.
pub fn nearest(centers: &Tensor<f64>, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let dd = squared_distance(centers.row(c), point);
        if dd < best.1 {
            best = (c, dd);
        }
    }
    best
}

fn assign_all(points: &Tensor<f64>, centers: &Tensor<f64>) -> (Vec<usize>, Vec<f64>) {
    par::map_range(points.rows(), |i| nearest(centers, points.row(i)))
        .into_iter()
        .unzip()
}
