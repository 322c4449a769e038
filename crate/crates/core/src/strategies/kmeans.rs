//! Lloyd's k-means with random-instance initialisation.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use super::SelectError;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `clusters x dim`.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

pub fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its squared
/// distance.
pub fn nearest(centroids: ArrayView2<f64>, point: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(centre, point);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Clusters the rows of `points` into `clusters` groups. Stops after
/// `max_iters` assignment rounds or as soon as assignments stop changing.
/// A cluster that loses all its members is re-seeded with the point
/// farthest from its current centroid.
pub fn kmeans<R: Rng + ?Sized>(
    points: ArrayView2<f64>,
    clusters: usize,
    rng: &mut R,
    max_iters: usize,
) -> Result<KMeansResult, SelectError> {
    let n = points.nrows();
    if clusters == 0 || n < clusters {
        return Err(SelectError::TooFewPoints { points: n, clusters });
    }
    let init = rand::seq::index::sample(rng, n, clusters).into_vec();
    let mut centroids = Array2::zeros((clusters, points.ncols()));
    for (c, &i) in init.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(i));
    }
    let mut assignments = vec![usize::MAX; n];
    let mut distances = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0;
        for (i, row) in points.rows().into_iter().enumerate() {
            let (c, d) = nearest(centroids.view(), row);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            distances[i] = d;
            objective += d;
        }
        history.push(objective);
        if !changed || iterations == max_iters.max(1) {
            break;
        }
        update_means(points, &mut assignments, &mut distances, &mut centroids);
    }
    Ok(KMeansResult {
        centroids,
        assignments,
        objective_history: history,
        iterations,
    })
}

fn update_means(
    points: ArrayView2<f64>,
    assignments: &mut [usize],
    distances: &mut [f64],
    centroids: &mut Array2<f64>,
) {
    let clusters = centroids.nrows();
    let mut counts = vec![0usize; clusters];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for c in 0..clusters {
        if counts[c] > 0 {
            continue;
        }
        // Farthest point whose own cluster keeps at least one other member.
        let donor = (0..points.nrows())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(b.cmp(&a)));
        if let Some(i) = donor {
            counts[assignments[i]] -= 1;
            assignments[i] = c;
            distances[i] = 0.0;
            counts[c] = 1;
        }
    }
    centroids.fill(0.0);
    for (i, row) in points.rows().into_iter().enumerate() {
        let mut centre = centroids.row_mut(assignments[i]);
        centre += &row;
    }
    for (c, mut centre) in centroids.rows_mut().into_iter().enumerate() {
        if counts[c] > 0 {
            centre /= counts[c] as f64;
        }
    }
}
