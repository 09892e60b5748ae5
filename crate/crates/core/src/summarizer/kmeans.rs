use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to assigned centroids, recorded after
    /// seeding and after every Lloyd iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

pub fn objective(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

/// Seeded k-means++: the first center is uniform, each later one is drawn
/// with probability proportional to squared distance from the nearest chosen
/// center. If every remaining point coincides with a center, the
/// lowest-index unchosen point is taken.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in best.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.expect("total > 0 implies a positive weight")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(sq_dist(p, &points[next]));
        }
    }
    chosen
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn mean_of(points: &[Vec<f64>], members: impl Iterator<Item = usize>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for i in members {
        for (a, x) in acc.iter_mut().zip(&points[i]) {
            *a += x;
        }
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

/// Lloyd's algorithm from a k-means++ start, stopping at an assignment
/// fixpoint or after `max_iters` iterations. A cluster left empty by an
/// assignment step is re-seeded with the point farthest from its own
/// centroid (taken from a cluster with more than one member).
///
/// # Panics
/// If `points` is empty or `k` is not in `1..=points.len()`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> KMeansResult {
    let n = points.len();
    assert!(
        n > 0 && (1..=n).contains(&k),
        "need 1 <= k <= n (k={k}, n={n})"
    );
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = seed_centers(points, k, &mut rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut history = vec![objective(points, &centroids, &assignments)];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        fill_empty_clusters(points, &mut centroids, &mut assignments);
        for (c, centroid) in centroids.iter_mut().enumerate() {
            *centroid = mean_of(points, (0..n).filter(|&i| assignments[i] == c), dim);
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let changed = next != assignments;
        assignments = next;
        history.push(objective(points, &centroids, &assignments));
        if !changed {
            break;
        }
    }
    fill_empty_clusters(points, &mut centroids, &mut assignments);
    KMeansResult {
        centroids,
        assignments,
        objective_history: history,
        iterations,
    }
}

fn fill_empty_clusters(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assignments: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignments[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n guarantees a cluster with two members");
        assignments[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_points_still_give_k_nonempty_clusters() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let r = kmeans(&pts, 3, 4, 20);
        let mut sizes = [0; 3];
        r.assignments.iter().for_each(|&a| sizes[a] += 1);
        assert!(sizes.iter().all(|&s| s > 0));
        assert_eq!(r.objective_history.last(), Some(&0.0));
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..30 {
            let pts: Vec<Vec<f64>> = (0..25)
                .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
                .collect();
            let r = kmeans(&pts, 4, seed, 50);
            for w in r.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.objective_history);
            }
        }
    }
}
