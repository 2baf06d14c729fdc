//! K-means clustering used to seed Gaussian mixtures before EM.
//!
//! Seeding follows k-means++: the first centroid is drawn uniformly, each
//! further one with probability proportional to the squared distance from
//! the nearest centroid chosen so far. Lloyd iterations then run until the
//! assignments stop changing (at most 50 rounds), and any cluster left
//! empty is repaired by stealing the point that fits its own cluster worst.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-cluster summary handed to the mixture initializer.
#[derive(Debug, Clone)]
pub(super) struct ClusterStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Population variance per dimension (divisor = count).
    pub var: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties resolve to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best {
            best = d;
            arg = i;
        }
    }
    arg
}

fn seed_centroids(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                cum += d;
                if r < cum {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            // All points coincide with an existing centroid; any pick works.
            rng.random_range(0..n)
        };
        let c = points[chosen].to_vec();
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(c);
    }
    centroids
}

fn recompute_centroids(points: &[&[f64]], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums[a].iter_mut().zip(*p) {
            *s += v;
        }
    }
    for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
        if count > 0 {
            for (cv, &sv) in c.iter_mut().zip(sum) {
                *cv = sv / count as f64;
            }
        }
        // An empty cluster keeps its previous centroid.
    }
}

/// Clusters `points` into exactly `k` non-empty groups.
///
/// Requires `points.len() >= k`; the caller checks this. The result is fully
/// determined by the input order and the RNG state.
pub(super) fn kmeans(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<ClusterStats> {
    assert!(k >= 1 && points.len() >= k);
    let dim = points[0].len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..50 {
        recompute_centroids(points, &assignments, &mut centroids);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }

    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    // Repair empty clusters: move the point that sits farthest from its own
    // centroid out of a cluster that can spare one.
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        let mut victim = usize::MAX;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[a]);
            if d > worst {
                worst = d;
                victim = i;
            }
        }
        assert!(victim != usize::MAX, "no donor cluster with two points");
        counts[assignments[victim]] -= 1;
        assignments[victim] = c;
        counts[c] += 1;
    }
    recompute_centroids(points, &assignments, &mut centroids);

    let mut var = vec![vec![0.0; dim]; k];
    for (p, &a) in points.iter().zip(&assignments) {
        for (vv, (&pv, &cv)) in var[a].iter_mut().zip(p.iter().zip(&centroids[a])) {
            let d = pv - cv;
            *vv += d * d;
        }
    }
    (0..k)
        .map(|c| ClusterStats {
            count: counts[c],
            mean: centroids[c].clone(),
            var: var[c].iter().map(|&v| v / counts[c] as f64).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn as_refs(points: &[Vec<f64>]) -> Vec<&[f64]> {
        points.iter().map(|p| p.as_slice()).collect()
    }

    #[test]
    fn separated_blobs_are_recovered() {
        // Three tight groups far apart; every seed must find them.
        let mut points = Vec::new();
        for offset in [0.0, 100.0, 200.0] {
            for d in [-0.5, 0.0, 0.5] {
                points.push(vec![offset + d]);
            }
        }
        for seed in 0..20 {
            let stats = kmeans(&as_refs(&points), 3, &mut rng(seed));
            let mut means: Vec<f64> = stats.iter().map(|s| s.mean[0]).collect();
            means.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!((means[0] - 0.0).abs() < 1e-9, "seed {seed}");
            assert!((means[1] - 100.0).abs() < 1e-9);
            assert!((means[2] - 200.0).abs() < 1e-9);
            assert!(stats.iter().all(|s| s.count == 3));
        }
    }

    #[test]
    fn same_seed_gives_identical_output() {
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 13) as f64, (i * 3 % 5) as f64])
            .collect();
        let a = kmeans(&as_refs(&points), 4, &mut rng(9));
        let b = kmeans(&as_refs(&points), 4, &mut rng(9));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.count, y.count);
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.var, y.var);
        }
    }

    #[test]
    fn variance_is_population_style() {
        let points = vec![vec![0.0], vec![2.0]];
        let stats = kmeans(&as_refs(&points), 1, &mut rng(0));
        assert_eq!(stats[0].count, 2);
        assert!((stats[0].mean[0] - 1.0).abs() < 1e-12);
        assert!((stats[0].var[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_cluster_is_left_empty() {
        // Only two distinct values but three clusters requested.
        let points = vec![vec![0.0], vec![0.0], vec![0.0], vec![10.0]];
        for seed in 0..10 {
            let stats = kmeans(&as_refs(&points), 3, &mut rng(seed));
            assert!(stats.iter().all(|s| s.count >= 1), "seed {seed}");
            let total: usize = stats.iter().map(|s| s.count).sum();
            assert_eq!(total, 4);
        }
    }

    #[test]
    fn k_equal_to_n_assigns_one_point_each() {
        let points = vec![vec![0.0], vec![5.0], vec![9.0]];
        let stats = kmeans(&as_refs(&points), 3, &mut rng(3));
        assert!(stats.iter().all(|s| s.count == 1));
        assert!(stats.iter().all(|s| s.var[0] == 0.0));
    }
}
