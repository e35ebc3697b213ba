use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NumericsError;

const MAX_ITER: usize = 300;

/// Hard cluster labels in `[0, n_clusters)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Self {
        debug_assert!(labels.iter().all(|&l| l < n_clusters));
        ClusterAssignment { labels, n_clusters }
    }

    /// Labels taken as-is; cluster count is `max + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let n_clusters = labels.iter().max().map_or(1, |m| m + 1);
        ClusterAssignment { labels, n_clusters }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(data: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, data.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, row) in data.rows().into_iter().enumerate() {
            let d = sq_dist(row, data.row(pick));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Deterministic given `(data, k, seed)`. Empty clusters are refilled with
/// the point farthest from its current centroid.
pub fn kmeans(data: &Array2<f64>, k: usize, seed: u64) -> Result<ClusterAssignment, NumericsError> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(NumericsError::TooManyClusters { k, n });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    if k == 1 {
        return Ok(ClusterAssignment::new(vec![0; n], 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let dim = data.ncols();

    for _ in 0..MAX_ITER {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, row) in data.rows().into_iter().enumerate() {
            let (c, d) = nearest(row, &centroids);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        // refill empty clusters, one farthest point each
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = None;
            for i in 0..n {
                if counts[labels[i]] > 1 && far.is_none_or(|(_, d)| dists[i] > d) {
                    far = Some((i, dists[i]));
                }
            }
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                dists[i] = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        let mut sums = Array2::<f64>::zeros((k, dim));
        for (i, row) in data.rows().into_iter().enumerate() {
            let mut s = sums.row_mut(labels[i]);
            s += &row;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut s = sums.row_mut(c);
                s /= counts[c] as f64;
                centroids.row_mut(c).assign(&s);
            }
        }
    }
    Ok(ClusterAssignment::new(labels, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn wcss(data: &Array2<f64>, a: &ClusterAssignment) -> f64 {
        let mut total = 0.0;
        for c in 0..a.n_clusters {
            let members: Vec<usize> = (0..a.len()).filter(|&i| a.labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut centroid = vec![0.0; data.ncols()];
            for &i in &members {
                for j in 0..data.ncols() {
                    centroid[j] += data[[i, j]] / members.len() as f64;
                }
            }
            for &i in &members {
                for j in 0..data.ncols() {
                    total += (data[[i, j]] - centroid[j]).powi(2);
                }
            }
        }
        total
    }

    #[test]
    fn separated_pairs() {
        let data = array![[0.0, 0.0], [10.0, 10.0], [0.1, 0.0], [10.0, 10.1]];
        let a = kmeans(&data, 2, 3).unwrap();
        assert_eq!(a.labels[0], a.labels[2]);
        assert_eq!(a.labels[1], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[1]);
    }

    #[test]
    fn single_cluster() {
        let data = array![[0.0], [1.0], [5.0]];
        assert_eq!(kmeans(&data, 1, 0).unwrap().labels, vec![0, 0, 0]);
    }

    #[test]
    fn k_equals_n() {
        let data = array![[0.0, 1.0], [1.0, 0.0], [3.0, 3.0], [0.0, 0.0], [-2.0, 1.0]];
        for seed in 0..10 {
            let a = kmeans(&data, 5, seed).unwrap();
            assert!(wcss(&data, &a) < 1e-12);
        }
    }

    #[test]
    fn duplicate_points_fill_all_clusters() {
        let data = array![[1.0], [1.0], [1.0], [2.0]];
        let a = kmeans(&data, 3, 0).unwrap();
        let mut used = a.labels.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn deterministic() {
        let data = Array2::from_shape_fn((50, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64);
        assert_eq!(kmeans(&data, 4, 9).unwrap(), kmeans(&data, 4, 9).unwrap());
    }

    #[test]
    fn too_many_clusters() {
        let data = array![[0.0], [1.0]];
        assert!(kmeans(&data, 3, 0).is_err());
    }
}
