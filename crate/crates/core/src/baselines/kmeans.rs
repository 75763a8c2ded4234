use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    pub n_restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
            n_restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    /// Nearest centroid for each row (ties to the lower index).
    pub fn predict(&self, points: &Matrix<f64>) -> Vec<usize> {
        points.iter_rows().map(|p| nearest(p, &self.centroids).0).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &Matrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Greedy k-means++: each new seed is the best (lowest resulting potential)
/// of `2 + ln k` candidates drawn proportionally to squared distance.
fn plus_plus<R: Rng>(points: &Matrix<f64>, k: usize, rng: &mut R) -> Matrix<f64> {
    let n = points.rows;
    let trials = 2 + (k as f64).ln() as usize;
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter_rows().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = if total > 0.0 {
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (i, &d) in d2.iter().enumerate() {
                    acc += d;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            let nd: Vec<f64> = d2
                .iter()
                .zip(points.iter_rows())
                .map(|(&d, p)| d.min(sq_dist(p, points.row(cand))))
                .collect();
            let pot: f64 = nd.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, cand, nd));
            }
        }
        let (_, cand, nd) = best.expect("at least one trial");
        chosen.push(cand);
        d2 = nd;
    }
    points.gather_rows(&chosen)
}

fn lloyd(points: &Matrix<f64>, mut centroids: Matrix<f64>, opts: &KMeansOptions) -> KMeansResult {
    let (n, k, q) = (points.rows, centroids.rows, points.cols);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        for (i, p) in points.iter_rows().enumerate() {
            (labels[i], dists[i]) = nearest(p, &centroids);
        }
        trace.push(dists.iter().sum());
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;
        let mut sums = Matrix::<f64>::zeros(k, q);
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter_rows().zip(&labels) {
            counts[l] += 1;
            sums.row_mut(l).iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut next = centroids.clone();
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = counts[c] as f64;
                next.row_mut(c)
                    .iter_mut()
                    .zip(sums.row(c))
                    .for_each(|(v, s)| *v = s / cnt);
            } else {
                // Reseed at the point farthest from its centroid, never the same one twice.
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    taken.push(i);
                    next.row_mut(c).copy_from_slice(points.row(i));
                }
            }
        }
        let shift = centroids
            .iter_rows()
            .zip(next.iter_rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < opts.tol {
            for (i, p) in points.iter_rows().enumerate() {
                (labels[i], dists[i]) = nearest(p, &centroids);
            }
            trace.push(dists.iter().sum());
            break;
        }
    }
    KMeansResult {
        centroids,
        labels,
        inertia: *trace.last().expect("at least one assignment"),
        iterations,
        inertia_trace: trace,
    }
}

/// Best of `n_restarts` k-means++ seeded Lloyd runs, by inertia.
pub fn kmeans(points: &Matrix<f64>, k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansResult> {
    if k == 0 || points.rows < k {
        return Err(Error::InvalidArgument(format!(
            "k = {k} needs 1 <= k <= N = {}",
            points.rows
        )));
    }
    if points.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..opts.n_restarts.max(1) {
        let run = lloyd(points, plus_plus(points, k, &mut rng), &opts);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    pub inertias: Vec<f64>,
    pub chosen_k: usize,
}

/// Index of the interior point farthest from the chord joining the first and
/// last points, with both axes scaled to [0, 1]. Ties go to the smaller index.
pub fn knee_index(ks: &[usize], inertias: &[f64]) -> usize {
    let n = ks.len();
    let (x0, x1) = (ks[0] as f64, ks[n - 1] as f64);
    let lo = inertias.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inertias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(inertias)
        .map(|(&k, &i)| ((k as f64 - x0) / (x1 - x0), (i - lo) / span))
        .collect();
    let (a, b) = (pts[0], pts[n - 1]);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = (dx * dx + dy * dy).sqrt();
    let mut best = (1, f64::NEG_INFINITY);
    for (i, p) in pts.iter().enumerate().take(n - 1).skip(1) {
        let d = ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len;
        // Differences below rounding noise count as ties.
        if d > best.1 + 1e-12 {
            best = (i, d);
        }
    }
    best.0
}

/// Inertia for each candidate `k` and the knee of the resulting curve.
pub fn elbow(points: &Matrix<f64>, ks: &[usize], seed: u64, opts: KMeansOptions) -> Result<ElbowCurve> {
    if ks.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "elbow needs >= 3 values of k, got {}",
            ks.len()
        )));
    }
    if ks[0] < 1 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("k values must be ascending and >= 1".into()));
    }
    let inertias = ks
        .iter()
        .map(|&k| kmeans(points, k, seed, opts).map(|r| r.inertia))
        .collect::<Result<Vec<_>>>()?;
    let chosen_k = ks[knee_index(ks, &inertias)];
    Ok(ElbowCurve {
        ks: ks.to_vec(),
        inertias,
        chosen_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn m(rows: &[[f64; 2]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Global optimum over all partitions into at most `k` non-empty groups.
    fn exhaustive_optimum(points: &Matrix<f64>, k: usize) -> f64 {
        let n = points.rows;
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        // Restricted growth strings enumerate each set partition once.
        fn rec(i: usize, used: usize, k: usize, labels: &mut [usize], pts: &Matrix<f64>, best: &mut f64) {
            if i == labels.len() {
                let mut cost = 0.0;
                for c in 0..used {
                    let members: Vec<&[f64]> = (0..labels.len())
                        .filter(|&j| labels[j] == c)
                        .map(|j| pts.row(j))
                        .collect();
                    let q = pts.cols;
                    let mean: Vec<f64> = (0..q)
                        .map(|d| members.iter().map(|r| r[d]).sum::<f64>() / members.len() as f64)
                        .collect();
                    cost += members.iter().map(|r| sq_dist(r, &mean)).sum::<f64>();
                }
                *best = best.min(cost);
                return;
            }
            for c in 0..(used + 1).min(k) {
                labels[i] = c;
                rec(i + 1, used.max(c + 1), k, labels, pts, best);
            }
        }
        rec(0, 0, k, &mut labels, points, &mut best);
        best
    }

    #[test]
    fn two_pairs() {
        let p = m(&[[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]]);
        let r = kmeans(&p, 2, 0, KMeansOptions::default()).unwrap();
        let mut xs: Vec<f64> = r.centroids.iter_rows().map(|c| c[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - 0.05).abs() < 1e-9 && (xs[1] - 10.05).abs() < 1e-9);
        assert!(r.centroids.iter_rows().all(|c| c[1].abs() < 1e-9));
        assert!((r.inertia - 0.01).abs() < 1e-9);
        assert!((r.inertia - exhaustive_optimum(&p, 2)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let p = m(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]);
        let r = kmeans(&p, 3, 1, KMeansOptions::default()).unwrap();
        assert_eq!(r.inertia, 0.0);
        let same = m(&[[2.0, 2.0]; 5]);
        for k in 1..=5 {
            assert_eq!(kmeans(&same, k, 2, KMeansOptions::default()).unwrap().inertia, 0.0);
        }
        assert!(matches!(
            kmeans(&p, 4, 0, KMeansOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn elbow_finds_three_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [[0.0, 0.0], [20.0, 0.0], [10.0, 17.3]];
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|i| {
                let c: [f64; 2] = centers[i % 3];
                {
                    let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    vec![c[0] + a * 0.5, c[1] + b * 0.5]
                }
            })
            .collect();
        let p = Matrix::from_rows(&rows).unwrap();
        let ks: Vec<usize> = (1..=8).collect();
        let curve = elbow(&p, &ks, 0, KMeansOptions::default()).unwrap();
        assert_eq!(curve.chosen_k, 3, "{curve:?}");
        assert!(curve.inertias.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }

    #[test]
    fn knee_on_linear_decay_is_endpoint_adjacent() {
        let ks: Vec<usize> = (2..=10).collect();
        let inertias: Vec<f64> = ks.iter().map(|&k| 100.0 - 5.0 * k as f64).collect();
        assert_eq!(knee_index(&ks, &inertias), 1);
    }

    #[test]
    fn elbow_needs_three_ks() {
        let p = m(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(
            elbow(&p, &[1, 2], 0, KMeansOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn small_points() -> impl Strategy<Value = (Vec<[f64; 2]>, usize)> {
        (2usize..=8).prop_flat_map(|n| (prop::collection::vec([-5.0f64..5.0, -5.0f64..5.0], n), 1..=n.min(4)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn best_restart_is_bounded_by_optimum_and_single_runs((pts, k) in small_points(), seed in 0u64..1000) {
            let p = m(&pts);
            let opts = KMeansOptions { tol: 0.0, ..Default::default() };
            let best = kmeans(&p, k, seed, opts).unwrap();
            let opt = exhaustive_optimum(&p, k);
            prop_assert!(best.inertia >= opt - 1e-9 * (1.0 + opt));
            let single = kmeans(&p, k, seed, KMeansOptions { n_restarts: 1, ..opts }).unwrap();
            prop_assert!(best.inertia <= single.inertia);
        }

        #[test]
        fn lloyd_inertia_never_increases((pts, k) in small_points(), seed in 0u64..1000) {
            let r = kmeans(&m(&pts), k, seed, KMeansOptions { n_restarts: 1, ..Default::default() }).unwrap();
            for w in r.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0], "trace {:?}", r.inertia_trace);
            }
            prop_assert!(r.labels.iter().all(|&l| l < k));
            prop_assert!(r.inertia >= 0.0);
        }

        #[test]
        fn permutation_invariance(
            jitter in prop::collection::vec([-0.5f64..0.5, -0.5f64..0.5], 12),
            order in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle(),
            seed in 0u64..100,
        ) {
            // Three well-separated groups, so every restart finds the same optimum.
            let centers = [[0.0, 0.0], [30.0, 0.0], [0.0, 30.0]];
            let pts: Vec<[f64; 2]> = jitter
                .iter()
                .enumerate()
                .map(|(i, j)| [centers[i % 3][0] + j[0], centers[i % 3][1] + j[1]])
                .collect();
            let shuffled: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
            let a = kmeans(&m(&pts), 3, seed, KMeansOptions::default()).unwrap();
            let b = kmeans(&m(&shuffled), 3, seed, KMeansOptions::default()).unwrap();
            prop_assert!((a.inertia - b.inertia).abs() <= 1e-9 * (1.0 + a.inertia));
            let key = |r: &KMeansResult| {
                let mut c: Vec<(i64, i64)> = r.centroids.iter_rows()
                    .map(|c| ((c[0] * 1e6).round() as i64, (c[1] * 1e6).round() as i64)).collect();
                c.sort();
                c
            };
            prop_assert_eq!(key(&a), key(&b));
            for (bi, &ai) in order.iter().enumerate() {
                for (bj, &aj) in order.iter().enumerate() {
                    prop_assert_eq!(a.labels[ai] == a.labels[aj], b.labels[bi] == b.labels[bj]);
                }
            }
        }
    }
}
