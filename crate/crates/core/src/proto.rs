//! Prototype bank: the `K × q` matrix of cluster prototypes, soft assignment
//! by tempered softmax over similarities, and the EMA update that moves each
//! prototype toward the mean of the embeddings assigned to it.
//!
//! The bank sits outside the gradient graph. Gradients flow from the soft
//! assignment back into `z` only; `Q` changes only through [`PrototypeBank::update`].

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Scalar;

/// Added to the norm product in cosine similarity.
pub const COSINE_EPS: f64 = 1e-8;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $s:literal),* $(,)? }) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $s),* })
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($name::$variant),)*
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    #[default]
    Cosine,
    Dot,
}
string_enum!(SimilarityMode { Cosine => "cosine", Dot => "dot" });

/// Which side of the blend receives the weight `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmaConvention {
    /// `Q_i <- eta * mean + (1 - eta) * Q_i`
    #[default]
    Paper,
    /// `Q_i <- eta * Q_i + (1 - eta) * mean`
    Standard,
}
string_enum!(EmaConvention { Paper => "paper", Standard => "standard" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardAssign {
    #[default]
    Sample,
    Argmax,
}
string_enum!(HardAssign { Sample => "sample", Argmax => "argmax" });

/// Linear temperature decay from `tau_start` to `tau_end` over the first
/// `anneal_fraction` of the epochs, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub anneal_fraction: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self {
            tau_start: 1.0,
            tau_end: 0.01,
            anneal_fraction: 0.5,
        }
    }
}

pub fn temperature(epoch: usize, total_epochs: usize, sched: &TemperatureSchedule) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::InvalidArgument("total_epochs must be >= 1".into()));
    }
    // Whole epochs, so `epoch = total / 2` lands on `tau_end` for odd totals too.
    let window = (total_epochs as f64 * sched.anneal_fraction).floor();
    let progress = if window > 0.0 {
        (epoch as f64 / window).min(1.0)
    } else {
        1.0
    };
    Ok(sched.tau_start - (sched.tau_start - sched.tau_end) * progress)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank<T> {
    q_matrix: Matrix<T>,
    pub eta: f64,
    pub similarity_mode: SimilarityMode,
    pub convention: EmaConvention,
    initialized: bool,
}

impl<T: Scalar> PrototypeBank<T> {
    /// An uninitialized bank of `k` prototypes in `q` dimensions.
    pub fn new(k: usize, q: usize, eta: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("need K >= 2 prototypes, got {k}")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!("eta = {eta} outside [0, 1]")));
        }
        Ok(Self {
            q_matrix: Matrix::zeros(k, q),
            eta,
            similarity_mode: SimilarityMode::Cosine,
            convention: EmaConvention::Paper,
            initialized: false,
        })
    }

    pub fn with_similarity(mut self, mode: SimilarityMode) -> Self {
        self.similarity_mode = mode;
        self
    }

    pub fn with_convention(mut self, convention: EmaConvention) -> Self {
        self.convention = convention;
        self
    }

    /// A bank whose prototypes are given explicitly.
    pub fn from_matrix(q_matrix: Matrix<T>, eta: f64) -> Result<Self> {
        let mut bank = Self::new(q_matrix.rows, q_matrix.cols, eta)?;
        if q_matrix.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite prototype".into()));
        }
        bank.q_matrix = q_matrix;
        bank.initialized = true;
        Ok(bank)
    }

    pub fn k(&self) -> usize {
        self.q_matrix.rows
    }

    pub fn latent_dim(&self) -> usize {
        self.q_matrix.cols
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn prototypes(&self) -> &Matrix<T> {
        &self.q_matrix
    }

    fn ensure_init(&self) -> Result<()> {
        if self.initialized {
            Ok(())
        } else {
            Err(Error::InvalidArgument("prototype bank not initialized".into()))
        }
    }

    /// Sets the prototypes to `K` distinct rows of `z`, drawn without
    /// replacement. Returns the chosen row indices.
    pub fn init_from_batch(&mut self, z: &Matrix<T>, seed: u64) -> Result<Vec<usize>> {
        if self.initialized {
            return Err(Error::InvalidArgument("prototype bank already initialized".into()));
        }
        if z.cols != self.latent_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, bank has {}",
                z.cols,
                self.latent_dim()
            )));
        }
        let k = self.k();
        if z.rows < k {
            return Err(Error::InsufficientBatch { needed: k, got: z.rows });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = sample(&mut rng, z.rows, k).into_vec();
        self.q_matrix = z.gather_rows(&idx);
        self.initialized = true;
        Ok(idx)
    }

    /// `(B, K)` similarities between each row of `z` and each prototype.
    pub fn similarity(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.ensure_init()?;
        if z.cols != self.latent_dim() {
            return Err(Error::Shape(format!(
                "z has {} columns, bank has {}",
                z.cols,
                self.latent_dim()
            )));
        }
        let k = self.k();
        let eps = T::c(COSINE_EPS);
        let pnorm: Vec<T> = self.q_matrix.iter_rows().map(norm).collect();
        let mut out = Matrix::zeros(z.rows, k);
        for b in 0..z.rows {
            let zb = z.row(b);
            let zn = norm(zb);
            for i in 0..k {
                let d = dot(zb, self.q_matrix.row(i));
                out.data[b * k + i] = match self.similarity_mode {
                    SimilarityMode::Cosine => d / (zn * pnorm[i] + eps),
                    SimilarityMode::Dot => d,
                };
            }
        }
        Ok(out)
    }

    /// Gradient of the loss w.r.t. `z` given its gradient w.r.t. the similarities.
    /// `Q` is treated as a constant.
    pub fn similarity_backward(&self, z: &Matrix<T>, dsims: &Matrix<T>) -> Matrix<T> {
        let k = self.k();
        let eps = T::c(COSINE_EPS);
        let pnorm: Vec<T> = self.q_matrix.iter_rows().map(norm).collect();
        let mut dz = Matrix::zeros(z.rows, z.cols);
        for b in 0..z.rows {
            let zb = z.row(b);
            let zn = norm(zb);
            let ds = dsims.row(b);
            let out = dz.row_mut(b);
            for i in 0..k {
                let g = ds[i];
                if g == T::zero() {
                    continue;
                }
                let qi = self.q_matrix.row(i);
                match self.similarity_mode {
                    SimilarityMode::Dot => {
                        for (o, &qv) in out.iter_mut().zip(qi) {
                            *o += g * qv;
                        }
                    }
                    SimilarityMode::Cosine => {
                        // s = <z,q> / D, D = |z||q| + eps
                        // ds/dz = q / D - <z,q> |q| z / (|z| D^2)
                        let d = dot(zb, qi);
                        let den = zn * pnorm[i] + eps;
                        let a = g / den;
                        let c = if zn > T::zero() {
                            g * d * pnorm[i] / (zn * den * den)
                        } else {
                            T::zero()
                        };
                        for ((o, &qv), &zv) in out.iter_mut().zip(qi).zip(zb) {
                            *o += a * qv - c * zv;
                        }
                    }
                }
            }
        }
        dz
    }

    /// Moves every prototype with at least one assigned row toward the mean
    /// of its rows. Prototypes with no rows are left unchanged. Returns the
    /// number of rows assigned to each prototype.
    pub fn update(&mut self, z: &Matrix<T>, labels: &[usize]) -> Result<Vec<usize>> {
        self.ensure_init()?;
        if z.rows != labels.len() || z.cols != self.latent_dim() {
            return Err(Error::Shape(format!(
                "update with {}x{} embeddings and {} labels",
                z.rows,
                z.cols,
                labels.len()
            )));
        }
        let (k, q) = (self.k(), self.latent_dim());
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("cluster label {bad} >= K = {k}")));
        }
        let mut sums = Matrix::<T>::zeros(k, q);
        let mut counts = vec![0usize; k];
        for (row, &l) in z.iter_rows().zip(labels) {
            counts[l] += 1;
            for (s, &v) in sums.row_mut(l).iter_mut().zip(row) {
                *s += v;
            }
        }
        let eta = T::c(self.eta);
        let keep = T::one() - eta;
        for (i, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let cnt = T::c(n as f64);
            let convention = self.convention;
            for (p, &s) in self.q_matrix.row_mut(i).iter_mut().zip(sums.row(i)) {
                let mean = s / cnt;
                *p = match convention {
                    EmaConvention::Paper => eta * mean + keep * *p,
                    EmaConvention::Standard => eta * *p + keep * mean,
                };
            }
        }
        Ok(counts)
    }

    /// Mean over ordered pairs `i != j` of the squared cosine between prototypes.
    pub fn orthogonality_penalty(&self) -> Result<f64> {
        self.ensure_init()?;
        let k = self.k();
        let rows: Vec<Vec<f64>> = self
            .q_matrix
            .iter_rows()
            .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
            .collect();
        let norms: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    let cos = d / (norms[i] * norms[j] + COSINE_EPS);
                    acc += cos * cos;
                }
            }
        }
        Ok(acc / (k * (k - 1)) as f64)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Row-wise `softmax(sims / tau)` with max subtraction.
pub fn assign<T: Scalar>(sims: &Matrix<T>, tau: f64) -> Result<Matrix<T>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be > 0")));
    }
    let t = T::c(tau);
    let mut c = sims.clone();
    for row in c.data.chunks_exact_mut(sims.cols.max(1)) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = ((*v - mx) / t).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(c)
}

/// Gradient w.r.t. the similarities given the gradient w.r.t. `c = assign(sims, tau)`.
pub fn assign_backward<T: Scalar>(c: &Matrix<T>, dc: &Matrix<T>, tau: f64) -> Matrix<T> {
    let t = T::c(tau);
    let mut ds = Matrix::zeros(c.rows, c.cols);
    for b in 0..c.rows {
        let (cr, dr) = (c.row(b), dc.row(b));
        let inner = dot(cr, dr);
        for ((o, &cv), &dv) in ds.row_mut(b).iter_mut().zip(cr).zip(dr) {
            *o = cv * (dv - inner) / t;
        }
    }
    ds
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// One hard label per row of `c`.
pub fn sample_hard<T: Scalar, R: Rng + ?Sized>(c: &Matrix<T>, rng: &mut R, mode: HardAssign) -> Vec<usize> {
    c.iter_rows()
        .map(|row| match mode {
            HardAssign::Argmax => argmax(row),
            HardAssign::Sample => {
                let total: f64 = row.iter().map(|v| v.to_f64().unwrap_or(0.0)).sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut last_nonzero = 0;
                for (i, v) in row.iter().enumerate() {
                    let p = v.to_f64().unwrap_or(0.0);
                    if p > 0.0 {
                        last_nonzero = i;
                    }
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                last_nonzero
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn bank(rows: &[&[f64]], eta: f64) -> PrototypeBank<f64> {
        PrototypeBank::from_matrix(mat(rows), eta).unwrap()
    }

    #[test]
    fn init_draws_distinct_rows() {
        let z = Matrix::new((0..2048 * 4).map(|i| i as f64).collect(), 2048, 4).unwrap();
        let mut b = PrototypeBank::<f64>::new(10, 4, 0.95).unwrap();
        let mut idx = b.init_from_batch(&z, 3).unwrap();
        assert_eq!(b.prototypes().row(0), z.row(idx[0]));
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 10);
        assert!(b.init_from_batch(&z, 3).is_err());
    }

    #[test]
    fn init_with_b_equal_k_is_permutation() {
        let z = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 2.0]]);
        let mut b = PrototypeBank::<f64>::new(3, 2, 0.95).unwrap();
        let mut idx = b.init_from_batch(&z, 7).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2]);
        let mut rows: Vec<Vec<f64>> = b.prototypes().iter_rows().map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]]);
    }

    #[test]
    fn init_is_seeded() {
        let z = Matrix::new((0..64 * 3).map(|i| (i as f64).sin()).collect(), 64, 3).unwrap();
        let mut a = PrototypeBank::<f64>::new(5, 3, 0.95).unwrap();
        let mut b = a.clone();
        a.init_from_batch(&z, 99).unwrap();
        b.init_from_batch(&z, 99).unwrap();
        assert_eq!(a.prototypes(), b.prototypes());
    }

    #[test]
    fn init_needs_enough_rows() {
        let z = Matrix::<f64>::zeros(3, 2);
        let mut b = PrototypeBank::<f64>::new(4, 2, 0.95).unwrap();
        assert!(matches!(
            b.init_from_batch(&z, 0),
            Err(Error::InsufficientBatch { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn cosine_examples() {
        let b = bank(&[&[1.0, 0.0], &[0.0, 3.0]], 0.95);
        let s = b.similarity(&mat(&[&[2.0, 0.0], &[1.0, 1.0]])).unwrap();
        assert!((s.data[0] - 1.0).abs() < 1e-6);
        assert!(s.data[1].abs() < 1e-6);
        assert!((s.data[2] - 0.7071).abs() < 1e-4);
        let zero = b.similarity(&mat(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(zero.data, vec![0.0, 0.0]);
    }

    #[test]
    fn dot_mode_is_raw_product() {
        let b = bank(&[&[1.0, 2.0], &[0.0, 3.0]], 0.95).with_similarity(SimilarityMode::Dot);
        let s = b.similarity(&mat(&[&[2.0, 1.0]])).unwrap();
        assert_eq!(s.data, vec![4.0, 3.0]);
    }

    #[test]
    fn assign_examples() {
        let c = assign(&mat(&[&[0.3, 0.3]]), 0.01).unwrap();
        assert_eq!(c.data, vec![0.5, 0.5]);
        let c = assign(&mat(&[&[1.0, 0.0]]), 0.01).unwrap();
        assert_eq!(argmax(c.row(0)), 0);
        assert!((c.data[1] - 3.720075976020836e-44).abs() < 1e-50);
        assert!(matches!(assign(&mat(&[&[1.0]]), 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(assign(&mat(&[&[1.0]]), -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn schedule_endpoints() {
        let s = TemperatureSchedule::default();
        assert_eq!(temperature(0, 50, &s).unwrap(), 1.0);
        assert!((temperature(25, 50, &s).unwrap() - 0.01).abs() < 1e-15);
        assert!((temperature(37, 50, &s).unwrap() - 0.01).abs() < 1e-15);
        assert!((temperature(30, 40, &s).unwrap() - 0.01).abs() < 1e-15);
        assert!((temperature(7, 15, &s).unwrap() - 0.01).abs() < 1e-15);
        assert!(temperature(6, 15, &s).unwrap() > 0.01);
        assert!(temperature(0, 0, &s).is_err());
    }

    #[test]
    fn hard_assignment_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let onehot = mat(&[&[0.0, 0.0, 0.0, 1.0, 0.0]]);
        for mode in [HardAssign::Sample, HardAssign::Argmax] {
            for _ in 0..50 {
                assert_eq!(sample_hard(&onehot, &mut rng, mode), vec![3]);
            }
        }
        assert_eq!(sample_hard(&mat(&[&[0.5, 0.5]]), &mut rng, HardAssign::Argmax), vec![0]);
    }

    #[test]
    fn update_examples() {
        let mut b = bank(&[&[0.0, 0.0], &[5.0, 5.0]], 0.95);
        b.update(&mat(&[&[1.0, 1.0]]), &[0]).unwrap();
        assert!((b.prototypes().row(0)[0] - 0.95).abs() < 1e-15);
        assert!((b.prototypes().row(0)[1] - 0.95).abs() < 1e-15);
        assert_eq!(b.prototypes().row(1), &[5.0, 5.0]);
    }

    #[test]
    fn update_rejects_bad_labels() {
        let mut b = bank(&[&[0.0], &[1.0]], 0.5);
        assert!(b.update(&mat(&[&[1.0]]), &[2]).is_err());
        assert!(b.update(&mat(&[&[1.0]]), &[0, 1]).is_err());
    }

    #[test]
    fn standard_convention_weights_old_value() {
        let mut b = bank(&[&[0.0, 0.0], &[1.0, 1.0]], 0.95).with_convention(EmaConvention::Standard);
        b.update(&mat(&[&[1.0, 1.0]]), &[0]).unwrap();
        assert!((b.prototypes().row(0)[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn orthogonality_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(
            bank(&[&[1.0, 0.0], &[0.0, 2.0]], 0.9).orthogonality_penalty().unwrap(),
            0.0
        );
        assert!((bank(&[&[1.0, 1.0], &[1.0, 1.0]], 0.9).orthogonality_penalty().unwrap() - 1.0).abs() < 1e-6);
        let p = bank(&[&[1.0, 0.0], &[0.0, 1.0], &[s, s]], 0.9)
            .orthogonality_penalty()
            .unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn bank_rejects_small_k_and_bad_eta() {
        assert!(PrototypeBank::<f32>::new(1, 4, 0.5).is_err());
        assert!(PrototypeBank::<f32>::new(3, 4, 1.5).is_err());
    }

    #[test]
    fn similarity_backward_matches_finite_differences() {
        let b = bank(&[&[0.3, -1.2, 0.5], &[1.0, 0.4, -0.2], &[-0.7, 0.1, 0.9]], 0.9);
        let z = mat(&[&[0.2, 0.8, -0.4], &[-1.1, 0.3, 0.6]]);
        let w = mat(&[&[0.5, -1.0, 2.0], &[1.5, 0.25, -0.75]]);
        let tau = 0.3;
        // loss = sum(w * assign(sim(z), tau))
        let loss = |z: &Matrix<f64>| -> f64 {
            let c = assign(&b.similarity(z).unwrap(), tau).unwrap();
            c.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
        };
        let c = assign(&b.similarity(&z).unwrap(), tau).unwrap();
        let dz = b.similarity_backward(&z, &assign_backward(&c, &w, tau));
        let h = 1e-6;
        for i in 0..z.data.len() {
            let mut zp = z.clone();
            zp.data[i] += h;
            let mut zm = z.clone();
            zm.data[i] -= h;
            let fd = (loss(&zp) - loss(&zm)) / (2.0 * h);
            assert!((fd - dz.data[i]).abs() < 1e-7, "dz[{i}] {} vs fd {fd}", dz.data[i]);
        }
    }

    proptest! {
        #[test]
        fn assignment_on_simplex_and_keeps_argmax(
            row in proptest::collection::vec(-1.0f64..1.0, 2..12),
            tau in 0.01f64..10.0,
        ) {
            let sims = Matrix::new(row.clone(), 1, row.len()).unwrap();
            let c = assign(&sims, tau).unwrap();
            let s: f64 = c.data.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(c.data.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(argmax(c.row(0)), argmax(&row));
        }

        #[test]
        fn schedule_monotone(total in 1usize..200) {
            let s = TemperatureSchedule::default();
            let mut prev = f64::INFINITY;
            for e in 0..total {
                let t = temperature(e, total, &s).unwrap();
                prop_assert!(t <= prev && (0.01 - 1e-12..=1.0).contains(&t));
                prev = t;
            }
        }

        #[test]
        fn update_stays_in_hull(
            old in proptest::collection::vec(-5.0f64..5.0, 3),
            members in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..10),
            eta in 0.0f64..=1.0,
        ) {
            let mut b = PrototypeBank::from_matrix(Matrix::new([old.clone(), vec![0.0; 3]].concat(), 2, 3).unwrap(), eta).unwrap();
            let z = Matrix::from_rows(&members).unwrap();
            b.update(&z, &vec![0; members.len()]).unwrap();
            let n = members.len() as f64;
            for d in 0..3 {
                let mean = members.iter().map(|m| m[d]).sum::<f64>() / n;
                let (lo, hi) = (old[d].min(mean), old[d].max(mean));
                let v = b.prototypes().row(0)[d];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
            prop_assert_eq!(b.prototypes().row(1), &[0.0, 0.0, 0.0]);
        }
    }
}
