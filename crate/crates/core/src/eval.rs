//! Downstream protocols on frozen embeddings: cluster-to-label mapping,
//! k-nearest-neighbour classification and a linear probe.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{Dataset, ImageTensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Vae;
use crate::nn::{Act, Adam, Dense, Module};
use crate::proto::{argmax, PrototypeBank};
use crate::train::sub_seed;

/// Cluster id marking a cluster that received no samples.
pub const UNMAPPED: usize = usize::MAX;

const ENCODE_CHUNK: usize = 512;
const SEED_BANK: u64 = 0x200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabelMap {
    /// Class per cluster, or [`UNMAPPED`] for empty clusters.
    pub mapping: Vec<usize>,
    /// Samples per cluster.
    pub support: Vec<usize>,
}

impl ClusterLabelMap {
    pub fn empty_clusters(&self) -> Vec<usize> {
        (0..self.mapping.len())
            .filter(|&i| self.mapping[i] == UNMAPPED)
            .collect()
    }
}

/// Majority label per cluster; ties go to the smallest label.
pub fn build_cluster_label_map(
    clusters: &[usize],
    labels: &[usize],
    k: usize,
    num_classes: usize,
) -> Result<ClusterLabelMap> {
    if clusters.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} cluster ids vs {} labels",
            clusters.len(),
            labels.len()
        )));
    }
    if clusters.is_empty() {
        return Err(Error::InvalidArgument("empty labeled subset".into()));
    }
    let mut votes = vec![vec![0usize; num_classes]; k];
    for (&c, &l) in clusters.iter().zip(labels) {
        if c >= k || l >= num_classes {
            return Err(Error::InvalidArgument(format!("cluster {c} or label {l} out of range")));
        }
        votes[c][l] += 1;
    }
    let support: Vec<usize> = votes.iter().map(|v| v.iter().sum()).collect();
    let mapping = votes
        .iter()
        .zip(&support)
        .map(|(v, &s)| if s == 0 { UNMAPPED } else { argmax(v) })
        .collect();
    Ok(ClusterLabelMap { mapping, support })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticalResult {
    pub accuracy: f64,
    /// Test samples that landed in an unmapped cluster (counted wrong).
    pub unmapped_hits: usize,
}

pub fn statistical_accuracy(map: &ClusterLabelMap, clusters: &[usize], labels: &[usize]) -> Result<StatisticalResult> {
    if clusters.len() != labels.len() || clusters.is_empty() {
        return Err(Error::Shape(
            "cluster ids and labels must be non-empty and equal length".into(),
        ));
    }
    let mut correct = 0;
    let mut unmapped_hits = 0;
    for (&c, &l) in clusters.iter().zip(labels) {
        match map.mapping.get(c) {
            Some(&UNMAPPED) => unmapped_hits += 1,
            Some(&m) if m == l => correct += 1,
            Some(_) => {}
            None => return Err(Error::InvalidArgument(format!("cluster {c} outside the map"))),
        }
    }
    Ok(StatisticalResult {
        accuracy: correct as f64 / labels.len() as f64,
        unmapped_hits,
    })
}

/// Argmax-similarity cluster of every row.
pub fn cluster_ids(bank: &PrototypeBank<f32>, embeddings: &Matrix<f32>) -> Result<Vec<usize>> {
    Ok(bank.similarity(embeddings)?.iter_rows().map(argmax).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    pub embeddings: Matrix<f32>,
    pub labels: Vec<usize>,
}

impl MemoryBank {
    pub fn new(embeddings: Matrix<f32>, labels: Vec<usize>) -> Result<Self> {
        if embeddings.rows != labels.len() {
            return Err(Error::Shape(format!(
                "{} embeddings vs {} labels",
                embeddings.rows,
                labels.len()
            )));
        }
        if embeddings.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite memory bank entry".into()));
        }
        Ok(Self { embeddings, labels })
    }

    /// A seeded subsample of at most `size` rows, kept in original order.
    pub fn subsample(embeddings: &Matrix<f32>, labels: &[usize], size: usize, seed: u64) -> Result<Self> {
        let n = embeddings.rows;
        let mut idx = if size >= n {
            (0..n).collect::<Vec<_>>()
        } else {
            sample(&mut ChaCha8Rng::seed_from_u64(seed), n, size).into_vec()
        };
        idx.sort_unstable();
        Self::new(embeddings.gather_rows(&idx), idx.iter().map(|&i| labels[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Majority label among the `k` nearest rows (Euclidean). Distance ties
    /// prefer the lower bank index; vote ties prefer the smaller label.
    pub fn predict(&self, query: &[f32], k: usize) -> usize {
        let mut d: Vec<(f64, usize)> = self
            .embeddings
            .iter_rows()
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(&a, &b)| {
                        let t = a as f64 - b as f64;
                        t * t
                    })
                    .sum();
                (s, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes: Vec<(usize, usize)> = Vec::with_capacity(k);
        for &(_, i) in &d[..k] {
            let l = self.labels[i];
            match votes.iter_mut().find(|(lab, _)| *lab == l) {
                Some((_, n)) => *n += 1,
                None => votes.push((l, 1)),
            }
        }
        votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(l, _)| l)
            .expect("k >= 1")
    }
}

pub fn knn_accuracy(memory: &MemoryBank, queries: &Matrix<f32>, labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 || k > memory.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={}",
            memory.len()
        )));
    }
    if queries.rows != labels.len() || queries.rows == 0 {
        return Err(Error::Shape(
            "queries and labels must be non-empty and equal length".into(),
        ));
    }
    if queries.cols != memory.embeddings.cols {
        return Err(Error::Shape(format!(
            "query width {} vs bank width {}",
            queries.cols, memory.embeddings.cols
        )));
    }
    let correct = queries
        .iter_rows()
        .zip(labels)
        .filter(|(q, &l)| memory.predict(q, k) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { epochs: 200, lr: 3e-4 }
    }
}

/// Full-batch softmax regression on the embeddings, starting from zero
/// weights; returns test accuracy.
pub fn linear_probe(
    train: &Matrix<f32>,
    train_labels: &[usize],
    num_classes: usize,
    test: &Matrix<f32>,
    test_labels: &[usize],
    cfg: ProbeConfig,
) -> Result<f64> {
    if train.rows != train_labels.len() || test.rows != test_labels.len() || train.cols != test.cols {
        return Err(Error::Shape("probe inputs have inconsistent shapes".into()));
    }
    if train.rows == 0 || test.rows == 0 || num_classes < 2 {
        return Err(Error::InvalidArgument("probe needs data and >= 2 classes".into()));
    }
    if let Some(&l) = train_labels.iter().chain(test_labels).find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {l} >= {num_classes}")));
    }
    let to64 = |m: &Matrix<f32>| Act::flat(m.data.iter().map(|&v| v as f64).collect(), m.rows, m.cols);
    let (xtr, xte) = (to64(train), to64(test));
    let mut layer = Dense::<f64>::new("probe", train.cols, num_classes, &mut ChaCha8Rng::seed_from_u64(0));
    layer.visit_params(&mut |p| p.value.iter_mut().for_each(|v| *v = 0.0));
    let mut adam = Adam::new(cfg.lr);
    let n = train.rows as f64;
    for _ in 0..cfg.epochs {
        layer.zero_grad();
        let mut logits = layer.forward_train(&xtr);
        for (row, &l) in logits.data.chunks_exact_mut(num_classes).zip(train_labels) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - mx).exp() / s - f64::from(j == l)) / n;
            }
        }
        layer.backward(&logits);
        adam.step(&mut layer);
    }
    let logits = layer.forward_eval(&xte);
    let correct = logits
        .data
        .chunks_exact(num_classes)
        .zip(test_labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    Ok(correct as f64 / test.rows as f64)
}

/// Writes `index,label,cluster,z_0..z_{q-1}`, one row per sample. Returns the row count.
pub fn write_embeddings_csv(path: &Path, mu: &Matrix<f32>, labels: &[usize], clusters: &[usize]) -> Result<usize> {
    if mu.rows != labels.len() || mu.rows != clusters.len() {
        return Err(Error::Shape("embedding, label and cluster counts differ".into()));
    }
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse(format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["index".to_string(), "label".into(), "cluster".into()];
    header.extend((0..mu.cols).map(|j| format!("z_{j}")));
    w.write_record(&header).map_err(io)?;
    for (i, row) in mu.iter_rows().enumerate() {
        let mut rec = vec![i.to_string(), labels[i].to_string(), clusters[i].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(mu.rows)
}

/// Eval-mode `mu` and argmax-similarity clusters for a set of images, then the CSV.
pub fn export_embeddings(
    vae: &Vae<f32>,
    bank: &PrototypeBank<f32>,
    images: &ImageTensor,
    labels: &[usize],
    path: &Path,
) -> Result<usize> {
    let mu = vae.encode_mu(images, ENCODE_CHUNK)?;
    let clusters = cluster_ids(bank, &mu)?;
    write_embeddings_csv(path, &mu, labels, &clusters)
}

/// The three accuracies for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub config_digest: String,
    pub statistical_acc: f64,
    pub knn_acc: f64,
    pub linear_acc: f64,
    pub n_clusters: usize,
    pub empty_clusters: Vec<usize>,
    pub unmapped_test_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// Embeddings and hard cluster ids of both splits.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub train_mu: Matrix<f32>,
    pub train_clusters: Vec<usize>,
    pub test_mu: Matrix<f32>,
    pub test_clusters: Vec<usize>,
    pub n_clusters: usize,
}

/// Runs all three protocols on precomputed embeddings.
pub fn evaluate_embeddings(method: &str, e: &Embedded, dataset: &Dataset, config: &TrainConfig) -> Result<EvalReport> {
    let num_classes = dataset.train.labels.num_classes;
    let (ytr, yte) = (&dataset.train.labels.labels, &dataset.test.labels.labels);
    let map = build_cluster_label_map(&e.train_clusters, ytr, e.n_clusters, num_classes)?;
    if map.mapping.iter().all(|&m| m == UNMAPPED) {
        return Err(Error::DegenerateClustering("every cluster is empty".into()));
    }
    let stat = statistical_accuracy(&map, &e.test_clusters, yte)?;
    let memory = MemoryBank::subsample(&e.train_mu, ytr, config.bank_size, sub_seed(config.seed, SEED_BANK))?;
    let knn = knn_accuracy(&memory, &e.test_mu, yte, config.knn_k)?;
    let linear = linear_probe(
        &e.train_mu,
        ytr,
        num_classes,
        &e.test_mu,
        yte,
        ProbeConfig {
            epochs: config.probe_epochs,
            lr: config.probe_lr,
        },
    )?;
    Ok(EvalReport {
        method: method.into(),
        dataset: dataset.name.clone(),
        config_digest: config.digest(),
        statistical_acc: stat.accuracy,
        knn_acc: knn,
        linear_acc: linear,
        n_clusters: e.n_clusters,
        empty_clusters: map.empty_clusters(),
        unmapped_test_samples: stat.unmapped_hits,
        n_train: e.train_mu.rows,
        n_test: e.test_mu.rows,
    })
}

/// Encodes both splits with a trained model and evaluates.
pub fn evaluate(
    vae: &Vae<f32>,
    bank: &PrototypeBank<f32>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let train_mu = vae.encode_mu(&dataset.train.images, ENCODE_CHUNK)?;
    let test_mu = vae.encode_mu(&dataset.test.images, ENCODE_CHUNK)?;
    let e = Embedded {
        train_clusters: cluster_ids(bank, &train_mu)?,
        test_clusters: cluster_ids(bank, &test_mu)?,
        train_mu,
        test_mu,
        n_clusters: bank.k(),
    };
    evaluate_embeddings("vaesim", &e, dataset, config)
}
