//! The two-step baseline: an unconditional VAE, then KMeans on its latent
//! means with `k` picked by the elbow rule.

mod kmeans;

pub use kmeans::{elbow, kmeans, knee_index, ElbowCurve, KMeansOptions, KMeansResult};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::eval::{evaluate_embeddings, Embedded, EvalReport};
use crate::matrix::Matrix;
use crate::train::{sub_seed, train_unconditional, TrainHooks, TrainedModel};

const SEED_KMEANS: u64 = 0x300;

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub report: EvalReport,
    pub elbow: ElbowCurve,
    pub clustering: KMeansResult,
    pub model: TrainedModel,
}

/// Trains the unconditional VAE on the training images, clusters its train
/// `mu` with the elbow-selected `k`, and scores it like the main model.
pub fn vae_kmeans_pipeline(config: &TrainConfig, dataset: &Dataset, hooks: TrainHooks<'_>) -> Result<BaselineOutcome> {
    let model = train_unconditional(config, &dataset.train.images, hooks)?;
    let train_mu = model.vae.encode_mu(&dataset.train.images, 512)?;
    let test_mu = model.vae.encode_mu(&dataset.test.images, 512)?;
    let to64 = |m: &Matrix<f32>| m.map(|v| v as f64);
    let (tr64, te64) = (to64(&train_mu), to64(&test_mu));
    let max_k = config.elbow_k_max.min(tr64.rows);
    let ks: Vec<usize> = (config.elbow_k_min..=max_k).collect();
    let seed = sub_seed(config.seed, SEED_KMEANS);
    let opts = KMeansOptions::default();
    let curve = elbow(&tr64, &ks, seed, opts)?;
    let clustering = kmeans(&tr64, curve.chosen_k, seed, opts)?;
    log::info!("elbow chose k = {} from {:?}", curve.chosen_k, curve.ks);
    let e = Embedded {
        train_clusters: clustering.labels.clone(),
        test_clusters: clustering.predict(&te64),
        train_mu,
        test_mu,
        n_clusters: curve.chosen_k,
    };
    let report = evaluate_embeddings("vae_kmeans", &e, dataset, config)?;
    Ok(BaselineOutcome {
        report,
        elbow: curve,
        clustering,
        model,
    })
}
