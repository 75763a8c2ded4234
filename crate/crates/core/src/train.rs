//! The training loop: per batch encode, soft-assign, decode, backpropagate,
//! take an optimizer step, then move the prototypes.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, ModelState};
use crate::config::TrainConfig;
use crate::data::{make_batches, ImageTensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{elbo_loss, reparameterize, reparameterize_with, ArchConfig, LossBreakdown, Vae};
use crate::nn::{Act, Adam, Module, Scalar};
use crate::proto::{assign, assign_backward, sample_hard, temperature, PrototypeBank};

/// One completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tau: f64,
    pub loss_total: f64,
    pub loss_recon: f64,
    pub loss_kl: f64,
    pub loss_ortho: f64,
    /// Hard-assignment counts per prototype; empty for the unconditional VAE.
    pub cluster_occupancy: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Result of one forward/backward pass. Gradients are left accumulated in the model.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub loss: LossBreakdown,
    pub mu: Matrix<T>,
    pub z: Matrix<T>,
    /// Soft assignments `(B, K)`; `(B, 0)` without a bank.
    pub c: Matrix<T>,
}

/// Forward and backward pass for one batch given the reparameterization noise.
///
/// With a bank, an uninitialized bank is first filled from this batch's `mu`
/// (seeded by `init_seed`). Prototypes are constants here; their gradient is
/// never formed, so the orthogonality term only enters the reported loss.
#[allow(clippy::too_many_arguments)]
pub fn forward_backward<T: Scalar>(
    vae: &mut Vae<T>,
    bank: Option<&mut PrototypeBank<T>>,
    x: &Act<T>,
    eps: &Matrix<T>,
    tau: f64,
    beta: f64,
    lambda_ortho: f64,
    init_seed: u64,
) -> Result<StepOutput<T>> {
    let (mu, logvar) = vae.encode_train(x);
    if eps.rows != mu.rows || eps.cols != mu.cols {
        return Err(Error::Shape("noise shape differs from latent batch".into()));
    }
    let z = reparameterize_with(&mu, &logvar, eps);
    let bank = match bank {
        Some(b) => {
            if !b.is_initialized() {
                b.init_from_batch(&mu, init_seed)?;
            }
            Some(&*b)
        }
        None => None,
    };
    let c = match bank {
        Some(b) => assign(&b.similarity(&z)?, tau)?,
        None => Matrix::zeros(z.rows, 0),
    };
    let x_tilde = vae.decode_train(&z, &c)?;
    let ortho = match bank {
        Some(b) if lambda_ortho > 0.0 => b.orthogonality_penalty()?,
        _ => 0.0,
    };
    let loss = elbo_loss(&x.data, &x_tilde.data, &mu, &logvar, beta, ortho, lambda_ortho)?;

    let batch = T::c(mu.rows as f64);
    let two = T::c(2.0);
    let dxt = Act::new(
        x_tilde
            .data
            .iter()
            .zip(&x.data)
            .map(|(&r, &a)| two * (r - a) / batch)
            .collect(),
        x_tilde.n,
        x_tilde.c,
        x_tilde.h,
        x_tilde.w,
    );
    let (mut dz, dc) = vae.decoder_backward(&dxt);
    if let Some(b) = bank {
        let dsims = assign_backward(&c, &dc, tau);
        let extra = b.similarity_backward(&z, &dsims);
        dz.data.iter_mut().zip(&extra.data).for_each(|(d, &e)| *d += e);
    }
    let (beta_t, half, one) = (T::c(beta), T::c(0.5), T::one());
    let mut dmu = dz.clone();
    let mut dlv = dz;
    for i in 0..mu.data.len() {
        let (m, lv, e) = (mu.data[i], logvar.data[i], eps.data[i]);
        let std = (lv * half).exp();
        dmu.data[i] += beta_t * m / batch;
        dlv.data[i] = dlv.data[i] * e * half * std + beta_t * half * (lv.exp() - one) / batch;
    }
    vae.encoder_backward(&dmu, &dlv);
    Ok(StepOutput { loss, mu, z, c })
}

/// Optional side channels of a training run.
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Rewritten after every epoch with the current state.
    pub checkpoint_path: Option<PathBuf>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord) -> Result<()>>,
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub vae: Vae<f32>,
    pub bank: Option<PrototypeBank<f32>>,
    pub history: TrainHistory,
    pub final_tau: f64,
}

impl TrainedModel {
    pub fn into_state(self) -> ModelState {
        let epoch = self.history.epochs.len();
        ModelState {
            vae: self.vae,
            bank: self.bank,
            tau: self.final_tau,
            epoch,
        }
    }
}

/// Independent, reproducible sub-seeds (SplitMix64 finalizer).
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SEED_INIT: u64 = 1;
const SEED_NOISE: u64 = 2;
const SEED_PROTO: u64 = 3;
const SEED_BATCH: u64 = 0x100;

/// Trains the prototype-conditioned VAE on unlabeled images.
pub fn train(config: &TrainConfig, images: &ImageTensor, hooks: TrainHooks<'_>) -> Result<TrainedModel> {
    fit(config, images, true, hooks)
}

/// Trains the same architecture without conditioning (the two-step baseline's first step).
pub fn train_unconditional(config: &TrainConfig, images: &ImageTensor, hooks: TrainHooks<'_>) -> Result<TrainedModel> {
    fit(config, images, false, hooks)
}

fn fit(
    config: &TrainConfig,
    images: &ImageTensor,
    conditional: bool,
    mut hooks: TrainHooks<'_>,
) -> Result<TrainedModel> {
    config.validate()?;
    let n = config.train_subset.map_or(images.n, |s| s.min(images.n));
    if n == 0 {
        return Err(Error::InvalidArgument("no training images".into()));
    }
    let k = if conditional { config.n_prototypes } else { 0 };
    let arch = ArchConfig {
        in_channels: images.c,
        image_size: images.h,
        ..ArchConfig::standard(config.latent_dim, k)
    };
    if images.h != images.w {
        return Err(Error::Shape(format!(
            "images must be square, got {}x{}",
            images.h, images.w
        )));
    }
    let seed = config.seed;
    let mut vae = Vae::<f32>::new(arch, &mut ChaCha8Rng::seed_from_u64(sub_seed(seed, SEED_INIT)))?;
    let mut bank = if conditional {
        Some(
            PrototypeBank::new(config.n_prototypes, config.latent_dim, config.eta)?
                .with_similarity(config.similarity)
                .with_convention(config.ema_convention),
        )
    } else {
        None
    };
    let mut adam = Adam::new(config.lr);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, SEED_NOISE));
    let mut label_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, SEED_PROTO));
    let sched = config.schedule();
    let mut history = TrainHistory::default();
    let mut last_good: Option<PathBuf> = None;
    let mut tau = sched.tau_start;

    for epoch in 0..config.epochs {
        tau = temperature(epoch, config.epochs, &sched)?;
        let mut sums = [0.0f64; 4];
        let mut occupancy = vec![0usize; k];
        let batches = make_batches(n, config.batch_size, sub_seed(seed, SEED_BATCH + epoch as u64))?;
        for idx in &batches {
            let x = vae.images_to_act(&images.gather(idx))?;
            vae.zero_grad();
            let (mu_shape_rows, q) = (idx.len(), config.latent_dim);
            let zeros = Matrix::zeros(mu_shape_rows, q);
            let (_, eps) = reparameterize(&zeros, &zeros, &mut noise_rng);
            let step = forward_backward(
                &mut vae,
                bank.as_mut(),
                &x,
                &eps,
                tau,
                config.beta,
                config.lambda_ortho,
                sub_seed(seed, SEED_PROTO + 1),
            )
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Diverged {
                    epoch,
                    msg,
                    checkpoint: last_good.clone(),
                },
                other => other,
            })?;
            let before = bank.as_ref().map(|b| b.prototypes().clone());
            adam.step(&mut vae);
            debug_assert_eq!(before.as_ref(), bank.as_ref().map(|b| b.prototypes()));
            if let Some(b) = bank.as_mut() {
                let labels = sample_hard(&step.c, &mut label_rng, config.hard_assign);
                for (o, c) in occupancy.iter_mut().zip(b.update(&step.z, &labels)?) {
                    *o += c;
                }
            }
            let w = idx.len() as f64;
            let l = step.loss;
            for (s, v) in sums.iter_mut().zip([l.total, l.recon, l.kl, l.ortho]) {
                *s += v * w;
            }
        }
        let record = EpochRecord {
            epoch,
            tau,
            loss_total: sums[0] / n as f64,
            loss_recon: sums[1] / n as f64,
            loss_kl: sums[2] / n as f64,
            loss_ortho: sums[3] / n as f64,
            cluster_occupancy: occupancy,
        };
        log::info!(
            "epoch {epoch} tau {tau:.4} loss {:.4} recon {:.4} kl {:.4}",
            record.loss_total,
            record.loss_recon,
            record.loss_kl
        );
        if let Some(path) = &hooks.checkpoint_path {
            let mut state = ModelState {
                vae: vae.clone(),
                bank: bank.clone(),
                tau,
                epoch: epoch + 1,
            };
            save_checkpoint(&mut state, path)?;
            last_good = Some(path.clone());
        }
        if let Some(cb) = hooks.on_epoch.as_mut() {
            cb(&record)?;
        }
        history.epochs.push(record);
    }
    Ok(TrainedModel {
        vae,
        bank,
        history,
        final_tau: tau,
    })
}

/// Writes the history as JSON lines.
pub fn write_metrics(history: &TrainHistory, path: &Path) -> Result<()> {
    std::fs::write(path, history.to_jsonl()).map_err(|e| Error::io(path, e))
}
