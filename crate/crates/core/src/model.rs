//! The conditional VAE: convolutional encoder, reparameterization,
//! transposed-convolution decoder conditioned on a cluster-assignment vector,
//! and the ELBO loss.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ImageTensor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layers::{relu_backward, relu_inplace, sigmoid};
use crate::nn::{Act, BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Layer, Module, Param, Scalar};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;

/// Network shape. `cond_dim` is the width of the conditioning vector
/// (the number of prototypes), 0 for an unconditional VAE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub in_channels: usize,
    pub image_size: usize,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub enc_channels: [usize; 3],
    pub dec_channels: [usize; 3],
}

impl ArchConfig {
    pub fn standard(latent_dim: usize, cond_dim: usize) -> Self {
        Self {
            in_channels: 1,
            image_size: crate::data::IMAGE_SIZE,
            latent_dim,
            cond_dim,
            enc_channels: [32, 64, 128],
            dec_channels: [64, 32, 16],
        }
    }

    /// Spatial side after the three stride-2 encoder stages.
    pub fn bottleneck(&self) -> usize {
        self.image_size / 8
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 || self.image_size % 8 != 0 {
            return Err(Error::Shape(format!(
                "image size {} must be a positive multiple of 8",
                self.image_size
            )));
        }
        if self.latent_dim == 0 || self.in_channels == 0 {
            return Err(Error::Shape("latent_dim and in_channels must be >= 1".into()));
        }
        if self.enc_channels.contains(&0) || self.dec_channels.contains(&0) {
            return Err(Error::Shape("channel widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Convolution (or transposed convolution) followed by batch norm and ReLU.
#[derive(Debug, Clone)]
struct Block<L, T> {
    layer: L,
    bn: BatchNorm2d<T>,
    out: Option<Vec<T>>,
}

impl<T: Scalar, L: Layer<T>> Block<L, T> {
    fn forward_eval(&self, x: &Act<T>) -> Act<T> {
        let mut y = self.bn.forward_eval(&self.layer.forward_eval(x));
        relu_inplace(&mut y.data);
        y
    }

    fn forward_train(&mut self, x: &Act<T>) -> Act<T> {
        let h = self.layer.forward_train(x);
        let mut y = self.bn.forward_train(&h);
        relu_inplace(&mut y.data);
        self.out = Some(y.data.clone());
        y
    }

    fn backward(&mut self, mut dy: Act<T>) -> Act<T> {
        let out = self.out.take().expect("Block::backward without forward_train");
        relu_backward(&mut dy.data, &out);
        let dh = self.bn.backward(&dy);
        self.layer.backward(&dh)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.layer.visit_params(f);
        self.bn.visit_params(f);
    }
}

#[derive(Debug, Clone)]
pub struct Encoder<T> {
    blocks: Vec<Block<Conv2d<T>, T>>,
    fc_mu: Dense<T>,
    fc_logvar: Dense<T>,
    flat: (usize, usize, usize),
}

impl<T: Scalar> Encoder<T> {
    fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let mut inp = arch.in_channels;
        let blocks = arch
            .enc_channels
            .iter()
            .enumerate()
            .map(|(i, &out)| {
                let name = format!("encoder.conv{}", i + 1);
                let b = Block {
                    layer: Conv2d::new(&name, inp, out, KERNEL, STRIDE, PADDING, rng),
                    bn: BatchNorm2d::new(&format!("encoder.bn{}", i + 1), out),
                    out: None,
                };
                inp = out;
                b
            })
            .collect();
        let s = arch.bottleneck();
        let flat = inp * s * s;
        Self {
            blocks,
            fc_mu: Dense::new("encoder.fc_mu", flat, arch.latent_dim, rng),
            fc_logvar: Dense::new("encoder.fc_logvar", flat, arch.latent_dim, rng),
            flat: (inp, s, s),
        }
    }

    fn forward_eval(&self, x: &Act<T>) -> (Act<T>, Act<T>) {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward_eval(&h);
        }
        (self.fc_mu.forward_eval(&h), self.fc_logvar.forward_eval(&h))
    }

    fn forward_train(&mut self, x: &Act<T>) -> (Act<T>, Act<T>) {
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward_train(&h);
        }
        (self.fc_mu.forward_train(&h), self.fc_logvar.forward_train(&h))
    }

    fn backward(&mut self, dmu: &Act<T>, dlogvar: &Act<T>) -> Act<T> {
        let mut dh = self.fc_mu.backward(dmu);
        let d2 = self.fc_logvar.backward(dlogvar);
        dh.data.iter_mut().zip(&d2.data).for_each(|(a, &b)| *a += b);
        let (c, h, w) = self.flat;
        let mut dh = dh.reshape(c, h, w);
        for b in self.blocks.iter_mut().rev() {
            dh = b.backward(dh);
        }
        dh
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for b in &mut self.blocks {
            b.visit(f);
        }
        self.fc_mu.visit_params(f);
        self.fc_logvar.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for b in &mut self.blocks {
            b.bn.visit_buffers(f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<T> {
    fc: Dense<T>,
    fc_out: Option<Vec<T>>,
    blocks: Vec<Block<ConvTranspose2d<T>, T>>,
    out_conv: Conv2d<T>,
    out: Option<Vec<T>>,
    base: (usize, usize),
}

impl<T: Scalar> Decoder<T> {
    fn new<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Self {
        let s = arch.bottleneck();
        let base_c = arch.enc_channels[2];
        let fc = Dense::new("decoder.fc", arch.latent_dim + arch.cond_dim, base_c * s * s, rng);
        let mut inp = base_c;
        let blocks = arch
            .dec_channels
            .iter()
            .enumerate()
            .map(|(i, &out)| {
                let b = Block {
                    layer: ConvTranspose2d::new(
                        &format!("decoder.deconv{}", i + 1),
                        inp,
                        out,
                        KERNEL,
                        STRIDE,
                        PADDING,
                        rng,
                    ),
                    bn: BatchNorm2d::new(&format!("decoder.bn{}", i + 1), out),
                    out: None,
                };
                inp = out;
                b
            })
            .collect();
        Self {
            fc,
            fc_out: None,
            blocks,
            out_conv: Conv2d::new("decoder.out", inp, arch.in_channels, 3, 1, 1, rng),
            out: None,
            base: (base_c, s),
        }
    }

    fn forward_eval(&self, zc: &Act<T>) -> Act<T> {
        let mut h = self.fc.forward_eval(zc);
        relu_inplace(&mut h.data);
        let (c, s) = self.base;
        let mut h = h.reshape(c, s, s);
        for b in &self.blocks {
            h = b.forward_eval(&h);
        }
        let mut y = self.out_conv.forward_eval(&h);
        y.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        y
    }

    fn forward_train(&mut self, zc: &Act<T>) -> Act<T> {
        let mut h = self.fc.forward_train(zc);
        relu_inplace(&mut h.data);
        self.fc_out = Some(h.data.clone());
        let (c, s) = self.base;
        let mut h = h.reshape(c, s, s);
        for b in &mut self.blocks {
            h = b.forward_train(&h);
        }
        let mut y = self.out_conv.forward_train(&h);
        y.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        self.out = Some(y.data.clone());
        y
    }

    fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let out = self.out.take().expect("Decoder::backward without forward_train");
        let mut dpre = dy.clone();
        for (d, &s) in dpre.data.iter_mut().zip(&out) {
            *d *= s * (T::one() - s);
        }
        let mut dh = self.out_conv.backward(&dpre);
        for b in self.blocks.iter_mut().rev() {
            dh = b.backward(dh);
        }
        let fc_out = self.fc_out.take().expect("fc cache");
        let (n, feat) = (dh.n, dh.features());
        let mut dh = Act::flat(dh.data, n, feat);
        relu_backward(&mut dh.data, &fc_out);
        self.fc.backward(&dh)
    }
}

impl<T: Scalar> Module<T> for Decoder<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.fc.visit_params(f);
        for b in &mut self.blocks {
            b.visit(f);
        }
        self.out_conv.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for b in &mut self.blocks {
            b.bn.visit_buffers(f);
        }
    }
}

/// Encoder and decoder together.
#[derive(Debug, Clone)]
pub struct Vae<T> {
    pub arch: ArchConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
}

impl<T: Scalar> Module<T> for Vae<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.encoder.visit_params(f);
        self.decoder.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.encoder.visit_buffers(f);
        self.decoder.visit_buffers(f);
    }
}

/// Components of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub ortho: f64,
}

impl<T: Scalar> Vae<T> {
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            encoder: Encoder::new(&arch, rng),
            decoder: Decoder::new(&arch, rng),
            arch,
        })
    }

    pub fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    fn check_images(&self, x: &ImageTensor) -> Result<()> {
        let a = &self.arch;
        if x.c != a.in_channels || x.h != a.image_size || x.w != a.image_size {
            return Err(Error::Shape(format!(
                "expected images ({}, {s}, {s}), got ({}, {}, {})",
                a.in_channels,
                x.c,
                x.h,
                x.w,
                s = a.image_size
            )));
        }
        Ok(())
    }

    pub fn images_to_act(&self, x: &ImageTensor) -> Result<Act<T>> {
        self.check_images(x)?;
        Ok(Act::new(
            x.data.iter().map(|&v| T::cast_f32(v)).collect(),
            x.n,
            x.c,
            x.h,
            x.w,
        ))
    }

    /// Eval-mode encoding: `(mu, logvar)`, each `(B, q)`.
    pub fn encode(&self, x: &ImageTensor) -> Result<(Matrix<T>, Matrix<T>)> {
        let act = self.images_to_act(x)?;
        let (mu, lv) = self.encoder.forward_eval(&act);
        let q = self.arch.latent_dim;
        Ok((Matrix::new(mu.data, x.n, q)?, Matrix::new(lv.data, x.n, q)?))
    }

    /// Eval-mode `mu` for a large set, processed in chunks of `chunk` samples.
    pub fn encode_mu(&self, x: &ImageTensor, chunk: usize) -> Result<Matrix<T>> {
        let mut parts = Vec::new();
        let mut start = 0;
        while start < x.n {
            let end = (start + chunk.max(1)).min(x.n);
            let idx: Vec<usize> = (start..end).collect();
            parts.push(self.encode(&x.gather(&idx))?.0);
            start = end;
        }
        if parts.is_empty() {
            return Ok(Matrix::zeros(0, self.arch.latent_dim));
        }
        Matrix::vstack(&parts)
    }

    /// Eval-mode decoding of `z` (B, q) conditioned on `c` (B, K).
    pub fn decode(&self, z: &Matrix<T>, c: &Matrix<T>) -> Result<Act<T>> {
        let zc = self.concat_condition(z, c)?;
        Ok(self.decoder.forward_eval(&zc))
    }

    fn concat_condition(&self, z: &Matrix<T>, c: &Matrix<T>) -> Result<Act<T>> {
        let (q, k) = (self.arch.latent_dim, self.arch.cond_dim);
        if z.cols != q {
            return Err(Error::Shape(format!("z has {} columns, expected {q}", z.cols)));
        }
        if c.cols != k || c.rows != z.rows {
            return Err(Error::Shape(format!(
                "condition is {}x{}, expected {}x{k}",
                c.rows, c.cols, z.rows
            )));
        }
        if k > 0 {
            let tol = T::c(1e-5);
            for (i, row) in c.iter_rows().enumerate() {
                let s: T = row.iter().copied().sum();
                if (s - T::one()).abs() > tol {
                    return Err(Error::InvalidArgument(format!(
                        "condition row {i} sums to {:?}, not 1",
                        s
                    )));
                }
            }
        }
        let mut data = Vec::with_capacity(z.rows * (q + k));
        for i in 0..z.rows {
            data.extend_from_slice(z.row(i));
            data.extend_from_slice(c.row(i));
        }
        Ok(Act::flat(data, z.rows, q + k))
    }

    /// Training-mode forward through the encoder (batch statistics, caches kept).
    pub fn encode_train(&mut self, x: &Act<T>) -> (Matrix<T>, Matrix<T>) {
        let (mu, lv) = self.encoder.forward_train(x);
        let q = self.arch.latent_dim;
        (
            Matrix {
                data: mu.data,
                rows: x.n,
                cols: q,
            },
            Matrix {
                data: lv.data,
                rows: x.n,
                cols: q,
            },
        )
    }

    /// Training-mode forward through the decoder.
    pub fn decode_train(&mut self, z: &Matrix<T>, c: &Matrix<T>) -> Result<Act<T>> {
        let zc = self.concat_condition(z, c)?;
        Ok(self.decoder.forward_train(&zc))
    }

    /// Backpropagates `d loss / d x_tilde`; returns `(d z, d c)`.
    pub fn decoder_backward(&mut self, dxt: &Act<T>) -> (Matrix<T>, Matrix<T>) {
        let (q, k) = (self.arch.latent_dim, self.arch.cond_dim);
        let dzc = self.decoder.backward(dxt);
        let mut dz = Matrix::zeros(dzc.n, q);
        let mut dc = Matrix::zeros(dzc.n, k);
        for (i, row) in dzc.data.chunks_exact(q + k).enumerate() {
            dz.row_mut(i).copy_from_slice(&row[..q]);
            dc.row_mut(i).copy_from_slice(&row[q..]);
        }
        (dz, dc)
    }

    /// Backpropagates `(d mu, d logvar)` through the encoder.
    pub fn encoder_backward(&mut self, dmu: &Matrix<T>, dlogvar: &Matrix<T>) {
        let dmu = Act::flat(dmu.data.clone(), dmu.rows, dmu.cols);
        let dlv = Act::flat(dlogvar.data.clone(), dlogvar.rows, dlogvar.cols);
        self.encoder.backward(&dmu, &dlv);
    }
}

/// Draws `eps ~ N(0, 1)` and returns `(z, eps)` with `z = mu + eps * exp(logvar / 2)`.
pub fn reparameterize<T: Scalar, R: Rng + ?Sized>(
    mu: &Matrix<T>,
    logvar: &Matrix<T>,
    rng: &mut R,
) -> (Matrix<T>, Matrix<T>) {
    let eps = Matrix {
        data: (0..mu.data.len())
            .map(|_| T::c(rng.sample::<f64, _>(StandardNormal)))
            .collect(),
        rows: mu.rows,
        cols: mu.cols,
    };
    (reparameterize_with(mu, logvar, &eps), eps)
}

/// `z = mu + eps * exp(logvar / 2)` for given noise.
pub fn reparameterize_with<T: Scalar>(mu: &Matrix<T>, logvar: &Matrix<T>, eps: &Matrix<T>) -> Matrix<T> {
    let half = T::c(0.5);
    Matrix {
        data: mu
            .data
            .iter()
            .zip(&logvar.data)
            .zip(&eps.data)
            .map(|((&m, &lv), &e)| m + e * (lv * half).exp())
            .collect(),
        rows: mu.rows,
        cols: mu.cols,
    }
}

/// Reconstruction (sum over pixels, mean over batch), KL to N(0, I) (mean over
/// batch) and the weighted total `recon + beta * kl + lambda_ortho * ortho`.
pub fn elbo_loss<T: Scalar>(
    x: &[T],
    x_tilde: &[T],
    mu: &Matrix<T>,
    logvar: &Matrix<T>,
    beta: f64,
    ortho: f64,
    lambda_ortho: f64,
) -> Result<LossBreakdown> {
    if x.len() != x_tilde.len() || mu.data.len() != logvar.data.len() || mu.rows == 0 {
        return Err(Error::Shape("elbo_loss operand shapes differ".into()));
    }
    if beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta = {beta} < 0")));
    }
    let b = mu.rows as f64;
    let recon: f64 = x
        .iter()
        .zip(x_tilde)
        .map(|(&a, &r)| {
            let d = (a - r).to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum::<f64>()
        / b;
    let kl = kl_divergence(mu, logvar);
    let total = recon + beta * kl + lambda_ortho * ortho;
    if !(total.is_finite() && recon.is_finite() && kl.is_finite() && ortho.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite loss: recon {recon}, kl {kl}, ortho {ortho}"
        )));
    }
    Ok(LossBreakdown {
        total,
        recon,
        kl,
        ortho,
    })
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))`, summed over dims, averaged over rows.
pub fn kl_divergence<T: Scalar>(mu: &Matrix<T>, logvar: &Matrix<T>) -> f64 {
    let s: f64 = mu
        .data
        .iter()
        .zip(&logvar.data)
        .map(|(&m, &lv)| {
            let (m, lv) = (m.to_f64().unwrap_or(f64::NAN), lv.to_f64().unwrap_or(f64::NAN));
            -0.5 * (1.0 + lv - m * m - lv.exp())
        })
        .sum();
    s / mu.rows.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_arch(q: usize, k: usize) -> ArchConfig {
        ArchConfig {
            in_channels: 1,
            image_size: 8,
            latent_dim: q,
            cond_dim: k,
            enc_channels: [3, 4, 5],
            dec_channels: [4, 3, 2],
        }
    }

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix<f64> {
        Matrix::new(v.to_vec(), rows, cols).unwrap()
    }

    #[test]
    fn encode_shapes_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vae = Vae::<f32>::new(ArchConfig::standard(32, 10), &mut rng).unwrap();
        let x = ImageTensor::new(vec![0.5; 4 * 1024], 4, 1, 32, 32).unwrap();
        let (mu, lv) = vae.encode(&x).unwrap();
        assert_eq!((mu.rows, mu.cols), (4, 32));
        assert_eq!((lv.rows, lv.cols), (4, 32));
        assert!(mu.data.iter().chain(&lv.data).all(|v| v.is_finite()));
        // identical inputs give identical rows
        assert_eq!(mu.row(0), mu.row(3));
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vae = Vae::<f32>::new(ArchConfig::standard(8, 4), &mut rng).unwrap();
        let x = ImageTensor::new(vec![0.0; 2 * 784], 2, 1, 28, 28).unwrap();
        assert!(matches!(vae.encode(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn decoder_input_width_is_q_plus_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vae = Vae::<f32>::new(ArchConfig::standard(32, 10), &mut rng).unwrap();
        assert_eq!(vae.decoder.fc.in_features(), 42);
    }

    #[test]
    fn decode_range_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vae = Vae::<f32>::new(ArchConfig::standard(6, 3), &mut rng).unwrap();
        let z = Matrix::new((0..12).map(|i| i as f32 * 0.3 - 1.5).collect(), 2, 6).unwrap();
        let c = Matrix::new(vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0], 2, 3).unwrap();
        let y = vae.decode(&z, &c).unwrap();
        assert_eq!((y.n, y.c, y.h, y.w), (2, 1, 32, 32));
        assert!(y.data.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn decode_rejects_k_mismatch_and_off_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vae = Vae::<f64>::new(tiny_arch(2, 3), &mut rng).unwrap();
        let z = m(1, 2, &[0.0, 0.0]);
        assert!(matches!(vae.decode(&z, &m(1, 2, &[0.5, 0.5])), Err(Error::Shape(_))));
        assert!(matches!(
            vae.decode(&z, &m(1, 3, &[0.5, 0.5, 0.5])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn eval_forward_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vae = Vae::<f32>::new(ArchConfig::standard(8, 4), &mut rng).unwrap();
        let x = ImageTensor::new((0..3 * 1024).map(|i| (i % 17) as f32 / 17.0).collect(), 3, 1, 32, 32).unwrap();
        let a = vae.encode(&x).unwrap();
        let b = vae.encode(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reparameterize_formula() {
        let mu = m(1, 2, &[0.3, -1.0]);
        let lv = m(1, 2, &[0.0, 2.0]);
        let z0 = reparameterize_with(&mu, &lv, &m(1, 2, &[0.0, 0.0]));
        assert_eq!(z0, mu);
        let z1 = reparameterize_with(&m(1, 1, &[0.0]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0]));
        assert_eq!(z1.data, vec![1.0]);
        let z = reparameterize_with(&mu, &lv, &m(1, 2, &[1.0, 1.0]));
        assert!((z.data[1] - (-1.0 + 1.0f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn reparameterize_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let zeros = Matrix::<f64>::zeros(n, 1);
        let (z, _) = reparameterize(&zeros, &zeros, &mut rng);
        let mean = z.data.iter().sum::<f64>() / n as f64;
        let var = z.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&m(1, 3, &[0.0; 3]), &m(1, 3, &[0.0; 3])), 0.0);
        assert!((kl_divergence(&m(1, 1, &[1.0]), &m(1, 1, &[0.0])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn elbo_total_composition() {
        let x = [0.0, 1.0, 0.5, 0.5];
        let xt = [0.5, 0.5, 0.5, 0.0];
        let l = elbo_loss(&x, &xt, &m(2, 1, &[1.0, 0.0]), &m(2, 1, &[0.0, 0.0]), 2.0, 0.25, 4.0).unwrap();
        assert!((l.recon - 0.375).abs() < 1e-12);
        assert!((l.kl - 0.25).abs() < 1e-12);
        assert!((l.total - (0.375 + 0.5 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn elbo_rejects_non_finite() {
        let r = elbo_loss(&[f64::NAN], &[0.0], &m(1, 1, &[0.0]), &m(1, 1, &[0.0]), 1.0, 0.0, 0.0);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
