//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vaesim::nn::{Act, Module};
use vaesim::train::forward_backward;
use vaesim::{ArchConfig, Matrix, PrototypeBank, SimilarityMode, Vae};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Denominator floor. Central differences of an O(10) loss carry about 1e-11
/// of rounding noise, so gradients that are exactly zero (conv biases feeding
/// batch norm; kernel taps that only ever see padding at this 8x8 size) are
/// held to an absolute bound of TOL * FLOOR instead.
pub const FLOOR: f64 = 1e-6;

pub fn tiny_arch(k: usize) -> ArchConfig {
    ArchConfig {
        in_channels: 1,
        image_size: 8,
        latent_dim: 4,
        cond_dim: k,
        enc_channels: [3, 4, 5],
        dec_channels: [4, 3, 2],
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

pub struct Problem {
    pub vae: Vae<f64>,
    pub bank: Option<PrototypeBank<f64>>,
    pub x: Act<f64>,
    pub eps: Matrix<f64>,
    pub tau: f64,
}

impl Problem {
    pub fn new(k: usize, mode: SimilarityMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vae = Vae::<f64>::new(tiny_arch(k), &mut rng).unwrap();
        let b = 6;
        let x = Act::new((0..b * 64).map(|_| rng.random::<f64>()).collect(), b, 1, 8, 8);
        let eps = Matrix::new((0..b * 4).map(|_| rng.sample(StandardNormal)).collect(), b, 4).unwrap();
        let bank = (k > 0).then(|| {
            let q = Matrix::new((0..k * 4).map(|_| rng.sample(StandardNormal)).collect(), k, 4).unwrap();
            PrototypeBank::from_matrix(q, 0.95).unwrap().with_similarity(mode)
        });
        Self {
            vae,
            bank,
            x,
            eps,
            tau: 0.7,
        }
    }

    pub fn loss_and_grads(&self, vae: &mut Vae<f64>) -> f64 {
        vae.zero_grad();
        let mut bank = self.bank.clone();
        forward_backward(vae, bank.as_mut(), &self.x, &self.eps, self.tau, 1.3, 0.2, 0)
            .unwrap()
            .loss
            .total
    }
}

pub struct GradReport {
    pub checked: usize,
    pub below_floor: usize,
    pub worst: f64,
    /// First entry over tolerance, if any.
    pub failure: Option<String>,
}

/// Compares every analytic parameter gradient with a central difference.
pub fn check_all_params(p: &Problem) -> GradReport {
    let mut model = p.vae.clone();
    p.loss_and_grads(&mut model);
    let mut analytic = Vec::new();
    model.visit_params(&mut |prm| analytic.push((prm.name.clone(), prm.grad.clone())));

    let mut rep = GradReport {
        checked: 0,
        below_floor: 0,
        worst: 0.0,
        failure: None,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (j, &g) in grads.iter().enumerate() {
            let eval = |delta: f64| {
                let mut m = p.vae.clone();
                let mut idx = 0;
                m.visit_params(&mut |prm| {
                    if idx == pi {
                        prm.value[j] += delta;
                    }
                    idx += 1;
                });
                p.loss_and_grads(&mut m)
            };
            let num = (eval(H) - eval(-H)) / (2.0 * H);
            let e = rel_err(g, num);
            if e >= TOL && rep.failure.is_none() {
                rep.failure = Some(format!("{name}[{j}]: analytic {g:e} numeric {num:e} rel {e:e}"));
            }
            rep.worst = rep.worst.max(e);
            rep.checked += 1;
            rep.below_floor += usize::from(g.abs().max(num.abs()) < FLOOR);
        }
    }
    rep
}

/// Monte Carlo estimate of KL(N(mu, exp(lv)) || N(0, I)).
pub fn kl_monte_carlo(mu: &[f64], lv: &[f64], draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..draws {
        let mut log_ratio = 0.0;
        for d in 0..mu.len() {
            let e: f64 = rng.sample(StandardNormal);
            let s = (lv[d] / 2.0).exp();
            let z = mu[d] + s * e;
            log_ratio += (-0.5 * e * e - s.ln()) + 0.5 * z * z;
        }
        acc += log_ratio;
    }
    acc / draws as f64
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Global k-means optimum over all partitions into at most `k` groups.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    fn rec(i: usize, used: usize, k: usize, labels: &mut [usize], pts: &[Vec<f64>], best: &mut f64) {
        if i == labels.len() {
            let mut cost = 0.0;
            for c in 0..used {
                let members: Vec<&Vec<f64>> = (0..pts.len()).filter(|&j| labels[j] == c).map(|j| &pts[j]).collect();
                let mean: Vec<f64> = (0..pts[0].len())
                    .map(|d| members.iter().map(|r| r[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                cost += members.iter().map(|r| sq_dist(r, &mean)).sum::<f64>();
            }
            *best = best.min(cost);
            return;
        }
        // Restricted growth strings visit each set partition once.
        for c in 0..(used + 1).min(k) {
            labels[i] = c;
            rec(i + 1, used.max(c + 1), k, labels, pts, best);
        }
    }
    let mut best = f64::INFINITY;
    rec(0, 0, k, &mut vec![0; points.len()], points, &mut best);
    best
}

/// All-pairs kNN: nearest `k` by (squared distance, index), majority label,
/// ties to the smaller label.
pub fn brute_force_knn(bank: &[Vec<f32>], bank_labels: &[usize], query: &[f32], k: usize) -> usize {
    let mut d: Vec<(f64, usize)> = bank
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let s = b.iter().zip(query).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
            (s, i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_labels = bank_labels.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; n_labels];
    for &(_, i) in &d[..k] {
        votes[bank_labels[i]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}
