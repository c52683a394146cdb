//! Gaussian VAE over flattened input windows.
//!
//! Encoder `x → tanh(hidden) → (μ, log σ²)`, decoder `z → tanh(hidden) → x̂`.
//! The loss per window is `½‖x − x̂‖² + ½ Σ (μ² + σ² − log σ² − 1)` with
//! `z = μ + σ ⊙ noise` (unit-variance Gaussian decoder, constant dropped).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, Adam, Dense};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VaeError {
    #[error("expected input of length {expected}, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("expected noise of length {expected}, got {got}")]
    NoiseLength { expected: usize, got: usize },
    #[error("training data is empty")]
    EmptyData,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            latent_dim: 8,
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VaeParams<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub enc_hidden: Dense<T>,
    pub enc_mu: Dense<T>,
    pub enc_logvar: Dense<T>,
    pub dec_hidden: Dense<T>,
    pub dec_out: Dense<T>,
}

/// Encoder outputs for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LatentEncoding<T> {
    pub mu: Vec<T>,
    /// `exp(log σ²)`, strictly positive.
    pub var: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ElboTerms<T> {
    pub total: T,
    pub recon: T,
    pub kl: T,
}

impl<T: Scalar> ElboTerms<T> {
    fn zero() -> Self {
        Self {
            total: T::zero(),
            recon: T::zero(),
            kl: T::zero(),
        }
    }

    fn add(&mut self, o: &Self) {
        self.total = self.total + o.total;
        self.recon = self.recon + o.recon;
        self.kl = self.kl + o.kl;
    }

    fn scale(&mut self, s: T) {
        self.total = self.total * s;
        self.recon = self.recon * s;
        self.kl = self.kl * s;
    }
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − log σ² − 1)`.
pub fn kl_divergence<T: Scalar>(mu: &[T], log_var: &[T]) -> T {
    let half = T::lit(0.5);
    mu.iter()
        .zip(log_var)
        .map(|(&m, &lv)| half * (m * m + lv.exp() - lv - T::one()))
        .sum()
}

struct Trace<T> {
    h: Vec<T>,
    mu: Vec<T>,
    log_var: Vec<T>,
    sigma: Vec<T>,
    z: Vec<T>,
    g: Vec<T>,
    x_hat: Vec<T>,
}

impl<T: Scalar> VaeParams<T> {
    /// Glorot-initialized parameters from `seed`.
    pub fn init(input_dim: usize, hidden_dim: usize, latent_dim: usize, seed: u64) -> Self {
        let mut rng = nn::seeded_rng(seed);
        Self {
            input_dim,
            hidden_dim,
            latent_dim,
            seed,
            enc_hidden: Dense::glorot(input_dim, hidden_dim, &mut rng),
            enc_mu: Dense::glorot(hidden_dim, latent_dim, &mut rng),
            enc_logvar: Dense::glorot(hidden_dim, latent_dim, &mut rng),
            dec_hidden: Dense::glorot(latent_dim, hidden_dim, &mut rng),
            dec_out: Dense::glorot(hidden_dim, input_dim, &mut rng),
        }
    }

    fn layers(&self) -> [&Dense<T>; 5] {
        [&self.enc_hidden, &self.enc_mu, &self.enc_logvar, &self.dec_hidden, &self.dec_out]
    }

    fn layers_mut(&mut self) -> [&mut Dense<T>; 5] {
        [
            &mut self.enc_hidden,
            &mut self.enc_mu,
            &mut self.enc_logvar,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// All parameters, layer by layer (weights row-major, then bias).
    pub fn params(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            l.write_flat(&mut v);
        }
        v
    }

    pub fn set_params(&mut self, flat: &[T]) {
        let mut at = 0;
        for l in self.layers_mut() {
            at += l.read_flat(&flat[at..]);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }

    fn check_input(&self, x: &[T]) -> Result<(), VaeError> {
        if x.len() != self.input_dim {
            return Err(VaeError::InputLength {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn encoder_heads(&self, x: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut h = self.enc_hidden.forward(x);
        nn::tanh_in_place(&mut h);
        let mu = self.enc_mu.forward(&h);
        let log_var = self.enc_logvar.forward(&h);
        (h, mu, log_var)
    }

    pub fn encode(&self, x: &[T]) -> Result<LatentEncoding<T>, VaeError> {
        self.check_input(x)?;
        let (_, mu, log_var) = self.encoder_heads(x);
        let var = log_var.iter().map(|v| v.exp()).collect();
        Ok(LatentEncoding { mu, var })
    }

    pub fn decode(&self, z: &[T]) -> Result<Vec<T>, VaeError> {
        if z.len() != self.latent_dim {
            return Err(VaeError::NoiseLength {
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        let mut g = self.dec_hidden.forward(z);
        nn::tanh_in_place(&mut g);
        Ok(self.dec_out.forward(&g))
    }

    /// Deterministic autoencoder path `decode(encode(x).mu)`.
    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>, VaeError> {
        let enc = self.encode(x)?;
        self.decode(&enc.mu)
    }

    fn forward_trace(&self, x: &[T], noise: &[T]) -> Result<Trace<T>, VaeError> {
        self.check_input(x)?;
        if noise.len() != self.latent_dim {
            return Err(VaeError::NoiseLength {
                expected: self.latent_dim,
                got: noise.len(),
            });
        }
        let (h, mu, log_var) = self.encoder_heads(x);
        let sigma: Vec<T> = log_var.iter().map(|&lv| (lv * T::lit(0.5)).exp()).collect();
        let z: Vec<T> = mu
            .iter()
            .zip(&sigma)
            .zip(noise)
            .map(|((&m, &s), &e)| m + s * e)
            .collect();
        let mut g = self.dec_hidden.forward(&z);
        nn::tanh_in_place(&mut g);
        let x_hat = self.dec_out.forward(&g);
        Ok(Trace {
            h,
            mu,
            log_var,
            sigma,
            z,
            g,
            x_hat,
        })
    }

    fn terms(&self, x: &[T], t: &Trace<T>) -> Result<ElboTerms<T>, VaeError> {
        let recon = T::lit(0.5)
            * t.x_hat
                .iter()
                .zip(x)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>();
        let kl = kl_divergence(&t.mu, &t.log_var);
        let total = recon + kl;
        if !total.is_finite() {
            return Err(VaeError::NonFinite("ELBO loss"));
        }
        Ok(ElboTerms { total, recon, kl })
    }

    /// Single-sample loss for window `x` with the reparameterization noise
    /// supplied by the caller.
    pub fn elbo_loss(&self, x: &[T], noise: &[T]) -> Result<ElboTerms<T>, VaeError> {
        let t = self.forward_trace(x, noise)?;
        self.terms(x, &t)
    }

    /// Loss and its gradient with respect to [`VaeParams::params`].
    pub fn elbo_loss_and_grad(&self, x: &[T], noise: &[T]) -> Result<(ElboTerms<T>, Vec<T>), VaeError> {
        let mut grads = self.zero_grads();
        let terms = self.accumulate_grad(x, noise, T::one(), &mut grads)?;
        Ok((terms, flatten(&grads)))
    }

    fn zero_grads(&self) -> [Dense<T>; 5] {
        self.layers().map(|l| Dense::zeros(l.inputs(), l.outputs()))
    }

    fn accumulate_grad(
        &self,
        x: &[T],
        noise: &[T],
        weight: T,
        grads: &mut [Dense<T>; 5],
    ) -> Result<ElboTerms<T>, VaeError> {
        let t = self.forward_trace(x, noise)?;
        let terms = self.terms(x, &t)?;
        let half = T::lit(0.5);
        let [g_enc_h, g_mu, g_lv, g_dec_h, g_out] = grads;

        let dx_hat: Vec<T> = t.x_hat.iter().zip(x).map(|(&a, &b)| (a - b) * weight).collect();
        let dg = self.dec_out.backward(&t.g, &dx_hat, g_out);
        let da_dec = nn::tanh_backward(&t.g, &dg);
        let dz = self.dec_hidden.backward(&t.z, &da_dec, g_dec_h);

        let dmu: Vec<T> = dz.iter().zip(&t.mu).map(|(&d, &m)| d + m * weight).collect();
        let dlv: Vec<T> = dz
            .iter()
            .zip(noise)
            .zip(&t.sigma)
            .zip(&t.log_var)
            .map(|(((&d, &e), &s), &lv)| d * e * s * half + half * (lv.exp() - T::one()) * weight)
            .collect();

        let mut dh = self.enc_mu.backward(&t.h, &dmu, g_mu);
        let dh_lv = self.enc_logvar.backward(&t.h, &dlv, g_lv);
        for (a, b) in dh.iter_mut().zip(dh_lv) {
            *a = *a + b;
        }
        let da_enc = nn::tanh_backward(&t.h, &dh);
        self.enc_hidden.backward(x, &da_enc, g_enc_h);
        Ok(terms)
    }

    /// Mean loss over `data` with one noise draw per window from `seed`.
    pub fn mean_loss(&self, data: &[Vec<T>], seed: u64) -> Result<ElboTerms<T>, VaeError> {
        let mut rng = nn::seeded_rng(seed);
        let mut acc = ElboTerms::zero();
        for x in data {
            let noise: Vec<T> = nn::normal_vec(&mut rng, self.latent_dim);
            acc.add(&self.elbo_loss(x, &noise)?);
        }
        acc.scale(T::one() / T::from_usize_lossy(data.len().max(1)));
        Ok(acc)
    }
}

fn flatten<T: Scalar>(grads: &[Dense<T>; 5]) -> Vec<T> {
    let mut v = Vec::new();
    for g in grads {
        g.write_flat(&mut v);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpochLoss<T> {
    pub epoch: usize,
    pub terms: ElboTerms<T>,
}

/// Mean loss over the training set with fixed evaluation noise: entry 0 is
/// the initialization, entry `k` follows epoch `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(bound = "T: Scalar")]
pub struct VaeTrainLog<T> {
    pub epochs: Vec<EpochLoss<T>>,
}

impl<T: Scalar> VaeTrainLog<T> {
    pub fn initial(&self) -> Option<T> {
        self.epochs.first().map(|e| e.terms.total)
    }

    pub fn last(&self) -> Option<T> {
        self.epochs.last().map(|e| e.terms.total)
    }
}

const EVAL_NOISE_SALT: u64 = 0x0e7a_1f00_d5ee_d001;
const TRAIN_SALT: u64 = 0x7a41_9000_0000_0001;

/// Mini-batch Adam on the mean single-sample loss. Deterministic in `seed`.
pub fn train_vae<T: Scalar>(
    data: &[Vec<T>],
    config: VaeConfig,
    seed: u64,
) -> Result<(VaeParams<T>, VaeTrainLog<T>), VaeError> {
    let first = data.first().ok_or(VaeError::EmptyData)?;
    let dim = first.len();
    if let Some(bad) = data.iter().find(|x| x.len() != dim) {
        return Err(VaeError::InputLength {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut params = VaeParams::init(dim, config.hidden_dim, config.latent_dim, seed);
    let eval_seed = seed ^ EVAL_NOISE_SALT;
    let mut log = VaeTrainLog::default();
    let initial = params
        .mean_loss(data, eval_seed)
        .map_err(|_| VaeError::Diverged { epoch: 0, step: 0 })?;
    log.epochs.push(EpochLoss {
        epoch: 0,
        terms: initial,
    });

    let mut rng = nn::seeded_rng(seed ^ TRAIN_SALT);
    let mut flat = params.params();
    let mut opt = Adam::new(flat.len(), T::lit(config.learning_rate));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch_size = config.batch_size.max(1);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        nn::shuffle(&mut rng, &mut order);
        for chunk in order.chunks(batch_size) {
            step += 1;
            let mut grads = params.zero_grads();
            let w = T::one() / T::from_usize_lossy(chunk.len());
            for &i in chunk {
                let noise: Vec<T> = nn::normal_vec(&mut rng, params.latent_dim);
                params
                    .accumulate_grad(&data[i], &noise, w, &mut grads)
                    .map_err(|_| VaeError::Diverged { epoch, step })?;
            }
            let mut g = flatten(&grads);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(VaeError::Diverged { epoch, step });
            }
            nn::clip_grad_norm(&mut g, T::lit(10.0));
            opt.update(&mut flat, &g);
            params.set_params(&flat);
        }
        let terms = params
            .mean_loss(data, eval_seed)
            .map_err(|_| VaeError::Diverged { epoch, step })?;
        log::debug!("vae epoch {epoch}: loss {}", terms.total);
        log.epochs.push(EpochLoss { epoch, terms });
    }
    Ok((params, log))
}
