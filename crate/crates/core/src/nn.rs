//! Dense layers, tanh, Adam and flat parameter views shared by the MLP
//! forecaster and the VAE.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

/// Seeded, platform-independent generator used everywhere randomness enters.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let v: f64 = StandardNormal.sample(rng);
    T::lit(v)
}

pub fn normal_vec<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Fisher–Yates with the crate's generator, so permutations are stable
/// across `rand` releases.
pub fn shuffle<R: Rng + ?Sized>(rng: &mut R, items: &mut [usize]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Affine layer `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    /// Glorot-normal weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let scale = T::lit((2.0 / (inputs + outputs) as f64).sqrt());
        let data = (0..inputs * outputs)
            .map(|_| standard_normal::<T, _>(rng) * scale)
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs());
        (0..self.outputs())
            .map(|r| dot(self.weights.row(r), x) + self.bias[r])
            .collect()
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.inputs()];
        for (r, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.bias[r] = grad.bias[r] + g;
            let w_row = self.weights.row(r);
            for ((gw, &xi), (dxi, &w)) in grad
                .weights
                .row_mut(r)
                .iter_mut()
                .zip(x)
                .zip(dx.iter_mut().zip(w_row))
            {
                *gw = *gw + g * xi;
                *dxi = *dxi + g * w;
            }
        }
        dx
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn write_flat(&self, out: &mut Vec<T>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }

    /// Reads parameters from the front of `src`, returning how many were used.
    pub fn read_flat(&mut self, src: &[T]) -> usize {
        let nw = self.weights.as_slice().len();
        let nb = self.bias.len();
        self.weights.as_mut_slice().copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..nw + nb]);
        nw + nb
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

pub fn tanh_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Backprop through `h = tanh(a)` given `h`.
pub fn tanh_backward<T: Scalar>(h: &[T], dh: &[T]) -> Vec<T> {
    h.iter()
        .zip(dh)
        .map(|(&h, &g)| g * (T::one() - h * h))
        .collect()
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Rescales `grads` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [T], max_norm: T) {
    let norm = grads.iter().map(|&g| g * g).sum::<T>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads {
            *g = *g * s;
        }
    }
}
