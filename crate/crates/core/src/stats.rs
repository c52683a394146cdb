//! Statistical primitives shared by both rejectors: error variance,
//! Student-t critical values, interval/variance algebra, the latent Gaussian
//! summary and Mahalanobis distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Cholesky, LinalgError, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("degrees of freedom must be at least 1")]
    InvalidDof,
    #[error("interval width must be non-negative and finite, got {0}")]
    InvalidWidth(f64),
    #[error("target rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("negative variance {value} at sample {sample}, component {component}")]
    NegativeVariance {
        sample: usize,
        component: usize,
        value: f64,
    },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("covariance factorization failed after regularization: {0}")]
    Factorization(#[from] LinalgError),
}

/// Literal error variance `Σ e² / (n − 1)`; with `centered` the residual mean
/// is subtracted first (ordinary sample variance).
pub fn error_variance<T: Scalar>(residuals: &[T], centered: bool) -> Result<T, StatsError> {
    let n = residuals.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    let shift = if centered {
        crate::scalar::mean(residuals).unwrap_or_else(T::zero)
    } else {
        T::zero()
    };
    let ss: T = residuals.iter().map(|&e| (e - shift) * (e - shift)).sum();
    Ok(ss / T::from_usize_lossy(n - 1))
}

/// Significance level and degrees of freedom of a two-sided t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSpec {
    pub alpha: f64,
    pub dof: u64,
}

impl ConfidenceSpec {
    pub fn new(alpha: f64, dof: u64) -> Result<Self, StatsError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(StatsError::InvalidAlpha(alpha));
        }
        if dof == 0 {
            return Err(StatsError::InvalidDof);
        }
        Ok(Self { alpha, dof })
    }

    /// For `n` samples (`n − 1` degrees of freedom).
    pub fn for_samples(alpha: f64, n: usize) -> Result<Self, StatsError> {
        Self::new(alpha, n.saturating_sub(1) as u64)
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

fn ln_beta<T: Scalar>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..20_000usize {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, with `y = 1 − x` passed
/// separately so callers can supply it without cancellation.
pub fn beta_inc<T: Scalar>(a: T, b: T, x: T, y: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if y <= T::zero() {
        return T::one();
    }
    let front = (a * x.ln() + b * y.ln() - ln_beta(a, b)).exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, y) / b
    }
}

/// Upper tail `P(T > t)` of Student-t with `dof` degrees of freedom, `t ≥ 0`.
pub fn student_t_sf<T: Scalar>(t: T, dof: T) -> T {
    let t2 = t * t;
    let denom = dof + t2;
    T::lit(0.5) * beta_inc(dof / T::lit(2.0), T::lit(0.5), dof / denom, t2 / denom)
}

pub fn student_t_pdf<T: Scalar>(t: T, dof: T) -> T {
    let half = T::lit(0.5);
    let ln_norm = ln_gamma((dof + T::one()) * half) - ln_gamma(dof * half) - half * (dof * T::PI()).ln();
    (ln_norm - (dof + T::one()) * half * (t * t / dof).ln_1p()).exp()
}

/// Upper `α/2` critical value `t_{α/2, dof}`.
///
/// Solves `P(T > t) = α/2` by Newton steps on the incomplete-beta tail,
/// falling back to bisection whenever a step leaves the bracket.
pub fn t_quantile<T: Scalar>(spec: ConfidenceSpec) -> T {
    let p = T::lit(spec.alpha / 2.0);
    let dof = T::lit(spec.dof as f64);
    let f = |t: T| student_t_sf(t, dof) - p;

    let mut lo = T::zero();
    let mut hi = T::one();
    while f(hi) > T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return T::infinity();
        }
    }
    let mut t = (lo + hi) * T::lit(0.5);
    let tol = T::epsilon() * T::lit(16.0);
    for _ in 0..300 {
        let ft = f(t);
        if ft == T::zero() {
            return t;
        }
        if ft > T::zero() {
            lo = t;
        } else {
            hi = t;
        }
        let density = student_t_pdf(t, dof);
        let mut next = t + ft / density;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) * T::lit(0.5);
        }
        let step = (next - t).abs();
        t = next;
        if step <= tol * t.max(T::one()) || hi - lo <= tol * t.max(T::one()) {
            break;
        }
    }
    t
}

/// `(W / (2·t_crit))²` for an explicit critical value.
pub fn variance_threshold_from_critical<T: Scalar>(width: T, t_crit: T) -> Result<T, StatsError> {
    if !(width >= T::zero()) || !width.is_finite() {
        return Err(StatsError::InvalidWidth(width.to_f64_lossy()));
    }
    if width == T::zero() {
        log::warn!("interval width is 0: every positive variance estimate will be rejected");
    }
    let s = width / (T::lit(2.0) * t_crit);
    Ok(s * s)
}

/// Variance level at which a t interval reaches width `W`: `(W / (2·t_{α/2,dof}))²`.
///
/// `W = 0` yields 0 with a warning; negative or non-finite widths are errors.
pub fn variance_threshold<T: Scalar>(width: T, spec: ConfidenceSpec) -> Result<T, StatsError> {
    variance_threshold_from_critical(width, t_quantile::<T>(spec))
}

/// Inverse of [`variance_threshold`]: the width whose threshold is `variance`.
pub fn width_for_variance<T: Scalar>(variance: T, spec: ConfidenceSpec) -> T {
    T::lit(2.0) * t_quantile::<T>(spec) * variance.max(T::zero()).sqrt()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_inc_lower<T: Scalar>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let one = T::one();
    let eps = T::epsilon();
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + one {
        let mut ap = a;
        let mut del = one / a;
        let mut sum = del;
        for _ in 0..100_000 {
            ap = ap + one;
            del = del * x / ap;
            sum = sum + del;
            if del.abs() < sum.abs() * eps {
                break;
            }
        }
        sum * ln_front.exp()
    } else {
        let tiny = T::min_positive_value() / eps;
        let mut b = x + one - a;
        let mut c = one / tiny;
        let mut d = one / b;
        let mut h = d;
        for i in 1..100_000usize {
            let i = T::from_usize_lossy(i);
            let an = -i * (i - a);
            b = b + T::lit(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = one / d;
            let del = d * c;
            h = h * del;
            if (del - one).abs() <= eps {
                break;
            }
        }
        one - ln_front.exp() * h
    }
}

/// Quantile of the chi distribution with `dof` degrees of freedom:
/// the `r` with `P(‖Z‖ ≤ r) = prob` for `Z ~ N(0, I_dof)`.
pub fn chi_quantile<T: Scalar>(prob: f64, dof: usize) -> T {
    let p = T::lit(prob);
    let k = T::from_usize_lossy(dof) / T::lit(2.0);
    let cdf = |r: T| gamma_inc_lower(k, r * r / T::lit(2.0));
    let mut lo = T::zero();
    let mut hi = T::one();
    while cdf(hi) < p {
        lo = hi;
        hi = hi * T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    (lo + hi) * T::lit(0.5)
}

/// Mean and covariance of a set of latent encodings plus the regularized
/// inverse used for distance computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GaussianSummary<T> {
    pub mean: Vec<T>,
    /// Covariance before regularization.
    pub covariance: Matrix<T>,
    /// Diagonal loading `ε_reg` added before inversion.
    pub regularization: T,
    /// `(Σ + ε_reg·I)⁻¹`.
    pub precision: Matrix<T>,
    factor: Cholesky<T>,
}

impl<T: Scalar> GaussianSummary<T> {
    /// Regularizes with `ε_reg = 1e-6 · tr(Σ) / d` and factorizes.
    pub fn from_parts(mean: Vec<T>, covariance: Matrix<T>) -> Result<Self, StatsError> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(StatsError::Dimension(format!(
                "covariance {:?} for mean of length {d}",
                covariance.shape()
            )));
        }
        if !covariance.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let eps = T::lit(1e-6) * covariance.trace() / T::from_usize_lossy(d.max(1));
        let mut loaded = covariance.clone();
        for i in 0..d {
            loaded[(i, i)] = loaded[(i, i)] + eps;
        }
        let factor = Cholesky::new(&loaded)?;
        let precision = factor.inverse();
        Ok(Self {
            mean,
            covariance,
            regularization: eps,
            precision,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits the latent summary from per-sample encoder means and variances:
/// `μ = mean(μ_i)`, `Σ = mean_i[diag(σ²_i) + (μ_i − μ)(μ_i − μ)ᵀ]`.
pub fn fit_gaussian_summary<T: Scalar>(
    means: &[Vec<T>],
    variances: &[Vec<T>],
) -> Result<GaussianSummary<T>, StatsError> {
    let n = means.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    if variances.len() != n {
        return Err(StatsError::Dimension(format!(
            "{n} means but {} variance vectors",
            variances.len()
        )));
    }
    let d = means[0].len();
    for (i, (m, v)) in means.iter().zip(variances).enumerate() {
        if m.len() != d || v.len() != d {
            return Err(StatsError::Dimension(format!(
                "sample {i} has lengths ({}, {}), expected {d}",
                m.len(),
                v.len()
            )));
        }
        if let Some(c) = v.iter().position(|&x| x < T::zero()) {
            return Err(StatsError::NegativeVariance {
                sample: i,
                component: c,
                value: v[c].to_f64_lossy(),
            });
        }
    }
    let nf = T::from_usize_lossy(n);
    let mut mu = vec![T::zero(); d];
    for m in means {
        for (acc, &x) in mu.iter_mut().zip(m) {
            *acc = *acc + x;
        }
    }
    for acc in &mut mu {
        *acc = *acc / nf;
    }

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for (m, v) in means.iter().zip(variances) {
        for ((c, &x), &u) in centered.iter_mut().zip(m).zip(&mu) {
            *c = x - u;
        }
        for i in 0..d {
            cov[(i, i)] = cov[(i, i)] + v[i];
            for j in 0..=i {
                cov[(i, j)] = cov[(i, j)] + centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let val = cov[(i, j)] / nf;
            cov[(i, j)] = val;
            cov[(j, i)] = val;
        }
    }
    GaussianSummary::from_parts(mu, cov)
}

/// `sqrt((z − μ)ᵀ (Σ + ε_reg·I)⁻¹ (z − μ))`, evaluated through the Cholesky
/// factor so the result is never negative.
pub fn mahalanobis<T: Scalar>(z: &[T], summary: &GaussianSummary<T>) -> Result<T, StatsError> {
    if z.len() != summary.dim() {
        return Err(StatsError::Dimension(format!(
            "point of length {} for a {}-dimensional summary",
            z.len(),
            summary.dim()
        )));
    }
    let diff: Vec<T> = z.iter().zip(&summary.mean).map(|(&a, &b)| a - b).collect();
    let y = summary.factor.forward_substitute(&diff);
    Ok(y.iter().map(|&v| v * v).sum::<T>().sqrt())
}

/// Threshold picked from a calibration score set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RateCalibration<T> {
    pub threshold: T,
    pub target_rate: f64,
    /// Fraction of the calibration scores strictly above `threshold`.
    pub realized_rate: f64,
    pub samples: usize,
}

/// Empirical `(1 − rate)` quantile: with `k = ⌊rate·n⌋`, the threshold sits
/// midway between the `(n−k)`-th and `(n−k+1)`-th smallest scores so that
/// exactly `k` scores exceed it (fewer under ties). `rate = 0` returns the
/// maximum score.
pub fn calibrate_rate<T: Scalar>(scores: &[T], target_rate: f64) -> Result<RateCalibration<T>, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    if !(0.0..1.0).contains(&target_rate) {
        return Err(StatsError::InvalidRate(target_rate));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let n = sorted.len();
    let k = ((target_rate * n as f64) + 1e-9).floor() as usize;
    let k = k.min(n - 1);
    let threshold = if k == 0 {
        sorted[n - 1]
    } else {
        let below = sorted[n - k - 1];
        let above = sorted[n - k];
        if above.is_infinite() {
            below
        } else {
            below + (above - below) * T::lit(0.5)
        }
    };
    let exceed = scores.iter().filter(|&&s| s > threshold).count();
    Ok(RateCalibration {
        threshold,
        target_rate,
        realized_rate: exceed as f64 / n as f64,
        samples: n,
    })
}
