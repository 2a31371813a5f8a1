//! Differentiable building blocks with hand-written backward passes.
//!
//! Every layer is a pair of free functions: a forward evaluation and a
//! backward evaluation that maps an output gradient to the input gradient and
//! a parameter gradient of the same shape as the parameters. Gradients of
//! parameter sets reuse the parameter types themselves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fixed-size collection of trainable scalars that can be flattened in a
/// stable order.
pub trait Parameters<T: Real> {
    fn num_params(&self) -> usize;
    fn write_flat(&self, out: &mut Vec<T>);
    /// Reads `num_params()` values in the order produced by `write_flat`.
    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>);

    fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        self.write_flat(&mut v);
        v
    }
}

fn take<T: Copy>(src: &mut std::slice::Iter<'_, T>) -> T {
    *src.next().expect("parameter vector too short")
}

fn glorot<T: Real, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::lit(rng.random_range(-limit..limit))).collect()
}

/// Single-channel convolution with kernel size 1 or 3 and a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams<T> {
    pub kernel: Vec<T>,
    pub bias: T,
}

impl<T: Real> ConvParams<T> {
    pub fn new(kernel: Vec<T>, bias: T) -> Result<Self> {
        let p = Self { kernel, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(kernel_size: usize) -> Self {
        Self {
            kernel: vec![T::zero(); kernel_size],
            bias: T::zero(),
        }
    }

    /// Kernel with only the centre tap set to one.
    pub fn identity(kernel_size: usize) -> Self {
        let mut p = Self::zeros(kernel_size);
        p.kernel[kernel_size / 2] = T::one();
        p
    }

    pub fn init<R: Rng + ?Sized>(kernel_size: usize, rng: &mut R) -> Self {
        Self {
            kernel: glorot(rng, kernel_size, kernel_size, kernel_size),
            bias: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.kernel.len(), 1 | 3) {
            return Err(Error::InvalidArgument(format!(
                "convolution kernel length must be 1 or 3, got {}",
                self.kernel.len()
            )));
        }
        if !self.kernel.iter().chain([&self.bias]).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("convolution parameters".into()));
        }
        Ok(())
    }
}

impl<T: Real> Parameters<T> for ConvParams<T> {
    fn num_params(&self) -> usize {
        self.kernel.len() + 1
    }

    fn write_flat(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.kernel);
        out.push(self.bias);
    }

    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>) {
        for k in self.kernel.iter_mut() {
            *k = take(src);
        }
        self.bias = take(src);
    }
}

/// `y[i] = bias + sum_j kernel[j] * x[i + j - K/2]`, zero outside `[0, n)`.
pub fn conv1d_same<T: Real>(x: &[T], p: &ConvParams<T>) -> Result<Vec<T>> {
    p.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidArgument("convolution input is empty".into()));
    }
    Ok(conv_forward(x, p))
}

pub(crate) fn conv_forward<T: Real>(x: &[T], p: &ConvParams<T>) -> Vec<T> {
    let n = x.len() as isize;
    let half = (p.kernel.len() / 2) as isize;
    (0..n)
        .map(|i| {
            let mut acc = p.bias;
            for (j, &w) in p.kernel.iter().enumerate() {
                let src = i + j as isize - half;
                if (0..n).contains(&src) {
                    acc = acc + w * x[src as usize];
                }
            }
            acc
        })
        .collect()
}

/// Returns `(dL/dx, dL/dparams)` given the layer input and `dL/dy`.
pub fn conv1d_backward<T: Real>(x: &[T], p: &ConvParams<T>, gy: &[T]) -> (Vec<T>, ConvParams<T>) {
    let n = x.len() as isize;
    let half = (p.kernel.len() / 2) as isize;
    let mut gx = vec![T::zero(); x.len()];
    let mut grad = ConvParams::zeros(p.kernel.len());
    for i in 0..n {
        let g = gy[i as usize];
        grad.bias = grad.bias + g;
        for (j, &w) in p.kernel.iter().enumerate() {
            let src = i + j as isize - half;
            if (0..n).contains(&src) {
                grad.kernel[j] = grad.kernel[j] + g * x[src as usize];
                gx[src as usize] = gx[src as usize] + g * w;
            }
        }
    }
    (gx, grad)
}

/// Dense layer `y = W x + b` with `W` stored row-major (`out x in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LinearParams<T> {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let p = Self {
            in_dim,
            out_dim,
            weights,
            bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: glorot(rng, in_dim, out_dim, in_dim * out_dim),
            bias: vec![T::zero(); out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> T {
        self.weights[row * self.in_dim + col]
    }

    #[inline]
    pub fn weight_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.weights[row * self.in_dim + col]
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.in_dim * self.out_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim * self.out_dim,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.out_dim {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim,
                got: self.bias.len(),
            });
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("linear parameters".into()));
        }
        Ok(())
    }
}

impl<T: Real> Parameters<T> for LinearParams<T> {
    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn write_flat(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>) {
        for w in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            *w = take(src);
        }
    }
}

pub fn linear_layer<T: Real>(x: &[T], p: &LinearParams<T>) -> Result<Vec<T>> {
    if x.len() != p.in_dim {
        return Err(Error::DimensionMismatch {
            expected: p.in_dim,
            got: x.len(),
        });
    }
    p.validate()?;
    Ok(linear_forward(x, p))
}

pub(crate) fn linear_forward<T: Real>(x: &[T], p: &LinearParams<T>) -> Vec<T> {
    p.weights
        .chunks_exact(p.in_dim)
        .zip(&p.bias)
        .map(|(row, &b)| b + crate::scalar::dot(row, x))
        .collect()
}

pub fn linear_backward<T: Real>(x: &[T], p: &LinearParams<T>, gy: &[T]) -> (Vec<T>, LinearParams<T>) {
    let mut gx = vec![T::zero(); p.in_dim];
    let mut grad = LinearParams::zeros(p.in_dim, p.out_dim);
    for (r, &g) in gy.iter().enumerate() {
        grad.bias[r] = g;
        let row = &p.weights[r * p.in_dim..(r + 1) * p.in_dim];
        let grow = &mut grad.weights[r * p.in_dim..(r + 1) * p.in_dim];
        for c in 0..p.in_dim {
            grow[c] = g * x[c];
            gx[c] = gx[c] + g * row[c];
        }
    }
    (gx, grad)
}

pub fn tanh_eval<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Backward of tanh expressed through its output `y = tanh(x)`.
pub fn tanh_backward<T: Real>(y: &[T], gy: &[T]) -> Vec<T> {
    y.iter().zip(gy).map(|(&t, &g)| g * (T::one() - t * t)).collect()
}

/// Per-position thresholds `C` and slopes `beta` of the adaptive
/// hard-thresholding nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhtParams<T> {
    pub thresholds: Vec<T>,
    pub slopes: Vec<T>,
}

impl<T: Real> AhtParams<T> {
    pub fn new(thresholds: Vec<T>, slopes: Vec<T>) -> Result<Self> {
        let p = Self { thresholds, slopes };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(m: usize, threshold: T, slope: T) -> Self {
        Self {
            thresholds: vec![threshold; m],
            slopes: vec![slope; m],
        }
    }

    /// `C = 0.01`, `beta = 1`.
    pub fn init(m: usize) -> Self {
        Self::uniform(m, T::lit(0.01), T::one())
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn clamp_thresholds(&mut self) {
        for c in self.thresholds.iter_mut() {
            if *c < T::zero() {
                *c = T::zero();
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.len() != self.slopes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.thresholds.len(),
                got: self.slopes.len(),
            });
        }
        if !self.thresholds.iter().chain(&self.slopes).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("thresholding parameters".into()));
        }
        if self.thresholds.iter().any(|&c| c < T::zero()) {
            return Err(Error::InvalidArgument("thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

impl<T: Real> Parameters<T> for AhtParams<T> {
    fn num_params(&self) -> usize {
        self.thresholds.len() + self.slopes.len()
    }

    fn write_flat(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.thresholds);
        out.extend_from_slice(&self.slopes);
    }

    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>) {
        for v in self.thresholds.iter_mut().chain(self.slopes.iter_mut()) {
            *v = take(src);
        }
    }
}

/// How the threshold gradient is formed during backpropagation.
///
/// The exact derivative of the thresholding law with respect to `C` is zero
/// almost everywhere, so thresholds would never move. `Surrogate` uses the
/// derivative of the soft-threshold part alone, `-beta * sign(x)` on the
/// surviving positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdGrad {
    #[default]
    Surrogate,
    Frozen,
}

/// Adaptive hard thresholding: `beta * x` where `|x| > C`, else exactly 0.
///
/// This is the closed form of `(soft(x, C) + C * sign(soft(x, C))) * beta`.
pub fn aht_eval<T: Real>(x: &[T], p: &AhtParams<T>) -> Result<Vec<T>> {
    if x.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: x.len(),
        });
    }
    p.validate()?;
    Ok(aht_forward(x, p))
}

pub(crate) fn aht_forward<T: Real>(x: &[T], p: &AhtParams<T>) -> Vec<T> {
    x.iter()
        .zip(p.thresholds.iter().zip(&p.slopes))
        .map(|(&v, (&c, &b))| if v.abs() > c { b * v } else { T::zero() })
        .collect()
}

pub fn aht_backward<T: Real>(
    x: &[T],
    p: &AhtParams<T>,
    gy: &[T],
    mode: ThresholdGrad,
) -> (Vec<T>, AhtParams<T>) {
    let m = x.len();
    let mut gx = vec![T::zero(); m];
    let mut grad = AhtParams::uniform(m, T::zero(), T::zero());
    for k in 0..m {
        if x[k].abs() > p.thresholds[k] {
            gx[k] = gy[k] * p.slopes[k];
            grad.slopes[k] = gy[k] * x[k];
            if mode == ThresholdGrad::Surrogate {
                grad.thresholds[k] = -gy[k] * p.slopes[k] * x[k].sgn();
            }
        }
    }
    (gx, grad)
}

/// Activity `a_k = exp(|z_k|) / sum_i exp(|z_i|)`, stabilised by subtracting
/// `max |z_i|`.
pub fn activity_softmax<T: Real>(z: &[T]) -> Vec<T> {
    let peak = z.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let e: Vec<T> = z.iter().map(|v| (v.abs() - peak).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Maps `dL/da` back to `dL/dz` through the activity softmax.
pub fn activity_softmax_backward<T: Real>(z: &[T], activity: &[T], ga: &[T]) -> Vec<T> {
    let inner = crate::scalar::dot(activity, ga);
    z.iter()
        .zip(activity.iter().zip(ga))
        .map(|(&zk, (&ak, &gk))| ak * (gk - inner) * zk.sgn())
        .collect()
}

fn check_sparsity_target<T: Real>(lambda: T) -> Result<()> {
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(Error::InvalidArgument(format!("sparsity target must lie in (0, 1), got {lambda}")));
    }
    Ok(())
}

/// `sum_k lambda ln(lambda / a_k) + (1 - lambda) ln((1 - lambda) / (1 - a_k))`.
pub fn kld_penalty<T: Real>(activity: &[T], lambda: T) -> Result<T> {
    check_sparsity_target(lambda)?;
    let one = T::one();
    let mut total = T::zero();
    for &a in activity {
        if !(a > T::zero() && a < one) {
            return Err(Error::InvalidArgument(format!("activity {a} outside (0, 1)")));
        }
        total = total + lambda * (lambda / a).ln() + (one - lambda) * ((one - lambda) / (one - a)).ln();
    }
    Ok(total)
}

/// Gradient of [`kld_penalty`] with respect to each activity.
pub fn kld_grad<T: Real>(activity: &[T], lambda: T) -> Vec<T> {
    let one = T::one();
    activity
        .iter()
        .map(|&a| -lambda / a + (one - lambda) / (one - a))
        .collect()
}

/// Mean squared error plus `omega` times the KLD sparsity penalty on `z`.
pub fn total_loss<T: Real>(x: &[T], y: &[T], z: &[T], lambda: T, omega: T) -> Result<T> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty loss input".into()));
    }
    let mse = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::from_usize_lossy(x.len());
    let kld = kld_penalty(&activity_softmax(z), lambda)?;
    Ok(mse + omega * kld)
}

/// Parts of a per-segment loss evaluation together with its gradients.
#[derive(Debug, Clone)]
pub struct LossEval<T> {
    pub mse: T,
    pub kld: T,
    pub loss: T,
    /// `dL/dy`
    pub grad_output: Vec<T>,
    /// `dL/dz`
    pub grad_latent: Vec<T>,
}

pub fn total_loss_with_grad<T: Real>(x: &[T], y: &[T], z: &[T], lambda: T, omega: T) -> Result<LossEval<T>> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = T::from_usize_lossy(x.len());
    let two = T::lit(2.0);
    let mse = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
    let grad_output = x.iter().zip(y).map(|(&a, &b)| two * (b - a) / n).collect();
    let activity = activity_softmax(z);
    let kld = kld_penalty(&activity, lambda)?;
    let ga: Vec<T> = kld_grad(&activity, lambda).into_iter().map(|g| g * omega).collect();
    let grad_latent = activity_softmax_backward(z, &activity, &ga);
    Ok(LossEval {
        mse,
        kld,
        loss: mse + omega * kld,
        grad_output,
        grad_latent,
    })
}

/// Compares an analytic gradient against central finite differences of `f`
/// at `theta`, using the fourth-order stencil over `theta +- eps, +- 2 eps`. Returns the max over coordinates of
/// `|analytic - numeric| / max(|numeric|, 1e-8)`.
pub fn gradient_check<F>(mut f: F, theta: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.len() != analytic.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: analytic.len(),
        });
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut at = |h: f64| {
            probe[i] = theta[i] + h;
            f(&probe)
        };
        let (p1, m1, p2, m2) = (at(eps), at(-eps), at(2.0 * eps), at(-2.0 * eps));
        probe[i] = theta[i];
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
        let rel = (analytic[i] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Ensures each `| |x_k| - C_k |` is at least `10 * eps`, so finite
/// differences do not straddle a thresholding kink.
pub fn check_aht_margin<T: Real>(x: &[T], p: &AhtParams<T>, eps: f64) -> Result<()> {
    let required = 10.0 * eps;
    for (k, (&v, &c)) in x.iter().zip(&p.thresholds).enumerate() {
        let gap = (v.abs() - c).abs().as_f64();
        if gap < required {
            return Err(Error::MarginViolated { index: k, gap, required });
        }
    }
    Ok(())
}
