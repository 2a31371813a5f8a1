//! Single-level (5,3) lifting wavelet transform.
//!
//! The forward transform splits `x` into even samples `u` and odd samples `v`,
//! then applies
//!
//! ```text
//! predict: v'[i] = v[i] - 0.5  * (u[i]   + u[i+1])
//! update:  u'[i] = u[i] + 0.25 * (v'[i]  + v'[i-1])
//! ```
//!
//! Indices that fall off either end are mirrored onto the last (first) valid
//! index, which is whole-sample symmetric extension of the input. Any length
//! `n >= 2` is supported; odd lengths yield one more approximation value than
//! detail values.
//!
//! Coefficients are laid out flat as `[approx || detail]` wherever a single
//! vector is needed (encoder latents, bitstreams).

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// Output of [`lwt_forward`]: `ceil(n/2)` low-pass values followed by
/// `floor(n/2)` high-pass values.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs<T> {
    approx: Vec<T>,
    detail: Vec<T>,
}

impl<T: Real> WaveletCoeffs<T> {
    /// Builds coefficients for a signal of length `n`, checking the band sizes.
    pub fn new(approx: Vec<T>, detail: Vec<T>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "wavelet length must be >= 2, got {n}"
            )));
        }
        if approx.len() != n.div_ceil(2) {
            return Err(Error::DimensionMismatch {
                expected: n.div_ceil(2),
                got: approx.len(),
            });
        }
        if detail.len() != n / 2 {
            return Err(Error::DimensionMismatch {
                expected: n / 2,
                got: detail.len(),
            });
        }
        Ok(Self { approx, detail })
    }

    /// Splits a flat `[approx || detail]` vector.
    pub fn from_flat(flat: &[T]) -> Result<Self> {
        let n = flat.len();
        let na = n.div_ceil(2);
        Self::new(flat[..na].to_vec(), flat[na..].to_vec(), n)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![T::zero(); n.div_ceil(2)], vec![T::zero(); n / 2], n)
    }

    pub fn approx(&self) -> &[T] {
        &self.approx
    }

    pub fn detail(&self) -> &[T] {
        &self.detail
    }

    /// Length of the signal these coefficients describe.
    pub fn len(&self) -> usize {
        self.approx.len() + self.detail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.approx);
        out.extend_from_slice(&self.detail);
        out
    }
}

// Neighbour indices with symmetric extension.
#[inline]
fn next_even(i: usize, na: usize) -> usize {
    (i + 1).min(na - 1)
}

#[inline]
fn detail_at(i: usize, nd: usize) -> usize {
    i.min(nd - 1)
}

#[inline]
fn prev_detail(i: usize) -> usize {
    i.saturating_sub(1)
}

/// Forward transform of a signal with `n >= 2` finite samples.
pub fn lwt_forward<T: Real>(x: &[T]) -> Result<WaveletCoeffs<T>> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "lwt input length must be >= 2, got {}",
            x.len()
        )));
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("lwt input".into()));
    }
    let flat = forward_flat(x);
    WaveletCoeffs::from_flat(&flat)
}

/// Inverse transform; exact algebraic inverse of [`lwt_forward`].
pub fn lwt_inverse<T: Real>(c: &WaveletCoeffs<T>) -> Vec<T> {
    inverse_flat(&c.to_flat())
}

/// Transpose of the forward map: returns `L^T g` so that
/// `<L x, g> == <x, L^T g>`.
pub fn lwt_adjoint<T: Real>(g: &WaveletCoeffs<T>) -> Vec<T> {
    adjoint_flat(&g.to_flat())
}

/// Forward transform on a flat buffer, output in `[approx || detail]` layout.
/// Panics if `x.len() < 2`.
pub(crate) fn forward_flat<T: Real>(x: &[T]) -> Vec<T> {
    let n = x.len();
    assert!(n >= 2, "lwt length must be >= 2");
    let na = n.div_ceil(2);
    let nd = n / 2;
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);

    let mut out = vec![T::zero(); n];
    let (u, v) = out.split_at_mut(na);
    for i in 0..na {
        u[i] = x[2 * i];
    }
    for i in 0..nd {
        v[i] = x[2 * i + 1] - half * (u[i] + u[next_even(i, na)]);
    }
    for i in 0..na {
        let d = v[detail_at(i, nd)] + v[prev_detail(i)];
        u[i] = u[i] + quarter * d;
    }
    out
}

pub(crate) fn inverse_flat<T: Real>(c: &[T]) -> Vec<T> {
    let n = c.len();
    assert!(n >= 2, "lwt length must be >= 2");
    let na = n.div_ceil(2);
    let nd = n / 2;
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);

    let (approx, detail) = c.split_at(na);
    let u: Vec<T> = (0..na)
        .map(|i| approx[i] - quarter * (detail[detail_at(i, nd)] + detail[prev_detail(i)]))
        .collect();
    let mut x = vec![T::zero(); n];
    for i in 0..na {
        x[2 * i] = u[i];
    }
    for i in 0..nd {
        x[2 * i + 1] = detail[i] + half * (u[i] + u[next_even(i, na)]);
    }
    x
}

pub(crate) fn adjoint_flat<T: Real>(g: &[T]) -> Vec<T> {
    let n = g.len();
    assert!(n >= 2, "lwt length must be >= 2");
    let na = n.div_ceil(2);
    let nd = n / 2;
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);

    let (ga, gd) = g.split_at(na);
    // Transpose of the update step.
    let mut gu = ga.to_vec();
    let mut gv = gd.to_vec();
    for (i, &a) in ga.iter().enumerate() {
        gv[detail_at(i, nd)] = gv[detail_at(i, nd)] + quarter * a;
        gv[prev_detail(i)] = gv[prev_detail(i)] + quarter * a;
    }
    // Transpose of the predict step.
    let mut x = vec![T::zero(); n];
    for (i, &d) in gv.iter().enumerate() {
        x[2 * i + 1] = d;
        gu[i] = gu[i] - half * d;
        let j = next_even(i, na);
        gu[j] = gu[j] - half * d;
    }
    for (i, &a) in gu.iter().enumerate() {
        x[2 * i] = a;
    }
    x
}

/// Transpose of the inverse map, used to backpropagate through the decoder.
pub(crate) fn inverse_adjoint_flat<T: Real>(gx: &[T]) -> Vec<T> {
    let n = gx.len();
    assert!(n >= 2, "lwt length must be >= 2");
    let na = n.div_ceil(2);
    let nd = n / 2;
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);

    let mut gu: Vec<T> = (0..na).map(|i| gx[2 * i]).collect();
    let mut gd: Vec<T> = (0..nd).map(|i| gx[2 * i + 1]).collect();
    for i in 0..nd {
        let g = gx[2 * i + 1];
        gu[i] = gu[i] + half * g;
        let j = next_even(i, na);
        gu[j] = gu[j] + half * g;
    }
    for (i, &u) in gu.iter().enumerate() {
        gd[detail_at(i, nd)] = gd[detail_at(i, nd)] - quarter * u;
        gd[prev_detail(i)] = gd[prev_detail(i)] - quarter * u;
    }
    gu.extend(gd);
    gu
}
