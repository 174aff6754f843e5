//! Dilated 1-D convolution kernels (im2col + GEMM).
//!
//! Tap `i` of a kernel of size `k` at output step `t` reads input step
//! `t + offset(i)`; positions outside `[0, T)` read as zero, so the output is
//! always as long as the input and the padding is never materialized.

use serde::{Deserialize, Serialize};

use super::{gemm, Scalar, Strides};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Left-pad by `(k - 1) * dilation`: `offset(i) = -dilation * i`.
    #[default]
    Causal,
    /// Symmetric padding around the current step (the acausal ablation).
    Centered,
}

impl Padding {
    pub(crate) fn offset(self, tap: usize, kernel: usize, dilation: usize) -> isize {
        let (i, d) = (tap as isize, dilation as isize);
        match self {
            Padding::Causal => -d * i,
            Padding::Centered => d * ((kernel as isize - 1) / 2 - i),
        }
    }

    /// Steps strictly before / after `t` one layer can see.
    pub fn reach(self, kernel: usize, dilation: usize) -> (usize, usize) {
        let span = (kernel - 1) * dilation;
        match self {
            Padding::Causal => (span, 0),
            Padding::Centered => {
                let after = (kernel - 1) / 2 * dilation;
                (span - after, after)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub len: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvGeometry {
    fn rows(&self) -> usize {
        self.in_channels * self.kernel
    }
    fn cols(&self) -> usize {
        self.batch * self.len
    }

    /// Input step read by `tap` at output step `t`, if inside the sequence.
    #[inline]
    fn source(&self, t: usize, tap: usize) -> Option<usize> {
        let s = t as isize + self.padding.offset(tap, self.kernel, self.dilation);
        (0..self.len as isize).contains(&s).then_some(s as usize)
    }
}

/// Unfold `input [B, Cin, T]` into `[Cin * k, B * T]`.
pub(crate) fn im2col<S: Scalar>(input: &[S], g: &ConvGeometry) -> Vec<S> {
    let (rows, cols) = (g.rows(), g.cols());
    let mut out = vec![S::zero(); rows * cols];
    for ci in 0..g.in_channels {
        for tap in 0..g.kernel {
            let row = &mut out[(ci * g.kernel + tap) * cols..][..cols];
            for b in 0..g.batch {
                let src = &input[(b * g.in_channels + ci) * g.len..][..g.len];
                for t in 0..g.len {
                    if let Some(s) = g.source(t, tap) {
                        row[b * g.len + t] = src[s];
                    }
                }
            }
        }
    }
    out
}

/// Scatter-add the inverse of [`im2col`] into `grad_input [B, Cin, T]`.
fn col2im<S: Scalar>(grad_cols: &[S], g: &ConvGeometry, grad_input: &mut [S]) {
    let cols = g.cols();
    for ci in 0..g.in_channels {
        for tap in 0..g.kernel {
            let row = &grad_cols[(ci * g.kernel + tap) * cols..][..cols];
            for b in 0..g.batch {
                let dst = &mut grad_input[(b * g.in_channels + ci) * g.len..][..g.len];
                for t in 0..g.len {
                    if let Some(s) = g.source(t, tap) {
                        dst[s] = dst[s] + row[b * g.len + t];
                    }
                }
            }
        }
    }
}

/// Returns `(output [B, Cout, T], unfolded input)`.
pub(crate) fn forward<S: Scalar>(
    input: &[S],
    weight: &[S],
    bias: Option<&[S]>,
    g: &ConvGeometry,
) -> (Vec<S>, Vec<S>) {
    let cols = im2col(input, g);
    let n = g.cols();
    let mut flat = vec![S::zero(); g.out_channels * n];
    gemm(
        g.out_channels,
        g.rows(),
        n,
        weight,
        Strides::row_major(g.rows()),
        &cols,
        Strides::row_major(n),
        S::zero(),
        &mut flat,
        Strides::row_major(n),
    );
    let mut out = vec![S::zero(); flat.len()];
    for c in 0..g.out_channels {
        let b_c = bias.map_or(S::zero(), |b| b[c]);
        for b in 0..g.batch {
            let src = &flat[c * n + b * g.len..][..g.len];
            let dst = &mut out[(b * g.out_channels + c) * g.len..][..g.len];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b_c;
            }
        }
    }
    (out, cols)
}

pub(crate) struct ConvGrads<S> {
    pub input: Option<Vec<S>>,
    pub weight: Option<Vec<S>>,
    pub bias: Option<Vec<S>>,
}

pub(crate) fn backward<S: Scalar>(
    grad_out: &[S],
    cols: &[S],
    weight: &[S],
    g: &ConvGeometry,
    want: (bool, bool, bool),
) -> ConvGrads<S> {
    let n = g.cols();
    // [B, Cout, T] -> [Cout, B * T]
    let mut gm = vec![S::zero(); grad_out.len()];
    for b in 0..g.batch {
        for c in 0..g.out_channels {
            let src = &grad_out[(b * g.out_channels + c) * g.len..][..g.len];
            gm[c * n + b * g.len..][..g.len].copy_from_slice(src);
        }
    }
    let input = want.0.then(|| {
        let mut grad_cols = vec![S::zero(); g.rows() * n];
        gemm(
            g.rows(),
            g.out_channels,
            n,
            weight,
            Strides::transposed(g.rows()),
            &gm,
            Strides::row_major(n),
            S::zero(),
            &mut grad_cols,
            Strides::row_major(n),
        );
        let mut grad_input = vec![S::zero(); g.batch * g.in_channels * g.len];
        col2im(&grad_cols, g, &mut grad_input);
        grad_input
    });
    let weight = want.1.then(|| {
        let mut grad_w = vec![S::zero(); g.out_channels * g.rows()];
        gemm(
            g.out_channels,
            n,
            g.rows(),
            &gm,
            Strides::row_major(n),
            cols,
            Strides::transposed(n),
            S::zero(),
            &mut grad_w,
            Strides::row_major(g.rows()),
        );
        grad_w
    });
    let bias = want.2.then(|| {
        gm.chunks(n)
            .map(|row| S::from_f64(row.iter().map(|v| v.as_f64()).sum()))
            .collect()
    });
    ConvGrads {
        input,
        weight,
        bias,
    }
}
