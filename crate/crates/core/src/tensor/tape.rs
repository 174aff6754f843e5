use std::borrow::Cow;

use super::conv::{self, ConvGeometry, Padding};
use super::{gemm, Scalar, Strides, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geometry: ConvGeometry,
        cols: Vec<S>,
    },
    WeightNorm {
        v: Var,
        g: Var,
        norms: Vec<f64>,
    },
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    ChannelScale {
        x: Var,
        scale: Vec<S>,
        len: usize,
    },
    LastStep {
        x: Var,
        len: usize,
    },
    Reshape(Var),
    ReverseTime {
        x: Var,
        len: usize,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl<S> Op<S> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv1d {
                input,
                weight,
                bias,
                ..
            } => [Some(*input), Some(*weight), *bias].into_iter().flatten().collect(),
            Op::WeightNorm { v, g, .. } => vec![*v, *g],
            Op::Relu(x) | Op::Sum(x) | Op::Reshape(x) => vec![*x],
            Op::Add(a, b) | Op::Mul(a, b) | Op::Concat { a, b } => vec![*a, *b],
            Op::ChannelScale { x, .. } | Op::LastStep { x, .. } | Op::ReverseTime { x, .. } => {
                vec![*x]
            }
            Op::Dense { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<'a, S: Scalar> {
    value: Cow<'a, Tensor<S>>,
    op: Op<S>,
    requires_grad: bool,
}

/// Define-by-run record of executed operations. Build a fresh tape per
/// forward pass; [`Tape::backward`] replays it in reverse.
pub struct Tape<'a, S: Scalar = f32> {
    nodes: Vec<Node<'a, S>>,
}

impl<S: Scalar> Default for Tape<'_, S> {
    fn default() -> Self {
        Tape::new()
    }
}

/// `(batch, channels, time)` of a rank-2 `[C, T]` or rank-3 `[B, C, T]` tensor.
fn seq_dims(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, t] => Ok((1, c, t)),
        [b, c, t] => Ok((b, c, t)),
        _ => Err(Error::Dimension(format!(
            "{what}: expected [C, T] or [B, C, T], got {shape:?}"
        ))),
    }
}

/// `(batch, features)` of a rank-1 `[N]` or rank-2 `[B, N]` tensor.
fn vec_dims(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match *shape {
        [n] => Ok((1, n)),
        [b, n] => Ok((b, n)),
        _ => Err(Error::Dimension(format!(
            "{what}: expected [N] or [B, N], got {shape:?}"
        ))),
    }
}

fn sum_f64<S: Scalar>(values: &[S]) -> f64 {
    values.iter().map(|v| v.as_f64()).sum()
}

impl<'a, S: Scalar> Tape<'a, S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record a borrowed tensor (typically a parameter) as a leaf.
    pub fn leaf(&mut self, tensor: &'a Tensor<S>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: Cow::Borrowed(tensor),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record an owned tensor as a leaf; it is differentiated when its
    /// `requires_grad` flag is set.
    pub fn input(&mut self, tensor: Tensor<S>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: Cow::Owned(tensor),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor<S> {
        &self.nodes[var.0].value
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn data(&self, var: Var) -> &[S] {
        self.nodes[var.0].value.data()
    }

    /// Dilated 1-D convolution. `input` is `[C_in, T]` or `[B, C_in, T]`,
    /// `weight` is `[C_out, C_in, k]`; output keeps the input's length.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let in_shape = self.shape(input).to_vec();
        let (batch, in_channels, len) = seq_dims(&in_shape, "conv1d input")?;
        let (out_channels, w_in, kernel) = match *self.shape(weight) {
            [o, i, k] => (o, i, k),
            ref s => {
                return Err(Error::Dimension(format!(
                    "conv1d weight: expected [C_out, C_in, k], got {s:?}"
                )))
            }
        };
        if w_in != in_channels {
            return Err(Error::Dimension(format!(
                "conv1d: input has {in_channels} channels, weight expects {w_in}"
            )));
        }
        if dilation == 0 {
            return Err(Error::Argument("conv1d: dilation must be >= 1".into()));
        }
        if let Some(b) = bias {
            if self.shape(b) != [out_channels] {
                return Err(Error::Dimension(format!(
                    "conv1d bias: expected [{out_channels}], got {:?}",
                    self.shape(b)
                )));
            }
        }
        let geometry = ConvGeometry {
            batch,
            in_channels,
            out_channels,
            len,
            kernel,
            dilation,
            padding,
        };
        let (out, cols) = conv::forward(
            self.data(input),
            self.data(weight),
            bias.map(|b| self.data(b)),
            &geometry,
        );
        let out_shape = if in_shape.len() == 2 {
            vec![out_channels, len]
        } else {
            vec![batch, out_channels, len]
        };
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                geometry,
                cols,
            },
        ))
    }

    /// Weight normalization: `w[c] = g[c] * v[c] / ||v[c]||` over each
    /// leading-axis slice of `v`.
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Result<Var> {
        let v_shape = self.shape(v).to_vec();
        let channels = *v_shape
            .first()
            .ok_or_else(|| Error::Dimension("weight_norm: scalar direction".into()))?;
        if self.shape(g) != [channels] {
            return Err(Error::Dimension(format!(
                "weight_norm: magnitude shape {:?}, expected [{channels}]",
                self.shape(g)
            )));
        }
        let per = self.value(v).numel() / channels;
        let (vd, gd) = (self.data(v), self.data(g));
        let mut norms = Vec::with_capacity(channels);
        let mut out = Vec::with_capacity(vd.len());
        for (c, slice) in vd.chunks(per).enumerate() {
            let norm = slice.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Numerical(format!(
                    "weight_norm: direction for output channel {c} has norm {norm}"
                )));
            }
            let scale = gd[c].as_f64() / norm;
            out.extend(slice.iter().map(|x| S::from_f64(x.as_f64() * scale)));
            norms.push(norm);
        }
        let value = Tensor::new(v_shape, out)?;
        Ok(self.push(value, Op::WeightNorm { v, g, norms }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| src.data()[i].max(S::zero()));
        self.push(value, Op::Relu(x))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (ad, bd) = (self.data(a), self.data(b));
        let value = Tensor::from_fn(self.shape(a), |i| ad[i] + bd[i]);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (ad, bd) = (self.data(a), self.data(b));
        let value = Tensor::from_fn(self.shape(a), |i| ad[i] * bd[i]);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(S::from_f64(sum_f64(self.data(x))));
        self.push(value, Op::Sum(x))
    }

    /// Multiply every `(batch, channel)` row of a sequence tensor by a
    /// constant factor. Spatial dropout is this op with a random mask.
    pub fn channel_scale(&mut self, x: Var, scale: Vec<S>) -> Result<Var> {
        let (batch, channels, len) = seq_dims(self.shape(x), "channel_scale")?;
        if scale.len() != batch * channels {
            return Err(Error::Dimension(format!(
                "channel_scale: {} factors for {batch}x{channels} rows",
                scale.len()
            )));
        }
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| src.data()[i] * scale[i / len]);
        Ok(self.push(value, Op::ChannelScale { x, scale, len }))
    }

    /// Select the final time step: `[C, T] -> [C]`, `[B, C, T] -> [B, C]`.
    pub fn last_step(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (batch, channels, len) = seq_dims(&shape, "last_step")?;
        let data = self.data(x);
        let out: Vec<S> = (0..batch * channels).map(|r| data[r * len + len - 1]).collect();
        let out_shape = if shape.len() == 2 {
            vec![channels]
        } else {
            vec![batch, channels]
        };
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::LastStep { x, len }))
    }

    /// `[C, T] -> [C * T]`, `[B, C, T] -> [B, C * T]` (channel-major).
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (batch, channels, len) = seq_dims(&shape, "flatten")?;
        let out_shape = if shape.len() == 2 {
            vec![channels * len]
        } else {
            vec![batch, channels * len]
        };
        let value = Tensor::new(out_shape, self.data(x).to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Reverse the order of the last (time) axis.
    pub fn reverse_time(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let len = *src
            .shape()
            .last()
            .ok_or_else(|| Error::Dimension("reverse_time: scalar input".into()))?;
        let value = Tensor::new(src.shape().to_vec(), reverse_rows(src.data(), len))?;
        Ok(self.push(value, Op::ReverseTime { x, len }))
    }

    /// Concatenate two `[N]` or `[B, N]` tensors along the feature axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ab, an) = vec_dims(self.shape(a), "concat")?;
        let (bb, bn) = vec_dims(self.shape(b), "concat")?;
        if ab != bb || self.value(a).rank() != self.value(b).rank() {
            return Err(Error::Dimension(format!(
                "concat: shapes {:?} and {:?} are incompatible",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(ad.len() + bd.len());
        for r in 0..ab {
            out.extend_from_slice(&ad[r * an..][..an]);
            out.extend_from_slice(&bd[r * bn..][..bn]);
        }
        let out_shape = if self.value(a).rank() == 1 {
            vec![an + bn]
        } else {
            vec![ab, an + bn]
        };
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Concat { a, b }))
    }

    /// Affine map `weight * x + bias` for `x` of shape `[N]` or `[B, N]` and
    /// `weight` of shape `[M, N]`.
    pub fn dense(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let x_shape = self.shape(x).to_vec();
        let (batch, n) = vec_dims(&x_shape, "dense input")?;
        let (m, wn) = match *self.shape(weight) {
            [m, wn] => (m, wn),
            ref s => {
                return Err(Error::Dimension(format!(
                    "dense weight: expected [M, N], got {s:?}"
                )))
            }
        };
        if wn != n {
            return Err(Error::Dimension(format!(
                "dense: input has {n} features, weight expects {wn}"
            )));
        }
        let mut out = vec![S::zero(); batch * m];
        if let Some(b) = bias {
            let bd = self.data(b);
            if bd.len() != m || self.value(b).rank() != 1 {
                return Err(Error::Dimension(format!(
                    "dense bias: expected [{m}], got {:?}",
                    self.shape(b)
                )));
            }
            for row in out.chunks_mut(m) {
                row.copy_from_slice(bd);
            }
        }
        gemm(
            batch,
            n,
            m,
            self.data(x),
            Strides::row_major(n),
            self.data(weight),
            Strides::transposed(n),
            S::one(),
            &mut out,
            Strides::row_major(m),
        );
        let out_shape = if x_shape.len() == 1 {
            vec![m]
        } else {
            vec![batch, m]
        };
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Dense { x, w: weight, b: bias }))
    }

    /// Mean of `-log softmax(logits)[label]` over the batch. `logits` is
    /// `[K]` with one label or `[B, K]` with `B` labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (batch, classes) = vec_dims(self.shape(logits), "softmax_cross_entropy")?;
        if labels.len() != batch {
            return Err(Error::Argument(format!(
                "softmax_cross_entropy: {} labels for batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Argument(format!(
                "softmax_cross_entropy: label {bad} out of range for {classes} classes"
            )));
        }
        let data = self.data(logits);
        let mut probs = Vec::with_capacity(data.len());
        let mut loss = 0.0;
        for (row, &label) in data.chunks(classes).zip(labels) {
            let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            loss += total.ln() - (row[label].as_f64() - max);
            probs.extend(exps.iter().map(|e| e / total));
        }
        let value = Tensor::scalar(S::from_f64(loss / batch as f64));
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`, visiting operations in exact
    /// reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let loss_node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Argument("backward: loss is not on this tape".into()))?;
        if loss_node.value.numel() != 1 {
            return Err(Error::Argument(format!(
                "backward: loss must be a scalar, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            for (var, delta) in self.local_grads(node, &upstream) {
                accumulate(&mut grads, var, delta);
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn local_grads(&self, node: &Node<'_, S>, up: &[S]) -> Vec<(Var, Vec<S>)> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                weight,
                bias,
                geometry,
                cols,
            } => {
                let g = conv::backward(
                    up,
                    cols,
                    self.data(*weight),
                    geometry,
                    (
                        self.wants(*input),
                        self.wants(*weight),
                        bias.is_some_and(|b| self.wants(b)),
                    ),
                );
                out.extend(g.input.map(|d| (*input, d)));
                out.extend(g.weight.map(|d| (*weight, d)));
                if let (Some(b), Some(d)) = (bias, g.bias) {
                    out.push((*b, d));
                }
            }
            Op::WeightNorm { v, g, norms } => {
                let (vd, gd) = (self.data(*v), self.data(*g));
                let per = vd.len() / norms.len();
                let mut dv = Vec::with_capacity(vd.len());
                let mut dg = Vec::with_capacity(norms.len());
                for (c, (vs, us)) in vd.chunks(per).zip(up.chunks(per)).enumerate() {
                    let norm = norms[c];
                    let dot: f64 = vs.iter().zip(us).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
                    dg.push(S::from_f64(dot / norm));
                    let scale = gd[c].as_f64() / norm;
                    let proj = dot / (norm * norm);
                    dv.extend(
                        vs.iter()
                            .zip(us)
                            .map(|(a, b)| S::from_f64(scale * (b.as_f64() - proj * a.as_f64()))),
                    );
                }
                out.push((*v, dv));
                out.push((*g, dg));
            }
            Op::Relu(x) => {
                let xd = self.data(*x);
                let d = xd
                    .iter()
                    .zip(up)
                    .map(|(&a, &u)| if a > S::zero() { u } else { S::zero() })
                    .collect();
                out.push((*x, d));
            }
            Op::Add(a, b) => {
                out.push((*a, up.to_vec()));
                out.push((*b, up.to_vec()));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                out.push((*a, bd.iter().zip(up).map(|(&y, &u)| y * u).collect()));
                out.push((*b, ad.iter().zip(up).map(|(&y, &u)| y * u).collect()));
            }
            Op::Sum(x) => out.push((*x, vec![up[0]; self.value(*x).numel()])),
            Op::ChannelScale { x, scale, len } => {
                let d = up
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| u * scale[i / len])
                    .collect();
                out.push((*x, d));
            }
            Op::LastStep { x, len } => {
                let mut d = vec![S::zero(); self.value(*x).numel()];
                for (r, &u) in up.iter().enumerate() {
                    d[r * len + len - 1] = u;
                }
                out.push((*x, d));
            }
            Op::Reshape(x) => out.push((*x, up.to_vec())),
            Op::ReverseTime { x, len } => out.push((*x, reverse_rows(up, *len))),
            Op::Concat { a, b } => {
                let an = *self.shape(*a).last().unwrap_or(&1);
                let bn = *self.shape(*b).last().unwrap_or(&1);
                let mut da = Vec::with_capacity(self.value(*a).numel());
                let mut db = Vec::with_capacity(self.value(*b).numel());
                for row in up.chunks(an + bn) {
                    da.extend_from_slice(&row[..an]);
                    db.extend_from_slice(&row[an..]);
                }
                out.push((*a, da));
                out.push((*b, db));
            }
            Op::Dense { x, w, b } => {
                let n = *self.shape(*x).last().unwrap_or(&1);
                let m = self.shape(*w)[0];
                let batch = up.len() / m;
                if self.wants(*x) {
                    let mut dx = vec![S::zero(); batch * n];
                    gemm(
                        batch,
                        m,
                        n,
                        up,
                        Strides::row_major(m),
                        self.data(*w),
                        Strides::row_major(n),
                        S::zero(),
                        &mut dx,
                        Strides::row_major(n),
                    );
                    out.push((*x, dx));
                }
                if self.wants(*w) {
                    let mut dw = vec![S::zero(); m * n];
                    gemm(
                        m,
                        batch,
                        n,
                        up,
                        Strides::transposed(m),
                        self.data(*x),
                        Strides::row_major(n),
                        S::zero(),
                        &mut dw,
                        Strides::row_major(n),
                    );
                    out.push((*w, dw));
                }
                if let Some(b) = b {
                    let db = (0..m)
                        .map(|j| S::from_f64((0..batch).map(|r| up[r * m + j].as_f64()).sum()))
                        .collect();
                    out.push((*b, db));
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let classes = probs.len() / labels.len();
                let scale = up[0].as_f64() / labels.len() as f64;
                let d = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        let target = if labels[i / classes] == i % classes { 1.0 } else { 0.0 };
                        S::from_f64(scale * (p - target))
                    })
                    .collect();
                out.push((*logits, d));
            }
        }
        out.retain(|(var, _)| self.wants(*var));
        out
    }
}

fn reverse_rows<S: Copy>(data: &[S], len: usize) -> Vec<S> {
    data.chunks(len)
        .flat_map(|row| row.iter().rev().copied())
        .collect()
}

fn accumulate<S: Scalar>(grads: &mut [Option<Vec<S>>], var: Var, delta: Vec<S>) {
    match &mut grads[var.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e = *e + d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Result of [`Tape::backward`]: the gradient of the loss with respect to
/// every recorded value that was reached.
pub struct Gradients<S: Scalar = f32> {
    grads: Vec<Option<Vec<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Whether `var` lies on a path to the loss.
    pub fn reached(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }

    pub fn get(&self, var: Var) -> Option<&[S]> {
        self.grads[var.0].as_deref()
    }

    /// Gradient as a tensor; all zeros when `var` is unreachable from the loss.
    pub fn wrt(&self, var: Var) -> Tensor<S> {
        let shape = &self.shapes[var.0];
        match &self.grads[var.0] {
            Some(g) => Tensor::from_fn(shape, |i| g[i]),
            None => Tensor::zeros(shape),
        }
    }

    pub(crate) fn take(&mut self, var: Var) -> Option<Vec<S>> {
        self.grads[var.0].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], values: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn dilated_causal_conv_matches_direct_summation() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(t(&[1, 5], &[1.0, 2.0, 3.0, 4.0, 5.0]));
        let w = tape.input(t(&[1, 1, 3], &[1.0, 1.0, 1.0]));
        let b = tape.input(t(&[1], &[0.0]));
        let y = tape.conv1d(x, w, Some(b), 2, Padding::Causal).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn identity_kernel_reproduces_input_for_any_dilation() {
        let input = [0.5, -1.0, 2.0, 3.5, -4.0, 0.0];
        for dilation in 1..5 {
            let mut tape = Tape::<f64>::new();
            let x = tape.input(t(&[2, 3], &input));
            let w = tape.input(t(&[2, 2, 1], &[1.0, 0.0, 0.0, 1.0]));
            let y = tape.conv1d(x, w, None, dilation, Padding::Causal).unwrap();
            assert_eq!(tape.value(y).data(), &input);
        }
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(&[2, 7]));
        let w = tape.input(Tensor::from_fn(&[3, 2, 3], |i| i as f64 - 4.0));
        let b = tape.input(t(&[3], &[0.5, -1.0, 2.0]));
        let y = tape.conv1d(x, w, Some(b), 3, Padding::Causal).unwrap();
        for (c, row) in tape.value(y).data().chunks(7).enumerate() {
            assert!(row.iter().all(|&v| v == [0.5, -1.0, 2.0][c]));
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(&[3, 4]));
        let w = tape.input(Tensor::zeros(&[1, 2, 3]));
        assert!(matches!(
            tape.conv1d(x, w, None, 1, Padding::Causal),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dense_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(t(&[3], &[1.0, 2.0, 3.0]));
        let eye = tape.input(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let zero = tape.input(Tensor::zeros(&[3]));
        let y = tape.dense(x, eye, Some(zero)).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0]);

        let x = tape.input(t(&[2], &[3.0, 4.0]));
        let w = tape.input(t(&[2, 2], &[1.0, 1.0, 2.0, 0.0]));
        let b = tape.input(t(&[2], &[0.0, 1.0]));
        let y = tape.dense(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0, 7.0]);

        let x = tape.input(Tensor::zeros(&[2]));
        let y = tape.dense(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0]);

        let bad = tape.input(Tensor::zeros(&[3]));
        assert!(matches!(tape.dense(bad, w, Some(b)), Err(Error::Dimension(_))));
    }

    #[test]
    fn relu_and_reverse() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

        let s = tape.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = tape.reverse_time(s).unwrap();
        assert_eq!(tape.value(r).data(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        let rr = tape.reverse_time(r).unwrap();
        assert_eq!(tape.value(rr), tape.value(s));
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::full(&[6], 0.25));
        let loss = tape.softmax_cross_entropy(logits, &[3]).unwrap();
        approx::assert_abs_diff_eq!(tape.value(loss).data()[0], 6f64.ln(), epsilon = 1e-12);
        assert!((tape.value(loss).data()[0] - 1.7918).abs() < 1e-4);
        assert!(matches!(
            tape.softmax_cross_entropy(logits, &[6]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sum_of_product_gradient_is_other_factor() {
        let w = t(&[4], &[0.1, -0.2, 0.3, 0.4]).with_requires_grad(true);
        let x = t(&[4], &[1.0, 2.0, -3.0, 0.5]);
        let mut tape = Tape::new();
        let wv = tape.leaf(&w);
        let xv = tape.input(x.clone());
        let p = tape.mul(wv, xv).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(wv).data(), x.data());
        assert!(!grads.reached(xv));
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let used = t(&[2], &[1.0, 2.0]).with_requires_grad(true);
        let unused = t(&[3], &[1.0, 2.0, 3.0]).with_requires_grad(true);
        let mut tape = Tape::new();
        let a = tape.leaf(&used);
        let b = tape.leaf(&unused);
        let loss = tape.sum(a);
        let grads = tape.backward(loss).unwrap();
        assert!(!grads.reached(b));
        assert_eq!(grads.wrt(b).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(&[2]).with_requires_grad(true));
        let y = tape.relu(x);
        assert!(matches!(tape.backward(y), Err(Error::Argument(_))));
    }

    #[test]
    fn weight_norm_rejects_zero_direction() {
        let mut tape = Tape::<f64>::new();
        let v = tape.input(t(&[2, 2], &[0.0, 0.0, 1.0, 1.0]));
        let g = tape.input(t(&[2], &[1.0, 1.0]));
        assert!(matches!(tape.weight_norm(v, g), Err(Error::Numerical(_))));
    }
}
