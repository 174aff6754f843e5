//! Residual TCN block: two weight-normalized dilated convolutions, each
//! followed by ReLU and spatial dropout, plus a residual path (through a 1x1
//! convolution when the channel count changes) and a final ReLU.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{BoundParams, Padding, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcnBlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl TcnBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("block channel counts must be positive".into()));
        }
        if self.kernel_size == 0 || self.dilation == 0 {
            return Err(Error::Config(
                "block kernel size and dilation must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Steps of history one block can see, counting the current one.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * (self.kernel_size - 1) * self.dilation
    }

    pub fn has_adapter(&self) -> bool {
        self.in_channels != self.out_channels
    }

    /// Scalar parameter count: two weight-normalized convs plus the adapter.
    pub fn num_params(&self) -> usize {
        let (i, o, k) = (self.in_channels, self.out_channels, self.kernel_size);
        let conv1 = o * i * k + 2 * o;
        let conv2 = o * o * k + 2 * o;
        let adapter = if self.has_adapter() { o * i + o } else { 0 };
        conv1 + conv2 + adapter
    }
}

/// Analytic receptive field of a block stack: `1 + sum 2 (k - 1) d`.
pub fn stack_receptive_field(blocks: &[TcnBlockConfig]) -> usize {
    1 + blocks
        .iter()
        .map(|b| 2 * (b.kernel_size - 1) * b.dilation)
        .sum::<usize>()
}

/// Direction/magnitude pair of a weight-normalized convolution.
#[derive(Clone, Copy, Debug)]
pub struct WeightNormParam {
    pub v: ParamId,
    pub g: ParamId,
}

/// `g[c] * v[c] / ||v[c]||`, differentiable in both `v` and `g`.
pub fn weight_norm_effective<S: Scalar>(tape: &mut Tape<'_, S>, v: Var, g: Var) -> Result<Var> {
    tape.weight_norm(v, g)
}

/// Zero whole channels (every time step) with probability `rate` and scale
/// survivors by `1 / (1 - rate)`. Identity in eval mode or when `rate == 0`.
pub fn spatial_dropout<S: Scalar>(
    tape: &mut Tape<'_, S>,
    x: Var,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Argument(format!("dropout rate {rate} outside [0, 1)")));
    }
    let shape = tape.value(x).shape();
    let rows = match *shape {
        [c, _] => c,
        [b, c, _] => b * c,
        _ => {
            return Err(Error::Dimension(format!(
                "spatial dropout expects [C, T] or [B, C, T], got {shape:?}"
            )))
        }
    };
    let keep = S::from_f64(1.0 / (1.0 - rate));
    let mask = (0..rows)
        .map(|_| if rng.random::<f64>() < rate { S::zero() } else { keep })
        .collect();
    tape.channel_scale(x, mask)
}

#[derive(Clone, Debug)]
struct WnConv {
    weight: WeightNormParam,
    bias: ParamId,
}

impl WnConv {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Self {
        let v: Tensor<S> = he_init(&[out_channels, in_channels, kernel], rng);
        let per = in_channels * kernel;
        let g = Tensor::from_fn(&[out_channels], |c| {
            let norm: f64 = v.data()[c * per..][..per]
                .iter()
                .map(|x| x.as_f64().powi(2))
                .sum::<f64>()
                .sqrt();
            S::from_f64(norm)
        });
        WnConv {
            weight: WeightNormParam {
                v: store.add(format!("{prefix}.v"), v),
                g: store.add(format!("{prefix}.g"), g),
            },
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[out_channels])),
        }
    }

    fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        params: &BoundParams,
        x: Var,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let w = weight_norm_effective(
            tape,
            params.var(self.weight.v),
            params.var(self.weight.g),
        )?;
        tape.conv1d(x, w, Some(params.var(self.bias)), dilation, padding)
    }
}

/// Gaussian init with standard deviation `sqrt(2 / fan_in)`, fan-in taken
/// over every axis but the first.
pub(crate) fn he_init<S: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<S> {
    let fan_in: usize = shape[1..].iter().product();
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    Tensor::from_fn(shape, |_| S::from_f64(normal.sample(rng)))
}

#[derive(Clone, Debug)]
pub struct TcnBlock {
    config: TcnBlockConfig,
    conv1: WnConv,
    conv2: WnConv,
    adapter: Option<(ParamId, ParamId)>,
}

impl TcnBlock {
    /// Register this block's parameters under `prefix` and initialize them.
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        config: TcnBlockConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (i, o, k) = (config.in_channels, config.out_channels, config.kernel_size);
        let conv1 = WnConv::new(store, &format!("{prefix}.conv1"), o, i, k, rng);
        let conv2 = WnConv::new(store, &format!("{prefix}.conv2"), o, o, k, rng);
        let adapter = config.has_adapter().then(|| {
            (
                store.add(format!("{prefix}.adapter.weight"), he_init(&[o, i, 1], rng)),
                store.add(format!("{prefix}.adapter.bias"), Tensor::zeros(&[o])),
            )
        });
        Ok(TcnBlock {
            config,
            conv1,
            conv2,
            adapter,
        })
    }

    pub fn config(&self) -> &TcnBlockConfig {
        &self.config
    }

    pub fn conv_weights(&self) -> [WeightNormParam; 2] {
        [self.conv1.weight, self.conv2.weight]
    }

    pub fn conv_biases(&self) -> [ParamId; 2] {
        [self.conv1.bias, self.conv2.bias]
    }

    pub fn adapter(&self) -> Option<(ParamId, ParamId)> {
        self.adapter
    }

    /// `ReLU(residual(x) + f(x))` with
    /// `f = Dropout(ReLU(WN-Conv2(Dropout(ReLU(WN-Conv1(x))))))`.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        params: &BoundParams,
        input: Var,
        padding: Padding,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var> {
        let shape = tape.value(input).shape();
        let channels = match *shape {
            [c, _] | [_, c, _] => c,
            _ => 0,
        };
        if channels != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "TCN block expects {} input channels, got input of shape {shape:?}",
                self.config.in_channels
            )));
        }
        let (d, rate) = (self.config.dilation, self.config.dropout_rate);

        let h = self.conv1.forward(tape, params, input, d, padding)?;
        let h = tape.relu(h);
        let h = spatial_dropout(tape, h, rate, mode, rng)?;
        let h = self.conv2.forward(tape, params, h, d, padding)?;
        let h = tape.relu(h);
        let h = spatial_dropout(tape, h, rate, mode, rng)?;

        let residual = match self.adapter {
            Some((w, b)) => tape.conv1d(input, params.var(w), Some(params.var(b)), 1, padding)?,
            None => input,
        };
        let sum = tape.add(residual, h)?;
        Ok(tape.relu(sum))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn block_config(i: usize, o: usize) -> TcnBlockConfig {
        TcnBlockConfig {
            in_channels: i,
            out_channels: o,
            kernel_size: 3,
            dilation: 2,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn weight_norm_examples() {
        let mut tape = Tape::<f64>::new();
        // unit-norm rows with g = 1 reproduce v
        let v = Tensor::new(vec![2, 1, 2], vec![0.6, 0.8, 1.0, 0.0]).unwrap();
        let vv = tape.input(v.clone());
        let g = tape.input(Tensor::full(&[2], 1.0));
        let w = weight_norm_effective(&mut tape, vv, g).unwrap();
        for (a, b) in tape.value(w).data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        // scaling v leaves the effective weight unchanged
        let scaled = tape.input(Tensor::from_fn(&[2, 1, 2], |i| v.data()[i] * 7.5));
        let w2 = weight_norm_effective(&mut tape, scaled, g).unwrap();
        for (a, b) in tape.value(w2).data().iter().zip(tape.value(w).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn effective_norm_equals_magnitude() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let v: Tensor<f64> = he_init(&[4, 3, 5], &mut rng);
            let g = Tensor::from_fn(&[4], |_| rng.random::<f64>() * 4.0 - 2.0);
            let mut tape = Tape::new();
            let (vv, gv) = (tape.input(v), tape.input(g.clone()));
            let w = weight_norm_effective(&mut tape, vv, gv).unwrap();
            for (c, row) in tape.value(w).data().chunks(15).enumerate() {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - g.data()[c].abs()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_identities() {
        let x = Tensor::<f64>::from_fn(&[4, 6], |i| i as f64 + 1.0);
        let mut rng = rng_from_seed(1);
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let eval = spatial_dropout(&mut tape, xv, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(tape.value(eval), &x);
        let zero = spatial_dropout(&mut tape, xv, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(tape.value(zero), &x);
    }

    #[test]
    fn dropout_zeroes_whole_channels() {
        let x = Tensor::<f64>::from_fn(&[4, 6], |i| i as f64 + 1.0);
        let mut saw_drop = false;
        let mut saw_keep = false;
        for seed in 0..8 {
            let mut rng = rng_from_seed(seed);
            let mut tape = Tape::new();
            let xv = tape.input(x.clone());
            let y = spatial_dropout(&mut tape, xv, 0.5, Mode::Train, &mut rng).unwrap();
            for (out, inp) in tape.value(y).data().chunks(6).zip(x.data().chunks(6)) {
                if out.iter().all(|&v| v == 0.0) {
                    saw_drop = true;
                } else {
                    saw_keep = true;
                    for (o, i) in out.iter().zip(inp) {
                        assert_eq!(*o, 2.0 * i);
                    }
                }
            }
        }
        assert!(saw_drop && saw_keep);
    }

    fn zero_branch(store: &mut ParamStore<f64>, block: &TcnBlock) {
        for wn in block.conv_weights() {
            store.get_mut(wn.g).data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_branch_block_is_relu() {
        let mut rng = rng_from_seed(5);
        let mut store = ParamStore::<f64>::new();
        let block = TcnBlock::new(&mut store, "b", block_config(3, 3), &mut rng).unwrap();
        zero_branch(&mut store, &block);
        let x = Tensor::from_fn(&[3, 9], |i| (i as f64 * 0.7).sin());
        let mut tape = Tape::new();
        let params = store.bind(&mut tape);
        let xv = tape.input(x.clone());
        let y = block
            .forward(&mut tape, &params, xv, Padding::Causal, Mode::Eval, &mut rng)
            .unwrap();
        let want: Vec<f64> = x.data().iter().map(|v| v.max(0.0)).collect();
        assert_eq!(tape.value(y).data(), want.as_slice());
    }

    #[test]
    fn adapter_path_with_zero_branch() {
        let mut rng = rng_from_seed(6);
        let mut store = ParamStore::<f64>::new();
        let block = TcnBlock::new(&mut store, "b", block_config(2, 3), &mut rng).unwrap();
        zero_branch(&mut store, &block);
        let (w, _) = block.adapter().expect("2 -> 3 needs an adapter");
        store
            .get_mut(w)
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let x = Tensor::from_fn(&[2, 5], |i| i as f64 - 4.0);
        let mut tape = Tape::new();
        let params = store.bind(&mut tape);
        let xv = tape.input(x.clone());
        let y = block
            .forward(&mut tape, &params, xv, Padding::Causal, Mode::Eval, &mut rng)
            .unwrap();
        let xd = x.data();
        let mut want = Vec::new();
        want.extend(xd[..5].iter().map(|v| v.max(0.0)));
        want.extend(xd[5..].iter().map(|v| v.max(0.0)));
        want.extend((0..5).map(|t| (xd[t] - xd[5 + t]).max(0.0)));
        assert_eq!(tape.value(y).data(), want.as_slice());
    }

    #[test]
    fn block_rejects_wrong_channel_count() {
        let mut rng = rng_from_seed(7);
        let mut store = ParamStore::<f64>::new();
        let block = TcnBlock::new(&mut store, "b", block_config(2, 4), &mut rng).unwrap();
        let mut tape = Tape::new();
        let params = store.bind(&mut tape);
        let xv = tape.input(Tensor::zeros(&[3, 5]));
        assert!(matches!(
            block.forward(&mut tape, &params, xv, Padding::Causal, Mode::Eval, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn block_is_causal_and_same_length() {
        let mut rng = rng_from_seed(8);
        let mut store = ParamStore::<f64>::new();
        let block = TcnBlock::new(&mut store, "b", block_config(2, 4), &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 12], |i| (i as f64).cos());
        let run = |x: Tensor<f64>, rng: &mut Rng| {
            let mut tape = Tape::new();
            let params = store.bind(&mut tape);
            let xv = tape.input(x);
            let y = block
                .forward(&mut tape, &params, xv, Padding::Causal, Mode::Eval, rng)
                .unwrap();
            tape.value(y).clone()
        };
        let base = run(x.clone(), &mut rng);
        assert_eq!(base.shape(), &[4, 12]);
        for t_prime in 0..12 {
            let mut p = x.clone();
            p.data_mut()[t_prime] += 3.0;
            let out = run(p, &mut rng);
            for c in 0..4 {
                for t in 0..t_prime {
                    assert_eq!(out.data()[c * 12 + t], base.data()[c * 12 + t]);
                }
            }
        }
    }

    #[test]
    fn receptive_field_formula() {
        let b = block_config(1, 1);
        assert_eq!(b.receptive_field(), 9);
        assert_eq!(stack_receptive_field(&[b.clone(), b]), 17);
    }

    #[test]
    fn param_count_matches_store() {
        let mut rng = rng_from_seed(9);
        for (i, o) in [(3, 3), (2, 5)] {
            let mut store = ParamStore::<f32>::new();
            let cfg = block_config(i, o);
            TcnBlock::new(&mut store, "b", cfg.clone(), &mut rng).unwrap();
            assert_eq!(store.num_scalars(), cfg.num_params());
        }
    }
}
