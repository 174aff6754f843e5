//! FenceNet, BiFenceNet and the ablation variants, assembled from TCN blocks
//! and a two-layer dense head.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{NUM_CLASSES, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::tcn::{he_init, stack_receptive_field, Mode, TcnBlock, TcnBlockConfig};
use crate::tensor::{BoundParams, Padding, ParamId, ParamStore, Scalar, Tape, Tensor, Var};

pub const CHECKPOINT_CONFIG: &str = "model.json";
pub const CHECKPOINT_PARAMS: &str = "model.params";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One causal stack, last time step into the dense head.
    Fencenet,
    /// Causal stacks over the input and its time reversal, last steps concatenated.
    Bifencenet,
    /// Two causal stacks, both fed the input unreversed.
    BifencenetForward2,
    /// `Fencenet` with wider blocks.
    FencenetWide,
    /// Centered (non-causal) convolutions, final feature map flattened.
    AcausalFlatten,
}

impl ModelKind {
    pub fn is_bidirectional(self) -> bool {
        matches!(self, ModelKind::Bifencenet | ModelKind::BifencenetForward2)
    }

    pub fn expected_blocks(self) -> usize {
        if self.is_bidirectional() {
            4
        } else {
            6
        }
    }

    pub fn padding(self) -> Padding {
        match self {
            ModelKind::AcausalFlatten => Padding::Centered,
            _ => Padding::Causal,
        }
    }
}

fn default_input_length() -> usize {
    WINDOW_LEN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Block stack; for bidirectional kinds, the stack used in each direction.
    /// Block dropout rates are overridden by `dropout_rate`.
    pub blocks: Vec<TcnBlockConfig>,
    pub dense_hidden: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub input_channels: usize,
    #[serde(default = "default_input_length")]
    pub input_length: usize,
}

impl ModelConfig {
    /// Every violated rule, or `Ok` when the config can be built.
    pub fn validate(&self) -> Result<()> {
        let mut failed = Vec::new();
        let expected = self.kind.expected_blocks();
        if self.blocks.len() != expected {
            failed.push(format!(
                "{:?} needs {expected} blocks, got {}",
                self.kind,
                self.blocks.len()
            ));
        }
        if self.num_classes < 2 {
            failed.push("num_classes must be at least 2".to_string());
        }
        if self.dense_hidden == 0 || self.input_channels == 0 || self.input_length == 0 {
            failed.push("dense_hidden, input_channels and input_length must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            failed.push(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        let mut prev_out = self.input_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            if let Err(e) = b.validate() {
                failed.push(format!("block {i}: {e}"));
            }
            if b.in_channels != prev_out {
                failed.push(format!(
                    "block {i} takes {} channels but receives {prev_out}",
                    b.in_channels
                ));
            }
            prev_out = b.out_channels;
        }
        for (i, pair) in self.blocks.windows(2).enumerate() {
            if pair[1].out_channels < pair[0].out_channels {
                failed.push(format!("hidden size decreases at block {}", i + 1));
            }
            if pair[1].kernel_size > pair[0].kernel_size {
                failed.push(format!("kernel size increases at block {}", i + 1));
            }
        }
        if !self.blocks.is_empty() && self.receptive_field() < WINDOW_LEN {
            failed.push(format!(
                "receptive field {} does not cover the {WINDOW_LEN}-frame window",
                self.receptive_field()
            ));
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(failed.join("; ")))
        }
    }

    /// Analytic receptive field of one block stack.
    pub fn receptive_field(&self) -> usize {
        stack_receptive_field(&self.blocks)
    }

    /// Channels of one stack's final feature map.
    pub fn feature_channels(&self) -> usize {
        self.blocks.last().map_or(self.input_channels, |b| b.out_channels)
    }

    /// Width of the vector entering the dense head.
    pub fn embedding_len(&self) -> usize {
        match self.kind {
            ModelKind::AcausalFlatten => self.feature_channels() * self.input_length,
            k if k.is_bidirectional() => 2 * self.feature_channels(),
            _ => self.feature_channels(),
        }
    }

    /// Exact scalar parameter count of the built model.
    pub fn num_params(&self) -> usize {
        let stacks = if self.kind.is_bidirectional() { 2 } else { 1 };
        let stack: usize = self.blocks.iter().map(TcnBlockConfig::num_params).sum();
        let head = self.embedding_len() * self.dense_hidden
            + self.dense_hidden
            + self.dense_hidden * self.num_classes
            + self.num_classes;
        stacks * stack + head
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    /// Re-wire the first block for a different input channel count.
    pub fn with_input_channels(mut self, channels: usize) -> Self {
        self.input_channels = channels;
        if let Some(b) = self.blocks.first_mut() {
            b.in_channels = channels;
        }
        self
    }

    pub fn with_input_length(mut self, length: usize) -> Self {
        self.input_length = length;
        self
    }

    /// Scale every block width by `factor`, rounding to multiples of 8.
    pub fn widened(mut self, factor: f64) -> Self {
        let scale = |c: usize| (((c as f64 * factor) / 8.0).round() as usize).max(1) * 8;
        let mut prev = self.input_channels;
        for b in &mut self.blocks {
            b.in_channels = prev;
            b.out_channels = scale(b.out_channels);
            prev = b.out_channels;
        }
        self
    }
}

fn stack(
    input_channels: usize,
    widths: &[usize],
    kernels: &[usize],
    dilations: &[usize],
    dropout: f64,
) -> Vec<TcnBlockConfig> {
    let mut prev = input_channels;
    widths
        .iter()
        .zip(kernels)
        .zip(dilations)
        .map(|((&w, &k), &d)| {
            let b = TcnBlockConfig {
                in_channels: prev,
                out_channels: w,
                kernel_size: k,
                dilation: d,
                dropout_rate: dropout,
            };
            prev = w;
            b
        })
        .collect()
}

/// Bundled configurations.
pub mod presets {
    use super::*;

    const FENCENET_WIDTHS: [usize; 6] = [96, 96, 192, 192, 384, 384];
    const FENCENET_KERNELS: [usize; 6] = [7, 7, 5, 5, 3, 3];
    const FENCENET_DILATIONS: [usize; 6] = [1, 1, 2, 2, 4, 4];
    const BI_WIDTHS: [usize; 4] = [128, 256, 320, 384];
    const BI_KERNELS: [usize; 4] = [7, 5, 5, 3];
    const BI_DILATIONS: [usize; 4] = [1, 2, 4, 8];
    const DROPOUT: f64 = 0.2;

    fn config(
        kind: ModelKind,
        input_channels: usize,
        blocks: Vec<TcnBlockConfig>,
        hidden: usize,
        dropout: f64,
    ) -> ModelConfig {
        ModelConfig {
            kind,
            blocks,
            dense_hidden: hidden,
            num_classes: NUM_CLASSES,
            dropout_rate: dropout,
            input_channels,
            input_length: WINDOW_LEN,
        }
    }

    /// Six causal blocks, about 2.5M parameters with 18 input channels.
    pub fn fencenet(input_channels: usize) -> ModelConfig {
        let blocks = stack(
            input_channels,
            &FENCENET_WIDTHS,
            &FENCENET_KERNELS,
            &FENCENET_DILATIONS,
            DROPOUT,
        );
        config(ModelKind::Fencenet, input_channels, blocks, 128, DROPOUT)
    }

    /// FenceNet with every width scaled by 1.5.
    pub fn fencenet_wide(input_channels: usize) -> ModelConfig {
        fencenet(input_channels)
            .widened(1.5)
            .with_kind(ModelKind::FencenetWide)
    }

    /// FenceNet's blocks with centered convolutions and a flattened readout.
    pub fn regular_conv1d(input_channels: usize) -> ModelConfig {
        fencenet(input_channels).with_kind(ModelKind::AcausalFlatten)
    }

    /// Two four-block stacks, about 5.3M parameters with 18 input channels.
    pub fn bifencenet(input_channels: usize) -> ModelConfig {
        let blocks = stack(input_channels, &BI_WIDTHS, &BI_KERNELS, &BI_DILATIONS, DROPOUT);
        config(ModelKind::Bifencenet, input_channels, blocks, 128, DROPOUT)
    }

    pub fn bifencenet_forward2(input_channels: usize) -> ModelConfig {
        bifencenet(input_channels).with_kind(ModelKind::BifencenetForward2)
    }

    /// Desk-scale FenceNet (about 33k parameters) with the full-size
    /// kernel/dilation schedule.
    pub fn fencenet_small(input_channels: usize) -> ModelConfig {
        let blocks = stack(
            input_channels,
            &[16, 16, 24, 24, 32, 32],
            &FENCENET_KERNELS,
            &FENCENET_DILATIONS,
            0.1,
        );
        config(ModelKind::Fencenet, input_channels, blocks, 32, 0.1)
    }

    /// Desk-scale BiFenceNet.
    pub fn bifencenet_small(input_channels: usize) -> ModelConfig {
        let blocks = stack(input_channels, &[16, 24, 32, 32], &BI_KERNELS, &BI_DILATIONS, 0.1);
        config(ModelKind::Bifencenet, input_channels, blocks, 32, 0.1)
    }

    pub const NAMES: [&str; 7] = [
        "fencenet",
        "fencenet_wide",
        "regular_conv1d",
        "bifencenet",
        "bifencenet_forward2",
        "fencenet_small",
        "bifencenet_small",
    ];

    pub fn by_name(name: &str, input_channels: usize) -> Result<ModelConfig> {
        Ok(match name {
            "fencenet" => fencenet(input_channels),
            "fencenet_wide" => fencenet_wide(input_channels),
            "regular_conv1d" => regular_conv1d(input_channels),
            "bifencenet" => bifencenet(input_channels),
            "bifencenet_forward2" => bifencenet_forward2(input_channels),
            "fencenet_small" => fencenet_small(input_channels),
            "bifencenet_small" => bifencenet_small(input_channels),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    NAMES.join(", ")
                )))
            }
        })
    }
}

/// Which block stack of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// The stack every kind has.
    Forward,
    /// The second stack of bidirectional kinds.
    Backward,
}

/// A built, parameter-initialized model.
#[derive(Clone, Debug)]
pub struct Model<S: Scalar = f32> {
    config: ModelConfig,
    params: ParamStore<S>,
    forward_stack: Vec<TcnBlock>,
    backward_stack: Vec<TcnBlock>,
    hidden: (ParamId, ParamId),
    output: (ParamId, ParamId),
}

impl<S: Scalar> Model<S> {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::build_with_rng(config, &mut rng_from_seed(seed))
    }

    pub fn build_with_rng(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut config = config.clone();
        for b in &mut config.blocks {
            b.dropout_rate = config.dropout_rate;
        }
        let mut params = ParamStore::new();
        let mut make_stack = |params: &mut ParamStore<S>, name: &str| {
            config
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| TcnBlock::new(params, &format!("{name}.block{i}"), b.clone(), rng))
                .collect::<Result<Vec<_>>>()
        };
        let forward_stack = make_stack(&mut params, "forward")?;
        let backward_stack = if config.kind.is_bidirectional() {
            make_stack(&mut params, "backward")?
        } else {
            Vec::new()
        };
        let (e, h, k) = (config.embedding_len(), config.dense_hidden, config.num_classes);
        let hidden = (
            params.add("head.hidden.weight", he_init(&[h, e], rng)),
            params.add("head.hidden.bias", Tensor::zeros(&[h])),
        );
        let output = (
            params.add("head.output.weight", he_init(&[k, h], rng)),
            params.add("head.output.bias", Tensor::zeros(&[k])),
        );
        debug_assert_eq!(params.num_scalars(), config.num_params());
        Ok(Model {
            config,
            params,
            forward_stack,
            backward_stack,
            hidden,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn stack(&self, direction: Direction) -> &[TcnBlock] {
        match direction {
            Direction::Forward => &self.forward_stack,
            Direction::Backward => &self.backward_stack,
        }
    }

    /// `(weight, bias)` of the hidden and output dense layers.
    pub fn head(&self) -> [(ParamId, ParamId); 2] {
        [self.hidden, self.output]
    }

    /// Parameter ids of a stack paired with the other stack's, position by
    /// position (bidirectional kinds only).
    pub fn paired_stack_params(&self) -> Vec<(ParamId, ParamId)> {
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        for (name, dst) in [("forward.", &mut fwd), ("backward.", &mut bwd)] {
            dst.extend(
                self.params
                    .iter()
                    .filter(|(_, p)| p.name.starts_with(name))
                    .map(|(id, _)| id),
            );
        }
        fwd.into_iter().zip(bwd).collect()
    }

    fn check_input(&self, tape: &Tape<'_, S>, input: Var) -> Result<()> {
        let shape = tape.value(input).shape();
        let (c, t) = match *shape {
            [c, t] | [_, c, t] => (c, t),
            _ => (0, 0),
        };
        if c != self.config.input_channels || t != self.config.input_length {
            return Err(Error::Dimension(format!(
                "model expects [{}, {}] windows, got {shape:?}",
                self.config.input_channels, self.config.input_length
            )));
        }
        Ok(())
    }

    /// Final feature map `[B, C, T]` of one stack, before any readout.
    pub fn stack_output(
        &self,
        tape: &mut Tape<'_, S>,
        params: &BoundParams,
        input: Var,
        direction: Direction,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var> {
        self.check_input(tape, input)?;
        let blocks = self.stack(direction);
        if blocks.is_empty() {
            return Err(Error::Argument(format!(
                "{:?} has no {direction:?} stack",
                self.config.kind
            )));
        }
        let padding = self.config.kind.padding();
        blocks
            .iter()
            .try_fold(input, |h, b| b.forward(tape, params, h, padding, mode, rng))
    }

    /// Vector entering the dense head.
    pub fn embedding(
        &self,
        tape: &mut Tape<'_, S>,
        params: &BoundParams,
        input: Var,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var> {
        match self.config.kind {
            ModelKind::Fencenet | ModelKind::FencenetWide => {
                let f = self.stack_output(tape, params, input, Direction::Forward, mode, rng)?;
                tape.last_step(f)
            }
            ModelKind::AcausalFlatten => {
                let f = self.stack_output(tape, params, input, Direction::Forward, mode, rng)?;
                tape.flatten(f)
            }
            ModelKind::Bifencenet | ModelKind::BifencenetForward2 => {
                let f = self.stack_output(tape, params, input, Direction::Forward, mode, rng)?;
                let second_input = if self.config.kind == ModelKind::Bifencenet {
                    tape.reverse_time(input)?
                } else {
                    input
                };
                let g =
                    self.stack_output(tape, params, second_input, Direction::Backward, mode, rng)?;
                let (f, g) = (tape.last_step(f)?, tape.last_step(g)?);
                tape.concat(f, g)
            }
        }
    }

    /// Logits `[K]` or `[B, K]` for a `[C, T]` or `[B, C, T]` input.
    pub fn forward(
        &self,
        tape: &mut Tape<'_, S>,
        params: &BoundParams,
        input: Var,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var> {
        let e = self.embedding(tape, params, input, mode, rng)?;
        self.head_forward(tape, params, e)
    }

    /// Dense head applied to an embedding `[E]` or `[B, E]`.
    pub fn head_forward(&self, tape: &mut Tape<'_, S>, params: &BoundParams, e: Var) -> Result<Var> {
        let (hw, hb) = self.hidden;
        let h = tape.dense(e, params.var(hw), Some(params.var(hb)))?;
        let h = tape.relu(h);
        let (ow, ob) = self.output;
        tape.dense(h, params.var(ow), Some(params.var(ob)))
    }

    /// Eval-mode logits without keeping the tape.
    pub fn logits(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape);
        let x = tape.leaf(input);
        let mut rng = rng_from_seed(0);
        let y = self.forward(&mut tape, &params, x, Mode::Eval, &mut rng)?;
        Ok(tape.value(y).clone())
    }

    /// Argmax class of each row of a batch of windows (ties to the lower index).
    pub fn predict(&self, input: &Tensor<S>) -> Result<Vec<usize>> {
        let logits = self.logits(input)?;
        let k = self.config.num_classes;
        Ok(logits.data().chunks(k).map(argmax).collect())
    }

    /// Write `model.json` and `model.params` into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.config)?;
        std::fs::write(dir.join(CHECKPOINT_CONFIG), json + "\n")?;
        std::fs::write(dir.join(CHECKPOINT_PARAMS), self.params.to_bytes())?;
        Ok(())
    }

    /// Rebuild from `model.json` and replace the parameters with `model.params`;
    /// fails when the file's names or shapes disagree with the config.
    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let config_path = dir.join(CHECKPOINT_CONFIG);
        let text = std::fs::read_to_string(&config_path).map_err(|e| {
            Error::Input(format!("checkpoint config {}: {e}", config_path.display()))
        })?;
        let config: ModelConfig = serde_json::from_str(&text)?;
        let mut model = Model::build(&config, 0)?;
        let params_path = dir.join(CHECKPOINT_PARAMS);
        let bytes = std::fs::read(&params_path).map_err(|e| {
            Error::Input(format!("checkpoint parameters {}: {e}", params_path.display()))
        })?;
        model.params.load_values(ParamStore::from_bytes(&bytes)?)?;
        Ok(model)
    }
}

pub(crate) fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
