//! Mini-batch Adam training with deterministic shuffling and dropout streams.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::models::{argmax, Model};
use crate::rng::{derived_rng, Rng};
use crate::tcn::Mode;
use crate::tensor::{ParamStore, Scalar, Tape, Tensor};

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 103,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut failed = Vec::new();
        if self.epochs == 0 {
            failed.push("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            failed.push("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            failed.push("learning_rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            failed.push("adam betas must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay < 0.0 {
            failed.push("eps must be positive and weight_decay non-negative");
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(failed.join("; ")))
        }
    }
}

/// Adam with bias correction; moments are kept in f64.
#[derive(Clone, Debug)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<S: Scalar>(params: &ParamStore<S>, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.tensor.numel()]).collect();
        Adam {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from the gradients stored on `params`. Parameters without a
    /// stored gradient see a zero gradient.
    pub fn step<S: Scalar>(&mut self, params: &mut ParamStore<S>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.tensor.numel() != m.len() {
                return Err(Error::Dimension(format!(
                    "optimizer state for `{}` has {} entries, parameter has {}",
                    p.name,
                    m.len(),
                    p.tensor.numel()
                )));
            }
            let grad: Vec<f64> = match p.tensor.grad() {
                Some(g) => g.iter().map(|x| x.as_f64()).collect(),
                None => vec![0.0; m.len()],
            };
            for (i, w) in p.tensor.data_mut().iter_mut().enumerate() {
                let g = grad[i] + self.weight_decay * w.as_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let update = self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                *w = S::from_f64(w.as_f64() - update);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    /// Seconds spent in this epoch.
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub param_checksum: String,
    /// Parameters the loss never reached; non-empty means a wiring bug.
    pub untouched_params: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    param_checksum: String,
    untouched_params: Vec<String>,
}

impl TrainLog {
    /// Equal apart from wall times.
    pub fn same_run(&self, other: &TrainLog) -> bool {
        self.param_checksum == other.param_checksum
            && self.untouched_params == other.untouched_params
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.mean_loss.to_bits() == b.mean_loss.to_bits()
                    && a.train_accuracy.to_bits() == b.train_accuracy.to_bits()
            })
    }

    /// One JSON object per epoch, then a summary line with the checksum.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.epochs {
            writeln!(out, "{}", serde_json::to_string(e)?)?;
        }
        let summary = Summary {
            param_checksum: self.param_checksum.clone(),
            untouched_params: self.untouched_params.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&summary)?)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<TrainLog> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("train log {}: {e}", path.display())))?;
        let lines: Vec<String> = std::io::BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
        let (last, epochs) = lines
            .split_last()
            .ok_or_else(|| Error::Input(format!("train log {} is empty", path.display())))?;
        let summary: Summary = serde_json::from_str(last)?;
        Ok(TrainLog {
            epochs: epochs
                .iter()
                .map(|l| serde_json::from_str(l))
                .collect::<std::result::Result<_, _>>()?,
            param_checksum: summary.param_checksum,
            untouched_params: summary.untouched_params,
        })
    }
}

/// Stack windows into a `[B, C, T]` batch.
pub fn batch_tensor<S: Scalar>(samples: &[&WindowSample]) -> Result<Tensor<S>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Argument("empty batch".into()))?;
    let (c, t) = (first.channels, first.len);
    let mut data = Vec::with_capacity(samples.len() * c * t);
    for s in samples {
        if (s.channels, s.len) != (c, t) {
            return Err(Error::Dimension(format!(
                "window {}@{} is [{}, {}], batch is [{c}, {t}]",
                s.video_id, s.start_offset, s.channels, s.len
            )));
        }
        data.extend(s.data.iter().map(|&v| S::from_f64(v as f64)));
    }
    Tensor::new(vec![samples.len(), c, t], data)
}

/// Epoch-by-epoch trainer; `train` runs it for the configured epoch count.
pub struct Trainer<S: Scalar = f32> {
    model: Model<S>,
    config: TrainConfig,
    adam: Adam,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    log: TrainLog,
    reached: BTreeSet<String>,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: Model<S>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(model.params(), config);
        Ok(Trainer {
            model,
            config: config.clone(),
            adam,
            shuffle_rng: derived_rng(config.seed, "train-shuffle"),
            dropout_rng: derived_rng(config.seed, "train-dropout"),
            log: TrainLog::default(),
            reached: BTreeSet::new(),
        })
    }

    pub fn model(&self) -> &Model<S> {
        &self.model
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    /// One pass over `windows` in shuffled batches.
    pub fn run_epoch(&mut self, windows: &[WindowSample]) -> Result<&EpochRecord> {
        if windows.is_empty() {
            return Err(Error::Argument("training set is empty".into()));
        }
        let cfg = self.model.config();
        if let Some(w) = windows
            .iter()
            .find(|w| w.channels != cfg.input_channels || w.len != cfg.input_length)
        {
            return Err(Error::Dimension(format!(
                "window {}@{} is [{}, {}], model expects [{}, {}]",
                w.video_id, w.start_offset, w.channels, w.len, cfg.input_channels, cfg.input_length
            )));
        }
        let epoch = self.log.epochs.len() + 1;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut self.shuffle_rng);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &windows[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|w| w.label).collect();
            let x = batch_tensor::<S>(&batch)?;
            let (loss, hits, mut grads, bound) = {
                let mut tape = Tape::new();
                let bound = self.model.params().bind(&mut tape);
                let xv = tape.input(x);
                let logits =
                    self.model
                        .forward(&mut tape, &bound, xv, Mode::Train, &mut self.dropout_rng)?;
                let k = self.model.config().num_classes;
                let hits = tape
                    .value(logits)
                    .data()
                    .chunks(k)
                    .zip(&labels)
                    .filter(|(row, &y)| argmax(row) == y)
                    .count();
                let loss_var = tape.softmax_cross_entropy(logits, &labels)?;
                let loss = tape.value(loss_var).data()[0].as_f64();
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss {loss} at epoch {epoch}, batch {}, lr {}",
                        b + 1,
                        self.config.learning_rate
                    )));
                }
                (loss, hits, tape.backward(loss_var)?, bound)
            };
            let params = self.model.params_mut();
            let unreached = params.set_grads(&mut grads, &bound);
            if let Some((_, p)) = params
                .iter()
                .find(|(_, p)| p.tensor.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
            {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for `{}` at epoch {epoch}, batch {}, lr {}",
                    p.name,
                    b + 1,
                    self.config.learning_rate
                )));
            }
            for (_, p) in params.iter() {
                if !unreached.contains(&p.name) {
                    self.reached.insert(p.name.clone());
                }
            }
            self.adam.step(params)?;
            loss_sum += loss * batch.len() as f64;
            correct += hits;
        }
        self.model.params_mut().clear_grads();
        self.log.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / windows.len() as f64,
            train_accuracy: correct as f64 / windows.len() as f64,
            wall_time: started.elapsed().as_secs_f64(),
        });
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    /// Model plus the completed log (checksum and untouched parameters filled in).
    pub fn finish(mut self) -> (Model<S>, TrainLog) {
        self.log.param_checksum = self.model.params().checksum();
        self.log.untouched_params = self
            .model
            .params()
            .iter()
            .map(|(_, p)| p.name.clone())
            .filter(|n| !self.reached.contains(n))
            .collect();
        if !self.log.untouched_params.is_empty() {
            log::warn!(
                "parameters never reached by the loss: {}",
                self.log.untouched_params.join(", ")
            );
        }
        (self.model, self.log)
    }
}

/// Train for `config.epochs` passes over `windows`.
pub fn train<S: Scalar>(
    model: Model<S>,
    windows: &[WindowSample],
    config: &TrainConfig,
) -> Result<(Model<S>, TrainLog)> {
    let mut trainer = Trainer::new(model, config)?;
    for _ in 0..config.epochs {
        let record = trainer.run_epoch(windows)?;
        log::debug!(
            "epoch {} loss {:.4} acc {:.3}",
            record.epoch,
            record.mean_loss,
            record.train_accuracy
        );
    }
    Ok(trainer.finish())
}
