//! Turning videos into fixed-length, normalized model inputs.

use rand::seq::index;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normalize_window, resolve_front_side, Dataset, Joint, KeypointSet, Point, PoseSequence, Side};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, Rng};

/// Frames per sampled window: the shortest video in the reference data.
pub const WINDOW_LEN: usize = 28;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// Offsets `0, 2, 4, ...` below `max_offset`, at most `max_samples`.
    #[default]
    Stride,
    /// Distinct offsets drawn uniformly from `[0, min(max_offset, T - window)]`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub window: usize,
    pub max_samples: usize,
    pub max_offset: usize,
    pub policy: SamplingPolicy,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            window: WINDOW_LEN,
            max_samples: 10,
            max_offset: 20,
            policy: SamplingPolicy::Stride,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Several windows per video.
    #[default]
    Sample,
    /// One sample per video, zero-padded at the end to a common length.
    ZeroPad,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Forward,
    Reversed,
    Shuffled,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preprocessing {
    pub keypoints: KeypointSet,
    pub sampling: SamplingConfig,
    pub padding: PaddingMode,
    pub transform: Transform,
}

impl Preprocessing {
    pub fn channels(&self) -> usize {
        self.keypoints.channels()
    }

    /// Model input length for data prepared from `train`.
    pub fn input_length(&self, train: &Dataset) -> usize {
        match self.padding {
            PaddingMode::Sample => self.sampling.window,
            PaddingMode::ZeroPad => train.iter().map(PoseSequence::len).max().unwrap_or(1),
        }
    }
}

/// A normalized, keypoint-selected slice of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub video_id: String,
    pub fencer_id: u32,
    pub start_offset: usize,
    pub channels: usize,
    pub len: usize,
    /// `[channels, len]`, row-major. Channel `2j` holds x and `2j + 1` holds
    /// y of selected joint `j`.
    pub data: Vec<f32>,
    pub label: usize,
}

impl WindowSample {
    pub fn value(&self, channel: usize, t: usize) -> f32 {
        self.data[channel * self.len + t]
    }

    fn permute_time(&self, order: &[usize]) -> WindowSample {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.len) {
            data.extend(order.iter().map(|&t| row[t]));
        }
        WindowSample {
            data,
            ..self.clone()
        }
    }
}

/// Windows the stride policy yields for a `len`-frame video with default
/// settings: `min(10, floor((len - 28) / 2) + 1)`.
pub fn stride_window_count(len: usize) -> usize {
    if len < WINDOW_LEN {
        0
    } else {
        ((len - WINDOW_LEN) / 2 + 1).min(10)
    }
}

/// Start offsets of the windows sampled from a `len`-frame video.
pub fn window_offsets(len: usize, cfg: &SamplingConfig, rng: &mut Rng) -> Vec<usize> {
    if len < cfg.window || cfg.max_samples == 0 {
        return Vec::new();
    }
    let slack = len - cfg.window;
    match cfg.policy {
        SamplingPolicy::Stride => {
            let last = slack.min(cfg.max_offset.saturating_sub(1));
            (0..=last).step_by(2).take(cfg.max_samples).collect()
        }
        SamplingPolicy::Random => {
            let range = slack.min(cfg.max_offset) + 1;
            let mut offsets = index::sample(rng, range, cfg.max_samples.min(range)).into_vec();
            offsets.sort_unstable();
            offsets
        }
    }
}

fn front_side(seq: &PoseSequence) -> Result<Side> {
    if let Some(side) = seq.front_side {
        return Ok(side);
    }
    let first = seq.complete_frames(0, 1)?.remove(0);
    let last = seq.complete_frames(seq.len() - 1, 1)?.remove(0);
    Ok(resolve_front_side(&[first, last], seq.action))
}

fn front_ankle(side: Side) -> Joint {
    match side {
        Side::Left => Joint::LAnkle,
        Side::Right => Joint::RAnkle,
    }
}

/// Normalize `frames` and lay the selected joints out as `[2 * J, len]`,
/// zero-filling steps past `frames.len()`.
fn encode(
    frames: &[Vec<Point>],
    joints: &[Joint],
    side: Side,
    len: usize,
    video_id: &str,
) -> Result<Vec<f32>> {
    let norm = normalize_window(frames, Joint::Nose.index(), front_ankle(side).index(), video_id)?;
    let mut data = vec![0.0f32; 2 * joints.len() * len];
    for (j, joint) in joints.iter().enumerate() {
        for (t, frame) in norm.iter().enumerate().take(len) {
            let p = frame[joint.index()];
            data[2 * j * len + t] = p[0] as f32;
            data[(2 * j + 1) * len + t] = p[1] as f32;
        }
    }
    Ok(data)
}

/// Cut, normalize, and keypoint-select the windows of one video.
pub fn sample_windows(
    seq: &PoseSequence,
    keypoints: KeypointSet,
    cfg: &SamplingConfig,
    rng: &mut Rng,
) -> Result<Vec<WindowSample>> {
    if seq.len() < cfg.window {
        return Err(Error::data(
            &seq.video_id,
            format!("{} frames is shorter than the {}-frame window", seq.len(), cfg.window),
        ));
    }
    let side = front_side(seq)?;
    let joints = keypoints.joints(side);
    window_offsets(seq.len(), cfg, rng)
        .into_iter()
        .map(|start| {
            let frames = seq.complete_frames(start, cfg.window)?;
            Ok(WindowSample {
                video_id: seq.video_id.clone(),
                fencer_id: seq.fencer_id,
                start_offset: start,
                channels: keypoints.channels(),
                len: cfg.window,
                data: encode(&frames, &joints, side, cfg.window, &seq.video_id)?,
                label: seq.action.index(),
            })
        })
        .collect()
}

/// One sample covering the whole video, normalized at its first frame and
/// zero-padded (or truncated) to `target_len` frames.
pub fn zero_pad(seq: &PoseSequence, keypoints: KeypointSet, target_len: usize) -> Result<WindowSample> {
    if target_len == 0 {
        return Err(Error::Argument("zero-pad target length must be positive".into()));
    }
    let side = front_side(seq)?;
    let used = seq.len().min(target_len);
    let frames = seq.complete_frames(0, used)?;
    Ok(WindowSample {
        video_id: seq.video_id.clone(),
        fencer_id: seq.fencer_id,
        start_offset: 0,
        channels: keypoints.channels(),
        len: target_len,
        data: encode(&frames, &keypoints.joints(side), side, target_len, &seq.video_id)?,
        label: seq.action.index(),
    })
}

/// Reorder a sample's frames: reversed flips time, shuffled applies a random
/// permutation drawn from `rng`.
pub fn apply_transform(sample: &WindowSample, transform: Transform, rng: &mut Rng) -> WindowSample {
    match transform {
        Transform::Forward => sample.clone(),
        Transform::Reversed => {
            let order: Vec<usize> = (0..sample.len).rev().collect();
            sample.permute_time(&order)
        }
        Transform::Shuffled => {
            let mut order: Vec<usize> = (0..sample.len).collect();
            order.shuffle(rng);
            sample.permute_time(&order)
        }
    }
}

/// Every model input for `dataset`, in video order. Each video draws from its
/// own stream derived from `seed` and its id, so results do not depend on
/// scheduling. `input_len` is the zero-pad target and is ignored when sampling.
pub fn prepare_samples(
    dataset: &Dataset,
    prep: &Preprocessing,
    seed: u64,
    input_len: usize,
) -> Result<Vec<WindowSample>> {
    let per_video: Vec<Vec<WindowSample>> = dataset
        .sequences
        .par_iter()
        .map(|seq| {
            let mut rng = derived_rng(seed, &seq.video_id);
            let raw = match prep.padding {
                PaddingMode::Sample => {
                    sample_windows(seq, prep.keypoints, &prep.sampling, &mut rng)?
                }
                PaddingMode::ZeroPad => vec![zero_pad(seq, prep.keypoints, input_len)?],
            };
            Ok(raw
                .iter()
                .map(|s| apply_transform(s, prep.transform, &mut rng))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_video.into_iter().flatten().collect())
}
