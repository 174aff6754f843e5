//! Pose sequences, the JSONL manifest, preprocessing into fixed-length
//! windows, train/test splits, and a synthetic footwork generator.

mod keypoints;
mod normalize;
mod sampling;
mod split;
mod synth;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use keypoints::{resolve_front_side, KeypointSet};
pub use normalize::{normalize_window, MIN_SCALE};
pub use sampling::{
    apply_transform, prepare_samples, sample_windows, stride_window_count, window_offsets,
    zero_pad, PaddingMode, Preprocessing, SamplingConfig, SamplingPolicy, Transform,
    WindowSample, WINDOW_LEN,
};
pub use split::{split_pi, split_random};
pub use synth::{synth_generate, SynthConfig};

/// Footwork classes in their fixed order; class indices follow this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    /// Rapid lunge.
    R,
    /// Incremental speed lunge.
    IS,
    /// With-waiting lunge.
    WW,
    /// Jumping sliding lunge.
    JS,
    /// Step forward.
    SF,
    /// Step backward.
    SB,
}

pub const NUM_CLASSES: usize = 6;

impl Action {
    pub const ALL: [Action; NUM_CLASSES] = [
        Action::R,
        Action::IS,
        Action::WW,
        Action::JS,
        Action::SF,
        Action::SB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            Action::R => "R",
            Action::IS => "IS",
            Action::WW => "WW",
            Action::JS => "JS",
            Action::SF => "SF",
            Action::SB => "SB",
        }
    }

    pub fn is_lunge(self) -> bool {
        self.index() < 4
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.code() == s)
            .ok_or_else(|| Error::Input(format!("unknown action `{s}`")))
    }
}

/// The 13 canonical joints, in manifest order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Joint {
    Nose,
    LShoulder,
    RShoulder,
    LElbow,
    RElbow,
    LWrist,
    RWrist,
    LHip,
    RHip,
    LKnee,
    RKnee,
    LAnkle,
    RAnkle,
}

pub const NUM_JOINTS: usize = 13;

pub const CANONICAL_JOINTS: [&str; NUM_JOINTS] = [
    "nose",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
];

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Nose,
        Joint::LShoulder,
        Joint::RShoulder,
        Joint::LElbow,
        Joint::RElbow,
        Joint::LWrist,
        Joint::RWrist,
        Joint::LHip,
        Joint::RHip,
        Joint::LKnee,
        Joint::RKnee,
        Joint::LAnkle,
        Joint::RAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        CANONICAL_JOINTS[self.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Image-plane `(x, y)` coordinate.
pub type Point = [f64; 2];

/// One video: per-frame 2D joints (`None` where the pose estimate is missing)
/// plus fencer and action metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct PoseSequence {
    pub video_id: String,
    pub fencer_id: u32,
    pub action: Action,
    pub fps: f64,
    /// `frames[t][j]`, joints in canonical order.
    pub frames: Vec<Vec<Option<Point>>>,
    /// Explicit front side; `None` resolves it from the motion.
    pub front_side: Option<Side>,
}

impl PoseSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint(&self, t: usize, joint: Joint) -> Option<Point> {
        self.frames[t][joint.index()]
    }

    /// Frames `[start, start + len)` with every joint present.
    pub(crate) fn complete_frames(&self, start: usize, len: usize) -> Result<Vec<Vec<Point>>> {
        (start..start + len)
            .map(|t| {
                self.frames[t]
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        p.ok_or_else(|| {
                            Error::data(
                                &self.video_id,
                                format!("missing `{}` at frame {t}", CANONICAL_JOINTS[j]),
                            )
                        })
                    })
                    .collect()
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::data(&self.video_id, "sequence has no frames"));
        }
        if let Some((t, f)) = self
            .frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.len() != NUM_JOINTS)
        {
            return Err(Error::data(
                &self.video_id,
                format!("frame {t} has {} joints, expected {NUM_JOINTS}", f.len()),
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::data(&self.video_id, format!("invalid fps {}", self.fps)));
        }
        Ok(())
    }
}

/// Wire form of a manifest line.
#[derive(Serialize, Deserialize)]
struct RawSequence {
    video_id: String,
    fencer_id: u32,
    action: Action,
    fps: f64,
    joints: Vec<String>,
    /// `[x, y]`, `null`, or `[null, null]` per joint.
    frames: Vec<Vec<Option<[Option<f64>; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    front_side: Option<Side>,
}

impl TryFrom<RawSequence> for PoseSequence {
    type Error = Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        if raw.joints.iter().map(String::as_str).ne(CANONICAL_JOINTS) {
            return Err(Error::data(
                &raw.video_id,
                format!(
                    "joint list {:?} differs from the canonical order {CANONICAL_JOINTS:?}",
                    raw.joints
                ),
            ));
        }
        let frames = raw
            .frames
            .into_iter()
            .map(|f| {
                f.into_iter()
                    .map(|p| match p {
                        Some([Some(x), Some(y)]) => Some([x, y]),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let seq = PoseSequence {
            video_id: raw.video_id,
            fencer_id: raw.fencer_id,
            action: raw.action,
            fps: raw.fps,
            frames,
            front_side: raw.front_side,
        };
        seq.validate()?;
        Ok(seq)
    }
}

impl From<PoseSequence> for RawSequence {
    fn from(seq: PoseSequence) -> Self {
        RawSequence {
            video_id: seq.video_id,
            fencer_id: seq.fencer_id,
            action: seq.action,
            fps: seq.fps,
            joints: CANONICAL_JOINTS.iter().map(|s| s.to_string()).collect(),
            frames: seq
                .frames
                .into_iter()
                .map(|f| f.into_iter().map(|p| p.map(|[x, y]| [Some(x), Some(y)])).collect())
                .collect(),
            front_side: seq.front_side,
        }
    }
}

/// An ordered collection of videos.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<PoseSequence>,
}

impl Dataset {
    pub fn new(sequences: Vec<PoseSequence>) -> Self {
        Dataset { sequences }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PoseSequence> {
        self.sequences.iter()
    }

    /// Distinct fencer ids in ascending order.
    pub fn fencers(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.sequences.iter().map(|s| s.fencer_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Videos per class, in class order.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for s in &self.sequences {
            counts[s.action.index()] += 1;
        }
        counts
    }

    /// Parse a JSONL manifest. Blank lines are skipped.
    pub fn read_manifest(reader: impl BufRead) -> Result<Self> {
        let mut sequences = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let seq: PoseSequence = serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("manifest line {}: {e}", n + 1)))?;
            sequences.push(seq);
        }
        Ok(Dataset { sequences })
    }

    pub fn load_manifest(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("manifest not found: {} ({e})", path.display())))?;
        Self::read_manifest(std::io::BufReader::new(file))
    }

    pub fn write_manifest(&self, mut writer: impl Write) -> Result<()> {
        for seq in &self.sequences {
            serde_json::to_writer(&mut writer, seq)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}
