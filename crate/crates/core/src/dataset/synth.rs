//! Synthetic footwork generator for desk-scale experiments.
//!
//! Every fencer faces +x in image coordinates (y grows downward) and has a
//! random leading side, height, position, tempo and posture. Classes differ
//! the way the real footwork does: steps translate the body forward or back
//! with one foot after the other, lunges drive the front foot forward with a
//! class-specific progress profile (constant for R, accelerating for IS,
//! start-pause-go for WW), and JS additionally slides the back foot.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Action, Dataset, Joint, Point, PoseSequence, Side, NUM_JOINTS};
use crate::rng::{derived_rng, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_fencers: u32,
    pub reps_per_action: usize,
    /// Standard deviation of per-coordinate pixel noise.
    pub noise_std: f64,
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_fencers: 10,
            reps_per_action: 10,
            noise_std: 1.0,
            fps: 30.0,
        }
    }
}

struct Fencer {
    height: f64,
    origin_x: f64,
    floor_y: f64,
    tempo: f64,
    stance: f64,
    lunge: f64,
    front: Side,
    knee_bend: f64,
    arm_carry: f64,
}

impl Fencer {
    fn sample(rng: &mut Rng) -> Fencer {
        Fencer {
            height: rng.random_range(160.0..240.0),
            origin_x: rng.random_range(80.0..320.0),
            floor_y: rng.random_range(380.0..450.0),
            tempo: rng.random_range(0.85..1.15),
            stance: rng.random_range(0.45..0.6),
            lunge: rng.random_range(0.6..0.8),
            front: if rng.random_bool(0.5) { Side::Left } else { Side::Right },
            knee_bend: rng.random_range(0.03..0.08),
            arm_carry: rng.random_range(-0.03..0.03),
        }
    }
}

/// Body configuration at one instant, in units of fencer height.
#[derive(Default)]
struct Body {
    hip_x: f64,
    hip_drop: f64,
    front_ankle_x: f64,
    front_lift: f64,
    back_ankle_x: f64,
    arm_extension: f64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Lunge progress in `[0, 1]` at normalized time `tau`.
fn lunge_progress(action: Action, tau: f64) -> f64 {
    match action {
        Action::IS => tau.powf(2.2),
        Action::WW => {
            if tau < 0.3 {
                0.25 * smoothstep(tau / 0.3)
            } else if tau < 0.6 {
                0.25
            } else {
                0.25 + 0.75 * (tau - 0.6) / 0.4
            }
        }
        _ => tau,
    }
}

fn body_at(action: Action, tau: f64, fencer: &Fencer, amplitude: f64) -> Body {
    let half = fencer.stance / 2.0;
    let mut body = Body {
        front_ankle_x: half,
        back_ankle_x: -half,
        ..Body::default()
    };
    match action {
        Action::SF | Action::SB => {
            let step = 0.25 * amplitude;
            let lead = smoothstep(tau / 0.6);
            let trail = smoothstep((tau - 0.4) / 0.6);
            let sign = if action == Action::SF { 1.0 } else { -1.0 };
            // the foot on the side of travel moves first
            let (front, back) = if action == Action::SF { (lead, trail) } else { (trail, lead) };
            body.front_ankle_x += sign * step * front;
            body.back_ankle_x += sign * step * back;
            body.hip_x = sign * step * smoothstep(tau);
            body.front_lift = 0.03 * (std::f64::consts::PI * front).sin();
            body.arm_extension = 0.1;
        }
        _ => {
            let u = lunge_progress(action, tau);
            let reach = fencer.lunge * amplitude;
            body.front_ankle_x += reach * u;
            body.hip_x = 0.45 * reach * u;
            body.hip_drop = 0.08 * u;
            body.arm_extension = u;
            if action == Action::JS {
                body.back_ankle_x += 0.35 * reach * u;
                body.front_lift = 0.05 * (std::f64::consts::PI * tau).sin();
            }
        }
    }
    body
}

/// Joint positions `(forward, up)` in height units, indexed by canonical joint.
fn skeleton(body: &Body, fencer: &Fencer) -> [(f64, f64); NUM_JOINTS] {
    let hip_h = 0.5 - body.hip_drop;
    let front_hip = (body.hip_x + 0.04, hip_h);
    let back_hip = (body.hip_x - 0.04, hip_h);
    let front_ankle = (body.front_ankle_x, body.front_lift);
    let back_ankle = (body.back_ankle_x, 0.0);
    let front_knee = (
        0.5 * (front_hip.0 + front_ankle.0) + fencer.knee_bend + 0.02,
        0.5 * (hip_h + body.front_lift),
    );
    let back_knee = (0.5 * (back_hip.0 + back_ankle.0) - fencer.knee_bend, 0.5 * hip_h);
    let sh_h = hip_h + 0.3;
    let front_sh = (body.hip_x + 0.05 + 0.04 * body.arm_extension, sh_h);
    let back_sh = (body.hip_x - 0.05, sh_h);
    let e = body.arm_extension;
    let front_elbow = (
        front_sh.0 + 0.08 + 0.08 * e,
        front_sh.1 - 0.08 * (1.0 - e) + fencer.arm_carry,
    );
    let front_wrist = (
        front_sh.0 + 0.16 + 0.16 * e,
        front_sh.1 - 0.04 * (1.0 - e) + 2.0 * fencer.arm_carry,
    );
    let back_elbow = (back_sh.0 - 0.1, back_sh.1 + 0.05);
    let back_wrist = (back_sh.0 - 0.12, back_sh.1 + 0.15);
    let nose = (body.hip_x + 0.06, hip_h + 0.45);

    let mut out = [(0.0, 0.0); NUM_JOINTS];
    let mut put = |left: Joint, right: Joint, front: (f64, f64), back: (f64, f64)| {
        let (l, r) = match fencer.front {
            Side::Left => (front, back),
            Side::Right => (back, front),
        };
        out[left.index()] = l;
        out[right.index()] = r;
    };
    put(Joint::LShoulder, Joint::RShoulder, front_sh, back_sh);
    put(Joint::LElbow, Joint::RElbow, front_elbow, back_elbow);
    put(Joint::LWrist, Joint::RWrist, front_wrist, back_wrist);
    put(Joint::LHip, Joint::RHip, front_hip, back_hip);
    put(Joint::LKnee, Joint::RKnee, front_knee, back_knee);
    put(Joint::LAnkle, Joint::RAnkle, front_ankle, back_ankle);
    out[Joint::Nose.index()] = nose;
    out
}

/// Nominal frame count per class before tempo scaling.
fn base_frames(action: Action) -> f64 {
    match action {
        Action::R => 38.0,
        Action::IS => 46.0,
        Action::WW => 48.0,
        Action::JS => 44.0,
        Action::SF | Action::SB => 34.0,
    }
}

fn generate_video(
    video_id: String,
    fencer_id: u32,
    action: Action,
    fencer: &Fencer,
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> PoseSequence {
    let len = (base_frames(action) * fencer.tempo * rng.random_range(0.92..1.08))
        .round()
        .max(28.0) as usize;
    let amplitude = rng.random_range(0.9..1.1);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite noise");
    let frames = (0..len)
        .map(|t| {
            let tau = t as f64 / (len - 1) as f64;
            let body = body_at(action, tau, fencer, amplitude);
            skeleton(&body, fencer)
                .iter()
                .map(|&(fwd, up)| {
                    let x = fencer.origin_x + fwd * fencer.height + noise.sample(rng);
                    let y = fencer.floor_y - up * fencer.height + noise.sample(rng);
                    Some::<Point>([x, y])
                })
                .collect()
        })
        .collect();
    PoseSequence {
        video_id,
        fencer_id,
        action,
        fps: cfg.fps,
        frames,
        front_side: None,
    }
}

/// `num_fencers x 6 x reps_per_action` videos, ordered by fencer, action,
/// repetition. Fencer `f` and video `v` draw from streams derived from `seed`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Dataset {
    let mut sequences = Vec::new();
    for fencer_id in 1..=cfg.num_fencers {
        let fencer = Fencer::sample(&mut derived_rng(seed, &format!("fencer-{fencer_id}")));
        for action in Action::ALL {
            for rep in 1..=cfg.reps_per_action {
                let video_id = format!("synth-f{fencer_id:02}-{action}-{rep:02}");
                let mut rng = derived_rng(seed, &video_id);
                sequences.push(generate_video(video_id, fencer_id, action, &fencer, cfg, &mut rng));
            }
        }
    }
    Dataset::new(sequences)
}
