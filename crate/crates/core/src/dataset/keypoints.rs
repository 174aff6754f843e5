use serde::{Deserialize, Serialize};

use super::{Action, Joint, Point, Side};

/// Which joints feed the model. Paired joints are ordered front side first so
/// a channel means the same body part for left- and right-leading fencers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeypointSet {
    /// Front arm (wrist, elbow, shoulder) plus both hips, knees and ankles.
    #[default]
    Default9,
    /// `Default9` plus the nose and the back arm.
    Full13,
    /// Both hips, knees and ankles.
    Lower6,
}

fn sided(side: Side, left: Joint, right: Joint) -> Joint {
    match side {
        Side::Left => left,
        Side::Right => right,
    }
}

fn arm(side: Side) -> [Joint; 3] {
    [
        sided(side, Joint::LWrist, Joint::RWrist),
        sided(side, Joint::LElbow, Joint::RElbow),
        sided(side, Joint::LShoulder, Joint::RShoulder),
    ]
}

fn legs(front: Side) -> [Joint; 6] {
    let back = front.other();
    [
        sided(front, Joint::LHip, Joint::RHip),
        sided(back, Joint::LHip, Joint::RHip),
        sided(front, Joint::LKnee, Joint::RKnee),
        sided(back, Joint::LKnee, Joint::RKnee),
        sided(front, Joint::LAnkle, Joint::RAnkle),
        sided(back, Joint::LAnkle, Joint::RAnkle),
    ]
}

impl KeypointSet {
    pub fn joints(self, front: Side) -> Vec<Joint> {
        let mut out = Vec::with_capacity(13);
        match self {
            KeypointSet::Default9 => {
                out.extend(arm(front));
                out.extend(legs(front));
            }
            KeypointSet::Full13 => {
                out.push(Joint::Nose);
                out.extend(arm(front));
                out.extend(arm(front.other()));
                out.extend(legs(front));
            }
            KeypointSet::Lower6 => out.extend(legs(front)),
        }
        out
    }

    pub fn len(self) -> usize {
        match self {
            KeypointSet::Default9 => 9,
            KeypointSet::Full13 => 13,
            KeypointSet::Lower6 => 6,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Model input channels: x and y per joint.
    pub fn channels(self) -> usize {
        2 * self.len()
    }
}

/// Pick the leading side from motion. The direction of travel is the sign of
/// the net hip-midpoint displacement (negated for backward steps); the front
/// ankle is the one furthest ahead of the hip midpoint in that direction at
/// the first frame. Ties resolve to `Right`.
pub fn resolve_front_side(frames: &[Vec<Point>], action: Action) -> Side {
    let hip_mid = |f: &[Point]| 0.5 * (f[Joint::LHip.index()][0] + f[Joint::RHip.index()][0]);
    let first = &frames[0];
    let last = &frames[frames.len() - 1];
    let mut direction = if hip_mid(last) >= hip_mid(first) { 1.0 } else { -1.0 };
    if action == Action::SB {
        direction = -direction;
    }
    let ahead = |j: Joint| (first[j.index()][0] - hip_mid(first)) * direction;
    if ahead(Joint::LAnkle) > ahead(Joint::RAnkle) {
        Side::Left
    } else {
        Side::Right
    }
}
