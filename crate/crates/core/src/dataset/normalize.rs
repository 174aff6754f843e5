use super::Point;
use crate::error::{Error, Result};

/// Smallest accepted nose-to-front-ankle vertical distance, in input units.
pub const MIN_SCALE: f64 = 1e-6;

/// Express every joint relative to the nose at the first frame, in units of
/// the first frame's vertical nose-to-front-ankle distance (both axes share
/// the one scale).
pub fn normalize_window(
    frames: &[Vec<Point>],
    nose: usize,
    front_ankle: usize,
    video_id: &str,
) -> Result<Vec<Vec<Point>>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::data(video_id, "cannot normalize an empty window"))?;
    let origin = first[nose];
    let scale = (origin[1] - first[front_ankle][1]).abs();
    if !(scale > MIN_SCALE && scale.is_finite()) {
        return Err(Error::data(
            video_id,
            format!("degenerate body scale {scale}: nose and front ankle share a height"),
        ));
    }
    Ok(frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|p| [(p[0] - origin[0]) / scale, (p[1] - origin[1]) / scale])
                .collect()
        })
        .collect())
}
