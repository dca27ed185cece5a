//! FAST-9/16 segment-test corner detector with SAD response and 3x3
//! non-maximum suppression.

use crate::frame_io::Frame;

use super::{FeatureConfig, Keypoint};

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
pub const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Minimum contiguous arc length.
pub const ARC_LENGTH: usize = 9;

/// Longest contiguous (wrapping) run of `true` in `mask`, and the sum of
/// `diffs` over that run. Among equally long runs the larger sum wins.
fn best_arc(mask: &[bool; 16], diffs: &[u32; 16]) -> (usize, u32) {
    if mask.iter().all(|&m| m) {
        return (16, diffs.iter().sum());
    }
    let mut best = (0usize, 0u32);
    for start in 0..16 {
        // Only start at the beginning of a run.
        if !mask[start] || mask[(start + 15) % 16] {
            continue;
        }
        let (mut len, mut sum) = (0, 0);
        while len < 16 && mask[(start + len) % 16] {
            sum += diffs[(start + len) % 16];
            len += 1;
        }
        if (len, sum) > best {
            best = (len, sum);
        }
    }
    best
}

/// Segment-test response at `(x, y)`, or `None` when the pixel is not a corner.
///
/// The caller guarantees the radius-3 circle lies inside the frame.
pub fn corner_response(frame: &Frame, x: usize, y: usize, threshold: u8) -> Option<u32> {
    let center = frame.get(x, y) as i32;
    let t = threshold as i32;
    // Any 9-pixel arc covers at least two of the four compass points.
    let compass = [0, 4, 8, 12].map(|k| {
        let (dx, dy) = CIRCLE[k];
        frame.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i32
    });
    if compass.iter().filter(|&&p| p > center + t).count() < 2
        && compass.iter().filter(|&&p| p < center - t).count() < 2
    {
        return None;
    }
    let mut brighter = [false; 16];
    let mut darker = [false; 16];
    let mut diffs = [0u32; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let p = frame.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i32;
        brighter[k] = p > center + t;
        darker[k] = p < center - t;
        diffs[k] = (p - center).unsigned_abs();
    }
    [best_arc(&brighter, &diffs), best_arc(&darker, &diffs)]
        .into_iter()
        .filter(|&(len, _)| len >= ARC_LENGTH)
        .map(|(_, sum)| sum)
        .max()
}

/// Detects corners at least `patch_radius` pixels from every border.
///
/// Output is sorted by (response desc, y asc, x asc) and truncated to
/// `max_keypoints`. Orientation is left at 0.
pub fn detect_fast(frame: &Frame, config: &FeatureConfig) -> Vec<Keypoint> {
    let r = config.patch_radius.max(3);
    let (w, h) = (frame.width, frame.height);
    if w < 2 * r + 1 || h < 2 * r + 1 {
        return Vec::new();
    }

    let mut response = vec![0u32; w * h];
    for y in r..h - r {
        for x in r..w - r {
            if let Some(score) = corner_response(frame, x, y, config.fast_threshold) {
                response[y * w + x] = score;
            }
        }
    }

    let mut keypoints = Vec::new();
    for y in r..h - r {
        for x in r..w - r {
            let score = response[y * w + x];
            if score == 0 {
                continue;
            }
            // Plateaus survive: a corner is kept unless a neighbor is strictly stronger.
            let dominated = (y - 1..=y + 1)
                .flat_map(|ny| (x - 1..=x + 1).map(move |nx| (nx, ny)))
                .any(|(nx, ny)| response[ny * w + nx] > score);
            if !dominated {
                keypoints.push(Keypoint {
                    x,
                    y,
                    response: score,
                    angle: 0.0,
                });
            }
        }
    }
    keypoints.sort_by(|a, b| b.response.cmp(&a.response).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    keypoints.truncate(config.max_keypoints);
    keypoints
}
