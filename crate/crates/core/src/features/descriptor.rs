//! Intensity-centroid orientation and steered 256-bit binary descriptors.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::frame_io::Frame;

use super::Keypoint;

pub const DESCRIPTOR_BITS: usize = 256;

/// A 256-bit binary descriptor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn popcount(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bit(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }

    fn set(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }
}

/// Orientation of the intensity centroid over a disc of `radius` pixels:
/// `atan2(m01, m10)` with `mpq = sum x^p y^q I(x, y)` relative to the keypoint.
///
/// Returns a value in (-pi, pi]; a patch with zero first moments maps to 0.
pub fn compute_orientation(frame: &Frame, keypoint: &Keypoint, radius: usize) -> f64 {
    let r = radius as i64;
    let (cx, cy) = (keypoint.x as i64, keypoint.y as i64);
    let (mut m10, mut m01) = (0i64, 0i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let v = frame.get((cx + dx) as usize, (cy + dy) as usize) as i64;
            m10 += dx * v;
            m01 += dy * v;
        }
    }
    if m10 == 0 && m01 == 0 {
        return 0.0;
    }
    let angle = (m01 as f64).atan2(m10 as f64);
    if angle <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        angle
    }
}

/// The 256 point-pair tests, sampled once from a seeded isotropic Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct BriefPattern {
    pub pairs: Vec<((i8, i8), (i8, i8))>,
    pub seed: u64,
}

impl BriefPattern {
    /// Samples test points with coordinates clipped to `+-floor((r - 0.5) / sqrt 2)`
    /// so every rotated, rounded point stays within `patch_radius` of the keypoint.
    pub fn new(seed: u64, patch_radius: usize) -> Self {
        let clip = ((patch_radius as f64 - 0.5) / std::f64::consts::SQRT_2)
            .floor()
            .max(1.0);
        // Patch side S = 2 * clip + 1 and sigma = S / 5.
        let sigma = (2.0 * clip + 1.0) / 5.0;
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coord = || {
            let v: f64 = normal.sample(&mut rng);
            v.round().clamp(-clip, clip) as i8
        };
        let pairs = (0..DESCRIPTOR_BITS)
            .map(|_| ((coord(), coord()), (coord(), coord())))
            .collect();
        Self { pairs, seed }
    }

    /// One line per test: `k px py qx qy`.
    pub fn to_text(&self) -> String {
        let mut out = format!("# brief pattern seed={} tests={}\n", self.seed, self.pairs.len());
        for (k, ((px, py), (qx, qy))) in self.pairs.iter().enumerate() {
            let _ = writeln!(out, "{k} {px} {py} {qx} {qy}");
        }
        out
    }
}

/// Rounds half away from zero.
#[inline]
fn round(v: f64) -> i64 {
    (v + 0.5f64.copysign(v)) as i64
}

#[inline]
fn steer(p: (i8, i8), cos: f64, sin: f64) -> (i64, i64) {
    let (x, y) = (p.0 as f64, p.1 as f64);
    (round(x * cos - y * sin), round(x * sin + y * cos))
}

/// Steered BRIEF: bit k is set iff `I(p_k) < I(q_k)` after rotating the
/// pattern by the keypoint angle.
pub fn compute_descriptor(frame: &Frame, keypoint: &Keypoint, pattern: &BriefPattern) -> Descriptor {
    let (sin, cos) = keypoint.angle.sin_cos();
    let w = frame.width as i64;
    let center = (keypoint.y * frame.width + keypoint.x) as i64;
    let pixels = &frame.pixels[..];
    let sample = |p: (i8, i8)| {
        let (dx, dy) = steer(p, cos, sin);
        pixels[(center + dy * w + dx) as usize]
    };
    let mut d = Descriptor::default();
    for (k, &(p, q)) in pattern.pairs.iter().enumerate() {
        if sample(p) < sample(q) {
            d.set(k);
        }
    }
    d
}
