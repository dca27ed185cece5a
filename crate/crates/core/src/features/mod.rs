//! ORB-style binary features and the frame similarity metric.
//!
//! Similarity between two frames is the number of mutually nearest descriptor
//! pairs under Hamming distance, subject to an absolute distance cutoff. The
//! metric is exactly symmetric, which the buffer's score bookkeeping relies on.

mod descriptor;
mod fast;
mod matching;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub use descriptor::{compute_descriptor, compute_orientation, BriefPattern, Descriptor, DESCRIPTOR_BITS};
pub use fast::{corner_response, detect_fast, ARC_LENGTH, CIRCLE};
pub use matching::{match_count, mutual_matches};

use crate::frame_io::Frame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    /// Sum of absolute differences over the qualifying circle arc.
    pub response: u32,
    /// Orientation in radians, in (-pi, pi].
    pub angle: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub frame_id: u64,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub fast_threshold: u8,
    pub max_keypoints: usize,
    /// Minimum keypoint distance from every border; bounds the steered pattern.
    pub patch_radius: usize,
    pub match_max_hamming: u32,
    pub pattern_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            max_keypoints: 500,
            patch_radius: 18,
            match_max_hamming: 64,
            pattern_seed: DEFAULT_PATTERN_SEED,
        }
    }
}

/// "ORB SEED" in ASCII.
pub const DEFAULT_PATTERN_SEED: u64 = 0x4f52_4220_5345_4544;

impl FeatureConfig {
    /// Radius of the disc used for the intensity centroid.
    pub fn moment_radius(&self) -> usize {
        self.patch_radius.saturating_sub(3).max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.fast_threshold == 0 {
            return Err("fast_threshold must be positive".into());
        }
        if self.match_max_hamming > DESCRIPTOR_BITS as u32 {
            return Err("match_max_hamming must not exceed 256".into());
        }
        if self.patch_radius < 3 {
            return Err("patch_radius must be at least 3".into());
        }
        Ok(())
    }
}

/// Anything that can turn a frame into features and compare two feature sets.
///
/// The send buffer is written against this trait so tests can substitute
/// feature sets with a known similarity structure.
pub trait FeatureSource: Send + Sync {
    fn extract(&self, frame: &Frame) -> Arc<FeatureSet>;
    fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32;
}

/// Detector + descriptor with a fixed test pattern.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    pattern: BriefPattern,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Self {
        let pattern = BriefPattern::new(config.pattern_seed, config.patch_radius);
        Self { config, pattern }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn pattern(&self) -> &BriefPattern {
        &self.pattern
    }

    pub fn extract(&self, frame: &Frame) -> FeatureSet {
        let radius = self.config.moment_radius();
        let mut keypoints = detect_fast(frame, &self.config);
        let descriptors = keypoints
            .iter_mut()
            .map(|kp| {
                kp.angle = compute_orientation(frame, kp, radius);
                compute_descriptor(frame, kp, &self.pattern)
            })
            .collect();
        FeatureSet {
            frame_id: frame.id,
            keypoints,
            descriptors,
        }
    }

    pub fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32 {
        similarity(a, b, &self.config)
    }
}

impl FeatureSource for FeatureExtractor {
    fn extract(&self, frame: &Frame) -> Arc<FeatureSet> {
        Arc::new(FeatureExtractor::extract(self, frame))
    }

    fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32 {
        FeatureExtractor::similarity(self, a, b)
    }
}

/// One-shot extraction; builds the pattern from `config.pattern_seed`.
pub fn extract(frame: &Frame, config: &FeatureConfig) -> FeatureSet {
    FeatureExtractor::new(config.clone()).extract(frame)
}

/// Number of mutual nearest-neighbor matches within `match_max_hamming`.
pub fn similarity(a: &FeatureSet, b: &FeatureSet, config: &FeatureConfig) -> u32 {
    match_count(&a.descriptors, &b.descriptors, config.match_max_hamming)
}

/// Memoizes another source by frame id.
///
/// Frame ids must identify frame content for the lifetime of the cache, which
/// holds for a single sequence. Used to share extraction work between
/// simulation runs and reports over the same sequence.
pub struct CachedFeatures<S> {
    inner: S,
    cache: Mutex<HashMap<u64, Arc<FeatureSet>>>,
}

impl<S: FeatureSource> CachedFeatures<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: FeatureSource> FeatureSource for CachedFeatures<S> {
    fn extract(&self, frame: &Frame) -> Arc<FeatureSet> {
        if let Some(hit) = self.cache.lock().unwrap().get(&frame.id) {
            return hit.clone();
        }
        let features = self.inner.extract(frame);
        self.cache.lock().unwrap().entry(frame.id).or_insert(features).clone()
    }

    fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32 {
        self.inner.similarity(a, b)
    }
}
