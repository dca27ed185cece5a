#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use orbbuf_core::features::{match_count, Descriptor, FeatureSet, FeatureSource};
use orbbuf_core::frame_io::Frame;
use orbbuf_core::netsim::LinkTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frame `i` owns descriptors `i..i + width` of a pool of random words, so
/// `similarity(i, j) == max(0, width - |i - j|)` exactly.
pub struct WindowSource {
    pool: Vec<Descriptor>,
    pub width: usize,
}

impl WindowSource {
    pub fn new(width: usize, max_id: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = (0..max_id + width + 1)
            .map(|_| Descriptor([rng.random(), rng.random(), rng.random(), rng.random()]))
            .collect();
        Self { pool, width }
    }

    pub fn expected(&self, a: u64, b: u64) -> u32 {
        self.width.saturating_sub(a.abs_diff(b) as usize) as u32
    }
}

impl FeatureSource for WindowSource {
    fn extract(&self, frame: &Frame) -> Arc<FeatureSet> {
        let start = frame.id as usize;
        Arc::new(FeatureSet {
            frame_id: frame.id,
            keypoints: Vec::new(),
            descriptors: self.pool[start..start + self.width].to_vec(),
        })
    }

    fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32 {
        match_count(&a.descriptors, &b.descriptors, 64)
    }
}

/// Similarity read from an explicit symmetric table keyed by frame id.
pub struct MatrixSource(pub HashMap<(u64, u64), u32>);

impl MatrixSource {
    pub fn new(entries: &[(u64, u64, u32)]) -> Self {
        let mut m = HashMap::new();
        for &(a, b, s) in entries {
            m.insert((a, b), s);
            m.insert((b, a), s);
        }
        Self(m)
    }
}

impl FeatureSource for MatrixSource {
    fn extract(&self, frame: &Frame) -> Arc<FeatureSet> {
        Arc::new(FeatureSet {
            frame_id: frame.id,
            ..Default::default()
        })
    }

    fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32 {
        self.0.get(&(a.frame_id, b.frame_id)).copied().unwrap_or(0)
    }
}

pub fn tiny_frame(id: u64) -> Frame {
    Frame::new(id, id as f64 * 40.0, 1, 1, vec![0])
}

/// Best achievable minimum adjacent similarity for each single eviction.
///
/// `chain` is `[last_sent?] + buffered ids + [incoming]`; `candidates` are
/// positions in `chain` that may be removed. Returns `(position, value)` pairs.
pub fn eviction_values(chain: &[u64], candidates: &[usize], sim: impl Fn(u64, u64) -> u32) -> Vec<(usize, u32)> {
    candidates
        .iter()
        .map(|&c| {
            let kept: Vec<u64> = chain
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != c)
                .map(|(_, &id)| id)
                .collect();
            let min = kept.windows(2).map(|w| sim(w[0], w[1])).min().unwrap_or(u32::MAX);
            (c, min)
        })
        .collect()
}

/// Advances in 1 ms steps, crediting each step with the rate at its start.
/// Sums rates rather than per-step bytes so integral rates accumulate exactly.
pub fn integrate_1ms(trace: &LinkTrace, start: f64, bytes: u64, horizon: f64) -> Option<f64> {
    let target = bytes as f64 * 1000.0;
    let mut sent = 0.0;
    let mut t = start;
    while t < horizon {
        sent += trace.bandwidth_at(t);
        t += 1.0;
        if sent >= target {
            return Some(t);
        }
    }
    None
}
