//! Similarity-aware send buffering for streaming camera frames over an
//! unreliable link.
//!
//! A robot streams frames to a remote SLAM server. When the link cannot keep
//! up, the bounded send buffer must drop frames. [`buffer::PolicyKind::OrbBuf`]
//! drops the frame whose neighbors are most alike, so the received stream
//! keeps as much feature overlap between consecutive frames as possible. The
//! crate also ships the baselines, a trace-driven link simulator and the
//! evaluation studies.

pub mod buffer;
pub mod features;
pub mod frame_io;
pub mod metrics;
pub mod netsim;

pub use buffer::{BufferError, CapacitySpec, EnqueueOutcome, Policy, PolicyKind, Score, SendBuffer};
pub use features::{CachedFeatures, FeatureConfig, FeatureExtractor, FeatureSet, FeatureSource};
pub use frame_io::{Frame, FrameSequence, SizeModel, SyntheticParams};
pub use metrics::{build_report, ExperimentReport};
pub use netsim::{simulate, InterruptionSpec, LinkTrace, SimParams, SimResult};

/// Derives an independent seed for component `stream` from `root` (SplitMix64).
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
