use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::features::FeatureSource;
use crate::frame_io::{Frame, FrameSequence};
use crate::netsim::SimResult;

/// Evaluation of one simulation run against its source sequence.
///
/// Equality ignores the wall-clock enqueue timings.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub policy: String,
    pub generated: usize,
    pub received_ids: Vec<u64>,
    pub dropped_count: usize,
    /// Similarity of each received frame to the next received frame.
    pub adjacent_similarities: Vec<u32>,
    /// `None` when fewer than two frames were received.
    pub min_similarity: Option<u32>,
    /// Sum of `ln(sim)` over nonzero adjacent similarities.
    pub log_product_similarity: f64,
    pub zero_similarity_count: usize,
    pub max_loss_run: u64,
    /// Id gap between consecutive received frames, with occurrence counts.
    pub distance_histogram: BTreeMap<u64, u64>,
    pub extraction_count: u64,
    pub mean_enqueue_ms: f64,
    pub max_enqueue_ms: f64,
}

impl PartialEq for ExperimentReport {
    fn eq(&self, other: &Self) -> bool {
        self.policy == other.policy
            && self.generated == other.generated
            && self.received_ids == other.received_ids
            && self.dropped_count == other.dropped_count
            && self.adjacent_similarities == other.adjacent_similarities
            && self.min_similarity == other.min_similarity
            && self.log_product_similarity == other.log_product_similarity
            && self.zero_similarity_count == other.zero_similarity_count
            && self.max_loss_run == other.max_loss_run
            && self.distance_histogram == other.distance_histogram
            && self.extraction_count == other.extraction_count
    }
}

/// Sum of `ln(max(sim, 1))`, so zero similarities contribute nothing.
pub fn log_product(similarities: &[u32]) -> f64 {
    similarities.iter().map(|&s| (s.max(1) as f64).ln()).sum()
}

/// Longest run of ids in `lo..=hi` missing from the sorted `received`.
pub fn max_loss_run(received: &[u64], lo: u64, hi: u64) -> u64 {
    if received.is_empty() {
        return if hi >= lo { hi - lo + 1 } else { 0 };
    }
    let leading = received[0].saturating_sub(lo);
    let trailing = hi.saturating_sub(*received.last().unwrap());
    let interior = received.windows(2).map(|w| w[1] - w[0] - 1).max().unwrap_or(0);
    leading.max(trailing).max(interior)
}

pub fn distance_histogram(received: &[u64]) -> BTreeMap<u64, u64> {
    let mut hist = BTreeMap::new();
    for w in received.windows(2) {
        *hist.entry(w[1] - w[0]).or_insert(0) += 1;
    }
    hist
}

fn frame_by_id(sequence: &FrameSequence, id: u64) -> Option<&Frame> {
    sequence
        .frames
        .binary_search_by_key(&id, |f| f.id)
        .ok()
        .map(|i| &sequence.frames[i])
}

/// Similarities between consecutive frames of `ids`, in order.
///
/// Panics if an id is not in `sequence`.
pub fn adjacent_similarities(sequence: &FrameSequence, ids: &[u64], source: &dyn FeatureSource) -> Vec<u32> {
    let features: Vec<_> = ids
        .iter()
        .map(|&id| source.extract(frame_by_id(sequence, id).expect("received id belongs to the sequence")))
        .collect();
    features.windows(2).map(|w| source.similarity(&w[0], &w[1])).collect()
}

pub fn build_report(
    policy: &str,
    result: &SimResult,
    sequence: &FrameSequence,
    source: &dyn FeatureSource,
) -> ExperimentReport {
    let received_ids = result.received_ids();
    let adjacent = adjacent_similarities(sequence, &received_ids, source);
    let (lo, hi) = match (sequence.frames.first(), sequence.frames.last()) {
        (Some(a), Some(b)) => (a.id, b.id),
        _ => (0, 0),
    };
    let times = &result.enqueue_times_ms;
    ExperimentReport {
        policy: policy.to_string(),
        generated: sequence.len(),
        dropped_count: result.dropped.len(),
        min_similarity: adjacent.iter().copied().min(),
        log_product_similarity: log_product(&adjacent),
        zero_similarity_count: adjacent.iter().filter(|&&s| s == 0).count(),
        max_loss_run: if sequence.is_empty() {
            0
        } else {
            max_loss_run(&received_ids, lo, hi)
        },
        distance_histogram: distance_histogram(&received_ids),
        extraction_count: result.extraction_count(),
        mean_enqueue_ms: if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        },
        max_enqueue_ms: times.iter().copied().fold(0.0, f64::max),
        adjacent_similarities: adjacent,
        received_ids,
    }
}

impl ExperimentReport {
    /// `metric,value` rows, excluding the wall-clock timings.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        let min = self.min_similarity.map(|m| m.to_string()).unwrap_or_default();
        let rows = [
            ("policy", self.policy.clone()),
            ("generated", self.generated.to_string()),
            ("received", self.received_ids.len().to_string()),
            ("dropped", self.dropped_count.to_string()),
            ("min_similarity", min),
            ("log_product_similarity", format!("{:.6}", self.log_product_similarity)),
            ("zero_similarity_count", self.zero_similarity_count.to_string()),
            ("max_loss_run", self.max_loss_run.to_string()),
            ("extraction_count", self.extraction_count.to_string()),
        ];
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        for (gap, count) in &self.distance_histogram {
            w.write_record([format!("gap_{gap}"), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `from_id,to_id,similarity` rows for the received chain.
    pub fn write_profile_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["from_id", "to_id", "similarity"])?;
        for (pair, sim) in self.received_ids.windows(2).zip(&self.adjacent_similarities) {
            w.write_record([pair[0].to_string(), pair[1].to_string(), sim.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `metric,value` rows for the enqueue timings.
    pub fn write_timing_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        w.write_record(["mean_enqueue_ms", &format!("{:.6}", self.mean_enqueue_ms)])?;
        w.write_record(["max_enqueue_ms", &format!("{:.6}", self.max_enqueue_ms)])?;
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
