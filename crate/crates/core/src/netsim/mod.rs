//! Discrete-event simulation of producer, send buffer, link and receiver.
//!
//! Frames are generated at their `t_gen`. A single connection carries one
//! message at a time; when it finishes, the oldest buffered frame starts
//! immediately. Transfer time integrates the piecewise-constant link rate
//! until the frame's encoded size is delivered. Messages that are sent always
//! arrive, and a message caught by an outage stalls rather than aborts.
//!
//! When a completion and a generation share a timestamp, the generation is
//! processed first.

mod trace;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

pub use trace::{load_trace, synthetic_lossy_trace, InterruptionSpec, LinkTrace, LossyTraceParams, TraceError};

use crate::buffer::{BufferError, Policy, PolicyKind, SendBuffer, VictimSearch};
use crate::features::FeatureSource;
use crate::frame_io::{Frame, FrameSequence, SizeModel};

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub policy: PolicyKind,
    pub capacity: usize,
    /// Seeds the Random policy.
    pub seed: u64,
    /// Overrides the frames' own encoded sizes.
    pub size_model: Option<SizeModel>,
    pub victim_search: VictimSearch,
}

impl SimParams {
    pub fn new(policy: PolicyKind, capacity: usize, seed: u64) -> Self {
        Self {
            policy,
            capacity,
            seed,
            size_model: None,
            victim_search: VictimSearch::Indexed,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot simulate an empty sequence")]
    EmptySequence,
    #[error("frame {frame_id}: {source}")]
    Buffer {
        frame_id: u64,
        #[source]
        source: BufferError,
    },
}

/// Outcome of one simulation run.
///
/// Equality ignores `enqueue_times_ms`, which are wall-clock measurements.
#[derive(Clone, Debug, Default)]
pub struct SimResult {
    /// `(frame id, arrival ms)` in arrival order.
    pub received: Vec<(u64, f64)>,
    /// `(frame id, drop ms)` in drop order.
    pub dropped: Vec<(u64, f64)>,
    pub buffered_at_end: Vec<u64>,
    pub in_flight_at_end: Option<u64>,
    pub extractions_enqueue: u64,
    pub extractions_dequeue: u64,
    pub max_updates_per_arrival: u32,
    pub enqueue_times_ms: Vec<f64>,
}

impl PartialEq for SimResult {
    fn eq(&self, other: &Self) -> bool {
        self.received == other.received
            && self.dropped == other.dropped
            && self.buffered_at_end == other.buffered_at_end
            && self.in_flight_at_end == other.in_flight_at_end
            && self.extractions_enqueue == other.extractions_enqueue
            && self.extractions_dequeue == other.extractions_dequeue
            && self.max_updates_per_arrival == other.max_updates_per_arrival
    }
}

impl SimResult {
    pub fn extraction_count(&self) -> u64 {
        self.extractions_enqueue + self.extractions_dequeue
    }

    pub fn received_ids(&self) -> Vec<u64> {
        self.received.iter().map(|&(id, _)| id).collect()
    }

    pub fn dropped_ids(&self) -> Vec<u64> {
        self.dropped.iter().map(|&(id, _)| id).collect()
    }

    /// One row per event: `event,frame_id,time_ms`. Frames still buffered or
    /// in flight at the end have an empty time.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["event", "frame_id", "time_ms"])?;
        let mut events: Vec<(&str, u64, Option<f64>)> = Vec::new();
        events.extend(self.received.iter().map(|&(id, t)| ("received", id, Some(t))));
        events.extend(self.dropped.iter().map(|&(id, t)| ("dropped", id, Some(t))));
        events.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.1.cmp(&b.1)));
        events.extend(self.in_flight_at_end.map(|id| ("in_flight", id, None)));
        events.extend(self.buffered_at_end.iter().map(|&id| ("buffered", id, None)));
        for (event, id, t) in events {
            let time = t.map(|t| format!("{t:.3}")).unwrap_or_default();
            w.write_record([event, &id.to_string(), &time])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Clone, Copy)]
struct InFlight {
    id: u64,
    finish: Option<f64>,
}

/// Runs the pipeline over `sequence` and drains the buffer afterwards.
pub fn simulate(
    sequence: &FrameSequence,
    trace: &LinkTrace,
    params: &SimParams,
    source: Arc<dyn FeatureSource>,
) -> Result<SimResult, SimError> {
    if sequence.is_empty() {
        return Err(SimError::EmptySequence);
    }
    let first_id = sequence.frames[0].id;
    let mut buffer =
        SendBuffer::for_policy(params.capacity, params.policy, source).map_err(|source| SimError::Buffer {
            frame_id: first_id,
            source,
        })?;
    buffer.set_victim_search(params.victim_search);
    let mut policy = Policy::new(params.policy, params.seed);
    let size_of = |f: &Frame| params.size_model.map_or(f.encoded_size, |m| m.encoded_size(f));

    let mut result = SimResult::default();
    let mut in_flight: Option<InFlight> = None;

    let start = |frame: Frame, at: f64| InFlight {
        id: frame.id,
        finish: trace.transmit_finish(at, size_of(&frame)),
    };

    for frame in &sequence.frames {
        let now = frame.t_gen;
        while let Some(InFlight { id, finish: Some(done) }) = in_flight {
            if done >= now {
                break;
            }
            result.received.push((id, done));
            in_flight = buffer.dequeue_for_send().map(|f| start(f, done));
        }

        let clock = Instant::now();
        let outcome = buffer
            .enqueue(frame.clone(), &mut policy)
            .map_err(|source| SimError::Buffer {
                frame_id: frame.id,
                source,
            })?;
        result.enqueue_times_ms.push(clock.elapsed().as_secs_f64() * 1000.0);
        if let Some(victim) = outcome.dropped {
            result.dropped.push((victim, now));
        }
        if in_flight.is_none() {
            in_flight = buffer.dequeue_for_send().map(|f| start(f, now));
        }
    }

    while let Some(InFlight { id, finish: Some(done) }) = in_flight {
        result.received.push((id, done));
        in_flight = buffer.dequeue_for_send().map(|f| start(f, done));
    }

    result.in_flight_at_end = in_flight.map(|f| f.id);
    result.buffered_at_end = buffer.ids();
    let stats = buffer.stats();
    result.extractions_enqueue = stats.extractions_enqueue;
    result.extractions_dequeue = stats.extractions_dequeue;
    result.max_updates_per_arrival = stats.max_updates_per_arrival;
    Ok(result)
}

/// Link rate in bytes per second that exactly keeps up with generation.
pub fn sustaining_rate(sequence: &FrameSequence, size_model: Option<SizeModel>) -> f64 {
    if sequence.is_empty() {
        return 0.0;
    }
    let total: u64 = sequence
        .frames
        .iter()
        .map(|f| size_model.map_or(f.encoded_size, |m| m.encoded_size(f)))
        .sum();
    total as f64 / sequence.len() as f64 * sequence.fps
}

/// Probability that a message of `n_packets` loses at least one packet.
pub fn message_loss_probability(p_packet: f64, n_packets: u32) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_packet));
    1.0 - (1.0 - p_packet).powi(n_packets as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, FeatureExtractor};

    fn blank_sequence(n: usize, fps: f64, size: u64) -> FrameSequence {
        let frames = (0..n)
            .map(|i| {
                let mut f = Frame::new(i as u64, i as f64 * 1000.0 / fps, 4, 4, vec![0; 16]);
                f.encoded_size = size;
                f
            })
            .collect();
        FrameSequence { frames, fps }
    }

    fn source() -> Arc<dyn FeatureSource> {
        Arc::new(FeatureExtractor::new(FeatureConfig::default()))
    }

    #[test]
    fn loss_probability() {
        assert!((message_loss_probability(0.01, 100) - 0.63397).abs() < 1e-4);
        assert_eq!(message_loss_probability(0.0, 50), 0.0);
        assert_eq!(message_loss_probability(1.0, 1), 1.0);
    }

    #[test]
    fn fast_link_delivers_everything() {
        let seq = blank_sequence(20, 25.0, 1000);
        let r = simulate(
            &seq,
            &LinkTrace::constant(1e9),
            &SimParams::new(PolicyKind::OrbBuf, 3, 0),
            source(),
        )
        .unwrap();
        assert_eq!(r.received_ids(), (0..20).collect::<Vec<_>>());
        assert!(r.dropped.is_empty());
        assert_eq!(r.extraction_count(), 0);
    }

    #[test]
    fn starved_link_keeps_newest() {
        let seq = blank_sequence(10, 25.0, 1000);
        let r = simulate(
            &seq,
            &LinkTrace::constant(0.0),
            &SimParams::new(PolicyKind::DropOldest, 3, 0),
            source(),
        )
        .unwrap();
        assert!(r.received.is_empty());
        assert_eq!(r.in_flight_at_end, Some(0));
        assert_eq!(r.buffered_at_end, vec![7, 8, 9]);
        assert_eq!(r.dropped_ids(), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn exact_rate_reaches_steady_state() {
        let seq = blank_sequence(30, 25.0, 4000);
        let trace = LinkTrace::constant(sustaining_rate(&seq, None));
        let r = simulate(&seq, &trace, &SimParams::new(PolicyKind::DropOldest, 1, 0), source()).unwrap();
        assert!(r.dropped.is_empty());
        for (i, &(id, t)) in r.received.iter().enumerate() {
            assert_eq!(id, i as u64);
            assert_eq!(t, (i + 1) as f64 * 40.0);
        }
    }

    #[test]
    fn csv_lists_every_frame_once() {
        let seq = blank_sequence(10, 25.0, 1000);
        let trace = LinkTrace::new(vec![(0.0, 10_000.0), (100.0, 0.0)]).unwrap();
        let r = simulate(&seq, &trace, &SimParams::new(PolicyKind::DropYoungest, 2, 0), source()).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("event,frame_id,time_ms\nreceived,0,100.000\n"));
    }
}
