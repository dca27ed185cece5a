mod common;

use std::io::Write;
use std::sync::Arc;

use common::{integrate_1ms, WindowSource};
use orbbuf_core::buffer::PolicyKind;
use orbbuf_core::features::FeatureSource;
use orbbuf_core::frame_io::{Frame, FrameSequence};
use orbbuf_core::netsim::{
    load_trace, simulate, sustaining_rate, synthetic_lossy_trace, InterruptionSpec, LinkTrace, LossyTraceParams,
    SimParams, TraceError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sequence(n: usize, fps: f64, size: impl Fn(usize) -> u64) -> FrameSequence {
    let frames = (0..n)
        .map(|i| {
            let mut f = Frame::new(i as u64, i as f64 * 1000.0 / fps, 1, 1, vec![0]);
            f.encoded_size = size(i);
            f
        })
        .collect();
    FrameSequence { frames, fps }
}

fn window() -> Arc<dyn FeatureSource> {
    Arc::new(WindowSource::new(6, 2000, 1))
}

#[test]
fn three_line_trace_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "0,1000\n100,0\n250,4000").unwrap();
    let t = load_trace(file.path()).unwrap();
    for (at, expected) in [
        (-1.0, 1000.0),
        (0.0, 1000.0),
        (99.5, 1000.0),
        (100.0, 0.0),
        (200.0, 0.0),
        (250.0, 4000.0),
        (1e6, 4000.0),
    ] {
        assert_eq!(t.bandwidth_at(at), expected, "t = {at}");
    }
    assert!(matches!(load_trace("/nonexistent/trace.csv"), Err(TraceError::Io(_))));
}

#[test]
fn completion_matches_fine_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let mut t = 0.0;
        let mut points = Vec::new();
        for k in 0..rng.random_range(1..8) {
            let rate = if k > 0 && rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(1..50) as f64 * 100.0
            };
            points.push((t, rate));
            t += rng.random_range(1..400) as f64;
        }
        points.push((t, 2500.0));
        let trace = LinkTrace::new(points).unwrap();
        let start = rng.random_range(0..600) as f64;
        let bytes = rng.random_range(1..3000);
        let exact = trace.transmit_finish(start, bytes).unwrap();
        let fine = integrate_1ms(&trace, start, bytes, 1e7).unwrap();
        assert!((exact - fine).abs() <= 1.0, "{exact} vs {fine}");
    }
}

#[test]
fn interruption_windows_commute() {
    let base = LinkTrace::new(vec![(0.0, 500.0), (300.0, 800.0), (900.0, 100.0)]).unwrap();
    let a = InterruptionSpec {
        at_frame: 2,
        latency_ms: 30.0,
        duration_frames: 3,
    };
    let b = InterruptionSpec {
        at_frame: 20,
        latency_ms: 0.0,
        duration_frames: 5,
    };
    let ab = base.apply_interruption(&a, 25.0).apply_interruption(&b, 25.0);
    let ba = base.apply_interruption(&b, 25.0).apply_interruption(&a, 25.0);
    for t in (-100..2000).map(|t| t as f64 * 0.5) {
        assert_eq!(ab.bandwidth_at(t), ba.bandwidth_at(t), "t = {t}");
    }
    assert_eq!(ab, ba);
}

#[test]
fn starvation_then_recovery_retains_ends() {
    // All 20 frames arrive during the outage; the link then opens wide.
    let seq = sequence(20, 25.0, |_| 100);
    let trace = LinkTrace::new(vec![(0.0, 0.0), (2000.0, 1e9)]).unwrap();
    let run = |kind| {
        simulate(&seq, &trace, &SimParams::new(kind, 4, 0), window())
            .unwrap()
            .received_ids()
    };
    assert_eq!(run(PolicyKind::DropOldest), vec![0, 16, 17, 18, 19]);
    assert_eq!(run(PolicyKind::DropYoungest), vec![0, 1, 2, 3, 19]);
}

#[test]
fn drop_oldest_never_drops_more_with_more_room() {
    let seq = sequence(400, 25.0, |i| 800 + (i as u64 * 37) % 900);
    let trace = synthetic_lossy_trace(&LossyTraceParams {
        duration_ms: 16_000.0,
        mean_rate: sustaining_rate(&seq, None) * 1.1,
        seed: 3,
        ..Default::default()
    });
    let mut last = usize::MAX;
    for capacity in 1..=30 {
        let r = simulate(
            &seq,
            &trace,
            &SimParams::new(PolicyKind::DropOldest, capacity, 0),
            window(),
        )
        .unwrap();
        assert!(r.dropped.len() <= last, "capacity {capacity}");
        last = r.dropped.len();
    }
}

#[test]
fn lossy_trace_reproduces_from_seed() {
    let p = LossyTraceParams {
        seed: 11,
        ..Default::default()
    };
    let a = synthetic_lossy_trace(&p);
    assert_eq!(a, synthetic_lossy_trace(&p));
    assert_ne!(a, synthetic_lossy_trace(&LossyTraceParams { seed: 12, ..p }));
    assert_eq!(LinkTrace::parse(a.to_csv().as_bytes()).unwrap(), a);
}

fn arbitrary_trace() -> impl Strategy<Value = LinkTrace> {
    prop::collection::vec((1u32..300, 0u32..4000), 1..8).prop_map(|segs| {
        let mut t = 0.0;
        let points = segs
            .into_iter()
            .map(|(len, rate)| {
                let p = (t, rate as f64);
                t += len as f64;
                p
            })
            .collect();
        LinkTrace::new(points).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_frame_is_accounted_for(
        trace in arbitrary_trace(),
        capacity in 1usize..6,
        kind in 0usize..4,
        seed in any::<u64>(),
        n in 1usize..80,
    ) {
        let seq = sequence(n, 25.0, |i| 50 + (i as u64 * 31) % 200);
        let params = SimParams::new(PolicyKind::ALL[kind], capacity, seed);
        let r = simulate(&seq, &trace, &params, window()).unwrap();
        let mut all: Vec<u64> = r.received_ids();
        all.extend(r.dropped_ids());
        all.extend(r.buffered_at_end.iter().copied());
        all.extend(r.in_flight_at_end);
        all.sort_unstable();
        prop_assert_eq!(all, (0..n as u64).collect::<Vec<_>>());
        let ids = r.received_ids();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(r.received.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!(r.max_updates_per_arrival <= 3);
        // A run that can still deliver leaves nothing behind.
        if r.in_flight_at_end.is_none() {
            prop_assert!(r.buffered_at_end.is_empty());
        }
        prop_assert_eq!(&r, &simulate(&seq, &trace, &params, window()).unwrap());
    }
}
