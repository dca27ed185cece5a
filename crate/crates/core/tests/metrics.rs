mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::WindowSource;
use orbbuf_core::buffer::PolicyKind;
use orbbuf_core::features::{FeatureConfig, FeatureExtractor, FeatureSource};
use orbbuf_core::frame_io::{gen_synthetic, Frame, FrameSequence, SizeModel, SyntheticParams};
use orbbuf_core::metrics::{
    buffer_size_sweep, build_report, distance_histogram, distance_similarity_study, emit_report_plots, log_product,
    loss_tolerance_study, max_loss_run, median_min_similarity, write_sweep_csv, Tolerance, ToleranceThreshold,
};
use orbbuf_core::netsim::{
    simulate, sustaining_rate, synthetic_lossy_trace, InterruptionSpec, LinkTrace, LossyTraceParams, SimParams,
};
use orbbuf_core::CachedFeatures;
use proptest::prelude::*;

fn extractor() -> Arc<dyn FeatureSource> {
    Arc::new(CachedFeatures::new(FeatureExtractor::new(FeatureConfig::default())))
}

fn identical_frames(n: usize) -> FrameSequence {
    let base = gen_synthetic(&SyntheticParams {
        n_frames: 1,
        ..Default::default()
    })
    .unwrap()
    .frames
    .remove(0);
    let frames = (0..n)
        .map(|i| Frame::new(i as u64, i as f64 * 40.0, base.width, base.height, base.pixels.to_vec()))
        .collect();
    FrameSequence { frames, fps: 25.0 }
}

#[test]
fn gap_and_histogram_examples() {
    assert_eq!(max_loss_run(&[0, 1, 5, 6, 9], 0, 9), 3);
    assert_eq!(max_loss_run(&[4, 5], 0, 9), 4);
    assert_eq!(max_loss_run(&[0, 2], 0, 9), 7);
    assert_eq!(max_loss_run(&[], 0, 9), 10);
    assert_eq!(
        distance_histogram(&[0, 1, 2, 5, 6, 10]),
        BTreeMap::from([(1, 3), (3, 1), (4, 1)])
    );
    assert_eq!(log_product(&[0, 1, 1]), 0.0);
    assert!((log_product(&[2, 3]) - 6f64.ln()).abs() < 1e-12);
}

#[test]
fn identical_frames_report() {
    let seq = identical_frames(6);
    let src = extractor();
    let result = simulate(
        &seq,
        &LinkTrace::constant(1e9),
        &SimParams::new(PolicyKind::OrbBuf, 3, 0),
        src.clone(),
    )
    .unwrap();
    let report = build_report("orbbuf", &result, &seq, src.as_ref());
    let s = src.similarity(&src.extract(&seq.frames[0]), &src.extract(&seq.frames[0]));
    assert!(s > 0);
    assert_eq!(report.received_ids, (0..6).collect::<Vec<_>>());
    assert_eq!(report.adjacent_similarities, vec![s; 5]);
    assert_eq!(report.min_similarity, Some(s));
    assert!((report.log_product_similarity - 5.0 * (s as f64).ln()).abs() < 1e-9);
    assert_eq!(report.max_loss_run, 0);
    assert_eq!(report.zero_similarity_count, 0);
    assert_eq!(report.extraction_count, 0);

    let rows = distance_similarity_study(&seq, 0, 2, src.as_ref()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.similarity == s));
    assert_eq!(rows.iter().map(|r| r.distance).collect::<Vec<_>>(), vec![1, 1, 2]);
    assert!(distance_similarity_study(&seq, 0, 1, src.as_ref()).is_err());
}

#[test]
fn loss_tolerance_of_identical_frames() {
    let seq = identical_frames(10);
    let rows = loss_tolerance_study(&seq, 4, ToleranceThreshold::Absolute(0.0), extractor().as_ref());
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.tolerance == Tolerance::Tolerant));
    let rows = loss_tolerance_study(&seq, 4, ToleranceThreshold::Absolute(1e9), extractor().as_ref());
    assert!(rows.iter().all(|r| r.tolerance == Tolerance::BreaksAt(1)));
}

#[test]
fn loss_tolerance_profile_fixture() {
    let seq = gen_synthetic(&SyntheticParams {
        width: 80,
        n_frames: 40,
        shift_px_per_frame: 4,
        noise_sigma: 8.0,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let rows = loss_tolerance_study(&seq, 12, ToleranceThreshold::default(), extractor().as_ref());
    let profile: Vec<usize> = rows
        .iter()
        .map(|r| match r.tolerance {
            Tolerance::BreaksAt(k) => k,
            Tolerance::Tolerant => 0,
        })
        .collect();
    assert_eq!(
        profile,
        [6, 6, 5, 10, 9, 8, 7, 8, 7, 8, 8, 7, 8, 7, 7, 8, 7, 5, 9, 8, 7, 7, 6, 5, 5, 8, 7]
    );
}

#[test]
fn standard_scenario_report_fixture() {
    let seq = gen_synthetic(&SyntheticParams::default())
        .unwrap()
        .with_size_model(SizeModel::QUALITY_80);
    let trace = LinkTrace::constant(sustaining_rate(&seq, None) * 1.05).apply_interruption(
        &InterruptionSpec {
            at_frame: 500,
            latency_ms: 1000.0,
            duration_frames: 50,
        },
        seq.fps,
    );
    let src = extractor();
    // (policy, min, log product, max loss run, extractions, histogram)
    type Row = (PolicyKind, u32, f64, u64, u64, &'static [(u64, u64)]);
    let expected: [Row; 4] = [
        (PolicyKind::DropOldest, 59, 4361.0304, 50, 0, &[(1, 948), (51, 1)]),
        (PolicyKind::DropYoungest, 46, 4362.4970, 50, 0, &[(1, 948), (51, 1)]),
        (
            PolicyKind::Random,
            83,
            4361.2176,
            7,
            0,
            &[(1, 935), (2, 2), (3, 3), (4, 2), (5, 3), (6, 2), (8, 2)],
        ),
        (
            PolicyKind::OrbBuf,
            89,
            4361.2556,
            11,
            500,
            &[(1, 932), (2, 3), (3, 7), (4, 3), (5, 2), (6, 1), (12, 1)],
        ),
    ];
    for (kind, min, logp, run, ext, hist) in expected {
        let result = simulate(&seq, &trace, &SimParams::new(kind, 25, 0), src.clone()).unwrap();
        let r = build_report(kind.name(), &result, &seq, src.as_ref());
        assert_eq!(r.received_ids.len(), 950, "{kind}");
        assert_eq!(r.dropped_count, 50, "{kind}");
        assert_eq!(r.min_similarity, Some(min), "{kind}");
        assert!(
            (r.log_product_similarity - logp).abs() < 1e-3,
            "{kind}: {}",
            r.log_product_similarity
        );
        assert_eq!(r.zero_similarity_count, 0, "{kind}");
        assert_eq!(r.max_loss_run, run, "{kind}");
        assert_eq!(r.extraction_count, ext, "{kind}");
        assert_eq!(
            r.distance_histogram,
            hist.iter().copied().collect::<BTreeMap<_, _>>(),
            "{kind}"
        );
    }
}

fn sweep_fixture() -> (FrameSequence, LinkTrace) {
    let seq = gen_synthetic(&SyntheticParams {
        n_frames: 400,
        seed: 5,
        ..Default::default()
    })
    .unwrap()
    .with_size_model(SizeModel::QUALITY_80);
    let trace = synthetic_lossy_trace(&LossyTraceParams {
        duration_ms: 16_000.0,
        mean_rate: sustaining_rate(&seq, None) * 1.1,
        outage_probability: 0.25,
        seed: 5,
        ..Default::default()
    });
    (seq, trace)
}

#[test]
fn sweep_medians_fixture() {
    let (seq, trace) = sweep_fixture();
    let caps = [5, 10, 15, 20, 25];
    let seeds: Vec<u64> = (0..10).collect();
    let base = SimParams::new(PolicyKind::OrbBuf, 1, 0);
    let rows = buffer_size_sweep(&seq, &trace, &PolicyKind::ALL, &caps, &seeds, &base, extractor()).unwrap();
    assert_eq!(rows.len(), 4 * caps.len() * seeds.len());
    let medians = |kind| caps.map(|c| median_min_similarity(&rows, kind, c).unwrap());
    assert_eq!(medians(PolicyKind::DropOldest), [89.0, 102.0, 102.0, 104.0, 104.0]);
    assert_eq!(medians(PolicyKind::Random), [95.5, 102.0, 102.0, 102.0, 103.5]);
    assert_eq!(medians(PolicyKind::OrbBuf), [104.0; 5]);

    let random5: Vec<_> = rows
        .iter()
        .filter(|r| r.policy == PolicyKind::Random && r.capacity == 5)
        .map(|r| (r.min_similarity.unwrap(), r.dropped, r.max_loss_run))
        .collect();
    assert_eq!(
        random5,
        [
            (95, 39, 7),
            (95, 39, 7),
            (98, 39, 4),
            (95, 39, 6),
            (98, 39, 4),
            (92, 39, 6),
            (96, 39, 5),
            (95, 39, 6),
            (101, 39, 4),
            (101, 39, 4)
        ]
    );

    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), rows.len() + 1);
}

#[test]
fn sweep_row_matches_direct_run() {
    let (seq, trace) = sweep_fixture();
    let src = extractor();
    let base = SimParams::new(PolicyKind::OrbBuf, 1, 0);
    for (kind, cap) in [
        (PolicyKind::DropOldest, 5),
        (PolicyKind::DropOldest, 40),
        (PolicyKind::OrbBuf, 7),
    ] {
        let rows = buffer_size_sweep(&seq, &trace, &[kind], &[cap], &[3], &base, src.clone()).unwrap();
        let direct = simulate(&seq, &trace, &SimParams::new(kind, cap, 3), src.clone()).unwrap();
        let report = build_report(kind.name(), &direct, &seq, src.as_ref());
        assert_eq!(rows[0].received, report.received_ids.len());
        assert_eq!(rows[0].min_similarity, report.min_similarity);
        assert_eq!(rows[0].max_loss_run, report.max_loss_run);
    }
    let min_at = |cap| {
        let rows = buffer_size_sweep(
            &seq,
            &trace,
            &[PolicyKind::DropOldest],
            &[cap],
            &[0],
            &base,
            src.clone(),
        )
        .unwrap();
        rows[0].min_similarity.unwrap()
    };
    assert_eq!((min_at(5), min_at(40)), (89, 104));
    assert!(buffer_size_sweep(&seq, &trace, &[], &[5], &[0], &base, src.clone()).is_err());
}

#[test]
fn plots_are_deterministic() {
    let seq = gen_synthetic(&SyntheticParams {
        n_frames: 60,
        ..Default::default()
    })
    .unwrap();
    let src: Arc<dyn FeatureSource> = Arc::new(WindowSource::new(5, 100, 0));
    let trace = LinkTrace::new(vec![(0.0, 1e9), (400.0, 0.0), (1200.0, 1e9)]).unwrap();
    let result = simulate(&seq, &trace, &SimParams::new(PolicyKind::OrbBuf, 8, 0), src.clone()).unwrap();
    let report = build_report("orbbuf", &result, &seq, src.as_ref());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = emit_report_plots(&report, a.path(), "run").unwrap();
    let pb = emit_report_plots(&report, b.path(), "run").unwrap();
    assert_eq!(pa.len(), 2);
    for (x, y) in pa.iter().zip(&pb) {
        let (sx, sy) = (std::fs::read_to_string(x).unwrap(), std::fs::read_to_string(y).unwrap());
        assert!(sx.starts_with("<svg"));
        assert_eq!(sx, sy);
    }
}

proptest! {
    #[test]
    fn log_product_ignores_order(mut v in prop::collection::vec(0u32..500, 0..40), seed in any::<u64>()) {
        let before = log_product(&v);
        let n = v.len().max(1);
        v.rotate_left(seed as usize % n);
        v.reverse();
        prop_assert!((log_product(&v) - before).abs() < 1e-9);
    }

    #[test]
    fn loss_run_bounds(mut ids in prop::collection::btree_set(0u64..200, 1..50)) {
        ids.insert(0);
        ids.insert(199);
        let v: Vec<u64> = ids.into_iter().collect();
        let run = max_loss_run(&v, 0, 199);
        let hist = distance_histogram(&v);
        prop_assert_eq!(run + 1, *hist.keys().last().unwrap_or(&1));
        prop_assert_eq!(hist.values().sum::<u64>() as usize, v.len() - 1);
    }
}
