use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use orbbuf_core::features::FeatureSource;
use orbbuf_core::frame_io::{self, gen_synthetic, write_pgm, FrameSequence, SequenceError};
use orbbuf_core::metrics::svg::{line_chart, save_svg, scatter_chart, Series};
use orbbuf_core::metrics::{
    buffer_size_sweep, emit_report_plots, emit_timing_plot, loss_tolerance_study, mean_similarity_by_distance,
    median_min_similarity, spearman_rho, write_distance_csv, write_loss_csv, write_sweep_csv, StudyError, Tolerance,
    ToleranceThreshold,
};
use orbbuf_core::netsim::{load_trace, simulate, sustaining_rate, synthetic_lossy_trace, LossyTraceParams, SimError};
use orbbuf_core::{
    build_report, CachedFeatures, ExperimentReport, FeatureExtractor, LinkTrace, PolicyKind, SimParams, SimResult,
};

use crate::config::{write_sidecar, LinkModel, LinkRate, RunConfig, SequenceSource};
use crate::CliError;

type Source = Arc<CachedFeatures<FeatureExtractor>>;

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

fn sim_error(policy: PolicyKind, e: SimError) -> CliError {
    CliError::Sim(format!("{policy}: {e}"))
}

fn study_error(e: StudyError) -> CliError {
    match e {
        StudyError::Run { .. } => CliError::Sim(e.to_string()),
        StudyError::EmptyAxis(_) => CliError::Usage(e.to_string()),
        StudyError::BadRange { .. } => CliError::Data(e.to_string()),
    }
}

fn prepare_out(out: &Path, values: &BTreeMap<String, String>) -> Result<String, CliError> {
    fs::create_dir_all(out).map_err(data(format!("cannot create {}", out.display())))?;
    write_sidecar(values, out).map_err(data("writing effective_config.txt"))
}

fn load_sequence(cfg: &RunConfig) -> Result<FrameSequence, CliError> {
    let seq = match &cfg.source {
        SequenceSource::Dir(dir) => frame_io::load_sequence(dir, cfg.fps),
        SequenceSource::Synthetic(p) => gen_synthetic(p),
    };
    let seq = seq.map_err(|e| match e {
        SequenceError::InvalidParams(_) | SequenceError::InvalidFps(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;
    Ok(seq.with_size_model(cfg.size_model))
}

fn build_trace(cfg: &RunConfig, seq: &FrameSequence) -> Result<LinkTrace, CliError> {
    let base = match &cfg.trace {
        Some(path) => load_trace(path).map_err(data(path.display()))?,
        None => {
            let rate = match cfg.link_rate {
                LinkRate::BytesPerSecond(r) => r,
                LinkRate::Sustaining(f) => sustaining_rate(seq, None) * f,
            };
            match cfg.link_model {
                LinkModel::Constant => LinkTrace::constant(rate),
                LinkModel::Lossy => synthetic_lossy_trace(&LossyTraceParams {
                    duration_ms: cfg
                        .trace_duration_ms
                        .unwrap_or(seq.len() as f64 * seq.frame_interval_ms()),
                    mean_rate: rate,
                    ..cfg.lossy.clone()
                }),
            }
        }
    };
    Ok(match &cfg.interruption {
        Some(spec) => base.apply_interruption(spec, seq.fps),
        None => base,
    })
}

fn feature_source(cfg: &RunConfig, out: &Path) -> Result<Source, CliError> {
    let extractor = FeatureExtractor::new(cfg.features.clone());
    fs::write(out.join("brief_pattern.txt"), extractor.pattern().to_text())
        .map_err(data("writing brief_pattern.txt"))?;
    Ok(Arc::new(CachedFeatures::new(extractor)))
}

fn capacity_frames(cfg: &RunConfig) -> Result<usize, CliError> {
    match cfg.capacity.to_frames(cfg.fps) {
        0 => Err(CliError::Usage(format!(
            "capacity {} is less than one frame",
            cfg.capacity
        ))),
        n => Ok(n),
    }
}

fn write_trace(trace: &LinkTrace, out: &Path) -> Result<(), CliError> {
    fs::write(out.join("trace.csv"), trace.to_csv()).map_err(data("writing trace.csv"))
}

fn run_policy(
    cfg: &RunConfig,
    seq: &FrameSequence,
    trace: &LinkTrace,
    policy: PolicyKind,
    capacity: usize,
    src: &Source,
) -> Result<(SimResult, ExperimentReport), CliError> {
    let params = SimParams::new(policy, capacity, cfg.policy_seed());
    let shared: Arc<dyn FeatureSource> = src.clone();
    let result = simulate(seq, trace, &params, shared).map_err(|e| sim_error(policy, e))?;
    let report = build_report(policy.name(), &result, seq, src.as_ref());
    Ok((result, report))
}

fn write_policy_outputs(
    out: &Path,
    result: &SimResult,
    report: &ExperimentReport,
    timing: bool,
) -> Result<(), CliError> {
    let p = &report.policy;
    let io = |what: &str| format!("writing {p} {what}");
    result
        .save_csv(out.join(format!("{p}_events.csv")))
        .map_err(data(io("events")))?;
    report
        .save_csv(out.join(format!("{p}_report.csv")))
        .map_err(data(io("report")))?;
    let file = fs::File::create(out.join(format!("{p}_profile.csv"))).map_err(data(io("profile")))?;
    report.write_profile_csv(file).map_err(data(io("profile")))?;
    emit_report_plots(report, out, p).map_err(data(io("plots")))?;
    if timing {
        let file = fs::File::create(out.join(format!("{p}_timing.csv"))).map_err(data(io("timing")))?;
        report.write_timing_csv(file).map_err(data(io("timing")))?;
        emit_timing_plot(p, &result.enqueue_times_ms, &out.join(format!("{p}_timing.svg")))
            .map_err(data(io("timing")))?;
    }
    Ok(())
}

fn min_text(report: &ExperimentReport) -> String {
    report.min_similarity.map_or("-".into(), |m| m.to_string())
}

pub fn gen(cfg: &RunConfig, values: &BTreeMap<String, String>, out: &Path) -> Result<(), CliError> {
    let SequenceSource::Synthetic(params) = &cfg.source else {
        return Err(CliError::Usage(
            "gen needs synthetic parameters; unset sequence_dir".into(),
        ));
    };
    let id = prepare_out(out, values)?;
    let seq = gen_synthetic(params).map_err(|e| CliError::Usage(e.to_string()))?;
    for frame in &seq.frames {
        let path = out.join(format!("{:06}.pgm", frame.id));
        write_pgm(frame, &path).map_err(data(path.display()))?;
    }
    let sidecar = format!(
        "width = {}\nheight = {}\nn_frames = {}\ndot_density = {}\nshift_px = {}\nnoise_sigma = {}\nfps = {}\nsequence_seed = {}\n",
        params.width,
        params.height,
        params.n_frames,
        params.dot_density,
        params.shift_px_per_frame,
        params.noise_sigma,
        params.fps,
        params.seed
    );
    fs::write(out.join("params.txt"), sidecar).map_err(data("writing params.txt"))?;
    println!("run {id}: wrote {} frames to {}", seq.len(), out.display());
    Ok(())
}

pub fn run(cfg: &RunConfig, values: &BTreeMap<String, String>, out: &Path) -> Result<(), CliError> {
    let capacity = capacity_frames(cfg)?;
    let id = prepare_out(out, values)?;
    let seq = load_sequence(cfg)?;
    let trace = build_trace(cfg, &seq)?;
    write_trace(&trace, out)?;
    let src = feature_source(cfg, out)?;
    let (result, report) = run_policy(cfg, &seq, &trace, cfg.policy, capacity, &src)?;
    write_policy_outputs(out, &result, &report, cfg.timing)?;
    println!(
        "run {id}: {} capacity {capacity}: received {}/{}, dropped {}, min similarity {}, max loss run {}, extractions {}",
        report.policy,
        report.received_ids.len(),
        report.generated,
        report.dropped_count,
        min_text(&report),
        report.max_loss_run,
        report.extraction_count
    );
    Ok(())
}

const COMPARE_HEADER: [&str; 8] = [
    "policy",
    "received",
    "dropped",
    "min_similarity",
    "log_product_similarity",
    "zero_similarity_count",
    "max_loss_run",
    "extraction_count",
];

fn compare_record(r: &ExperimentReport) -> [String; 8] {
    [
        r.policy.clone(),
        r.received_ids.len().to_string(),
        r.dropped_count.to_string(),
        r.min_similarity.map_or(String::new(), |m| m.to_string()),
        format!("{:.4}", r.log_product_similarity),
        r.zero_similarity_count.to_string(),
        r.max_loss_run.to_string(),
        r.extraction_count.to_string(),
    ]
}

pub fn compare(cfg: &RunConfig, values: &BTreeMap<String, String>, out: &Path) -> Result<(), CliError> {
    if cfg.policies.len() < 2 {
        return Err(CliError::Usage("compare needs at least two policies".into()));
    }
    let capacity = capacity_frames(cfg)?;
    let id = prepare_out(out, values)?;
    let seq = load_sequence(cfg)?;
    let trace = build_trace(cfg, &seq)?;
    write_trace(&trace, out)?;
    let src = feature_source(cfg, out)?;
    let mut table = csv::Writer::from_path(out.join("compare.csv")).map_err(data("writing compare.csv"))?;
    table
        .write_record(COMPARE_HEADER)
        .map_err(data("writing compare.csv"))?;
    println!("run {id}: capacity {capacity}");
    println!(
        "{:<14} {:>8} {:>8} {:>8} {:>12} {:>6} {:>9} {:>11}",
        "policy", "received", "dropped", "min_sim", "log_product", "zeros", "loss_run", "extractions"
    );
    for &policy in &cfg.policies {
        let (result, report) = run_policy(cfg, &seq, &trace, policy, capacity, &src)?;
        write_policy_outputs(out, &result, &report, cfg.timing)?;
        table
            .write_record(compare_record(&report))
            .map_err(data("writing compare.csv"))?;
        println!(
            "{:<14} {:>8} {:>8} {:>8} {:>12.4} {:>6} {:>9} {:>11}",
            report.policy,
            report.received_ids.len(),
            report.dropped_count,
            min_text(&report),
            report.log_product_similarity,
            report.zero_similarity_count,
            report.max_loss_run,
            report.extraction_count
        );
    }
    table.flush().map_err(data("writing compare.csv"))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyKind {
    Distance,
    Loss,
    BufferSize,
}

pub fn study(kind: StudyKind, cfg: &RunConfig, values: &BTreeMap<String, String>, out: &Path) -> Result<(), CliError> {
    let id = prepare_out(out, values)?;
    let seq = load_sequence(cfg)?;
    let src = feature_source(cfg, out)?;
    match kind {
        StudyKind::Distance => distance_study(cfg, &seq, &src, out, &id),
        StudyKind::Loss => loss_study(cfg, &seq, &src, out, &id),
        StudyKind::BufferSize => sweep_study(cfg, &seq, src, out, &id),
    }
}

fn distance_study(cfg: &RunConfig, seq: &FrameSequence, src: &Source, out: &Path, id: &str) -> Result<(), CliError> {
    let (lo, hi) = cfg.distance_range;
    let hi = hi.min(seq.len().saturating_sub(1));
    let rows = orbbuf_core::metrics::distance_similarity_study(seq, lo, hi, src.as_ref()).map_err(study_error)?;
    let file = fs::File::create(out.join("distance.csv")).map_err(data("writing distance.csv"))?;
    write_distance_csv(&rows, file).map_err(data("writing distance.csv"))?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.distance as f64, r.similarity as f64)).collect();
    let svg = scatter_chart(
        "Similarity by frame distance",
        "distance (frames)",
        "similarity",
        &points,
    );
    save_svg(out.join("distance.svg"), &svg).map_err(data("writing distance.svg"))?;
    let means = mean_similarity_by_distance(&rows);
    let (d, s): (Vec<f64>, Vec<f64>) = means.iter().map(|&(d, s)| (d as f64, s)).unzip();
    let rho = spearman_rho(&d, &s).map_or("undefined".into(), |r| format!("{r:.4}"));
    println!(
        "run {id}: distance study over frames {lo}..={hi}: {} pairs, spearman rho {rho}",
        rows.len()
    );
    Ok(())
}

fn loss_study(cfg: &RunConfig, seq: &FrameSequence, src: &Source, out: &Path, id: &str) -> Result<(), CliError> {
    let threshold = ToleranceThreshold::FractionOfMedianSelf(cfg.loss_threshold);
    let rows = loss_tolerance_study(seq, cfg.loss_max_k, threshold, src.as_ref());
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "loss study needs more than {} frames, sequence has {}",
            cfg.loss_max_k + 1,
            seq.len()
        )));
    }
    let file = fs::File::create(out.join("loss.csv")).map_err(data("writing loss.csv"))?;
    write_loss_csv(&rows, file).map_err(data("writing loss.csv"))?;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| match r.tolerance {
            Tolerance::BreaksAt(k) => Some((r.start as f64, k as f64)),
            Tolerance::Tolerant => None,
        })
        .collect();
    let tolerant = rows.len() - points.len();
    let svg = line_chart(
        "Consecutive losses that break tracking",
        "first removed frame",
        "frames removed",
        &[Series::new("breaks at", points)],
    );
    save_svg(out.join("loss.svg"), &svg).map_err(data("writing loss.svg"))?;
    println!(
        "run {id}: loss study: {} starts, {tolerant} tolerant up to {}",
        rows.len(),
        cfg.loss_max_k
    );
    Ok(())
}

fn sweep_study(cfg: &RunConfig, seq: &FrameSequence, src: Source, out: &Path, id: &str) -> Result<(), CliError> {
    let mut capacities = Vec::new();
    for c in &cfg.capacities {
        match c.to_frames(cfg.fps) {
            0 => return Err(CliError::Usage(format!("capacity {c} is less than one frame"))),
            n => capacities.push(n),
        }
    }
    let trace = build_trace(cfg, seq)?;
    write_trace(&trace, out)?;
    let seeds = cfg.repetition_seeds();
    let base = SimParams::new(cfg.policy, 1, 0);
    let rows = buffer_size_sweep(seq, &trace, &cfg.policies, &capacities, &seeds, &base, src).map_err(study_error)?;
    let file = fs::File::create(out.join("sweep.csv")).map_err(data("writing sweep.csv"))?;
    write_sweep_csv(&rows, file).map_err(data("writing sweep.csv"))?;

    let mut policies: Vec<PolicyKind> = Vec::new();
    for p in &cfg.policies {
        if !policies.contains(p) {
            policies.push(*p);
        }
    }
    let mut medians =
        csv::Writer::from_path(out.join("sweep_medians.csv")).map_err(data("writing sweep_medians.csv"))?;
    medians
        .write_record(["policy", "capacity", "median_min_similarity"])
        .map_err(data("writing sweep_medians.csv"))?;
    let mut series = Vec::new();
    println!("run {id}: median min similarity over {} seeds", seeds.len());
    for &policy in &policies {
        let mut points = Vec::new();
        let mut line = format!("{:<14}", policy.name());
        for &c in &capacities {
            let m = median_min_similarity(&rows, policy, c).unwrap_or(0.0);
            medians
                .write_record([policy.name().to_string(), c.to_string(), m.to_string()])
                .map_err(data("writing sweep_medians.csv"))?;
            points.push((c as f64, m));
            line.push_str(&format!(" {c}:{m}"));
        }
        println!("{line}");
        series.push(Series::new(policy.name(), points));
    }
    medians.flush().map_err(data("writing sweep_medians.csv"))?;
    let svg = line_chart(
        "Minimum similarity by buffer size",
        "capacity (frames)",
        "median min similarity",
        &series,
    );
    save_svg(out.join("buffer_size.svg"), &svg).map_err(data("writing buffer_size.svg"))?;
    Ok(())
}
