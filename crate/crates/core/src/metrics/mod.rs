//! Evaluation quantities over simulation output, the study procedures and
//! chart emission.

mod report;
mod study;
pub mod svg;

use std::path::{Path, PathBuf};

pub use report::{
    adjacent_similarities, build_report, distance_histogram, log_product, max_loss_run, ExperimentReport,
};
pub use study::{
    average_ranks, buffer_size_sweep, distance_similarity_study, loss_tolerance_study, mean_similarity_by_distance,
    median, median_min_similarity, spearman_rho, write_distance_csv, write_loss_csv, write_sweep_csv, DistanceStudyRow,
    LossToleranceRow, StudyError, SweepRow, Tolerance, ToleranceThreshold,
};

use svg::{histogram_chart, line_chart, save_svg, Series};

/// Writes the similarity profile and gap histogram of `report` into `dir`
/// as `<prefix>_similarity.svg` and `<prefix>_gaps.svg`.
pub fn emit_report_plots(report: &ExperimentReport, dir: &Path, prefix: &str) -> std::io::Result<Vec<PathBuf>> {
    let profile: Vec<(f64, f64)> = report
        .received_ids
        .iter()
        .zip(&report.adjacent_similarities)
        .map(|(&id, &s)| (id as f64, s as f64))
        .collect();
    let gaps: Vec<(f64, f64)> = report
        .distance_histogram
        .iter()
        .map(|(&gap, &count)| (gap as f64, count as f64))
        .collect();
    let charts = [
        (
            "similarity",
            line_chart(
                &format!("Adjacent similarity ({})", report.policy),
                "received frame id",
                "similarity",
                &[Series::new(report.policy.clone(), profile)],
            ),
        ),
        (
            "gaps",
            histogram_chart(
                &format!("Gaps between received frames ({})", report.policy),
                "id gap",
                "count",
                &gaps,
            ),
        ),
    ];
    let mut written = Vec::new();
    for (name, svg) in charts {
        let path = dir.join(format!("{prefix}_{name}.svg"));
        save_svg(&path, &svg)?;
        written.push(path);
    }
    Ok(written)
}

/// Time series of per-arrival enqueue cost. Wall-clock, so not reproducible.
pub fn emit_timing_plot(policy: &str, enqueue_times_ms: &[f64], path: &Path) -> std::io::Result<()> {
    let points: Vec<(f64, f64)> = enqueue_times_ms
        .iter()
        .enumerate()
        .map(|(i, &t)| (i as f64, t))
        .collect();
    let svg = line_chart(
        &format!("Enqueue time ({policy})"),
        "arrival",
        "ms",
        &[Series::new(policy, points)],
    );
    save_svg(path, &svg)
}
