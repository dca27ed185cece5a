use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use super::report::build_report;
use crate::buffer::PolicyKind;
use crate::features::{FeatureSet, FeatureSource};
use crate::frame_io::FrameSequence;
use crate::netsim::{simulate, LinkTrace, SimError, SimParams};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("frame range {lo}..={hi} is invalid for a sequence of {len} frames (need at least 3 frames)")]
    BadRange { lo: usize, hi: usize, len: usize },
    #[error("sweep needs at least one {0}")]
    EmptyAxis(&'static str),
    #[error("run policy={policy} capacity={capacity} seed={seed}: {source}")]
    Run {
        policy: PolicyKind,
        capacity: usize,
        seed: u64,
        #[source]
        source: SimError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistanceStudyRow {
    pub first_id: u64,
    pub second_id: u64,
    pub distance: u64,
    pub similarity: u32,
    pub product: u64,
}

fn extract_all(
    sequence: &FrameSequence,
    range: std::ops::RangeInclusive<usize>,
    source: &dyn FeatureSource,
) -> Vec<Arc<FeatureSet>> {
    sequence.frames[range].iter().map(|f| source.extract(f)).collect()
}

/// Similarity of every unordered frame pair with indices in `lo..=hi`,
/// sorted by (distance, first id).
pub fn distance_similarity_study(
    sequence: &FrameSequence,
    lo: usize,
    hi: usize,
    source: &dyn FeatureSource,
) -> Result<Vec<DistanceStudyRow>, StudyError> {
    if hi < lo + 2 || hi >= sequence.len() {
        return Err(StudyError::BadRange {
            lo,
            hi,
            len: sequence.len(),
        });
    }
    let features = extract_all(sequence, lo..=hi, source);
    let n = features.len();
    let mut rows: Vec<DistanceStudyRow> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let features = &features;
            (i + 1..n).map(move |j| {
                let (a, b) = (&sequence.frames[lo + i], &sequence.frames[lo + j]);
                let distance = b.id - a.id;
                let similarity = source.similarity(&features[i], &features[j]);
                DistanceStudyRow {
                    first_id: a.id,
                    second_id: b.id,
                    distance,
                    similarity,
                    product: distance * similarity as u64,
                }
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.distance, r.first_id));
    Ok(rows)
}

/// `(distance, mean similarity)` for each distance present, ascending.
pub fn mean_similarity_by_distance(rows: &[DistanceStudyRow]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64, u64)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((d, sum, count)) if *d == r.distance => {
                *sum += r.similarity as f64;
                *count += 1;
            }
            _ => out.push((r.distance, r.similarity as f64, 1)),
        }
    }
    out.sort_by_key(|e| e.0);
    out.into_iter().map(|(d, sum, n)| (d, sum / n as f64)).collect()
}

pub fn write_distance_csv(rows: &[DistanceStudyRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["first_id", "second_id", "distance", "similarity", "product"])?;
    for r in rows {
        w.write_record([
            r.first_id.to_string(),
            r.second_id.to_string(),
            r.distance.to_string(),
            r.similarity.to_string(),
            r.product.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
/// `None` for fewer than two points or a constant input.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples");
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Similarity level below which an adjacency counts as broken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToleranceThreshold {
    Absolute(f64),
    /// Fraction of the median self-similarity over the sequence.
    FractionOfMedianSelf(f64),
}

impl Default for ToleranceThreshold {
    fn default() -> Self {
        ToleranceThreshold::FractionOfMedianSelf(0.25)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tolerance {
    /// Smallest number of removed frames that breaks the adjacency.
    BreaksAt(usize),
    Tolerant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossToleranceRow {
    /// Index of the first removed frame.
    pub start: usize,
    pub tolerance: Tolerance,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// For each start `i`, the smallest `k` in `1..=max_k` such that removing
/// frames `i..i+k` leaves `similarity(frame[i-1], frame[i+k]) < threshold`.
///
/// Starts run over `1..len-max_k`; an empty result means the sequence is
/// too short.
pub fn loss_tolerance_study(
    sequence: &FrameSequence,
    max_k: usize,
    threshold: ToleranceThreshold,
    source: &dyn FeatureSource,
) -> Vec<LossToleranceRow> {
    let n = sequence.len();
    if max_k == 0 || n < max_k + 2 {
        return Vec::new();
    }
    let features = extract_all(sequence, 0..=n - 1, source);
    let level = match threshold {
        ToleranceThreshold::Absolute(v) => v,
        ToleranceThreshold::FractionOfMedianSelf(f) => {
            let mut selfs: Vec<f64> = features.iter().map(|s| source.similarity(s, s) as f64).collect();
            f * median(&mut selfs).unwrap_or(0.0)
        }
    };
    (1..n - max_k)
        .into_par_iter()
        .map(|start| {
            let before = &features[start - 1];
            let tolerance = (1..=max_k)
                .find(|&k| (source.similarity(before, &features[start + k]) as f64) < level)
                .map_or(Tolerance::Tolerant, Tolerance::BreaksAt);
            LossToleranceRow { start, tolerance }
        })
        .collect()
}

pub fn write_loss_csv(rows: &[LossToleranceRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["start", "breaks_at"])?;
    for r in rows {
        let k = match r.tolerance {
            Tolerance::BreaksAt(k) => k.to_string(),
            Tolerance::Tolerant => "tolerant".into(),
        };
        w.write_record([r.start.to_string(), k])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of one (policy, capacity, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub policy: PolicyKind,
    pub capacity: usize,
    pub seed: u64,
    pub received: usize,
    pub dropped: usize,
    pub min_similarity: Option<u32>,
    pub log_product_similarity: f64,
    pub zero_similarity_count: usize,
    pub max_loss_run: u64,
}

/// Runs every (policy, capacity, seed) combination in parallel. Rows come
/// back in policy, capacity, seed order.
///
/// `base.policy`, `base.capacity` and `base.seed` are overridden per run.
pub fn buffer_size_sweep(
    sequence: &FrameSequence,
    trace: &LinkTrace,
    policies: &[PolicyKind],
    capacities: &[usize],
    seeds: &[u64],
    base: &SimParams,
    source: Arc<dyn FeatureSource>,
) -> Result<Vec<SweepRow>, StudyError> {
    for (axis, empty) in [
        ("policy", policies.is_empty()),
        ("capacity", capacities.is_empty()),
        ("seed", seeds.is_empty()),
    ] {
        if empty {
            return Err(StudyError::EmptyAxis(axis));
        }
    }
    let mut runs = Vec::new();
    for &policy in policies {
        for &capacity in capacities {
            for &seed in seeds {
                runs.push((policy, capacity, seed));
            }
        }
    }
    runs.into_par_iter()
        .map(|(policy, capacity, seed)| {
            let params = SimParams {
                policy,
                capacity,
                seed,
                ..base.clone()
            };
            let result = simulate(sequence, trace, &params, source.clone()).map_err(|e| StudyError::Run {
                policy,
                capacity,
                seed,
                source: e,
            })?;
            let report = build_report(policy.name(), &result, sequence, source.as_ref());
            Ok(SweepRow {
                policy,
                capacity,
                seed,
                received: report.received_ids.len(),
                dropped: report.dropped_count,
                min_similarity: report.min_similarity,
                log_product_similarity: report.log_product_similarity,
                zero_similarity_count: report.zero_similarity_count,
                max_loss_run: report.max_loss_run,
            })
        })
        .collect()
}

/// Median over seeds of the min similarity, with an undefined minimum as 0.
pub fn median_min_similarity(rows: &[SweepRow], policy: PolicyKind, capacity: usize) -> Option<f64> {
    let mut values: Vec<f64> = rows
        .iter()
        .filter(|r| r.policy == policy && r.capacity == capacity)
        .map(|r| r.min_similarity.unwrap_or(0) as f64)
        .collect();
    median(&mut values)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "capacity",
        "seed",
        "received",
        "dropped",
        "min_similarity",
        "log_product_similarity",
        "zero_similarity_count",
        "max_loss_run",
    ])?;
    for r in rows {
        w.write_record([
            r.policy.name().to_string(),
            r.capacity.to_string(),
            r.seed.to_string(),
            r.received.to_string(),
            r.dropped.to_string(),
            r.min_similarity.map(|m| m.to_string()).unwrap_or_default(),
            format!("{:.6}", r.log_product_similarity),
            r.zero_similarity_count.to_string(),
            r.max_loss_run.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman_rho(&x, &[10.0, 20.0, 30.0, 99.0]), Some(1.0));
        assert_eq!(spearman_rho(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman_rho(&x, &[1.0, 1.0, 1.0, 1.0]), None);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
