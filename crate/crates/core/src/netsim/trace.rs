use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Piecewise-constant link bandwidth. Each point's rate holds until the next
/// point; the first rate also applies before the first point.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkTrace {
    points: Vec<(f64, f64)>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has no points")]
    Empty,
    #[error("timestamps must strictly increase (line {line}: {t_ms} after {prev_ms})")]
    NonMonotone { line: usize, prev_ms: f64, t_ms: f64 },
    #[error("bandwidth must be a finite non-negative number (line {line}: {value})")]
    BadBandwidth { line: usize, value: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A window of zero bandwidth injected into a trace.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InterruptionSpec {
    /// Frame index at which the outage begins.
    pub at_frame: u64,
    pub latency_ms: f64,
    pub duration_frames: u64,
}

impl InterruptionSpec {
    /// The zero window `[start, end)` in milliseconds.
    pub fn window_ms(&self, fps: f64) -> (f64, f64) {
        let interval = 1000.0 / fps;
        let start = self.at_frame as f64 * interval;
        (start, start + self.latency_ms + self.duration_frames as f64 * interval)
    }
}

impl LinkTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, &(t, v)) in points.iter().enumerate() {
            if !t.is_finite() {
                return Err(TraceError::Parse {
                    line: i + 1,
                    message: format!("timestamp {t} is not finite"),
                });
            }
            if !v.is_finite() || v < 0.0 {
                return Err(TraceError::BadBandwidth { line: i + 1, value: v });
            }
            if i > 0 && t <= points[i - 1].0 {
                return Err(TraceError::NonMonotone {
                    line: i + 1,
                    prev_ms: points[i - 1].0,
                    t_ms: t,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn constant(bytes_per_second: f64) -> Self {
        Self::new(vec![(0.0, bytes_per_second)]).expect("valid constant trace")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Parses `t_ms,bytes_per_second` lines. `#` starts a comment line; a
    /// leading non-numeric header row is skipped.
    pub fn parse(reader: impl Read) -> Result<Self, TraceError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut points = Vec::new();
        for (i, record) in csv.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(i + 1, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(TraceError::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let t = record[0].parse::<f64>();
            let v = record[1].parse::<f64>();
            match (t, v) {
                (Ok(t), Ok(v)) => {
                    if !v.is_finite() || v < 0.0 {
                        return Err(TraceError::BadBandwidth { line, value: v });
                    }
                    if let Some(&(prev, _)) = points.last() {
                        if t <= prev {
                            return Err(TraceError::NonMonotone {
                                line,
                                prev_ms: prev,
                                t_ms: t,
                            });
                        }
                    }
                    points.push((t, v));
                }
                _ if i == 0 => continue,
                _ => {
                    return Err(TraceError::Parse {
                        line,
                        message: format!("cannot parse {:?},{:?}", &record[0], &record[1]),
                    })
                }
            }
        }
        Self::new(points)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ms,bytes_per_second\n");
        for (t, v) in &self.points {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    /// Rate at `t_ms`: the latest point at or before `t_ms`.
    pub fn bandwidth_at(&self, t_ms: f64) -> f64 {
        let idx = self.points.partition_point(|&(t, _)| t <= t_ms);
        self.points[idx.saturating_sub(1)].1
    }

    /// Time at which `bytes` sent from `start_ms` finish, or `None` if the
    /// link never delivers them.
    pub fn transmit_finish(&self, start_ms: f64, bytes: u64) -> Option<f64> {
        let mut remaining = bytes as f64;
        if remaining <= 0.0 {
            return Some(start_ms);
        }
        let mut idx = self.points.partition_point(|&(t, _)| t <= start_ms).saturating_sub(1);
        let mut t = start_ms;
        loop {
            let rate = self.points[idx].1;
            let end = self.points.get(idx + 1).map(|p| p.0);
            match end {
                Some(end) => {
                    let capacity = rate * (end - t) / 1000.0;
                    if rate > 0.0 && capacity >= remaining {
                        return Some(t + remaining * 1000.0 / rate);
                    }
                    remaining -= capacity;
                    t = end;
                    idx += 1;
                }
                None => return (rate > 0.0).then(|| t + remaining * 1000.0 / rate),
            }
        }
    }

    /// Copy of the trace with bandwidth 0 over the interruption window.
    pub fn apply_interruption(&self, spec: &InterruptionSpec, fps: f64) -> LinkTrace {
        let (start, end) = spec.window_ms(fps);
        if end <= start {
            return self.clone();
        }
        let resume = self.bandwidth_at(end);
        let mut points = Vec::with_capacity(self.points.len() + 3);
        if start <= self.points[0].0 {
            // Keep the pre-trace extension value in force before the window.
            points.push((start - 1.0, self.points[0].1));
        }
        points.extend(self.points.iter().copied().filter(|&(t, _)| t < start));
        points.push((start, 0.0));
        points.push((end, resume));
        points.extend(self.points.iter().copied().filter(|&(t, _)| t > end));
        points.dedup_by(|later, earlier| later.1 == earlier.1);
        LinkTrace { points }
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<LinkTrace, TraceError> {
    LinkTrace::parse(std::fs::File::open(path)?)
}

/// Parameters for a randomly fluctuating link with occasional outages.
#[derive(Clone, Debug, PartialEq)]
pub struct LossyTraceParams {
    pub duration_ms: f64,
    pub mean_rate: f64,
    /// Chance that a segment is an outage.
    pub outage_probability: f64,
    /// Outage length range in milliseconds, inclusive.
    pub outage_ms: (u32, u32),
    /// Rates of non-outage segments are drawn from this multiple of `mean_rate`.
    pub rate_factor: (f64, f64),
    pub seed: u64,
}

impl Default for LossyTraceParams {
    fn default() -> Self {
        Self {
            duration_ms: 60_000.0,
            mean_rate: 3_000_000.0,
            outage_probability: 0.15,
            outage_ms: (200, 1200),
            rate_factor: (0.6, 1.4),
            seed: 0,
        }
    }
}

/// Deterministic synthetic trace of 200..=2000 ms segments at random rates,
/// with occasional zero-bandwidth segments. The trace resumes at `mean_rate`
/// after `duration_ms`.
pub fn synthetic_lossy_trace(params: &LossyTraceParams) -> LinkTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut points = Vec::new();
    let mut t = 0.0;
    while t < params.duration_ms {
        let (rate, len) = if rng.random_bool(params.outage_probability.clamp(0.0, 1.0)) {
            (
                0.0,
                rng.random_range(params.outage_ms.0..=params.outage_ms.1.max(params.outage_ms.0)),
            )
        } else {
            let (lo, hi) = params.rate_factor;
            let factor = if hi > lo { rng.random_range(lo..hi) } else { lo };
            ((params.mean_rate * factor).round(), rng.random_range(200..=2000))
        };
        points.push((t, rate));
        t += len as f64;
    }
    points.push((t, params.mean_rate.round()));
    points.dedup_by(|later, earlier| later.1 == earlier.1);
    LinkTrace { points }
}
