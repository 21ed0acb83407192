//! Departure-time histograms and sampling.

use std::path::Path;

use rand::Rng;

use super::SimError;

/// Relative frequencies of departures per time bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct DepartureHistogram {
    /// (start_s, end_s, frequency), sorted, non-overlapping.
    buckets: Vec<(f64, f64, f64)>,
    /// Cumulative frequency, for inversion sampling.
    cumulative: Vec<f64>,
}

impl DepartureHistogram {
    pub fn new(mut buckets: Vec<(f64, f64, f64)>) -> Result<Self, SimError> {
        if buckets.is_empty() {
            return Err(SimError::InvalidHistogram("no buckets".into()));
        }
        buckets.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite bounds"));
        let mut prev_end = f64::NEG_INFINITY;
        for &(start, end, freq) in &buckets {
            if !start.is_finite() || !end.is_finite() || end <= start {
                return Err(SimError::InvalidHistogram(format!(
                    "bucket [{start}, {end}) is empty or unbounded"
                )));
            }
            if start < prev_end {
                return Err(SimError::InvalidHistogram(format!(
                    "bucket starting at {start} overlaps the previous one"
                )));
            }
            if !(freq >= 0.0) || !freq.is_finite() {
                return Err(SimError::InvalidHistogram(format!(
                    "frequency {freq} must be finite and non-negative"
                )));
            }
            prev_end = end;
        }
        let mut cumulative = Vec::with_capacity(buckets.len());
        let mut acc = 0.0;
        for &(_, _, f) in &buckets {
            acc += f;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(SimError::InvalidHistogram(
                "total frequency must be positive".into(),
            ));
        }
        Ok(Self {
            buckets,
            cumulative,
        })
    }

    pub fn buckets(&self) -> &[(f64, f64, f64)] {
        &self.buckets
    }

    pub fn total_frequency(&self) -> f64 {
        *self.cumulative.last().expect("nonempty")
    }

    /// Draws one departure time: bucket with probability proportional to
    /// its frequency, uniform within the bucket.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random_range(0.0..self.total_frequency());
        let idx = self.cumulative.partition_point(|&c| c <= u);
        let (start, end, _) = self.buckets[idx.min(self.buckets.len() - 1)];
        rng.random_range(start..end)
    }
}

/// Draws `n` departure times from the histogram.
pub fn sample_departures<R: Rng>(
    hist: &DepartureHistogram,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..n).map(|_| hist.sample(rng)).collect()
}

const HEADER: [&str; 3] = ["bucket_start_s", "bucket_end_s", "frequency"];

/// Reads a `bucket_start_s,bucket_end_s,frequency` table.
pub fn read_departures_csv(path: &Path) -> Result<DepartureHistogram, SimError> {
    let mut reader = csv::Reader::from_path(path)?;
    let display = path.display().to_string();
    {
        let got = reader.headers()?.clone();
        if got.iter().ne(HEADER.iter().copied()) {
            return Err(SimError::MalformedRow {
                path: display,
                line: 1,
                reason: format!("expected header `{}`", HEADER.join(",")),
            });
        }
    }
    let mut buckets = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 2);
        let err = |reason: String| SimError::MalformedRow {
            path: display.clone(),
            line,
            reason,
        };
        if rec.len() != 3 {
            return Err(err("expected 3 fields".into()));
        }
        let p = |s: &str, name: &str| -> Result<f64, SimError> {
            s.trim()
                .parse()
                .map_err(|_| err(format!("invalid {name}: `{s}`")))
        };
        buckets.push((
            p(&rec[0], "bucket_start_s")?,
            p(&rec[1], "bucket_end_s")?,
            p(&rec[2], "frequency")?,
        ));
    }
    DepartureHistogram::new(buckets)
}
