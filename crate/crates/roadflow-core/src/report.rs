//! Fixed-width histograms over per-vehicle results: departure times, route
//! lengths in edges, traveled distance, and fuel burned.

use std::path::Path;

use thiserror::Error;

use crate::microsim::VehicleRow;

pub const DEPARTURE_BIN_S: f64 = 300.0;
pub const EDGES_BIN: f64 = 1.0;
pub const DISTANCE_BIN_M: f64 = 500.0;
pub const FUEL_BIN_ML: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("non-finite value {0} cannot be binned")]
    NonFiniteValue(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub start: f64,
    pub end: f64,
    pub count: u64,
}

/// Contiguous fixed-width bins covering the value range; empty interior
/// bins are kept so the series plots without gaps. Bin edges are multiples
/// of the width, and each bin is half-open [start, end).
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}

pub fn histogram(values: &[f64], bin_width: f64) -> Result<Histogram, ReportError> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(ReportError::InvalidBinWidth(bin_width));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(ReportError::NonFiniteValue(bad));
    }
    if values.is_empty() {
        return Ok(Histogram {
            bin_width,
            bins: Vec::new(),
        });
    }
    let idx = |v: f64| (v / bin_width).floor() as i64;
    let lo = values.iter().copied().map(idx).min().unwrap();
    let hi = values.iter().copied().map(idx).max().unwrap();
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &v in values {
        counts[(idx(v) - lo) as usize] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let b = lo + i as i64;
            HistogramBin {
                start: b as f64 * bin_width,
                end: (b + 1) as f64 * bin_width,
                count,
            }
        })
        .collect();
    Ok(Histogram { bin_width, bins })
}

/// The four reported histogram families, as (name, histogram) pairs:
/// departure time (300 s bins), edges per completed path (unit bins),
/// distance (500 m bins), and fuel (10 mL bins).
pub fn vehicle_histograms(
    rows: &[VehicleRow],
) -> Result<[(&'static str, Histogram); 4], ReportError> {
    let departures: Vec<f64> = rows.iter().map(|r| r.departure_s).collect();
    let edges: Vec<f64> = rows.iter().map(|r| r.n_edges as f64).collect();
    let distance: Vec<f64> = rows.iter().map(|r| r.distance_m).collect();
    let fuel: Vec<f64> = rows.iter().map(|r| r.fuel_ml).collect();
    Ok([
        ("departures", histogram(&departures, DEPARTURE_BIN_S)?),
        ("edges_per_path", histogram(&edges, EDGES_BIN)?),
        ("distance", histogram(&distance, DISTANCE_BIN_M)?),
        ("fuel", histogram(&fuel, FUEL_BIN_ML)?),
    ])
}

pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_start", "bin_end", "count"])?;
    for b in &hist.bins {
        w.write_record([b.start.to_string(), b.end.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
