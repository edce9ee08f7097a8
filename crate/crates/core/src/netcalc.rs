//! Min-plus algebra on a uniform discrete time grid.
//!
//! A [`Curve`] holds one byte value per grid point `t = 0, 1, ..., n` where
//! `n` is the number of bins. Cumulative arrivals, departures, service
//! curves and empirical envelopes are all curves in this sense.
//!
//! Byte values are exact integers. Rates are exact rationals (bytes per
//! nanosecond), so quantities that mix bytes and `rate * time` are kept as
//! scaled integers instead of floats; see [`Rate::scale`].

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{format_seconds, parse_seconds, NANOS_PER_SEC};

/// Uniform discrete clock: `bin_count` bins of `bin_width_ns` each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeGrid {
    bin_width_ns: u64,
    bin_count: usize,
}

impl TimeGrid {
    pub fn new(bin_width_ns: u64, bin_count: usize) -> Result<Self> {
        if bin_width_ns == 0 {
            return Err(Error::InvalidArgument("bin width must be positive".into()));
        }
        Ok(Self {
            bin_width_ns,
            bin_count,
        })
    }

    pub fn bin_width_ns(&self) -> u64 {
        self.bin_width_ns
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    /// Number of grid points, one more than the number of bins.
    pub fn points(&self) -> usize {
        self.bin_count + 1
    }

    pub fn duration_ns(&self) -> u128 {
        self.bin_width_ns as u128 * self.bin_count as u128
    }

    /// Time of grid point `k` in nanoseconds.
    pub fn time_ns(&self, k: usize) -> u128 {
        self.bin_width_ns as u128 * k as u128
    }

    pub(crate) fn with_bin_count(&self, bin_count: usize) -> Self {
        Self {
            bin_width_ns: self.bin_width_ns,
            bin_count,
        }
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bins of {} ns", self.bin_count, self.bin_width_ns)
    }
}

/// Exact positive rate, stored as a reduced fraction of bytes per nanosecond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rate {
    bytes: u128,
    per_ns: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rate {
    /// `bytes` every `per_ns` nanoseconds.
    pub fn new(bytes: u128, per_ns: u128) -> Result<Self> {
        if bytes == 0 || per_ns == 0 {
            return Err(Error::InvalidRate(format!(
                "{bytes} bytes per {per_ns} ns is not a positive rate"
            )));
        }
        let d = gcd(bytes, per_ns);
        Ok(Self {
            bytes: bytes / d,
            per_ns: per_ns / d,
        })
    }

    pub fn bytes_per_sec(bytes: u64) -> Result<Self> {
        Self::new(bytes as u128, NANOS_PER_SEC as u128)
    }

    pub fn bits_per_sec(bits: u64) -> Result<Self> {
        Self::new(bits as u128, 8 * NANOS_PER_SEC as u128)
    }

    /// Numerator of the reduced fraction (bytes).
    pub fn numer(&self) -> u128 {
        self.bytes
    }

    /// Denominator of the reduced fraction (nanoseconds). Multiplying byte
    /// counts by this value puts them on the same integer scale as
    /// `numer() * elapsed_ns`.
    pub fn scale(&self) -> u128 {
        self.per_ns
    }

    pub fn bytes_per_sec_f64(&self) -> f64 {
        self.bytes as f64 * NANOS_PER_SEC as f64 / self.per_ns as f64
    }

    pub fn bits_per_sec_f64(&self) -> f64 {
        self.bytes_per_sec_f64() * 8.0
    }

    /// Whole bytes served in `ns` nanoseconds, rounded down.
    pub fn bytes_in(&self, ns: u128) -> u128 {
        self.bytes * ns / self.per_ns
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} bit/s", self.bits_per_sec_f64())
    }
}

/// Nonnegative, nondecreasing byte function on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Curve {
    grid: TimeGrid,
    values: Vec<u64>,
}

impl Curve {
    /// Builds a curve, checking length, `values[0] == 0` and monotonicity.
    pub fn new(grid: TimeGrid, values: Vec<u64>) -> Result<Self> {
        if values.first().copied() != Some(0) {
            return Err(Error::InvalidArgument("curve must start at 0".into()));
        }
        Self::with_origin(grid, values)
    }

    /// Like [`Curve::new`] but allows a positive value at `t = 0`, which
    /// deconvolution of two different curves can produce.
    pub(crate) fn with_origin(grid: TimeGrid, values: Vec<u64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::InvalidArgument(format!(
                "curve has {} values for a grid of {} points",
                values.len(),
                grid.points()
            )));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!(
                "curve decreases between points {k} and {}",
                k + 1
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0; grid.points()],
        }
    }

    /// Curve from per-bin increments.
    pub fn from_increments(grid: TimeGrid, increments: &[u64]) -> Result<Self> {
        if increments.len() != grid.bin_count() {
            return Err(Error::InvalidArgument(format!(
                "{} increments for {} bins",
                increments.len(),
                grid.bin_count()
            )));
        }
        let mut values = Vec::with_capacity(grid.points());
        let mut acc = 0u64;
        values.push(0);
        for &b in increments {
            acc += b;
            values.push(acc);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn at(&self, k: usize) -> u64 {
        self.values[k]
    }

    pub fn last(&self) -> u64 {
        *self.values.last().expect("curve has at least one point")
    }

    pub fn starts_at_zero(&self) -> bool {
        self.values[0] == 0
    }

    /// Per-bin increments `values[k+1] - values[k]`.
    pub fn increments(&self) -> Vec<u64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Checks `f(s + t) <= f(s) + f(t)` for all grid points with `s + t <= n`.
    pub fn is_subadditive(&self) -> bool {
        let n = self.values.len();
        (0..n).all(|s| (0..n - s).all(|t| self.values[s + t] <= self.values[s] + self.values[t]))
    }

    /// Writes `tau_seconds,bytes`, one row per grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau_seconds", "bytes"])?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([format_seconds(self.grid.time_ns(k)), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<curve csv>", e))?;
        Ok(())
    }

    /// Reads a curve written by [`Curve::write_csv`]. The bin width is taken
    /// from the first two rows.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, row) in r.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let parse_err = |reason: String| Error::Parse {
                path: "<curve csv>".into(),
                line,
                reason,
            };
            if row.len() != 2 {
                return Err(parse_err(format!("expected 2 fields, found {}", row.len())));
            }
            times.push(parse_seconds(&row[0]).map_err(|e| parse_err(e.to_string()))?);
            values.push(row[1].trim().parse::<u64>().map_err(|e| parse_err(e.to_string()))?);
        }
        if times.len() < 2 {
            return Err(Error::InvalidArgument("curve csv needs at least two rows".into()));
        }
        let width = times[1] - times[0];
        if times.iter().enumerate().any(|(k, &t)| t != width * k as u64) {
            return Err(Error::InvalidArgument("curve csv is not on a uniform grid".into()));
        }
        let grid = TimeGrid::new(width, times.len() - 1)?;
        Self::with_origin(grid, values)
    }
}

/// `(f ⊗ g)(t) = min_{0 <= s <= t} f(s) + g(t - s)`.
pub fn minplus_convolve(f: &Curve, g: &Curve) -> Result<Curve> {
    f.grid.ensure_same(&g.grid)?;
    let n = f.values.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let best = (0..=t)
            .map(|s| f.values[s] + g.values[t - s])
            .min()
            .expect("range is nonempty");
        out.push(best);
    }
    Curve::with_origin(f.grid, out)
}

/// `(f ⊘ g)(t) = max_{s >= 0} f(t + s) - g(s)`, with `s` limited to the grid
/// horizon (`t + s <= n`). `f ⊘ f` is the empirical envelope of `f`.
///
/// Since `f(0) = g(0) = 0`, the `s = 0` term makes every value at least
/// `f(t) >= 0`.
pub fn minplus_deconvolve(f: &Curve, g: &Curve) -> Result<Curve> {
    f.grid.ensure_same(&g.grid)?;
    let n = f.values.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let best = (0..n - t)
            .map(|s| f.values[t + s] as i128 - g.values[s] as i128)
            .max()
            .expect("range is nonempty");
        out.push(u64::try_from(best.max(0)).expect("bounded by f"));
    }
    Curve::with_origin(f.grid, out)
}

/// Service curve of a work-conserving link: `values[k] = rate * k * bin_width`,
/// rounded down to whole bytes (exact whenever a bin carries an integral
/// number of bytes).
pub fn rate_curve(rate: Rate, grid: TimeGrid) -> Curve {
    let values = (0..grid.points())
        .map(|k| {
            u64::try_from(rate.bytes_in(grid.time_ns(k))).expect("service fits in u64 bytes")
        })
        .collect();
    Curve { grid, values }
}
