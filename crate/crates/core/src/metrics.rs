//! Burstiness metrics of an arrival function: empirical envelope,
//! peak-to-mean ratio, maximum backlog behind a constant-rate drain and the
//! burstiness potential of a set of flows.
//!
//! All byte quantities are exact. Backlogs behind a rational rate are kept
//! as integers scaled by the rate's denominator (see [`Backlog`]).

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::netcalc::{Curve, Rate, TimeGrid};
use crate::trace::{aggregate, ArrivalFunction};
use crate::table::read_rows;
use crate::units::format_seconds;

/// Dense lags up to this window length in the default lag set.
pub const DENSE_LAG_LIMIT_NS: u64 = 10_000_000;
/// Log-spaced lags per decade beyond the dense range.
pub const LOG_LAGS_PER_DECADE: u32 = 32;

/// Strictly increasing lags, in bins, on a fixed grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSet {
    grid: TimeGrid,
    bins: Vec<usize>,
}

impl LagSet {
    pub fn new(grid: TimeGrid, bins: Vec<usize>) -> Result<Self> {
        if bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("lags must be strictly increasing".into()));
        }
        if let Some(&last) = bins.last() {
            if last > grid.bin_count() {
                return Err(Error::InvalidArgument(format!(
                    "lag of {last} bins exceeds the trace duration of {} bins",
                    grid.bin_count()
                )));
            }
        }
        Ok(Self { grid, bins })
    }

    /// Every lag `0, Δ, ..., nΔ`.
    pub fn full(grid: TimeGrid) -> Self {
        Self {
            grid,
            bins: (0..=grid.bin_count()).collect(),
        }
    }

    /// Every bin up to 10 ms, then 32 log-spaced lags per decade up to and
    /// including the full duration.
    pub fn default_for(grid: TimeGrid) -> Self {
        let n = grid.bin_count();
        let w = grid.bin_width_ns();
        let dense = ((DENSE_LAG_LIMIT_NS / w) as usize).min(n);
        let mut bins: Vec<usize> = (0..=dense).collect();
        let base = DENSE_LAG_LIMIT_NS.max(w) as f64;
        for j in 1.. {
            let tau = base * 10f64.powf(j as f64 / LOG_LAGS_PER_DECADE as f64);
            let k = (tau / w as f64).round() as usize;
            if k >= n {
                break;
            }
            if k > *bins.last().expect("contains 0") {
                bins.push(k);
            }
        }
        if *bins.last().expect("contains 0") < n {
            bins.push(n);
        }
        Self { grid, bins }
    }

    /// Lags given as durations, rounded to the nearest bin. Duplicates
    /// after rounding are merged.
    pub fn from_durations(grid: TimeGrid, durations_ns: &[u64]) -> Result<Self> {
        let w = grid.bin_width_ns();
        let mut bins: Vec<usize> = durations_ns
            .iter()
            .map(|&d| ((d + w / 2) / w) as usize)
            .collect();
        bins.sort_unstable();
        bins.dedup();
        Self::new(grid, bins)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.bins.len() == self.grid.points() && self.bins.iter().enumerate().all(|(i, &k)| i == k)
    }

    fn tau_ns(&self, i: usize) -> u128 {
        self.grid.time_ns(self.bins[i])
    }
}

/// Empirical envelope `E(τ) = max_t A(t+τ) - A(t)` over a lag set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurstinessCurve {
    lags: LagSet,
    values: Vec<u64>,
    starts: Vec<usize>,
    total_bytes: u64,
}

impl BurstinessCurve {
    pub fn lags(&self) -> &LagSet {
        &self.lags
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Start bin of the earliest window attaining each value.
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    /// Envelope at a lag of `k` bins, if that lag was computed.
    pub fn at_lag(&self, k: usize) -> Option<u64> {
        self.lags.bins.binary_search(&k).ok().map(|i| self.values[i])
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.lags.bins.iter().copied().zip(self.values.iter().copied())
    }

    /// The envelope as a dense curve; requires the full lag set.
    pub fn to_curve(&self) -> Result<Curve> {
        if !self.lags.is_full() {
            return Err(Error::InvalidArgument("envelope was not computed on every lag".into()));
        }
        Curve::new(self.lags.grid, self.values.clone())
    }

    /// `E(s+t) <= E(s) + E(t)` for every computed triple of lags.
    pub fn is_subadditive(&self) -> bool {
        let index: std::collections::HashMap<usize, u64> = self.points().collect();
        let bins = &self.lags.bins;
        for (i, &s) in bins.iter().enumerate() {
            for &t in &bins[i..] {
                if let Some(&sum) = index.get(&(s + t)) {
                    if sum > index[&s] + index[&t] {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.values.len()).map(|i| (self.lags.tau_ns(i), self.values[i].to_string()));
        write_tau_csv(out, "bytes", rows)
    }
}

/// Computes the envelope at each lag in `O(m)` per lag, `m` being the
/// number of nonempty bins.
///
/// A maximal window can always be slid right until it starts at a nonempty
/// bin or hits the end of the trace, so only those placements are scanned.
pub fn burstiness_curve(a: &ArrivalFunction, lags: &LagSet) -> Result<BurstinessCurve> {
    a.grid().ensure_same(lags.grid())?;
    let n = a.grid().bin_count();
    let bins = a.bin_indices();
    let prefix = a.prefix();
    let mut values = Vec::with_capacity(lags.len());
    let mut starts = Vec::with_capacity(lags.len());
    for &k in lags.bins() {
        if k == 0 {
            values.push(0);
            starts.push(0);
            continue;
        }
        let last_start = n - k;
        let mut best = 0u64;
        let mut best_start = None;
        let mut end = 0usize;
        let mut consider = |i: usize, t: usize, best: &mut u64, best_start: &mut Option<usize>| {
            while end < bins.len() && bins[end] < t + k {
                end += 1;
            }
            let sum = prefix[end] - prefix[i];
            if best_start.is_none() || sum > *best {
                *best = sum;
                *best_start = Some(t);
            }
        };
        let mut i = 0;
        while i < bins.len() && bins[i] <= last_start {
            consider(i, bins[i], &mut best, &mut best_start);
            i += 1;
        }
        // window flush with the end of the trace
        consider(i, last_start, &mut best, &mut best_start);
        let start = earliest_start(bins, best_start.expect("at least one placement"), k);
        values.push(best);
        starts.push(start);
    }
    Ok(BurstinessCurve {
        lags: lags.clone(),
        values,
        starts,
        total_bytes: a.total_bytes(),
    })
}

/// Slides a maximal window starting at `t` left while both the bin entering
/// on the left and the bin leaving on the right are empty.
fn earliest_start(bins: &[usize], t: usize, k: usize) -> usize {
    let before = bins.partition_point(|&b| b < t);
    let prev_nonempty = before.checked_sub(1).map(|i| bins[i]);
    let in_window_end = bins.partition_point(|&b| b < t + k);
    let last_in_window = in_window_end.checked_sub(1).map(|i| bins[i]);
    let left_room = prev_nonempty.map_or(t, |p| t - p - 1);
    let right_room = match last_in_window {
        Some(l) if l >= t => t + k - l - 1,
        _ => t,
    };
    t - left_room.min(right_room)
}

/// Peak-to-mean ratio `E(τ) / (λ τ)` for every nonzero lag, kept as an exact
/// fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakToMean {
    grid: TimeGrid,
    points: Vec<PtmPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtmPoint {
    pub lag_bins: usize,
    /// Numerator of the ratio: `E(τ) * rate.scale()`.
    pub numer: u128,
    /// Denominator of the ratio: `rate.numer() * τ_ns`.
    pub denom: u128,
}

impl PtmPoint {
    pub fn ratio(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

impl PeakToMean {
    pub fn points(&self) -> &[PtmPoint] {
        &self.points
    }

    pub fn at_lag(&self, k: usize) -> Option<&PtmPoint> {
        self.points
            .binary_search_by_key(&k, |p| p.lag_bins)
            .ok()
            .map(|i| &self.points[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self
            .points
            .iter()
            .map(|p| (self.grid.time_ns(p.lag_bins), p.ratio().to_string()));
        write_tau_csv(out, "ratio", rows)
    }
}

/// Lag 0 is skipped: the ratio is undefined there.
pub fn peak_to_mean(e: &BurstinessCurve, mean_rate: Rate) -> PeakToMean {
    let grid = e.lags.grid;
    let points = e
        .points()
        .filter(|&(k, _)| k > 0)
        .map(|(k, v)| PtmPoint {
            lag_bins: k,
            numer: v as u128 * mean_rate.scale(),
            denom: mean_rate.numer() * grid.time_ns(k),
        })
        .collect();
    PeakToMean { grid, points }
}

/// Convenience: PtM against the trace's own mean rate.
pub fn peak_to_mean_of(a: &ArrivalFunction, e: &BurstinessCurve) -> Result<PeakToMean> {
    Ok(peak_to_mean(e, a.mean_rate()?))
}

/// Exact backlog behind a rational-rate server: `scaled / scale` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Backlog {
    scaled: u128,
    scale: u128,
}

impl Backlog {
    pub fn scaled(&self) -> u128 {
        self.scaled
    }

    pub fn scale(&self) -> u128 {
        self.scale
    }

    pub fn bytes(&self) -> f64 {
        self.scaled as f64 / self.scale as f64
    }

    pub fn is_zero(&self) -> bool {
        self.scaled == 0
    }
}

/// Backlog at every grid point of a work-conserving server draining at
/// `rate`: `B[0] = 0`, `B[k+1] = max(B[k] + a_k - rΔ, 0)`.
pub fn backlog_series(a: &ArrivalFunction, rate: Rate) -> Vec<Backlog> {
    let scale = rate.scale();
    let drain = rate.numer() * a.grid().bin_width_ns() as u128;
    let mut out = Vec::with_capacity(a.grid().points());
    let mut b = 0u128;
    out.push(Backlog { scaled: 0, scale });
    for bytes in a.per_bin() {
        b = (b + bytes as u128 * scale).saturating_sub(drain);
        out.push(Backlog { scaled: b, scale });
    }
    out
}

/// Maximum of [`backlog_series`], computed over nonempty bins only.
pub fn max_backlog(a: &ArrivalFunction, rate: Rate) -> Backlog {
    let scale = rate.scale();
    let drain = rate.numer() * a.grid().bin_width_ns() as u128;
    let mut b = 0u128;
    let mut best = 0u128;
    let mut pos = 0usize;
    for (bin, bytes) in a.nonempty() {
        b = b.saturating_sub((bin - pos) as u128 * drain);
        b = (b + bytes as u128 * scale).saturating_sub(drain);
        best = best.max(b);
        pos = bin + 1;
    }
    Backlog { scaled: best, scale }
}

/// `max_τ max(E(τ) - rτ, 0)` over the computed lags. A lower bound on the
/// maximum backlog, equal to it when the lag set is full.
pub fn envelope_bmax(e: &BurstinessCurve, rate: Rate) -> Backlog {
    let ib = interval_bmax(e, rate);
    let best = ib.values.iter().map(|b| b.scaled).max().unwrap_or(0);
    Backlog {
        scaled: best,
        scale: rate.scale(),
    }
}

/// Rate at which a flow with mean rate `total / duration` runs at
/// utilization `ppm / 1e6`.
pub fn rate_for_utilization(a: &ArrivalFunction, utilization_ppm: u64) -> Result<Rate> {
    if utilization_ppm == 0 || utilization_ppm > 1_000_000 {
        return Err(Error::InvalidArgument(format!(
            "utilization {} is outside (0, 1]",
            utilization_ppm as f64 / 1e6
        )));
    }
    if a.total_bytes() == 0 {
        return Err(Error::EmptyTrace);
    }
    Rate::new(
        a.total_bytes() as u128 * 1_000_000,
        a.duration_ns() * utilization_ppm as u128,
    )
}

/// Converts a utilization in `(0, 1]` to parts per million.
pub fn utilization_ppm(u: f64) -> Result<u64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::InvalidArgument(format!("utilization {u} is outside (0, 1]")));
    }
    let ppm = (u * 1e6).round() as u64;
    if ppm == 0 {
        return Err(Error::InvalidArgument(format!(
            "utilization {u} is below the resolution of 1e-6"
        )));
    }
    Ok(ppm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmaxPoint {
    pub utilization_ppm: u64,
    pub rate: Rate,
    pub bmax: Backlog,
}

impl BmaxPoint {
    pub fn inv_utilization(&self) -> f64 {
        1e6 / self.utilization_ppm as f64
    }
}

/// Maximum backlog at drain rates `λ / U` for each utilization `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct BmaxSweep {
    pub points: Vec<BmaxPoint>,
}

impl BmaxSweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["inv_utilization", "rate_bps", "bmax_bytes"])?;
        for p in &self.points {
            w.write_record([
                p.inv_utilization().to_string(),
                p.rate.bits_per_sec_f64().to_string(),
                p.bmax.bytes().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<bmax csv>", e))
    }
}

pub fn bmax_sweep(a: &ArrivalFunction, utilizations: &[f64]) -> Result<BmaxSweep> {
    let points = utilizations
        .iter()
        .map(|&u| {
            let ppm = utilization_ppm(u)?;
            let rate = rate_for_utilization(a, ppm)?;
            Ok(BmaxPoint {
                utilization_ppm: ppm,
                rate,
                bmax: max_backlog(a, rate),
            })
        })
        .collect::<Result<_>>()?;
    Ok(BmaxSweep { points })
}

/// `max(E(τ) - rτ, 0)` per lag: the largest backlog built up by bursts of
/// length `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBmax {
    lags: LagSet,
    values: Vec<Backlog>,
}

impl IntervalBmax {
    pub fn values(&self) -> &[Backlog] {
        &self.values
    }

    pub fn lags(&self) -> &LagSet {
        &self.lags
    }

    /// Smallest lag attaining the maximum.
    pub fn argmax(&self) -> Option<(usize, Backlog)> {
        let mut best: Option<(usize, Backlog)> = None;
        for (&k, &v) in self.lags.bins.iter().zip(&self.values) {
            if best.is_none_or(|(_, b)| v.scaled > b.scaled) {
                best = Some((k, v));
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = (0..self.values.len()).map(|i| (self.lags.tau_ns(i), self.values[i].bytes().to_string()));
        write_tau_csv(out, "bytes", rows)
    }
}

pub fn interval_bmax(e: &BurstinessCurve, rate: Rate) -> IntervalBmax {
    let scale = rate.scale();
    let values = e
        .points()
        .map(|(k, v)| Backlog {
            scaled: (v as u128 * scale).saturating_sub(rate.numer() * e.lags.grid.time_ns(k)),
            scale,
        })
        .collect();
    IntervalBmax {
        lags: e.lags.clone(),
        values,
    }
}

/// Sum of per-flow envelopes against the envelope of their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstinessPotential {
    pub lags: LagSet,
    pub sum_env: Vec<u64>,
    pub agg_env: Vec<u64>,
    /// `sum_env - agg_env`: headroom for the aggregate to grow burstier if
    /// the flows realigned.
    pub potential: Vec<u64>,
}

impl BurstinessPotential {
    pub fn write_csvs<W: Write>(&self, sum_out: W, agg_out: W, potential_out: W) -> Result<()> {
        for (out, vals) in [
            (sum_out, &self.sum_env),
            (agg_out, &self.agg_env),
            (potential_out, &self.potential),
        ] {
            let rows = (0..vals.len()).map(|i| (self.lags.tau_ns(i), vals[i].to_string()));
            write_tau_csv(out, "bytes", rows)?;
        }
        Ok(())
    }
}

/// Flows must share a bin width; shorter flows are padded to the longest
/// horizon. `lags` is given on that common horizon.
pub fn burstiness_potential(flows: &[ArrivalFunction], lags: &LagSet) -> Result<BurstinessPotential> {
    if flows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "burstiness potential needs at least 2 flows, got {}",
            flows.len()
        )));
    }
    let w = flows[0].grid().bin_width_ns();
    if let Some(f) = flows.iter().find(|f| f.grid().bin_width_ns() != w) {
        return Err(Error::GridMismatch {
            left: flows[0].grid().to_string(),
            right: f.grid().to_string(),
        });
    }
    let n = flows.iter().map(|f| f.grid().bin_count()).max().expect("nonempty");
    let padded: Vec<ArrivalFunction> = flows.iter().map(|f| f.extend_to(n)).collect::<Result<_>>()?;
    let agg = aggregate(&padded)?;
    let agg_env = burstiness_curve(&agg, lags)?.values;
    let mut sum_env = vec![0u64; lags.len()];
    for f in &padded {
        for (s, v) in sum_env.iter_mut().zip(burstiness_curve(f, lags)?.values) {
            *s += v;
        }
    }
    let potential = sum_env
        .iter()
        .zip(&agg_env)
        .map(|(&s, &g)| {
            s.checked_sub(g)
                .ok_or_else(|| Error::Invariant(format!("aggregate envelope {g} exceeds the sum {s}")))
        })
        .collect::<Result<_>>()?;
    Ok(BurstinessPotential {
        lags: lags.clone(),
        sum_env,
        agg_env,
        potential,
    })
}

fn write_tau_csv<W: Write>(out: W, column: &str, rows: impl Iterator<Item = (u128, String)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_seconds", column])?;
    for (tau, v) in rows {
        w.write_record([format_seconds(tau), v])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Reads a `tau_seconds,<column>` table as `(lag in ns, value)` pairs.
pub fn read_tau_csv<R: Read>(input: R, column: &str) -> Result<Vec<(u64, f64)>> {
    read_rows(input, "<tau csv>", &["tau_seconds", column])?
        .iter()
        .map(|r| Ok((r.seconds(0)?, r.get(1)?)))
        .collect()
}

/// Reads a table written by [`BmaxSweep::write_csv`] as
/// `(1 / utilization, rate in bit/s, backlog in bytes)` rows.
pub fn read_bmax_csv<R: Read>(input: R) -> Result<Vec<(f64, f64, f64)>> {
    read_rows(input, "<bmax csv>", &["inv_utilization", "rate_bps", "bmax_bytes"])?
        .iter()
        .map(|r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))
        .collect()
}

/// Lags present in both sets, for comparing curves computed separately.
pub fn common_lags(a: &LagSet, b: &LagSet) -> Vec<usize> {
    let other: HashSet<usize> = b.bins.iter().copied().collect();
    a.bins.iter().copied().filter(|k| other.contains(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{ingest, PacketRecord};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1_000, n).unwrap()
    }

    fn af(per_bin: &[u64]) -> ArrivalFunction {
        ArrivalFunction::from_per_bin(grid(per_bin.len()), per_bin).unwrap()
    }

    fn brute_envelope(per_bin: &[u64]) -> Vec<u64> {
        let n = per_bin.len();
        (0..=n)
            .map(|k| (0..=n - k).map(|t| per_bin[t..t + k].iter().sum::<u64>()).max().unwrap())
            .collect()
    }

    #[test]
    fn constant_flow_envelope_is_linear() {
        let a = af(&[7; 20]);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        assert_eq!(e.values(), (0..=20).map(|k| 7 * k).collect::<Vec<u64>>());
        let ptm = peak_to_mean_of(&a, &e).unwrap();
        assert!(ptm.points().iter().all(|p| p.numer == p.denom));
    }

    #[test]
    fn periodic_envelope_is_staircase() {
        // L every T = 5 bins, first burst at bin 0
        let mut per_bin = vec![0; 50];
        for k in (0..50).step_by(5) {
            per_bin[k] = 100;
        }
        let a = af(&per_bin);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        for (k, v) in e.points() {
            assert_eq!(v, 100 * k.div_ceil(5) as u64, "lag {k}");
        }
    }

    #[test]
    fn envelope_matches_brute_force() {
        let per_bin: Vec<u64> = (0..200u64).map(|i| (i * 7919 % 13) * ((i / 17) % 3)).collect();
        let a = af(&per_bin);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        assert_eq!(e.values(), brute_envelope(&per_bin));
        assert!(e.is_subadditive());
    }

    #[test]
    fn envelope_of_empty_bins_at_start_and_end() {
        let a = af(&[0, 0, 5, 0, 3, 0, 0]);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        assert_eq!(e.values(), &[0, 5, 5, 8, 8, 8, 8, 8]);
        assert_eq!(e.starts(), &[0, 2, 1, 2, 1, 0, 0, 0]);
    }

    #[test]
    fn earliest_start_tie_breaking() {
        let a = af(&[4, 0, 0, 4, 0]);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        assert_eq!(e.starts()[1], 0);
        assert_eq!(e.starts()[2], 0);
        assert_eq!(e.values()[4], 8);
        assert_eq!(e.starts()[4], 0);
    }

    #[test]
    fn default_lags() {
        let g = TimeGrid::new(1_000, 1_000_000).unwrap();
        let lags = LagSet::default_for(g);
        assert_eq!(lags.bins()[..3], [0, 1, 2]);
        assert!(lags.bins().contains(&10_000));
        assert_eq!(*lags.bins().last().unwrap(), 1_000_000);
        // two decades beyond 10 ms at 32 per decade, plus the endpoint
        assert_eq!(lags.len(), 10_001 + 64);
        let short = LagSet::default_for(grid(10));
        assert_eq!(short.bins(), (0..=10).collect::<Vec<_>>());
        assert!(LagSet::new(grid(10), vec![0, 11]).is_err());
        assert!(LagSet::new(grid(10), vec![3, 3]).is_err());
    }

    #[test]
    fn backlog_drains_single_burst() {
        let a = af(&[100, 0, 0, 0, 0, 0]);
        let r = Rate::new(30, 1_000).unwrap();
        let series: Vec<f64> = backlog_series(&a, r).iter().map(Backlog::bytes).collect();
        assert_eq!(series, vec![0.0, 70.0, 40.0, 10.0, 0.0, 0.0, 0.0]);
        assert_eq!(max_backlog(&a, r).bytes(), 70.0);
    }

    #[test]
    fn backlog_zero_for_constant_flow_at_mean_rate() {
        let a = af(&[9; 30]);
        let r = a.mean_rate().unwrap();
        assert!(backlog_series(&a, r).iter().all(Backlog::is_zero));
        let sweep = bmax_sweep(&a, &[1.0]).unwrap();
        assert!(sweep.points[0].bmax.is_zero());
    }

    #[test]
    fn max_backlog_matches_series_and_envelope() {
        let per_bin: Vec<u64> = (0..300u64).map(|i| (i * 31 % 17) * u64::from(i % 5 == 0)).collect();
        let a = af(&per_bin);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        for ppm in [50_000, 333_333, 900_000, 1_000_000] {
            let r = rate_for_utilization(&a, ppm).unwrap();
            let series_max = backlog_series(&a, r).iter().map(|b| b.scaled()).max().unwrap();
            assert_eq!(max_backlog(&a, r).scaled(), series_max);
            assert_eq!(envelope_bmax(&e, r).scaled(), series_max);
        }
    }

    #[test]
    fn utilization_bounds() {
        let a = af(&[1, 2, 3]);
        assert!(bmax_sweep(&a, &[0.0]).is_err());
        assert!(bmax_sweep(&a, &[1.5]).is_err());
        assert!(bmax_sweep(&a, &[f64::NAN]).is_err());
        let s = bmax_sweep(&a, &[0.5]).unwrap();
        assert_eq!(s.points[0].inv_utilization(), 2.0);
    }

    #[test]
    fn ptm_periodic_closed_form() {
        let mut per_bin = vec![0; 40];
        for k in (0..40).step_by(4) {
            per_bin[k] = 10;
        }
        let a = af(&per_bin);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let ptm = peak_to_mean_of(&a, &e).unwrap();
        assert_eq!(ptm.at_lag(2).unwrap().ratio(), 2.0);
        assert_eq!(ptm.at_lag(40).unwrap().ratio(), 1.0);
        assert!(ptm.at_lag(0).is_none());
    }

    #[test]
    fn interval_bmax_periodic() {
        let mut per_bin = vec![0; 40];
        for k in (0..40).step_by(10) {
            per_bin[k] = 1_000;
        }
        let a = af(&per_bin);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let r = Rate::new(150, 1_000).unwrap();
        let ib = interval_bmax(&e, r);
        assert_eq!(ib.values()[5].bytes(), 250.0);
        assert_eq!(ib.values()[11].bytes(), 350.0);
        assert!(ib.values()[20].is_zero());
        assert_eq!(ib.argmax().unwrap().0, 1);
        assert_eq!(ib.argmax().unwrap().1.bytes(), 850.0);
    }

    #[test]
    fn potential_aligned_and_staggered() {
        let flow = |offset: usize| {
            let mut v = vec![0; 30];
            for k in (offset..30).step_by(3) {
                v[k] = 50;
            }
            af(&v)
        };
        let lags = LagSet::full(grid(30));
        let aligned = burstiness_potential(&[flow(0), flow(0), flow(0)], &lags).unwrap();
        assert!(aligned.potential.iter().all(|&p| p == 0));
        let staggered = burstiness_potential(&[flow(0), flow(1), flow(2)], &lags).unwrap();
        assert_eq!(staggered.potential[1], 100);
        assert!(burstiness_potential(&[flow(0)], &lags).is_err());
    }

    #[test]
    fn potential_rejects_mixed_widths() {
        let a = ingest([PacketRecord::new(0, 10)], 1_000).unwrap();
        let b = ingest([PacketRecord::new(0, 10)], 2_000).unwrap();
        let lags = LagSet::full(*a.grid());
        assert!(matches!(burstiness_potential(&[a, b], &lags), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn csv_headers() {
        let a = af(&[3, 0, 1]);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("tau_seconds,bytes\n0.000000000,0\n"));
        let mut buf = Vec::new();
        peak_to_mean_of(&a, &e).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("tau_seconds,ratio\n0.000001000,2.25\n"));
        let mut buf = Vec::new();
        bmax_sweep(&a, &[0.5]).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("inv_utilization,rate_bps,bmax_bytes\n2,"));
    }
}
