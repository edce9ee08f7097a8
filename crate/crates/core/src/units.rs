//! Time and rate conversions used on file and command-line interfaces.
//!
//! Interfaces carry decimal seconds, bytes and bits per second; the
//! library works in integer nanoseconds and bytes.

use crate::error::{Error, Result};

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Formats a nanosecond count as decimal seconds with 9 fractional digits.
pub fn format_seconds(ns: u128) -> String {
    let secs = ns / NANOS_PER_SEC as u128;
    let frac = ns % NANOS_PER_SEC as u128;
    format!("{secs}.{frac:09}")
}

/// Parses decimal seconds (`"73.8"`, `"1e-3"`, `"0.000001"`) into whole
/// nanoseconds.
///
/// Plain decimal strings with at most 9 fractional digits are converted
/// exactly; anything else goes through `f64` and is rounded to the nearest
/// nanosecond.
pub fn parse_seconds(text: &str) -> Result<u64> {
    let s = text.trim();
    let bad = || Error::InvalidArgument(format!("`{text}` is not a nonnegative time in seconds"));
    if s.is_empty() || s.starts_with('-') {
        return Err(bad());
    }
    if s.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() <= 9 && !(int.is_empty() && frac.is_empty()) && !frac.contains('.') {
            let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let mut frac_ns: u64 = 0;
            for (i, b) in frac.bytes().enumerate() {
                frac_ns += u64::from(b - b'0') * 10u64.pow(8 - i as u32);
            }
            return int
                .checked_mul(NANOS_PER_SEC)
                .and_then(|v| v.checked_add(frac_ns))
                .ok_or_else(bad);
        }
    }
    let value: f64 = s.parse().map_err(|_| bad())?;
    if !value.is_finite() || value < 0.0 || value * 1e9 > u64::MAX as f64 {
        return Err(bad());
    }
    Ok((value * 1e9).round() as u64)
}

/// Parses a duration with an optional unit suffix (`ns`, `us`, `ms`, `s`).
/// A bare number is taken as seconds.
pub fn parse_duration(text: &str) -> Result<u64> {
    let s = text.trim();
    let (number, scale) = if let Some(v) = s.strip_suffix("ns") {
        (v, 1)
    } else if let Some(v) = s.strip_suffix("us") {
        (v, 1_000)
    } else if let Some(v) = s.strip_suffix("ms") {
        (v, 1_000_000)
    } else if let Some(v) = s.strip_suffix('s') {
        (v, NANOS_PER_SEC)
    } else {
        (s, NANOS_PER_SEC)
    };
    let ns = parse_seconds(number)?;
    // `parse_seconds` scaled by 1e9; undo that for the smaller units.
    let value = ns as u128 * scale as u128 / NANOS_PER_SEC as u128;
    if (ns as u128 * scale as u128) % NANOS_PER_SEC as u128 != 0 {
        return Err(Error::InvalidArgument(format!(
            "`{text}` is not a whole number of nanoseconds"
        )));
    }
    u64::try_from(value).map_err(|_| Error::InvalidArgument(format!("`{text}` is too large")))
}

/// Converts a nonnegative float seconds value from a config file to
/// nanoseconds.
pub(crate) fn seconds_to_ns(field: &str, seconds: f64) -> Result<u64> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(Error::config(field, format!("{seconds} is not a nonnegative duration")));
    }
    Ok((seconds * 1e9).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_round_trip() {
        assert_eq!(format_seconds(0), "0.000000000");
        assert_eq!(format_seconds(1_500), "0.000001500");
        assert_eq!(format_seconds(73_800_000_000), "73.800000000");
        assert_eq!(parse_seconds("73.8").unwrap(), 73_800_000_000);
        assert_eq!(parse_seconds("0.000001").unwrap(), 1_000);
        assert_eq!(parse_seconds("1e-3").unwrap(), 1_000_000);
        assert_eq!(parse_seconds(".5").unwrap(), 500_000_000);
        assert_eq!(parse_seconds("0.000000000").unwrap(), 0);
        assert!(parse_seconds("-1").is_err());
        assert!(parse_seconds("abc").is_err());
        assert!(parse_seconds(".").is_err());
    }

    #[test]
    fn durations_with_units() {
        assert_eq!(parse_duration("1us").unwrap(), 1_000);
        assert_eq!(parse_duration("10ms").unwrap(), 10_000_000);
        assert_eq!(parse_duration("250ns").unwrap(), 250);
        assert_eq!(parse_duration("0.5s").unwrap(), 500_000_000);
        assert_eq!(parse_duration("2").unwrap(), 2_000_000_000);
        assert!(parse_duration("0.5ns").is_err());
    }
}
