//! Departures of a bursty arrival through a constant-rate link, via min-plus
//! convolution, and the trace's envelope via self-deconvolution.

use mlburst::netcalc::{minplus_convolve, minplus_deconvolve, rate_curve, Curve, Rate, TimeGrid};

fn main() -> mlburst::Result<()> {
    let grid = TimeGrid::new(1_000, 12)?;
    let arrivals = Curve::from_increments(grid, &[0, 9_000, 9_000, 0, 0, 0, 0, 3_000, 0, 0, 0, 0])?;
    // 4 kB per µs
    let link = rate_curve(Rate::new(4_000, 1_000)?, grid);
    let departures = minplus_convolve(&arrivals, &link)?;
    let envelope = minplus_deconvolve(&arrivals, &arrivals)?;

    println!("{:>6} {:>8} {:>10} {:>8} {:>9}", "t_us", "A", "D", "backlog", "E(t)");
    for k in 0..grid.points() {
        let (a, d) = (arrivals.at(k), departures.at(k));
        println!("{k:>6} {a:>8} {d:>10} {:>8} {:>9}", a - d, envelope.at(k));
    }
    assert!(envelope.is_subadditive());
    Ok(())
}
