//! Three periodic flows: aligned they already show their worst case,
//! staggered they hide two thirds of it.

use mlburst::metrics::{burstiness_potential, max_backlog, LagSet};
use mlburst::netcalc::{Rate, TimeGrid};
use mlburst::trace::{aggregate, ArrivalFunction};

const BURST: u64 = 125_000;
const PERIOD: usize = 9_999;

fn flows(stagger: usize) -> mlburst::Result<Vec<ArrivalFunction>> {
    let grid = TimeGrid::new(1_000, PERIOD * 4)?;
    (0..3)
        .map(|j| ArrivalFunction::from_sparse(grid, (0..4).map(|p| (p * PERIOD + j * stagger, BURST))))
        .collect()
}

fn main() -> mlburst::Result<()> {
    // drains exactly three bursts per period
    let drain = Rate::new(3 * BURST as u128, PERIOD as u128 * 1_000)?;
    for (name, stagger) in [("aligned", 0), ("staggered", PERIOD / 3)] {
        let fs = flows(stagger)?;
        let agg = aggregate(&fs)?;
        let lags = LagSet::new(*agg.grid(), vec![0, 1, 10, 1_000, PERIOD])?;
        let p = burstiness_potential(&fs, &lags)?;
        println!(
            "{name:>9}: peak backlog {:>9.1} B, potential at 1/10/1000/{PERIOD} us = {:?}",
            max_backlog(&agg, drain).bytes(),
            &p.potential[1..]
        );
    }
    Ok(())
}
