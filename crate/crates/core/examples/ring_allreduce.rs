//! The reference ring kernel on small integer vectors, and the traffic the
//! ring generator derives from the same schedule.

use mlburst::workload::{generate, ring_allreduce, Mode, Phase, WorkloadSpec};

fn main() -> mlburst::Result<()> {
    let vectors: Vec<Vec<i64>> = (0..4).map(|w| (0..8).map(|i| 10 * w + i).collect()).collect();
    let out = ring_allreduce(&vectors)?;
    for t in &out.transfers {
        println!("{:?} step {}: worker {} -> {} chunk {}", t.phase, t.step, t.from, t.to, t.chunk);
    }
    println!("result on every worker: {:?}", out.vectors[0]);
    assert!(out.vectors.iter().all(|v| *v == out.vectors[0]));

    let spec = WorkloadSpec {
        mode: Mode::Ring,
        n_workers: 4,
        rounds: 1,
        layers: Some(vec![2_000_000, 4_000, 3]),
        ..WorkloadSpec::default()
    };
    let g = generate(&spec)?;
    for e in g.events.iter().filter(|e| e.worker == 0) {
        let phase = match e.phase {
            Phase::ReduceScatter => "reduce-scatter",
            _ => "allgather",
        };
        println!(
            "worker 0 layer {} {phase:>14} step {}: {:>8} B at {:>12} ns",
            e.layer, e.step, e.bytes, e.start_ns
        );
    }
    Ok(())
}
