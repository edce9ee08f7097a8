//! Ring Allreduce on in-memory vectors: Reduce-Scatter followed by
//! Allgather, each `N - 1` neighbour exchanges around the ring.

use std::ops::Add;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RingPhase {
    ReduceScatter,
    Allgather,
}

/// One chunk sent from a worker to its ring successor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub phase: RingPhase,
    /// Step within the phase, `0..N-1`.
    pub step: usize,
    pub from: usize,
    pub to: usize,
    pub chunk: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingOutput<T> {
    pub vectors: Vec<Vec<T>>,
    pub transfers: Vec<Transfer>,
}

/// Chunk sent by `worker` at Reduce-Scatter step `step`.
pub fn reduce_scatter_chunk(worker: usize, step: usize, n: usize) -> usize {
    (worker + n - step % n) % n
}

/// Chunk sent by `worker` at Allgather step `step`.
pub fn allgather_chunk(worker: usize, step: usize, n: usize) -> usize {
    (worker + 1 + n - step % n) % n
}

/// `n + 1` boundaries splitting `len` elements into `n` near-equal chunks.
pub fn even_partition(len: usize, n: usize) -> Vec<usize> {
    (0..=n).map(|c| c * len / n).collect()
}

#[derive(Debug, Clone, Copy, Default)]
#[doc(hidden)]
pub struct Fault {
    /// Drops the transfer of this worker at this overall step.
    pub drop: Option<(usize, usize)>,
}

pub fn ring_allreduce<T>(vectors: &[Vec<T>]) -> Result<RingOutput<T>>
where
    T: Copy + Add<Output = T>,
{
    let len = vectors.first().map_or(0, Vec::len);
    ring_allreduce_partitioned(vectors, &even_partition(len, vectors.len().max(1)))
}

/// Ring Allreduce with explicit chunk boundaries (`N + 1` nondecreasing
/// offsets from 0 to the vector length).
pub fn ring_allreduce_partitioned<T>(vectors: &[Vec<T>], bounds: &[usize]) -> Result<RingOutput<T>>
where
    T: Copy + Add<Output = T>,
{
    ring_allreduce_with_fault(vectors, bounds, Fault::default())
}

#[doc(hidden)]
pub fn ring_allreduce_with_fault<T>(vectors: &[Vec<T>], bounds: &[usize], fault: Fault) -> Result<RingOutput<T>>
where
    T: Copy + Add<Output = T>,
{
    let n = vectors.len();
    let mut data: Vec<Vec<T>> = vectors.to_vec();
    if n == 0 {
        return Ok(RingOutput {
            vectors: data,
            transfers: Vec::new(),
        });
    }
    let len = vectors[0].len();
    if let Some(w) = vectors.iter().position(|v| v.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "vector {w} has length {} but vector 0 has length {len}",
            vectors[w].len()
        )));
    }
    if bounds.len() != n + 1 || bounds[0] != 0 || bounds[n] != len || bounds.windows(2).any(|b| b[0] > b[1]) {
        return Err(Error::InvalidArgument(format!(
            "chunk boundaries {bounds:?} do not partition {len} elements into {n} chunks"
        )));
    }
    let mut transfers = Vec::with_capacity(2 * n * (n - 1));
    for (phase, offset) in [(RingPhase::ReduceScatter, 0), (RingPhase::Allgather, n - 1)] {
        for step in 0..n - 1 {
            // all sends of a step read the state from before the step
            let sends: Vec<(usize, usize, Vec<T>)> = (0..n)
                .filter(|&w| fault.drop != Some((w, offset + step)))
                .map(|w| {
                    let chunk = match phase {
                        RingPhase::ReduceScatter => reduce_scatter_chunk(w, step, n),
                        RingPhase::Allgather => allgather_chunk(w, step, n),
                    };
                    (w, chunk, data[w][bounds[chunk]..bounds[chunk + 1]].to_vec())
                })
                .collect();
            for (from, chunk, payload) in sends {
                let to = (from + 1) % n;
                let dst = &mut data[to][bounds[chunk]..bounds[chunk + 1]];
                match phase {
                    RingPhase::ReduceScatter => {
                        for (d, p) in dst.iter_mut().zip(payload) {
                            *d = *d + p;
                        }
                    }
                    RingPhase::Allgather => dst.copy_from_slice(&payload),
                }
                transfers.push(Transfer {
                    phase,
                    step,
                    from,
                    to,
                    chunk,
                });
            }
        }
    }
    Ok(RingOutput {
        vectors: data,
        transfers,
    })
}
