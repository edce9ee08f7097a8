//! Synthetic data-parallel training traffic and a reference Ring Allreduce.

mod generate;
mod kernel;
mod manifest;

pub use generate::{
    gen_linear, gen_ring, generate, read_events_csv, ring_chunk_bytes, BurstEvent, EventRecord, GeneratedWorkload, Mode,
    Phase, UniformRange, WorkloadSpec,
};
pub use kernel::{
    allgather_chunk, even_partition, reduce_scatter_chunk, ring_allreduce, ring_allreduce_partitioned,
    ring_allreduce_with_fault, Fault, RingOutput, RingPhase, Transfer,
};
pub use manifest::{load_manifest, parse_manifest, LayerManifest, BYTES_PER_PARAM};
